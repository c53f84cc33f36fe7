#include "delst/encoders.hpp"

#include <bit>
#include <cmath>
#include <random>

namespace delst::encoders {

std::vector<std::pair<std::string_view, Param*>> EncoderParams::named() {
    return {{"gene.weight", &gene.weight}, {"gene.bias", &gene.bias}, {"image.w1", &image.w1},
            {"image.b1", &image.b1},       {"image.w2", &image.w2},   {"image.b2", &image.b2}};
}

std::vector<std::pair<std::string_view, const Param*>> EncoderParams::named() const {
    return {{"gene.weight", &gene.weight}, {"gene.bias", &gene.bias}, {"image.w1", &image.w1},
            {"image.b1", &image.b1},       {"image.w2", &image.w2},   {"image.b2", &image.b2}};
}

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : named()) n += p->value.values.size();
    return n;
}

std::vector<double> EncoderParams::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& [name, p] : named()) out.insert(out.end(), p->value.values.begin(), p->value.values.end());
    return out;
}

std::vector<double> EncoderParams::flatten_grads() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& [name, p] : named()) out.insert(out.end(), p->grad.values.begin(), p->grad.values.end());
    return out;
}

void EncoderParams::unflatten(std::span<const double> flat) {
    require(flat.size() == parameter_count(), "unflatten: size mismatch");
    std::size_t off = 0;
    for (auto& [name, p] : named()) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p->value.values.size(), p->value.values.begin());
        off += p->value.values.size();
    }
}

void EncoderParams::zero_grads() {
    for (auto& [name, p] : named()) std::fill(p->grad.values.begin(), p->grad.values.end(), 0.0);
}

EncoderParams zero_params(const EncoderDims& d) {
    require(d.gene_count > 0 && d.feat_dim > 0 && d.hidden > 0 && d.embed_dim > 0, "encoder dims must be positive");
    EncoderParams p;
    p.dims = d;
    p.gene.weight = Param({d.gene_count, d.embed_dim});
    p.gene.bias = Param({1, d.embed_dim});
    p.image.w1 = Param({d.feat_dim, d.hidden});
    p.image.b1 = Param({1, d.hidden});
    p.image.w2 = Param({d.hidden, d.embed_dim});
    p.image.b2 = Param({1, d.embed_dim});
    return p;
}

EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed) {
    EncoderParams p = zero_params(dims);
    std::mt19937_64 rng(seed);
    auto xavier = [&rng](Param& w) {
        const double a = std::sqrt(6.0 / static_cast<double>(w.value.shape.rows + w.value.shape.cols));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& v : w.value.values) v = dist(rng);
    };
    xavier(p.gene.weight);
    xavier(p.image.w1);
    xavier(p.image.w2);
    return p;
}

std::uint64_t checksum(const EncoderParams& p) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, param] : p.named())
        for (double v : param->value.values) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffU;
                h *= 0x100000001b3ULL;
            }
        }
    return h;
}

namespace {

// y = x W + b for a single row.
std::vector<double> affine(std::span<const double> x, const Param& w, const Param& b) {
    const std::size_t in = w.value.shape.rows, out = w.value.shape.cols;
    std::vector<double> y(b.value.values);
    for (std::size_t i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < out; ++j) y[j] += xi * w.value.values[i * out + j];
    }
    return y;
}

}  // namespace

HyperPoint encode_gene(const EncoderParams& p, std::span<const double> expr, Curvature c) {
    require(expr.size() == p.dims.gene_count, "encode_gene: expression length differs from gene_count");
    return lorentz::exp_map({affine(expr, p.gene.weight, p.gene.bias)}, c);
}

HyperPoint encode_image(const EncoderParams& p, std::span<const double> feat, Curvature c) {
    require(feat.size() == p.dims.feat_dim, "encode_image: feature length differs from feat_dim");
    std::vector<double> h = affine(feat, p.image.w1, p.image.b1);
    for (double& v : h) v = v > 0.0 ? v : 0.0;
    return lorentz::exp_map({affine(h, p.image.w2, p.image.b2)}, c);
}

ParamVars bind(ad::Tape& tape, const EncoderParams& p) {
    return ParamVars{tape.parameter(p.gene.weight.value), tape.parameter(p.gene.bias.value),
                     tape.parameter(p.image.w1.value),    tape.parameter(p.image.b1.value),
                     tape.parameter(p.image.w2.value),    tape.parameter(p.image.b2.value)};
}

void collect_grads(const ad::Tape& tape, const ParamVars& v, EncoderParams& p) {
    p.gene.weight.grad = tape.grad(v.gene_weight);
    p.gene.bias.grad = tape.grad(v.gene_bias);
    p.image.w1.grad = tape.grad(v.image_w1);
    p.image.b1.grad = tape.grad(v.image_b1);
    p.image.w2.grad = tape.grad(v.image_w2);
    p.image.b2.grad = tape.grad(v.image_b2);
}

losses::GraphPoints exp_map_graph(ad::Var tangent, Curvature c) {
    const double sqrt_c = std::sqrt(c.value());
    ad::Var scale = ad::sinhc(ad::mul_scalar(ad::l2_norm(tangent), sqrt_c));
    ad::Var space = ad::mul_col(tangent, scale);
    ad::Var time = ad::sqrt(ad::add_scalar(ad::row_dot(space, space), 1.0 / c.value()));
    return {space, time};
}

losses::GraphPoints encode_gene_graph(const ParamVars& v, ad::Var expr, Curvature c) {
    return exp_map_graph(ad::add_row(ad::matmul(expr, v.gene_weight), v.gene_bias), c);
}

losses::GraphPoints encode_image_graph(const ParamVars& v, ad::Var feat, Curvature c) {
    ad::Var hidden = ad::relu(ad::add_row(ad::matmul(feat, v.image_w1), v.image_b1));
    return exp_map_graph(ad::add_row(ad::matmul(hidden, v.image_w2), v.image_b2), c);
}

}  // namespace delst::encoders
