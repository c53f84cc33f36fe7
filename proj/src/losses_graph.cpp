#include <cmath>

#include "delst/losses.hpp"

namespace delst::losses {

LossBreakdown GraphLoss::values() const {
    LossBreakdown b;
    b.l_cont = l_cont.item();
    b.l_ent_cross = l_ent_cross.item();
    b.l_ent_intra_gene = l_ent_intra_gene.item();
    b.l_ent_intra_image = l_ent_intra_image.item();
    b.l_ent_intra = l_ent_intra.item();
    b.l_final = l_final.item();
    return b;
}

ad::Var half_aperture_graph(const GraphPoints& g, ConeConstants k, Curvature c) {
    ad::Var r = ad::l2_norm(g.space);
    // Zero-norm rows map to +inf, which the clamp saturates to pi/2.
    auto rv = r.values();
    std::vector<unsigned char> at_origin(rv.size());
    for (std::size_t i = 0; i < rv.size(); ++i) at_origin[i] = rv[i] == 0.0;
    ad::Var r_safe = ad::mask_fill(r, at_origin, 1.0);
    ad::Tape& t = r.tape();
    ad::Var numer = t.constant(r.shape(), std::vector<double>(rv.size(), 2.0 * k.k_aper / std::sqrt(c.value())));
    ad::Var arg = ad::mask_fill(ad::div(numer, r_safe), at_origin, 2.0);
    return ad::asin_clamped(arg);
}

ad::Var exterior_angle_graph(const GraphPoints& g, const GraphPoints& i, Curvature c) {
    const double cv = c.value();
    ad::Var inner = ad::sub(ad::row_dot(g.space, i.space), ad::mul(g.time, i.time));
    ad::Var ci = ad::mul_scalar(inner, cv);
    ad::Var num = ad::add(i.time, ad::mul(g.time, ci));
    ad::Var d2 = ad::add_scalar(ad::mul(ci, ci), -1.0);
    ad::Var g_norm = ad::l2_norm(g.space);

    auto d2v = d2.values();
    auto gn = g_norm.values();
    std::vector<unsigned char> degenerate(d2v.size());
    for (std::size_t k = 0; k < d2v.size(); ++k)
        degenerate[k] = d2v[k] < lorentz::kExteriorEps || gn[k] == 0.0;

    ad::Var den = ad::mul(g_norm, ad::sqrt(ad::clamp_min(d2, lorentz::kExteriorEps)));
    ad::Var den_safe = ad::mask_fill(den, degenerate, 1.0);
    ad::Var angle = ad::acos_clamped(ad::div(num, den_safe));
    return ad::mask_fill(angle, degenerate, 0.0);
}

namespace {

ad::Var similarity_graph(const GraphPoints& image, const GraphPoints& gene, SimMode mode, Curvature c) {
    switch (mode) {
        case SimMode::cosine_full:
            return ad::cosine_similarity(ad::concat_cols(image.space, image.time),
                                         ad::concat_cols(gene.space, gene.time));
        case SimMode::cosine_space: return ad::cosine_similarity(image.space, gene.space);
        case SimMode::neg_lorentz_distance: {
            ad::Var inner = ad::sub(ad::matmul(image.space, ad::transpose(gene.space)),
                                    ad::matmul(image.time, ad::transpose(gene.time)));
            ad::Var dist = ad::acosh_clamped(ad::mul_scalar(inner, -c.value()));
            return ad::mul_scalar(dist, -1.0 / std::sqrt(c.value()));
        }
    }
    throw ContractViolation("unknown sim mode");
}

}  // namespace

ad::Var contrastive_loss_graph(const GraphPoints& image, const GraphPoints& gene, double tau,
                               const LossOptions& opts) {
    require(tau > 0.0, "contrastive_loss: tau must be > 0");
    require(image.space.shape().rows > 0, "contrastive_loss: empty batch");
    ad::Var logits = ad::mul_scalar(similarity_graph(image, gene, opts.sim_mode, opts.curvature), 1.0 / tau);
    ad::Var forward = ad::softmax_logsumexp(logits);
    if (!opts.symmetric) return forward;
    return ad::mul_scalar(ad::add(forward, ad::softmax_logsumexp(ad::transpose(logits))), 0.5);
}

ad::Var cmel_loss_graph(const GraphPoints& gene, const GraphPoints& image, ConeConstants k, Curvature c) {
    ad::Var ext = exterior_angle_graph(gene, image, c);
    ad::Var aper = half_aperture_graph(gene, k, c);
    return ad::mean(ad::hinge_max0(ad::sub(ext, aper)));
}

ad::Var imel_loss_graph(const GraphPoints& points, const NgecSplit& split, ConeConstants k, Curvature c) {
    ad::Var aper = half_aperture_graph(points, k, c);
    ad::Var low = ad::gather_rows(aper, split.low);
    ad::Var high = ad::gather_rows(aper, split.high);
    // [i][j] = aper(H_j) - aper(L_i)
    return ad::mean(ad::hinge_max0(ad::outer_diff(high, low)));
}

GraphLoss final_loss_graph(const GraphPoints& image, const GraphPoints& gene, std::span<const std::size_t> ngec,
                           const LossWeights& w, const LossOptions& opts) {
    const std::size_t n = image.space.shape().rows;
    require(gene.space.shape().rows == n && ngec.size() == n, "final_loss: batch sizes differ");
    GraphLoss out;
    out.l_cont = contrastive_loss_graph(image, gene, w.tau, opts);
    out.l_ent_cross = cmel_loss_graph(gene, image, opts.cone, opts.curvature);
    const NgecSplit split = select_hngec_lngec(ngec, w.q);
    out.l_ent_intra_gene = imel_loss_graph(gene, split, opts.cone, opts.curvature);
    out.l_ent_intra_image = imel_loss_graph(image, split, opts.cone, opts.curvature);
    out.l_ent_intra = ad::mul_scalar(ad::add(out.l_ent_intra_gene, out.l_ent_intra_image), 0.5);
    out.l_final = ad::add(ad::add(out.l_cont, ad::mul_scalar(out.l_ent_cross, w.lambda)),
                          ad::mul_scalar(out.l_ent_intra, w.beta));
    return out;
}

}  // namespace delst::losses
