#include "delst/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace delst::losses {

std::string_view to_string(SimMode m) {
    switch (m) {
        case SimMode::cosine_full: return "cosine_full";
        case SimMode::cosine_space: return "cosine_space";
        case SimMode::neg_lorentz_distance: return "neg_lorentz_distance";
    }
    return "?";
}

SimMode parse_sim_mode(std::string_view s) {
    std::string norm(s);
    std::replace(norm.begin(), norm.end(), '-', '_');
    for (SimMode m : {SimMode::cosine_full, SimMode::cosine_space, SimMode::neg_lorentz_distance})
        if (norm == to_string(m)) return m;
    throw ContractViolation("unknown sim mode '" + std::string(s) + "'");
}

namespace {

constexpr double kMinNorm = 1e-12;

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    return ab / (std::max(std::sqrt(aa), kMinNorm) * std::max(std::sqrt(bb), kMinNorm));
}

std::vector<double> full_vector(const HyperPoint& p) {
    std::vector<double> v(p.space);
    v.push_back(p.time);
    return v;
}

void check_batch(const BatchEmbeddings& b) {
    require(b.size() > 0, "empty batch");
    require(b.gene_points.size() == b.size(), "batch: image/gene counts differ");
}

// -(1/N) sum_i log softmax(row_i)[i] for a row-major N x N logit matrix.
double diagonal_cross_entropy(const std::vector<double>& logits, std::size_t n) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &logits[i * n];
        const double mx = *std::max_element(row, row + n);
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(row[j] - mx);
        total += mx + std::log(acc) - row[i];
    }
    return total / static_cast<double>(n);
}

}  // namespace

double similarity(const HyperPoint& a, const HyperPoint& b, SimMode mode, Curvature c) {
    switch (mode) {
        case SimMode::cosine_full: return cosine(full_vector(a), full_vector(b));
        case SimMode::cosine_space: return cosine(a.space, b.space);
        case SimMode::neg_lorentz_distance: {
            const double arg = -c.value() * lorentz::lorentz_inner(a, b);
            return -std::acosh(std::max(arg, 1.0)) / std::sqrt(c.value());
        }
    }
    return 0.0;
}

double contrastive_loss(const BatchEmbeddings& batch, double tau, const LossOptions& opts) {
    check_batch(batch);
    require(tau > 0.0, "contrastive_loss: tau must be > 0");
    const std::size_t n = batch.size();
    std::vector<double> logits(n * n), transposed(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double z = similarity(batch.image_points[i], batch.gene_points[j], opts.sim_mode, opts.curvature) / tau;
            logits[i * n + j] = z;
            transposed[j * n + i] = z;
        }
    const double forward = diagonal_cross_entropy(logits, n);
    if (!opts.symmetric) return forward;
    return 0.5 * (forward + diagonal_cross_entropy(transposed, n));
}

double cmel_loss(const BatchEmbeddings& batch, ConeConstants k, Curvature c) {
    check_batch(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        total += lorentz::cone_violation(batch.gene_points[i], batch.image_points[i], k, c);
    return total / static_cast<double>(batch.size());
}

double violation_rate(const BatchEmbeddings& batch, ConeConstants k, Curvature c) {
    check_batch(batch);
    std::size_t outside = 0;
    for (std::size_t i = 0; i < batch.size(); ++i)
        if (lorentz::cone_violation(batch.gene_points[i], batch.image_points[i], k, c) > 0.0) ++outside;
    return static_cast<double>(outside) / static_cast<double>(batch.size());
}

NgecSplit select_hngec_lngec(std::span<const std::size_t> ngec, std::size_t q) {
    require(q >= 1, "select_hngec_lngec: q must be >= 1");
    require(2 * q <= ngec.size(), "select_hngec_lngec: 2q exceeds the batch size");
    std::vector<std::size_t> order(ngec.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ngec[a] < ngec[b]; });
    NgecSplit split;
    split.low.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(q));
    split.high.assign(order.end() - static_cast<std::ptrdiff_t>(q), order.end());
    return split;
}

namespace {

double imel_term(const std::vector<HyperPoint>& pts, const NgecSplit& split, ConeConstants k, Curvature c) {
    const double q = static_cast<double>(split.low.size());
    double total = 0.0;
    for (std::size_t li : split.low) {
        const double aper_low = lorentz::half_aperture(pts[li], k, c);
        for (std::size_t hj : split.high)
            total += std::max(0.0, lorentz::half_aperture(pts[hj], k, c) - aper_low);
    }
    return total / (q * q);
}

}  // namespace

ImelTerms imel_loss(const BatchEmbeddings& batch, std::size_t q, ConeConstants k, Curvature c) {
    check_batch(batch);
    require(batch.ngec.size() == batch.size(), "imel_loss: ngec count differs from batch size");
    const NgecSplit split = select_hngec_lngec(batch.ngec, q);
    ImelTerms t;
    t.gene = imel_term(batch.gene_points, split, k, c);
    t.image = imel_term(batch.image_points, split, k, c);
    t.average = 0.5 * (t.gene + t.image);
    return t;
}

LossBreakdown final_loss(const BatchEmbeddings& batch, const LossWeights& w, const LossOptions& opts) {
    LossBreakdown out;
    out.l_cont = contrastive_loss(batch, w.tau, opts);
    out.l_ent_cross = cmel_loss(batch, opts.cone, opts.curvature);
    const ImelTerms intra = imel_loss(batch, w.q, opts.cone, opts.curvature);
    out.l_ent_intra_gene = intra.gene;
    out.l_ent_intra_image = intra.image;
    out.l_ent_intra = intra.average;
    out.l_final = out.l_cont + w.lambda * out.l_ent_cross + w.beta * out.l_ent_intra;
    return out;
}

}  // namespace delst::losses
