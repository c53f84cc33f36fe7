#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "delst/data.hpp"

namespace delst::data {

namespace {

// Expression is emitted in units of kExprUnit per detected molecule.
constexpr double kExprUnit = 0.01;
// Library size of every spot; the background gene absorbs the remainder.
constexpr double kLibrarySize = 500.0;
constexpr double kFeatureScale = 5.0;
constexpr double kDetectWidth = 0.1;
// Per-spot capture efficiency, log-uniform in [1/kEfficiencySpread, kEfficiencySpread].
constexpr double kEfficiencySpread = 3.0;

std::string padded(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04zu", prefix, i);
    return buf;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    require(cfg.n_slides > 0 && cfg.n_genes > 0 && cfg.n_classes > 0 && cfg.feat_dim > 0,
            "generate_synthetic: counts must be positive");
    require(cfg.hierarchy_strength >= 0.0 && cfg.hierarchy_strength <= 1.0,
            "generate_synthetic: hierarchy_strength must lie in [0, 1]");

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticDataset out;
    Dataset& d = out.data;
    d.feat_dim = cfg.feat_dim;
    for (std::size_t g = 0; g < cfg.n_genes; ++g) d.genes.push_back(padded("G", g));

    // Per gene: base rate, log-uniform in [0.5, 3], and the activity level
    // above which it is usually detected.
    std::vector<double> rate(cfg.n_genes), threshold(cfg.n_genes);
    for (std::size_t g = 0; g < cfg.n_genes; ++g) {
        rate[g] = 0.5 * std::exp(unit(rng) * std::log(6.0));
        threshold[g] = unit(rng);
    }

    std::vector<std::size_t> perm(cfg.n_genes);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t background = perm.back();
    const std::size_t block = std::max<std::size_t>(1, (cfg.n_genes - 1) / (2 * cfg.n_classes));
    std::vector<int> marker_of(cfg.n_genes, -1);
    for (std::size_t c = 0; c < cfg.n_classes; ++c)
        for (std::size_t k = 0; k < block && c * block + k + 1 < cfg.n_genes; ++k)
            marker_of[perm[c * block + k]] = static_cast<int>(c);

    std::vector<std::vector<double>> proto(cfg.n_classes, std::vector<double>(cfg.feat_dim));
    for (auto& p : proto) {
        double nrm = 0.0;
        for (double& v : p) {
            v = normal(rng);
            nrm += v * v;
        }
        for (double& v : p) v /= std::sqrt(nrm);
    }

    const double h = cfg.hierarchy_strength;
    const double noise_scale = 1.0 / std::sqrt(static_cast<double>(cfg.feat_dim));
    const std::size_t side = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(std::max<std::size_t>(1, cfg.spots_per_slide)))));

    for (std::size_t sl = 0; sl < cfg.n_slides; ++sl) {
        const std::string slide_id = padded("slide", sl);
        const double depth = 0.7 + 0.7 * unit(rng);
        const double radius = 20.0 + 100.0 * unit(rng);
        for (std::size_t i = 0; i < cfg.spots_per_slide; ++i) {
            Spot s;
            s.spot_id = slide_id + "_" + padded("s", i);
            s.slide_id = slide_id;
            s.x = static_cast<double>(i % side);
            s.y = static_cast<double>(i / side);
            s.radius = radius;

            const int y =
                static_cast<int>(std::min(cfg.n_classes - 1, static_cast<std::size_t>(unit(rng) * cfg.n_classes)));
            const double activity = unit(rng);
            const double spec = h * activity + (1.0 - h) * unit(rng);
            s.label = y;
            const double efficiency = std::exp((2.0 * unit(rng) - 1.0) * std::log(kEfficiencySpread));

            s.expr.assign(cfg.n_genes, 0.0);
            double used = 0.0;
            for (std::size_t g = 0; g < cfg.n_genes; ++g) {
                if (g == background) continue;
                const double detect = 1.0 / (1.0 + std::exp((threshold[g] - activity) / kDetectWidth));
                if (unit(rng) >= detect) continue;
                const double boost = marker_of[g] == y ? 1.0 + 4.0 * spec : 1.0;
                std::poisson_distribution<int> pois(rate[g] * depth * efficiency * boost);
                s.expr[g] = kExprUnit * (1.0 + pois(rng));
                used += s.expr[g];
            }
            s.expr[background] = std::max(kLibrarySize - used, kExprUnit);
            s.ngec = compute_ngec(s.expr);

            s.image_feat.resize(cfg.feat_dim);
            const double amp = 0.5 + 1.5 * spec;
            const auto& p = proto[static_cast<std::size_t>(y)];
            for (std::size_t k = 0; k < cfg.feat_dim; ++k)
                s.image_feat[k] = kFeatureScale * (amp * p[k] + noise_scale * normal(rng));

            out.specificity.push_back(spec);
            out.activity.push_back(activity);
            d.spots.push_back(std::move(s));
        }
    }
    return out;
}

}  // namespace delst::data
