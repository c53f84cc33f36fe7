#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "delst/autodiff.hpp"
#include "delst/lorentz.hpp"

namespace delst::losses {

using lorentz::ConeConstants;
using lorentz::Curvature;
using lorentz::HyperPoint;

/// Similarity used inside the contrastive softmax.
enum class SimMode {
    cosine_full,           ///< cosine over the (n+1)-dim [space, time] vectors
    cosine_space,          ///< cosine over the spatial components only
    neg_lorentz_distance,  ///< -acosh(-c <x,y>_L) / sqrt(c)
};

std::string_view to_string(SimMode m);
/// Accepts "cosine_full", "cosine-full", etc. Throws ContractViolation otherwise.
SimMode parse_sim_mode(std::string_view s);

struct BatchEmbeddings {
    std::vector<HyperPoint> image_points;
    std::vector<HyperPoint> gene_points;
    std::vector<std::size_t> ngec;

    std::size_t size() const { return image_points.size(); }
};

struct LossWeights {
    double lambda = 0.1;
    double beta = 0.1;
    double tau = 0.07;
    std::size_t q = 1;
};

struct LossOptions {
    SimMode sim_mode = SimMode::cosine_full;
    /// Average the image->gene and gene->image directions of the contrastive loss.
    bool symmetric = false;
    ConeConstants cone{};
    Curvature curvature{};
};

struct LossBreakdown {
    double l_cont = 0.0;
    double l_ent_cross = 0.0;
    double l_ent_intra_gene = 0.0;
    double l_ent_intra_image = 0.0;
    double l_ent_intra = 0.0;
    double l_final = 0.0;
};

double similarity(const HyperPoint& a, const HyperPoint& b, SimMode mode, Curvature c);

/// Image-anchored InfoNCE: rows are images, the softmax runs over genes.
double contrastive_loss(const BatchEmbeddings& batch, double tau, const LossOptions& opts = {});

/// Mean cone violation of each image inside the cone of its paired gene.
double cmel_loss(const BatchEmbeddings& batch, ConeConstants k, Curvature c);

/// Fraction of pairs whose image lies outside the paired gene cone.
double violation_rate(const BatchEmbeddings& batch, ConeConstants k, Curvature c);

struct NgecSplit {
    std::vector<std::size_t> low;   ///< q smallest NGEC (LNGEC)
    std::vector<std::size_t> high;  ///< q largest NGEC (HNGEC)
};

/// Ranks spots by (ngec, index) ascending; the first q are LNGEC and the last q
/// HNGEC. Requires 2q <= ngec.size().
NgecSplit select_hngec_lngec(std::span<const std::size_t> ngec, std::size_t q);

struct ImelTerms {
    double gene = 0.0;
    double image = 0.0;
    double average = 0.0;
};

/// (1/q^2) sum_i sum_j max(0, aper(H_j) - aper(L_i)) per modality.
ImelTerms imel_loss(const BatchEmbeddings& batch, std::size_t q, ConeConstants k, Curvature c);

LossBreakdown final_loss(const BatchEmbeddings& batch, const LossWeights& w, const LossOptions& opts = {});

// ---------------------------------------------------------------------------
// Differentiable versions on an autodiff tape. Points are batched: `space` is
// N x n and `time` is N x 1.

struct GraphPoints {
    ad::Var space;
    ad::Var time;
};

struct GraphLoss {
    ad::Var l_cont;
    ad::Var l_ent_cross;
    ad::Var l_ent_intra_gene;
    ad::Var l_ent_intra_image;
    ad::Var l_ent_intra;
    ad::Var l_final;

    LossBreakdown values() const;
};

ad::Var half_aperture_graph(const GraphPoints& g, ConeConstants k, Curvature c);
/// Per-pair exterior angle, N x 1, with the same degenerate-pair convention as
/// lorentz::exterior_angle.
ad::Var exterior_angle_graph(const GraphPoints& g, const GraphPoints& i, Curvature c);

ad::Var contrastive_loss_graph(const GraphPoints& image, const GraphPoints& gene, double tau,
                               const LossOptions& opts = {});
ad::Var cmel_loss_graph(const GraphPoints& gene, const GraphPoints& image, ConeConstants k, Curvature c);
ad::Var imel_loss_graph(const GraphPoints& points, const NgecSplit& split, ConeConstants k, Curvature c);

GraphLoss final_loss_graph(const GraphPoints& image, const GraphPoints& gene, std::span<const std::size_t> ngec,
                           const LossWeights& w, const LossOptions& opts = {});

}  // namespace delst::losses
