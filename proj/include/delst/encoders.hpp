#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "delst/autodiff.hpp"
#include "delst/lorentz.hpp"
#include "delst/losses.hpp"

namespace delst::encoders {

using lorentz::Curvature;
using lorentz::HyperPoint;

struct EncoderDims {
    std::size_t gene_count = 100;
    std::size_t feat_dim = 512;
    std::size_t hidden = 64;
    std::size_t embed_dim = 32;

    friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// A trainable tensor and its gradient slot (same shape).
struct Param {
    ad::Tensor value;
    ad::Tensor grad;

    explicit Param(ad::Shape s = {}) : value(ad::Tensor::zeros(s)), grad(ad::Tensor::zeros(s)) {}
};

/// Single fully connected layer: gene_count -> embed_dim.
struct GeneEncoder {
    Param weight;  ///< gene_count x embed_dim
    Param bias;    ///< 1 x embed_dim
};

/// feat_dim -> hidden -> embed_dim with a ReLU in between.
struct ImageProjector {
    Param w1;  ///< feat_dim x hidden
    Param b1;  ///< 1 x hidden
    Param w2;  ///< hidden x embed_dim
    Param b2;  ///< 1 x embed_dim
};

struct EncoderParams {
    EncoderDims dims;
    GeneEncoder gene;
    ImageProjector image;

    /// Fixed-order view used by the optimizer, checkpoints and flattening.
    std::vector<std::pair<std::string_view, Param*>> named();
    std::vector<std::pair<std::string_view, const Param*>> named() const;

    std::size_t parameter_count() const;
    std::vector<double> flatten() const;
    std::vector<double> flatten_grads() const;
    void unflatten(std::span<const double> flat);
    void zero_grads();
};

/// Zero-valued parameters with the shapes implied by `dims`.
EncoderParams zero_params(const EncoderDims& dims);

/// Xavier-uniform weights, zero biases, deterministic in `seed`.
EncoderParams init_params(const EncoderDims& dims, std::uint64_t seed);

/// FNV-1a over the little-endian bytes of every parameter value.
std::uint64_t checksum(const EncoderParams& p);

HyperPoint encode_gene(const EncoderParams& p, std::span<const double> expr, Curvature c = Curvature{});
HyperPoint encode_image(const EncoderParams& p, std::span<const double> feat, Curvature c = Curvature{});

// Tape versions: inputs are row-major batches (N x gene_count, N x feat_dim).

struct ParamVars {
    ad::Var gene_weight, gene_bias;
    ad::Var image_w1, image_b1, image_w2, image_b2;
};

/// Registers every parameter on `tape` as a gradient leaf.
ParamVars bind(ad::Tape& tape, const EncoderParams& p);

/// Copies tape gradients back into the parameter grad slots.
void collect_grads(const ad::Tape& tape, const ParamVars& vars, EncoderParams& p);

losses::GraphPoints exp_map_graph(ad::Var tangent, Curvature c);
losses::GraphPoints encode_gene_graph(const ParamVars& v, ad::Var expr, Curvature c);
losses::GraphPoints encode_image_graph(const ParamVars& v, ad::Var feat, Curvature c);

}  // namespace delst::encoders
