#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "delst/autodiff.hpp"
#include "delst/data.hpp"
#include "delst/encoders.hpp"
#include "delst/losses.hpp"

namespace delst::trainer {

struct TrainConfig {
    std::size_t epochs = 15;
    std::size_t batch_size = 256;
    double lr = 5e-5;
    double weight_decay = 0.2;
    double tau = 0.07;
    double lambda = 0.1;
    double beta = 0.1;
    /// IMEL tail size; 0 means round(0.15 * batch_size).
    std::size_t q = 0;
    std::uint64_t seed = 0;
    losses::SimMode sim_mode = losses::SimMode::cosine_full;
    bool symmetric = false;
    bool enable_cmel = true;
    bool enable_imel = true;
    double curvature = 1.0;
    double k_aper = 0.1;
    std::size_t hidden = 64;
    std::size_t embed_dim = 32;

    std::size_t effective_q() const;
    losses::LossWeights weights() const;
    losses::LossOptions options() const;
    /// Throws ContractViolation on a non-positive size or rate, or 2q > batch_size.
    void validate() const;
};

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    std::vector<ad::Tensor> m;  ///< in EncoderParams::named() order
    std::vector<ad::Tensor> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const encoders::EncoderParams& p);
    friend bool operator==(const AdamState& a, const AdamState& b);
};

/// One bias-corrected Adam step on `grad` slots; decoupled decay first.
void adam_step(encoders::EncoderParams& params, AdamState& state, double lr, double weight_decay);

/// Epoch means over batches. Epoch 0 is the untrained model evaluated on the
/// epoch-1 batches.
struct EpochRecord {
    std::size_t epoch = 0;
    losses::LossBreakdown loss;
    double violation_rate = 0.0;

    friend bool operator==(const EpochRecord& a, const EpochRecord& b);
};

struct TrainState {
    encoders::EncoderParams params;
    AdamState adam;
    std::size_t epochs_done = 0;
    std::vector<EpochRecord> history;
};

/// Fresh state: parameters initialised from cfg.seed, zero moments.
TrainState initial_state(const data::ModelInputs& in, const TrainConfig& cfg);

/// Row order of one epoch (seeded by cfg.seed and the epoch number).
std::vector<std::size_t> epoch_order(std::size_t rows, std::uint64_t seed, std::size_t epoch);

/// Loss graph of one batch on `tape`, with parameters bound as leaves.
struct BatchGraph {
    encoders::ParamVars vars;
    losses::GraphPoints gene;
    losses::GraphPoints image;
    losses::GraphLoss loss;
};
BatchGraph batch_graph(ad::Tape& tape, const encoders::EncoderParams& params, const data::ModelInputs& batch,
                       const TrainConfig& cfg);

/// Fraction of (gene, image) pairs of the batch whose cone constraint is violated.
double batch_violation_rate(const BatchGraph& g, const TrainConfig& cfg);

using EpochCallback = std::function<void(const TrainState&)>;

/// Runs epochs state.epochs_done + 1 .. cfg.epochs. The last incomplete batch
/// of every epoch is dropped. Throws NumericalError on a non-finite loss.
void train(const data::ModelInputs& in, const TrainConfig& cfg, TrainState& state,
           const EpochCallback& on_epoch = {});

/// Convenience: initial_state followed by train.
TrainState train(const data::ModelInputs& in, const TrainConfig& cfg);

/// Tab-separated history: epoch, l_cont, l_ent_cross, l_ent_intra, l_final, violation_rate.
void write_history(std::ostream& out, std::span<const EpochRecord> history);

// ---------------------------------------------------------------------------
// Checkpoints: "DELSTCKP", u32 version, named entries with little-endian
// float64 payloads, trailing FNV-1a checksum.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const std::string& meta = {});

struct LoadedCheckpoint {
    TrainState state;
    std::string meta;
};
/// Throws DataError on a bad magic, version mismatch, truncation or checksum failure.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace delst::trainer
