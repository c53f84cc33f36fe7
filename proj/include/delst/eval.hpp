#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "delst/data.hpp"
#include "delst/encoders.hpp"

namespace delst::eval {

enum class Modality { image, gene };

std::string_view to_string(Modality m);
Modality parse_modality(std::string_view s);

struct EmbedOptions {
    Modality modality = Modality::image;
    /// Append the time component as a last column.
    bool include_time = false;
    double curvature = 1.0;
};

/// Row-major embedding matrix of the labeled spots, in input order.
struct Embeddings {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
    std::vector<std::size_t> spot_index;
    std::vector<int> labels;
};

/// Throws DataError when no input row carries a label.
Embeddings embed_dataset(const encoders::EncoderParams& params, const data::ModelInputs& in,
                         const EmbedOptions& opts = {});

std::uint64_t checksum(const Embeddings& e);

// ---------------------------------------------------------------------------
// Linear probe

struct ProbeConfig {
    double train_frac = 0.8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    std::size_t n_seeds = 5;
    std::uint64_t seed = 0;  ///< split seeds are seed, seed + 1, ...
    std::size_t epochs = 300;
    double lr = 0.5;
    std::size_t patience = 50;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train, val, test;
};

/// Per class: shuffle with `seed`, then take round(val_frac * n) for validation,
/// round(test_frac * n) for test and the rest for training.
Split stratified_split(const std::vector<int>& labels, const ProbeConfig& cfg, std::uint64_t seed);

/// Macro F1 over the union of true and predicted classes.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred);

struct ProbeReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> f1;
    double mean = 0.0;
    double sd = 0.0;  ///< sample standard deviation
};

/// Multinomial logistic regression on standardized features, full-batch
/// gradient descent from zero, early stopping on validation macro F1.
ProbeReport linear_probe(const Embeddings& e, const ProbeConfig& cfg = {});

void write_probe_tsv(std::ostream& out, const ProbeReport& r);
std::string probe_summary(const ProbeReport& r);

// ---------------------------------------------------------------------------
// Hierarchy diagnostics

inline constexpr std::size_t kApertureBins = 10;

struct HierarchyReport {
    std::size_t n = 0;
    std::optional<double> spearman_gene;   ///< Spearman(NGEC, ||gene space||)
    std::optional<double> spearman_image;  ///< Spearman(NGEC, ||image space||)
    double violation_rate = 0.0;           ///< share of (gene, image) pairs outside the gene cone
    /// Gene half-apertures binned over [0, pi/2]; the last bin includes pi/2.
    std::array<std::size_t, kApertureBins> gene_aperture_hist{};
    std::array<std::size_t, kApertureBins> image_aperture_hist{};
};

HierarchyReport hierarchy_diagnostics(const encoders::EncoderParams& params, const data::ModelInputs& in,
                                      double curvature = 1.0, double k_aper = 0.1);

void write_diagnostics_tsv(std::ostream& out, const HierarchyReport& r);
std::string diagnostics_summary(const HierarchyReport& r);

}  // namespace delst::eval
