#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "delst/errors.hpp"

/// Spot data model, gene panels, dataset files and the synthetic generator.
namespace delst::data {

struct Spot {
    std::string spot_id;
    std::string slide_id;
    std::vector<double> expr;        ///< full gene vector, non-negative
    std::vector<double> image_feat;  ///< precomputed image features
    std::size_t ngec = 0;            ///< strictly positive entries of `expr`
    std::optional<int> label;
    double x = 0.0;
    double y = 0.0;
    double radius = 1.0;  ///< pixels

    friend bool operator==(const Spot&, const Spot&) = default;
};

struct Dataset {
    std::vector<std::string> genes;
    std::size_t feat_dim = 0;
    std::vector<Spot> spots;

    /// Slide ids in order of first appearance.
    std::vector<std::string> slide_ids() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Number of strictly positive entries. Negative entries are a contract violation.
std::size_t compute_ngec(std::span<const double> expr);

// ---------------------------------------------------------------------------
// Gene selection

enum class Strategy { hvg, overlap_hvg, e_overlap_hvg };

std::string_view to_string(Strategy s);
/// Accepts "hvg", "overlap-hvg", "overlap_hvg", "e-overlap-hvg", "e_overlap_hvg".
Strategy parse_strategy(std::string_view s);
/// 128 for hvg, 100 for the overlap strategies.
std::size_t default_gene_count(Strategy s);

/// Raw counts of one slide: spots x genes, row-major.
struct SlideMatrix {
    std::string slide_id;
    std::vector<std::string> genes;
    std::size_t n_spots = 0;
    std::vector<double> counts;

    double at(std::size_t spot, std::size_t gene) const { return counts[spot * genes.size() + gene]; }
};

/// Per-spot scaling of the total count to the slide median, then log1p.
std::vector<double> log1p_normalize(const SlideMatrix& m);

/// Selected genes. For hvg there is one list per slide; the overlap strategies
/// hold a single list shared by every slide. `indices` address the gene list of
/// the corresponding slide (hvg) or of the first slide (overlap).
struct GenePanel {
    Strategy strategy = Strategy::hvg;
    std::size_t gene_count = 0;
    std::vector<std::string> slide_ids;
    std::vector<std::vector<std::string>> genes;
    std::vector<std::vector<std::size_t>> indices;

    /// Panel gene names used for `slide_id`.
    const std::vector<std::string>& genes_for(std::string_view slide_id) const;

    friend bool operator==(const GenePanel&, const GenePanel&) = default;
};

/// Fraction of pooled spots above which a gene counts as mostly zero.
inline constexpr double kMaxZeroFraction = 0.9;

/// Ranks genes by the variance of log1p-normalized expression; ties go to the
/// earlier gene. Throws DataError when fewer than `gene_count` candidates exist.
GenePanel select_hvg(std::span<const SlideMatrix> slides, Strategy strategy, std::size_t gene_count);

/// Splits a dataset into per-slide matrices (every slide carries the full gene list).
std::vector<SlideMatrix> split_by_slide(const Dataset& d);

void save_panel(const std::filesystem::path& path, const GenePanel& panel);
GenePanel load_panel(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Encoder inputs

/// Row-aligned encoder inputs for a list of spots.
struct ModelInputs {
    std::size_t gene_count = 0;
    std::size_t feat_dim = 0;
    std::vector<std::size_t> spot_index;  ///< index into Dataset::spots
    std::vector<double> genes;            ///< rows x gene_count, log1p-normalized panel values
    std::vector<double> feats;            ///< rows x feat_dim
    std::vector<std::size_t> ngec;
    std::vector<std::optional<int>> labels;

    std::size_t rows() const { return spot_index.size(); }
};

/// Applies `panel` to every spot of `d`, using per-slide normalization.
ModelInputs build_inputs(const Dataset& d, const GenePanel& panel);

/// Copies the given rows into a new ModelInputs (same column layout).
ModelInputs take_rows(const ModelInputs& in, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Files

enum class Format { tsv };

inline constexpr std::string_view kExpressionFile = "expression.tsv";
inline constexpr std::string_view kFeatureFile = "features.tsv";
inline constexpr std::string_view kMetadataFile = "metadata.tsv";

/// Writes the three tab-separated files into `dir` (created if missing).
void save_dataset(const std::filesystem::path& dir, const Dataset& d);

/// Reads the three files from `dir`; NGEC is recomputed from the expression matrix.
/// Throws DataError with file, line and column context on malformed input.
Dataset load_dataset(const std::filesystem::path& dir, Format format = Format::tsv);

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticConfig {
    std::size_t n_slides = 4;
    std::size_t spots_per_slide = 500;
    std::size_t n_genes = 300;
    std::size_t n_classes = 4;
    std::size_t feat_dim = 512;
    /// 0: NGEC independent of class specificity; 1: fully coupled.
    double hierarchy_strength = 1.0;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    Dataset data;
    /// Latent per-spot class specificity in [0, 1] (not written to files).
    std::vector<double> specificity;
    /// Latent per-spot activity in [0, 1]; drives the detection rate and so NGEC.
    std::vector<double> activity;
};

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

}  // namespace delst::data
