#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "delst/data.hpp"
#include "delst/stats.hpp"

namespace delst::data {

std::vector<std::string> Dataset::slide_ids() const {
    std::vector<std::string> ids;
    std::unordered_set<std::string> seen;
    for (const Spot& s : spots)
        if (seen.insert(s.slide_id).second) ids.push_back(s.slide_id);
    return ids;
}

std::size_t compute_ngec(std::span<const double> expr) {
    std::size_t n = 0;
    for (double v : expr) {
        require(v >= 0.0, "compute_ngec: negative expression value");
        if (v > 0.0) ++n;
    }
    return n;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::hvg: return "hvg";
        case Strategy::overlap_hvg: return "overlap-hvg";
        case Strategy::e_overlap_hvg: return "e-overlap-hvg";
    }
    return "?";
}

Strategy parse_strategy(std::string_view s) {
    std::string norm(s);
    std::replace(norm.begin(), norm.end(), '_', '-');
    for (Strategy st : {Strategy::hvg, Strategy::overlap_hvg, Strategy::e_overlap_hvg})
        if (norm == to_string(st)) return st;
    throw ContractViolation("unknown gene selection strategy '" + std::string(s) + "'");
}

std::size_t default_gene_count(Strategy s) { return s == Strategy::hvg ? 128 : 100; }

std::vector<double> log1p_normalize(const SlideMatrix& m) {
    const std::size_t g = m.genes.size();
    std::vector<double> totals(m.n_spots, 0.0);
    for (std::size_t i = 0; i < m.n_spots; ++i)
        for (std::size_t j = 0; j < g; ++j) totals[i] += m.at(i, j);
    const double target = stats::median(totals);
    std::vector<double> out(m.counts.size(), 0.0);
    for (std::size_t i = 0; i < m.n_spots; ++i) {
        if (totals[i] <= 0.0) continue;
        const double scale = target / totals[i];
        for (std::size_t j = 0; j < g; ++j) out[i * g + j] = std::log1p(m.at(i, j) * scale);
    }
    return out;
}

const std::vector<std::string>& GenePanel::genes_for(std::string_view slide_id) const {
    if (strategy != Strategy::hvg) {
        require(genes.size() == 1, "GenePanel: overlap panels hold exactly one gene list");
        return genes.front();
    }
    for (std::size_t s = 0; s < slide_ids.size(); ++s)
        if (slide_ids[s] == slide_id) return genes[s];
    throw DataError("gene panel has no gene list for slide '" + std::string(slide_id) + "'");
}

namespace {

void validate(const SlideMatrix& m) {
    if (m.n_spots == 0 || m.genes.empty())
        throw DataError("slide '" + m.slide_id + "' has an empty expression matrix");
    require(m.counts.size() == m.n_spots * m.genes.size(), "slide '" + m.slide_id + "': count matrix shape mismatch");
    std::unordered_set<std::string> names(m.genes.begin(), m.genes.end());
    if (names.size() != m.genes.size()) throw DataError("slide '" + m.slide_id + "' has duplicate gene names");
    for (double v : m.counts)
        if (!(v >= 0.0)) throw DataError("slide '" + m.slide_id + "' has a negative or NaN count");
}


double sample_variance(std::span<const double> values) {
    if (values.size() < 2) return 0.0;
    const double m = stats::mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return ss / static_cast<double>(values.size() - 1);
}

// Candidate positions sorted by variance, descending; stable in candidate order.
std::vector<std::size_t> rank_by_variance(const std::vector<double>& variances) {
    std::vector<std::size_t> order(variances.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return variances[a] > variances[b]; });
    return order;
}

}  // namespace

GenePanel select_hvg(std::span<const SlideMatrix> slides, Strategy strategy, std::size_t gene_count) {
    require(gene_count > 0, "select_hvg: gene_count must be positive");
    if (slides.empty()) throw DataError("select_hvg: no slides");
    for (const SlideMatrix& m : slides) validate(m);

    GenePanel panel;
    panel.strategy = strategy;
    panel.gene_count = gene_count;
    for (const SlideMatrix& m : slides) panel.slide_ids.push_back(m.slide_id);

    if (strategy == Strategy::hvg) {
        for (const SlideMatrix& m : slides) {
            if (m.genes.size() < gene_count)
                throw DataError("slide '" + m.slide_id + "' has " + std::to_string(m.genes.size()) +
                                " genes, fewer than gene_count " + std::to_string(gene_count));
            const std::vector<double> norm = log1p_normalize(m);
            const std::size_t g = m.genes.size();
            std::vector<double> variances(g);
            std::vector<double> column(m.n_spots);
            for (std::size_t j = 0; j < g; ++j) {
                for (std::size_t i = 0; i < m.n_spots; ++i) column[i] = norm[i * g + j];
                variances[j] = sample_variance(column);
            }
            const std::vector<std::size_t> order = rank_by_variance(variances);
            std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(gene_count));
            std::vector<std::string> names;
            for (std::size_t j : idx) names.push_back(m.genes[j]);
            panel.indices.push_back(std::move(idx));
            panel.genes.push_back(std::move(names));
        }
        return panel;
    }

    // Intersection in the gene order of the first slide.
    std::vector<std::unordered_map<std::string, std::size_t>> columns(slides.size());
    for (std::size_t s = 0; s < slides.size(); ++s)
        for (std::size_t j = 0; j < slides[s].genes.size(); ++j) columns[s].emplace(slides[s].genes[j], j);
    std::vector<std::size_t> candidates;  // positions in slide 0
    for (std::size_t j = 0; j < slides[0].genes.size(); ++j) {
        const bool everywhere = std::all_of(columns.begin() + 1, columns.end(),
                                            [&](const auto& cols) { return cols.contains(slides[0].genes[j]); });
        if (everywhere) candidates.push_back(j);
    }
    if (candidates.size() < gene_count)
        throw DataError("gene intersection across " + std::to_string(slides.size()) + " slides has " +
                        std::to_string(candidates.size()) + " genes; gene_count " + std::to_string(gene_count) +
                        " needs " + std::to_string(gene_count - candidates.size()) + " more");

    std::size_t pooled = 0;
    for (const SlideMatrix& m : slides) pooled += m.n_spots;
    std::vector<std::vector<double>> normalized;
    for (const SlideMatrix& m : slides) normalized.push_back(log1p_normalize(m));

    std::vector<std::size_t> kept;
    std::vector<double> variances;
    std::vector<double> column;
    column.reserve(pooled);
    for (std::size_t j0 : candidates) {
        const std::string& name = slides[0].genes[j0];
        column.clear();
        std::size_t zeros = 0;
        for (std::size_t s = 0; s < slides.size(); ++s) {
            const std::size_t j = columns[s].at(name);
            const std::size_t g = slides[s].genes.size();
            for (std::size_t i = 0; i < slides[s].n_spots; ++i) {
                column.push_back(normalized[s][i * g + j]);
                if (slides[s].at(i, j) == 0.0) ++zeros;
            }
        }
        if (strategy == Strategy::e_overlap_hvg &&
            static_cast<double>(zeros) > kMaxZeroFraction * static_cast<double>(pooled))
            continue;
        kept.push_back(j0);
        variances.push_back(sample_variance(column));
    }
    if (kept.size() < gene_count)
        throw DataError("only " + std::to_string(kept.size()) + " overlapping genes are expressed in at least 10% of " +
                        "spots; gene_count " + std::to_string(gene_count) + " needs " +
                        std::to_string(gene_count - kept.size()) + " more");

    const std::vector<std::size_t> order = rank_by_variance(variances);
    std::vector<std::size_t> idx;
    std::vector<std::string> names;
    for (std::size_t r = 0; r < gene_count; ++r) {
        idx.push_back(kept[order[r]]);
        names.push_back(slides[0].genes[kept[order[r]]]);
    }
    panel.indices.push_back(std::move(idx));
    panel.genes.push_back(std::move(names));
    return panel;
}

std::vector<SlideMatrix> split_by_slide(const Dataset& d) {
    std::vector<SlideMatrix> out;
    std::unordered_map<std::string, std::size_t> where;
    for (const Spot& s : d.spots) {
        auto [it, fresh] = where.emplace(s.slide_id, out.size());
        if (fresh) {
            SlideMatrix m;
            m.slide_id = s.slide_id;
            m.genes = d.genes;
            out.push_back(std::move(m));
        }
        SlideMatrix& m = out[it->second];
        m.counts.insert(m.counts.end(), s.expr.begin(), s.expr.end());
        ++m.n_spots;
    }
    return out;
}

ModelInputs build_inputs(const Dataset& d, const GenePanel& panel) {
    ModelInputs in;
    in.gene_count = panel.gene_count;
    in.feat_dim = d.feat_dim;
    const std::size_t n = d.spots.size();
    in.spot_index.resize(n);
    std::iota(in.spot_index.begin(), in.spot_index.end(), std::size_t{0});
    in.genes.assign(n * panel.gene_count, 0.0);
    in.feats.reserve(n * d.feat_dim);
    for (const Spot& s : d.spots) {
        require(s.image_feat.size() == d.feat_dim, "build_inputs: feature width mismatch for spot " + s.spot_id);
        in.feats.insert(in.feats.end(), s.image_feat.begin(), s.image_feat.end());
        in.ngec.push_back(s.ngec);
        in.labels.push_back(s.label);
    }

    std::unordered_map<std::string, std::size_t> gene_col;
    for (std::size_t j = 0; j < d.genes.size(); ++j) gene_col.emplace(d.genes[j], j);

    std::unordered_map<std::string, std::vector<std::size_t>> by_slide;
    for (std::size_t i = 0; i < n; ++i) by_slide[d.spots[i].slide_id].push_back(i);
    for (const std::string& slide : d.slide_ids()) {
        const std::vector<std::size_t>& rows = by_slide[slide];
        SlideMatrix m;
        m.slide_id = slide;
        m.genes = d.genes;
        m.n_spots = rows.size();
        for (std::size_t i : rows) m.counts.insert(m.counts.end(), d.spots[i].expr.begin(), d.spots[i].expr.end());
        const std::vector<double> norm = log1p_normalize(m);

        const std::vector<std::string>& names = panel.genes_for(slide);
        if (names.size() != panel.gene_count) throw DataError("gene panel list length differs from gene_count");
        std::vector<std::size_t> cols;
        for (const std::string& g : names) {
            auto it = gene_col.find(g);
            if (it == gene_col.end()) throw DataError("panel gene '" + g + "' is not in the dataset");
            cols.push_back(it->second);
        }
        const std::size_t width = d.genes.size();
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t k = 0; k < cols.size(); ++k)
                in.genes[rows[r] * panel.gene_count + k] = norm[r * width + cols[k]];
    }
    return in;
}

ModelInputs take_rows(const ModelInputs& in, std::span<const std::size_t> rows) {
    ModelInputs out;
    out.gene_count = in.gene_count;
    out.feat_dim = in.feat_dim;
    for (std::size_t r : rows) {
        require(r < in.rows(), "take_rows: row out of range");
        out.spot_index.push_back(in.spot_index[r]);
        auto g = std::span(in.genes).subspan(r * in.gene_count, in.gene_count);
        auto f = std::span(in.feats).subspan(r * in.feat_dim, in.feat_dim);
        out.genes.insert(out.genes.end(), g.begin(), g.end());
        out.feats.insert(out.feats.end(), f.begin(), f.end());
        out.ngec.push_back(in.ngec[r]);
        out.labels.push_back(in.labels[r]);
    }
    return out;
}

}  // namespace delst::data
