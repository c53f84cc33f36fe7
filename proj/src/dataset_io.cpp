#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "delst/data.hpp"

namespace delst::data {

namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cells.push_back(line.substr(start));
            return cells;
        }
        cells.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

// Line-oriented reader that knows where it is for error messages.
class TsvReader {
public:
    explicit TsvReader(fs::path path) : path_(std::move(path)), in_(path_, std::ios::binary) {
        if (!in_) throw DataError("cannot open " + path_.string());
    }

    bool next() {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (!line_.empty() && line_.back() == '\r') line_.pop_back();
            if (line_.empty()) continue;
            cells_ = split_tabs(line_);
            return true;
        }
        return false;
    }

    const std::vector<std::string_view>& cells() const { return cells_; }

    [[noreturn]] void fail(std::size_t column, const std::string& what) const {
        throw DataError(path_.filename().string() + ":" + std::to_string(line_no_) + ":" +
                        std::to_string(column + 1) + ": " + what);
    }

    void expect_width(std::size_t width) const {
        if (cells_.size() != width)
            fail(std::min(cells_.size(), width), "expected " + std::to_string(width) + " columns, found " +
                                                     std::to_string(cells_.size()));
    }

    double number(std::size_t column) const {
        const std::string_view s = cells_[column];
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
            fail(column, "not a number: '" + std::string(s) + "'");
        return v;
    }

private:
    fs::path path_;
    std::ifstream in_;
    std::string line_;
    std::size_t line_no_ = 0;
    std::vector<std::string_view> cells_;
};

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& d) {
    fs::create_directories(dir);
    {
        auto out = open_out(dir / kExpressionFile);
        out << "spot_id";
        for (const std::string& g : d.genes) out << '\t' << g;
        out << '\n';
        for (const Spot& s : d.spots) {
            out << s.spot_id;
            for (double v : s.expr) out << '\t' << format_double(v);
            out << '\n';
        }
    }
    {
        auto out = open_out(dir / kFeatureFile);
        out << "spot_id";
        for (std::size_t k = 0; k < d.feat_dim; ++k) out << "\tf" << k;
        out << '\n';
        for (const Spot& s : d.spots) {
            out << s.spot_id;
            for (double v : s.image_feat) out << '\t' << format_double(v);
            out << '\n';
        }
    }
    {
        auto out = open_out(dir / kMetadataFile);
        out << "spot_id\tslide_id\tx\ty\tradius\tlabel\n";
        for (const Spot& s : d.spots) {
            out << s.spot_id << '\t' << s.slide_id << '\t' << format_double(s.x) << '\t' << format_double(s.y) << '\t'
                << format_double(s.radius) << '\t';
            if (s.label) out << *s.label;
            out << '\n';
        }
    }
}

Dataset load_dataset(const fs::path& dir, Format format) {
    require(format == Format::tsv, "load_dataset: unsupported format");
    Dataset d;

    TsvReader expr(dir / kExpressionFile);
    if (!expr.next()) expr.fail(0, "missing header row");
    if (expr.cells().size() < 2) expr.fail(0, "header needs spot_id and at least one gene");
    for (std::size_t c = 1; c < expr.cells().size(); ++c) d.genes.emplace_back(expr.cells()[c]);
    const std::size_t expr_width = expr.cells().size();
    std::unordered_map<std::string, std::size_t> row_of;
    while (expr.next()) {
        expr.expect_width(expr_width);
        Spot s;
        s.spot_id = std::string(expr.cells()[0]);
        if (s.spot_id.empty()) expr.fail(0, "empty spot_id");
        if (!row_of.emplace(s.spot_id, d.spots.size()).second) expr.fail(0, "duplicate spot_id '" + s.spot_id + "'");
        s.expr.reserve(d.genes.size());
        for (std::size_t c = 1; c < expr_width; ++c) {
            const double v = expr.number(c);
            if (!(v >= 0.0) || !std::isfinite(v))
                expr.fail(c, "expression value " + std::string(expr.cells()[c]) + " for gene '" + d.genes[c - 1] +
                                 "' must be a finite non-negative number");
            s.expr.push_back(v);
        }
        s.ngec = compute_ngec(s.expr);
        d.spots.push_back(std::move(s));
    }

    std::vector<bool> seen(d.spots.size(), false);
    TsvReader feat(dir / kFeatureFile);
    if (!feat.next()) feat.fail(0, "missing header row");
    const std::size_t feat_width = feat.cells().size();
    if (feat_width < 2) feat.fail(0, "header needs spot_id and at least one feature");
    d.feat_dim = feat_width - 1;
    while (feat.next()) {
        feat.expect_width(feat_width);
        auto it = row_of.find(std::string(feat.cells()[0]));
        if (it == row_of.end()) feat.fail(0, "spot_id '" + std::string(feat.cells()[0]) + "' not in expression file");
        if (seen[it->second]) feat.fail(0, "duplicate spot_id '" + std::string(feat.cells()[0]) + "'");
        seen[it->second] = true;
        Spot& s = d.spots[it->second];
        for (std::size_t c = 1; c < feat_width; ++c) {
            const double v = feat.number(c);
            if (!std::isfinite(v)) feat.fail(c, "non-finite feature value");
            s.image_feat.push_back(v);
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw DataError(std::string(kFeatureFile) + ": no row for spot_id '" + d.spots[i].spot_id + "'");

    std::fill(seen.begin(), seen.end(), false);
    TsvReader meta(dir / kMetadataFile);
    if (!meta.next()) meta.fail(0, "missing header row");
    const std::vector<std::string_view> expected = {"spot_id", "slide_id", "x", "y", "radius", "label"};
    meta.expect_width(expected.size());
    for (std::size_t c = 0; c < expected.size(); ++c)
        if (meta.cells()[c] != expected[c]) meta.fail(c, "expected column '" + std::string(expected[c]) + "'");
    while (meta.next()) {
        meta.expect_width(expected.size());
        auto it = row_of.find(std::string(meta.cells()[0]));
        if (it == row_of.end()) meta.fail(0, "spot_id '" + std::string(meta.cells()[0]) + "' not in expression file");
        if (seen[it->second]) meta.fail(0, "duplicate spot_id '" + std::string(meta.cells()[0]) + "'");
        seen[it->second] = true;
        Spot& s = d.spots[it->second];
        s.slide_id = std::string(meta.cells()[1]);
        if (s.slide_id.empty()) meta.fail(1, "empty slide_id");
        s.x = meta.number(2);
        s.y = meta.number(3);
        s.radius = meta.number(4);
        if (!(s.radius > 0.0) || !std::isfinite(s.radius)) meta.fail(4, "radius must be positive");
        const std::string_view lab = meta.cells()[5];
        if (!lab.empty()) {
            int v = 0;
            auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), v);
            if (ec != std::errc{} || ptr != lab.data() + lab.size() || v < 0)
                meta.fail(5, "label must be a non-negative integer");
            s.label = v;
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) throw DataError(std::string(kMetadataFile) + ": no row for spot_id '" + d.spots[i].spot_id + "'");
    return d;
}

void save_panel(const fs::path& path, const GenePanel& panel) {
    nlohmann::json j;
    j["strategy"] = std::string(to_string(panel.strategy));
    j["gene_count"] = panel.gene_count;
    j["slide_ids"] = panel.slide_ids;
    j["genes"] = panel.genes;
    j["indices"] = panel.indices;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

GenePanel load_panel(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        const nlohmann::json j = nlohmann::json::parse(in);
        GenePanel p;
        p.strategy = parse_strategy(j.at("strategy").get<std::string>());
        p.gene_count = j.at("gene_count").get<std::size_t>();
        p.slide_ids = j.at("slide_ids").get<std::vector<std::string>>();
        p.genes = j.at("genes").get<std::vector<std::vector<std::string>>>();
        p.indices = j.at("indices").get<std::vector<std::vector<std::size_t>>>();
        for (const auto& g : p.genes)
            if (g.size() != p.gene_count) throw DataError("gene list length differs from gene_count");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    } catch (const ContractViolation& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace delst::data
