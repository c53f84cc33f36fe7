#include "delst/eval.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "delst/lorentz.hpp"
#include "delst/stats.hpp"

namespace delst::eval {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double space_norm(const lorentz::HyperPoint& p) {
    double s = 0.0;
    for (double x : p.space) s += x * x;
    return std::sqrt(s);
}

std::size_t aperture_bin(double aper) {
    const double t = aper / (std::numbers::pi / 2.0);
    const auto b = static_cast<std::size_t>(std::max(0.0, t) * static_cast<double>(kApertureBins));
    return std::min(b, kApertureBins - 1);
}

struct ClassIndex {
    std::vector<int> classes;  // sorted
    std::map<int, std::size_t> index;

    explicit ClassIndex(const std::vector<int>& labels) {
        std::set<int> s(labels.begin(), labels.end());
        classes.assign(s.begin(), s.end());
        for (std::size_t k = 0; k < classes.size(); ++k) index.emplace(classes[k], k);
    }
};

// Softmax regression weights: (cols + 1) x classes, bias in the last row.
class Probe {
public:
    Probe(std::size_t dim, std::size_t classes) : dim_(dim), classes_(classes), w_((dim + 1) * classes, 0.0) {}

    std::vector<double> scores(const double* x) const {
        std::vector<double> z(classes_, 0.0);
        for (std::size_t c = 0; c < classes_; ++c) {
            double s = w_[dim_ * classes_ + c];
            for (std::size_t j = 0; j < dim_; ++j) s += x[j] * w_[j * classes_ + c];
            z[c] = s;
        }
        return z;
    }

    std::size_t predict(const double* x) const {
        const auto z = scores(x);
        return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    }

    void step(const std::vector<double>& x, const std::vector<std::size_t>& y, const std::vector<std::size_t>& rows,
              double lr) {
        std::vector<double> grad(w_.size(), 0.0);
        for (std::size_t r : rows) {
            const double* xr = x.data() + r * dim_;
            auto z = scores(xr);
            const double m = *std::max_element(z.begin(), z.end());
            double total = 0.0;
            for (double& v : z) total += (v = std::exp(v - m));
            for (std::size_t c = 0; c < classes_; ++c) {
                const double d = z[c] / total - (y[r] == c ? 1.0 : 0.0);
                for (std::size_t j = 0; j < dim_; ++j) grad[j * classes_ + c] += d * xr[j];
                grad[dim_ * classes_ + c] += d;
            }
        }
        const double scale = lr / static_cast<double>(rows.size());
        for (std::size_t k = 0; k < w_.size(); ++k) w_[k] -= scale * grad[k];
    }

private:
    std::size_t dim_, classes_;
    std::vector<double> w_;
};

}  // namespace

std::string_view to_string(Modality m) { return m == Modality::image ? "image" : "gene"; }

Modality parse_modality(std::string_view s) {
    if (s == "image") return Modality::image;
    if (s == "gene") return Modality::gene;
    throw ContractViolation("unknown modality '" + std::string(s) + "' (expected image or gene)");
}

Embeddings embed_dataset(const encoders::EncoderParams& params, const data::ModelInputs& in, const EmbedOptions& opts) {
    const lorentz::Curvature c(opts.curvature);
    Embeddings e;
    e.cols = params.dims.embed_dim + (opts.include_time ? 1 : 0);
    for (std::size_t r = 0; r < in.rows(); ++r) {
        if (!in.labels[r]) continue;
        const lorentz::HyperPoint p =
            opts.modality == Modality::image
                ? encoders::encode_image(params, std::span(in.feats).subspan(r * in.feat_dim, in.feat_dim), c)
                : encoders::encode_gene(params, std::span(in.genes).subspan(r * in.gene_count, in.gene_count), c);
        e.values.insert(e.values.end(), p.space.begin(), p.space.end());
        if (opts.include_time) e.values.push_back(p.time);
        e.spot_index.push_back(in.spot_index[r]);
        e.labels.push_back(*in.labels[r]);
        ++e.rows;
    }
    if (e.rows == 0) throw DataError("no labeled spots to embed");
    return e;
}

std::uint64_t checksum(const Embeddings& e) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : e.values) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

void ProbeConfig::validate() const {
    require(train_frac > 0.0 && val_frac >= 0.0 && test_frac > 0.0, "probe split fractions must be positive");
    require(std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9, "probe split fractions must sum to 1");
    require(n_seeds >= 1, "n_seeds must be at least 1");
    require(epochs >= 1, "probe epochs must be at least 1");
    require(lr > 0.0, "probe lr must be positive");
}

Split stratified_split(const std::vector<int>& labels, const ProbeConfig& cfg, std::uint64_t seed) {
    // One shuffle of all rows, then per-class quotas; independent of label values.
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t r : order) by_class[labels[r]].push_back(r);
    Split s;
    for (const auto& [label, rows] : by_class) {
        const double n = static_cast<double>(rows.size());
        const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_frac * n));
        const auto n_test = std::min(rows.size() - n_val, static_cast<std::size_t>(std::llround(cfg.test_frac * n)));
        auto it = rows.begin();
        s.val.insert(s.val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
        it += static_cast<std::ptrdiff_t>(n_val);
        s.test.insert(s.test.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
        it += static_cast<std::ptrdiff_t>(n_test);
        s.train.insert(s.train.end(), it, rows.end());
    }
    for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
    return s;
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& pred) {
    require(truth.size() == pred.size(), "macro_f1: length mismatch");
    if (truth.empty()) return 0.0;
    std::set<int> classes(truth.begin(), truth.end());
    classes.insert(pred.begin(), pred.end());
    double total = 0.0;
    for (int c : classes) {
        std::size_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (pred[i] == c && truth[i] == c) ++tp;
            else if (pred[i] == c) ++fp;
            else if (truth[i] == c) ++fn;
        }
        const double denom = static_cast<double>(2 * tp + fp + fn);
        total += denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

ProbeReport linear_probe(const Embeddings& e, const ProbeConfig& cfg) {
    cfg.validate();
    require(e.values.size() == e.rows * e.cols && e.labels.size() == e.rows, "linear_probe: malformed embeddings");
    const ClassIndex ci(e.labels);
    if (ci.classes.size() < 2) throw DataError("linear probe needs at least two classes");
    std::vector<std::size_t> y(e.rows);
    for (std::size_t r = 0; r < e.rows; ++r) y[r] = ci.index.at(e.labels[r]);

    ProbeReport report;
    for (std::size_t k = 0; k < cfg.n_seeds; ++k) {
        const std::uint64_t seed = cfg.seed + k;
        const Split split = stratified_split(e.labels, cfg, seed);
        std::vector<std::size_t> per_class(ci.classes.size(), 0);
        for (std::size_t r : split.train) ++per_class[y[r]];
        for (std::size_t c = 0; c < per_class.size(); ++c)
            if (per_class[c] == 0)
                throw DataError("class " + std::to_string(ci.classes[c]) + " has no samples in the training split");
        if (split.test.empty()) throw DataError("test split is empty");

        // Standardize with training statistics.
        std::vector<double> mu(e.cols, 0.0), sd(e.cols, 0.0);
        for (std::size_t r : split.train)
            for (std::size_t j = 0; j < e.cols; ++j) mu[j] += e.values[r * e.cols + j];
        for (double& m : mu) m /= static_cast<double>(split.train.size());
        for (std::size_t r : split.train)
            for (std::size_t j = 0; j < e.cols; ++j) {
                const double d = e.values[r * e.cols + j] - mu[j];
                sd[j] += d * d;
            }
        for (double& s : sd) {
            s = std::sqrt(s / static_cast<double>(split.train.size()));
            if (!(s > 1e-12)) s = 1.0;
        }
        std::vector<double> x(e.values.size());
        for (std::size_t r = 0; r < e.rows; ++r)
            for (std::size_t j = 0; j < e.cols; ++j)
                x[r * e.cols + j] = (e.values[r * e.cols + j] - mu[j]) / sd[j];

        auto score = [&](const Probe& p, const std::vector<std::size_t>& rows) {
            std::vector<int> truth, pred;
            for (std::size_t r : rows) {
                truth.push_back(e.labels[r]);
                pred.push_back(ci.classes[p.predict(x.data() + r * e.cols)]);
            }
            return macro_f1(truth, pred);
        };

        Probe probe(e.cols, ci.classes.size());
        Probe best = probe;
        double best_val = -1.0;
        std::size_t since = 0;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            probe.step(x, y, split.train, cfg.lr);
            if (split.val.empty()) {
                best = probe;
                continue;
            }
            const double v = score(probe, split.val);
            if (v > best_val) {
                best_val = v;
                best = probe;
                since = 0;
            } else if (++since >= cfg.patience) {
                break;
            }
        }
        report.seeds.push_back(seed);
        report.f1.push_back(score(best, split.test));
    }
    report.mean = stats::mean(report.f1);
    report.sd = stats::stddev(report.f1);
    return report;
}

void write_probe_tsv(std::ostream& out, const ProbeReport& r) {
    out << "seed\tf1\n";
    for (std::size_t k = 0; k < r.f1.size(); ++k) out << r.seeds[k] << '\t' << fmt(r.f1[k]) << '\n';
    out << "mean\t" << fmt(r.mean) << '\n';
    out << "sd\t" << fmt(r.sd) << '\n';
}

std::string probe_summary(const ProbeReport& r) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(4);
    s << "linear probe, " << r.f1.size() << " seeds\n";
    for (std::size_t k = 0; k < r.f1.size(); ++k) s << "  seed " << r.seeds[k] << "  macro-F1 " << r.f1[k] << '\n';
    s << "  mean " << r.mean << " +/- " << r.sd << '\n';
    return s.str();
}

HierarchyReport hierarchy_diagnostics(const encoders::EncoderParams& params, const data::ModelInputs& in,
                                      double curvature, double k_aper) {
    const lorentz::Curvature c(curvature);
    const lorentz::ConeConstants k{k_aper};
    HierarchyReport rep;
    rep.n = in.rows();
    std::vector<double> ngec, gene_norm, image_norm;
    std::size_t violations = 0;
    for (std::size_t r = 0; r < in.rows(); ++r) {
        const auto g = encoders::encode_gene(params, std::span(in.genes).subspan(r * in.gene_count, in.gene_count), c);
        const auto i = encoders::encode_image(params, std::span(in.feats).subspan(r * in.feat_dim, in.feat_dim), c);
        ngec.push_back(static_cast<double>(in.ngec[r]));
        gene_norm.push_back(space_norm(g));
        image_norm.push_back(space_norm(i));
        if (lorentz::cone_violation(g, i, k, c) > 0.0) ++violations;
        ++rep.gene_aperture_hist[aperture_bin(lorentz::half_aperture(g, k, c))];
        ++rep.image_aperture_hist[aperture_bin(lorentz::half_aperture(i, k, c))];
    }
    rep.spearman_gene = stats::spearman(ngec, gene_norm);
    rep.spearman_image = stats::spearman(ngec, image_norm);
    rep.violation_rate = rep.n ? static_cast<double>(violations) / static_cast<double>(rep.n) : 0.0;
    return rep;
}

void write_diagnostics_tsv(std::ostream& out, const HierarchyReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); };
    out << "key\tvalue\n";
    out << "spots\t" << r.n << '\n';
    out << "spearman_ngec_gene_norm\t" << opt(r.spearman_gene) << '\n';
    out << "spearman_ngec_image_norm\t" << opt(r.spearman_image) << '\n';
    out << "violation_rate\t" << fmt(r.violation_rate) << '\n';
    for (std::size_t b = 0; b < kApertureBins; ++b) out << "gene_aperture_bin" << b << '\t' << r.gene_aperture_hist[b] << '\n';
    for (std::size_t b = 0; b < kApertureBins; ++b)
        out << "image_aperture_bin" << b << '\t' << r.image_aperture_hist[b] << '\n';
}

std::string diagnostics_summary(const HierarchyReport& r) {
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string("n/a");
        std::ostringstream s;
        s.setf(std::ios::fixed);
        s.precision(4);
        s << *v;
        return s.str();
    };
    std::ostringstream s;
    s << "hierarchy diagnostics, " << r.n << " spots\n";
    s << "  Spearman(NGEC, ||gene space||)   " << opt(r.spearman_gene) << '\n';
    s << "  Spearman(NGEC, ||image space||)  " << opt(r.spearman_image) << '\n';
    s << "  cone violation rate              " << opt(r.violation_rate) << '\n';
    s << "  half-aperture histogram over [0, pi/2] (gene | image)\n";
    for (std::size_t b = 0; b < kApertureBins; ++b)
        s << "    bin " << b << "  " << r.gene_aperture_hist[b] << " | " << r.image_aperture_hist[b] << '\n';
    return s.str();
}

}  // namespace delst::eval
