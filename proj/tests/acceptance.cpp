// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "delst/eval.hpp"
#include "delst/lorentz.hpp"
#include "delst/losses.hpp"
#include "delst/trainer.hpp"
#include "gene_oracle.hpp"

using namespace delst;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> random_direction(std::mt19937_64& rng, std::size_t n, double norm) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) {
        x = g(rng);
        s += x * x;
    }
    for (double& x : v) x *= norm / std::sqrt(s);
    return v;
}

lorentz::HyperPoint lift(std::vector<double> space, double c = 1.0) {
    lorentz::HyperPoint p{std::move(space), 0.0};
    p.time = lorentz::time_from_space(p.space, lorentz::Curvature(c));
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int delst_cli(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str() + e.str();
    return code;
}

// ---------------------------------------------------------------------------

Outcome hyperboloid_invariant() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> norm(0.0, 5.0);
    double worst = 0.0;
    for (double cv : {0.5, 1.0, 2.0}) {
        const lorentz::Curvature c(cv);
        for (int i = 0; i < 10000; ++i) {
            const lorentz::HyperPoint u = lorentz::exp_map({random_direction(rng, 32, norm(rng))}, c);
            double s2 = 0.0;
            for (double x : u.space) s2 += x * x;
            worst = std::max(worst, std::abs(cv * (s2 - u.time * u.time) + 1.0));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 1.0, fmt("max |c<u,u>_L + 1| = %.3g over 3 x 10^4 points, %.3f s", worst, secs)};
}

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    std::string out;
    const int code = delst_cli({"gradcheck", "--seeds", "5", "--batch-size", "8", "--q", "2", "--tau", "0.07",
                                "--lambda", "0.1", "--beta", "0.1", "--step", "1e-5", "--tolerance", "1e-4"},
                               &out);
    const double secs = seconds_since(t0);
    double worst = NAN;
    const auto at = out.find("max relative error ");
    if (at != std::string::npos) worst = std::stod(out.substr(at + 19));
    return {code == 0 && worst <= 1e-4 && secs < 30.0,
            fmt("max relative error %.3g over 5 seeds, exit %d, %.2f s", worst, code, secs)};
}

Outcome closed_form_losses() {
    losses::BatchEmbeddings eq;
    for (std::size_t i = 0; i < 4; ++i) {
        eq.image_points.push_back(lift({0.3, -0.2, 0.5}));
        eq.gene_points.push_back(lift({0.1, 0.4, 0.2}));
        eq.ngec.push_back(i);
    }
    const double cont = losses::contrastive_loss(eq, 0.07);
    const double cont_err = std::abs(cont - std::log(4.0));

    // Genes near the origin have wide cones that contain images along the same
    // ray; larger NGEC gets a larger gene norm and so a narrower cone.
    losses::BatchEmbeddings sat;
    const std::vector<double> gene_norms{0.05, 0.1, 0.15, 0.18};
    for (std::size_t i = 0; i < 4; ++i) {
        const double a = 0.7 * static_cast<double>(i);
        sat.gene_points.push_back(lift({gene_norms[i] * std::cos(a), gene_norms[i] * std::sin(a)}));
        const double r = 1.5 + 0.5 * static_cast<double>(i);
        sat.image_points.push_back(lift({r * std::cos(a), r * std::sin(a)}));
        sat.ngec.push_back(10 * i);
    }
    losses::LossWeights w;
    w.q = 2;
    const losses::LossBreakdown b = losses::final_loss(sat, w);
    return {cont_err <= 1e-10 && b.l_ent_cross == 0.0 && b.l_ent_intra == 0.0,
            fmt("|L_cont - ln 4| = %.3g, L_ent_cross = %g, L_ent_intra = %g", cont_err, b.l_ent_cross,
                b.l_ent_intra)};
}

Outcome aperture_analytics() {
    const lorentz::ConeConstants k{0.1};
    const lorentz::Curvature c(1.0);
    const double a = lorentz::half_aperture(lift({0.2, 0.0}), k, c);
    const double b = lorentz::half_aperture(lift({0.0, 0.4}), k, c);
    const double ea = std::abs(a - std::numbers::pi / 2), eb = std::abs(b - std::numbers::pi / 6);
    return {ea <= 1e-12 && eb <= 1e-12, fmt("|aper(0.2) - pi/2| = %.3g, |aper(0.4) - pi/6| = %.3g", ea, eb)};
}

Outcome numerical_stability() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> norm(0.0, 5.0);
    std::normal_distribution<double> jitter(0.0, 1e-9);
    std::size_t bad = 0;
    for (int i = 0; i < 10000; ++i) {
        const double cv = (i % 3 == 0) ? 0.5 : (i % 3 == 1) ? 1.0 : 2.0;
        const lorentz::Curvature c(cv);
        auto a = random_direction(rng, 16, norm(rng));
        auto b = a;
        if (i % 2 == 0) {
            for (double& x : b) x += jitter(rng);
        } else if (i % 4 == 1) {
            b = random_direction(rng, 16, norm(rng));
        } else {
            for (double& x : a) x *= 1e-12;
        }
        const double e = lorentz::exterior_angle(lorentz::exp_map({a}, c), lorentz::exp_map({b}, c), c);
        if (!std::isfinite(e)) ++bad;
    }

    // Axis-aligned pairs give cosine similarities of exactly +-1, logits +-1/0.07.
    losses::BatchEmbeddings extreme;
    const std::vector<int> signs{1, -1, 1, 1, -1, -1, 1, -1};
    for (std::size_t i = 0; i < signs.size(); ++i) {
        extreme.image_points.push_back(lift({static_cast<double>(signs[i]), 0.0}));
        extreme.gene_points.push_back(lift({static_cast<double>(signs[(i * 3 + 1) % signs.size()]), 0.0}));
        extreme.ngec.push_back(i);
    }
    losses::LossOptions o;
    o.sim_mode = losses::SimMode::cosine_space;
    const double cont = losses::contrastive_loss(extreme, 0.07, o);
    return {bad == 0 && std::isfinite(cont),
            fmt("%zu non-finite exterior angles in 10^4, L_cont at logits +-14.3 = %.6g", bad, cont)};
}

// Criteria 6-8 share one synthetic fixture and three training runs.
struct Fixture {
    data::ModelInputs inputs;
    trainer::TrainState delst, no_imel, contrastive_only;
    double seconds = 0.0;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture fx;
        data::SyntheticConfig sc;
        sc.n_slides = 4;
        sc.spots_per_slide = 500;
        sc.hierarchy_strength = 1.0;
        sc.seed = 0;
        const data::Dataset d = data::generate_synthetic(sc).data;
        fx.inputs = data::build_inputs(
            d, data::select_hvg(data::split_by_slide(d), data::Strategy::e_overlap_hvg, 100));

        trainer::TrainConfig cfg;
        cfg.batch_size = 256;
        cfg.q = 38;
        cfg.epochs = 15;
        const auto t0 = std::chrono::steady_clock::now();
        fx.delst = trainer::train(fx.inputs, cfg);
        fx.seconds = seconds_since(t0);
        cfg.enable_imel = false;
        fx.no_imel = trainer::train(fx.inputs, cfg);
        cfg.enable_cmel = false;
        fx.contrastive_only = trainer::train(fx.inputs, cfg);
        return fx;
    }();
    return f;
}

Outcome training_dynamics() {
    const Fixture& f = fixture();
    const auto& h = f.delst.history;
    const bool ok = h.size() == 16 && h[15].loss.l_final < h[1].loss.l_final &&
                    h[15].violation_rate < h[0].violation_rate && f.seconds < 600.0;
    return {ok, fmt("L_final %.4f -> %.4f, violation rate %.4f -> %.4f, %.1f s", h[1].loss.l_final,
                    h[15].loss.l_final, h[0].violation_rate, h[15].violation_rate, f.seconds)};
}

Outcome hierarchy_emergence() {
    const Fixture& f = fixture();
    const auto with = eval::hierarchy_diagnostics(f.delst.params, f.inputs).spearman_gene;
    const auto without = eval::hierarchy_diagnostics(f.no_imel.params, f.inputs).spearman_gene;
    if (!with || !without) return {false, "Spearman undefined"};
    return {*with > 0.5 && *without < *with,
            fmt("Spearman(NGEC, ||gene space||) %.4f with IMEL, %.4f without", *with, *without)};
}

Outcome ablation_direction() {
    const Fixture& f = fixture();
    const eval::ProbeReport full = eval::linear_probe(eval::embed_dataset(f.delst.params, f.inputs));
    const eval::ProbeReport base = eval::linear_probe(eval::embed_dataset(f.contrastive_only.params, f.inputs));
    std::string detail = fmt("mean F1 %.4f (full) vs %.4f (contrastive only)", full.mean, base.mean);
    if (!(full.mean > base.mean)) detail += "; not strictly better";
    return {full.mean >= base.mean - 0.01, detail};
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / "delst_acceptance_determinism";
    fs::remove_all(root);
    const std::string ds = (root / "data").string();
    if (delst_cli({"generate", "--out", ds, "--n-slides", "4", "--spots-per-slide", "500", "--seed", "0"}) != 0)
        return {false, "generate failed"};
    const auto train = [&](const std::string& out, const std::string& epochs, const std::string& resume = {}) {
        std::vector<std::string> a{"train",        "--data", ds,     "--out",      (root / out).string(),
                                   "--batch-size", "256",    "--q",  "38",         "--strategy",
                                   "e-overlap-hvg", "--epochs", epochs};
        if (!resume.empty()) {
            a.push_back("--resume");
            a.push_back(resume);
        }
        return delst_cli(a);
    };
    if (train("a", "4") != 0 || train("b", "4") != 0 || train("half", "2") != 0 ||
        train("resumed", "4", (root / "half" / cli::kCheckpointFile).string()) != 0)
        return {false, "train failed"};
    const auto same = [&](const char* x, const char* y, std::string_view file) {
        const std::string a = slurp(root / x / file);
        return !a.empty() && a == slurp(root / y / file);
    };
    const bool manifests = same("a", "b", cli::kManifestFile);
    const bool repeat = same("a", "b", cli::kHistoryFile) && same("a", "b", cli::kCheckpointFile);
    const bool resume = same("a", "resumed", cli::kHistoryFile) && same("a", "resumed", cli::kCheckpointFile);
    return {manifests && repeat && resume,
            fmt("identical manifests %s, repeat run bit-identical %s, resume 2+2 == 4 epochs %s",
                manifests ? "yes" : "no", repeat ? "yes" : "no", resume ? "yes" : "no")};
}

Outcome gene_selection_oracle() {
    std::size_t checked = 0, mismatched = 0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto slides = gene_oracle::three_slide_corpus(seed);
        const data::GenePanel h = data::select_hvg(slides, data::Strategy::hvg, 128);
        for (std::size_t s = 0; s < slides.size(); ++s) {
            ++checked;
            if (h.genes[s] != gene_oracle::hvg(slides[s], 128)) ++mismatched;
        }
        const data::GenePanel o = data::select_hvg(slides, data::Strategy::overlap_hvg, 100);
        ++checked;
        if (o.genes[0] != gene_oracle::overlap(slides, 100, false)) ++mismatched;
        const data::GenePanel e = data::select_hvg(slides, data::Strategy::e_overlap_hvg, 100);
        ++checked;
        if (e.genes[0] != gene_oracle::overlap(slides, 100, true)) ++mismatched;
    }
    return {mismatched == 0, fmt("%zu of %zu panels match the brute-force ranking exactly", checked - mismatched,
                                 checked)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"hyperboloid invariant", hyperboloid_invariant},
        {"gradient correctness", gradient_correctness},
        {"closed-form loss identities", closed_form_losses},
        {"aperture analytics", aperture_analytics},
        {"numerical stability", numerical_stability},
        {"training dynamics", training_dynamics},
        {"hierarchy emergence", hierarchy_emergence},
        {"ablation direction", ablation_direction},
        {"determinism", determinism},
        {"gene selection oracle", gene_selection_oracle},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %2zu %-28s %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
