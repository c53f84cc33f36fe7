#include "cli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "delst/data.hpp"
#include "delst/errors.hpp"
#include "delst/eval.hpp"
#include "delst/trainer.hpp"
#include "json.hpp"

namespace delst::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string file_digest(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::uint64_t h = 14695981039346656037ULL;
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 1099511628211ULL;
    }
    return "fnv1a64:" + hex64(h);
}

void add_dataset_digests(json& inputs, const fs::path& dir) {
    for (std::string_view f : {data::kExpressionFile, data::kFeatureFile, data::kMetadataFile})
        inputs[std::string(f)] = file_digest(dir / f);
}

json manifest(std::string_view command, std::uint64_t seed, json config, json inputs) {
    json m;
    m["tool"] = "delst";
    m["version"] = kVersion;
    m["command"] = command;
    m["seed"] = seed;
    m["config"] = std::move(config);
    m["inputs"] = std::move(inputs);
    return m;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

void write_manifest(const fs::path& dir, const json& m) {
    auto out = open_out(dir / kManifestFile);
    out << m.dump(2) << '\n';
}

fs::path make_out_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

void require_checkpoint(const fs::path& p) {
    if (!fs::is_regular_file(p)) throw DataError("checkpoint not found: " + p.string());
}

// Checkpoint meta carries the geometry needed to re-encode spots.
struct Geometry {
    double curvature = 1.0;
    double k_aper = 0.1;
};

std::string geometry_meta(const trainer::TrainConfig& cfg) {
    json j;
    j["curvature"] = cfg.curvature;
    j["k_aper"] = cfg.k_aper;
    return j.dump();
}

Geometry parse_geometry(const std::string& meta) {
    Geometry g;
    if (meta.empty()) return g;
    const json j = json::parse(meta, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("checkpoint meta is not valid JSON");
    g.curvature = j.value("curvature", g.curvature);
    g.k_aper = j.value("k_aper", g.k_aper);
    return g;
}

// ---------------------------------------------------------------------------
// Option groups shared by several commands

struct TrainFlags {
    trainer::TrainConfig cfg;
    std::string sim_mode = "cosine-full";
    bool no_cmel = false;
    bool no_imel = false;

    TrainFlags() {
        cfg.batch_size = 1024;
        cfg.q = 150;
    }

    void add(CLI::App& app) {
        app.add_option("--epochs", cfg.epochs, "training epochs");
        app.add_option("--batch-size", cfg.batch_size, "spots per batch");
        app.add_option("--lr", cfg.lr, "Adam learning rate");
        app.add_option("--weight-decay", cfg.weight_decay, "decoupled weight decay");
        app.add_option("--tau", cfg.tau, "contrastive temperature");
        app.add_option("--lambda", cfg.lambda, "weight of the cross-modal entailment term");
        app.add_option("--beta", cfg.beta, "weight of the intra-modal entailment term");
        app.add_option("--q", cfg.q, "spots in each NGEC tail; 0 scales as round(0.15 * batch-size)");
        app.add_option("--seed", cfg.seed, "initialisation and shuffling seed");
        app.add_option("--sim-mode", sim_mode, "cosine-full, cosine-space or neg-lorentz-distance");
        app.add_flag("--symmetric", cfg.symmetric, "average image- and gene-anchored contrastive terms");
        app.add_flag("--no-cmel", no_cmel, "disable the cross-modal entailment term");
        app.add_flag("--no-imel", no_imel, "disable the intra-modal entailment term");
        app.add_option("--curvature", cfg.curvature, "hyperboloid curvature c");
        app.add_option("--k-aper", cfg.k_aper, "aperture constant");
        app.add_option("--hidden", cfg.hidden, "image projector hidden width");
        app.add_option("--embed-dim", cfg.embed_dim, "embedding dimension");
    }

    trainer::TrainConfig resolve() const {
        trainer::TrainConfig c = cfg;
        c.sim_mode = losses::parse_sim_mode(sim_mode);
        c.enable_cmel = !no_cmel;
        c.enable_imel = !no_imel;
        const std::size_t q = c.effective_q();
        if (2 * q > c.batch_size)
            throw UsageError("--q " + std::to_string(q) + " needs --batch-size of at least " + std::to_string(2 * q) +
                             " (got " + std::to_string(c.batch_size) +
                             "); the two NGEC tails must not overlap. Scale Q with the batch, e.g. "
                             "--batch-size 256 --q 38, or pass --q 0 for round(0.15 * batch-size)");
        c.validate();
        return c;
    }
};

json to_json(const trainer::TrainConfig& c) {
    json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["tau"] = c.tau;
    j["lambda"] = c.lambda;
    j["beta"] = c.beta;
    j["q"] = c.effective_q();
    j["seed"] = c.seed;
    j["sim_mode"] = losses::to_string(c.sim_mode);
    j["symmetric"] = c.symmetric;
    j["enable_cmel"] = c.enable_cmel;
    j["enable_imel"] = c.enable_imel;
    j["curvature"] = c.curvature;
    j["k_aper"] = c.k_aper;
    j["hidden"] = c.hidden;
    j["embed_dim"] = c.embed_dim;
    return j;
}

struct PanelFlags {
    std::string panel;
    std::string strategy = "hvg";
    std::size_t gene_count = 0;

    void add(CLI::App& app, bool allow_panel) {
        if (allow_panel) app.add_option("--panel", panel, "gene panel JSON; selected from the data when absent");
        app.add_option("--strategy", strategy, "hvg, overlap-hvg or e-overlap-hvg");
        app.add_option("--gene-count", gene_count, "panel size; 0 uses 128 for hvg and 100 otherwise");
    }

    data::GenePanel resolve(const data::Dataset& d, json& config, json& inputs) const {
        if (!panel.empty()) {
            config["panel"] = panel;
            inputs["panel"] = file_digest(panel);
            return data::load_panel(panel);
        }
        const data::Strategy s = data::parse_strategy(strategy);
        const std::size_t k = gene_count == 0 ? data::default_gene_count(s) : gene_count;
        config["strategy"] = data::to_string(s);
        config["gene_count"] = k;
        return data::select_hvg(data::split_by_slide(d), s, k);
    }
};

// Inputs for commands that read a trained checkpoint.
struct ModelFlags {
    std::string checkpoint;
    std::string data;
    std::string panel;

    void add(CLI::App& app) {
        app.add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
        app.add_option("--data", data, "dataset directory")->required();
        app.add_option("--panel", panel, "gene panel JSON; defaults to panel.json next to the checkpoint");
    }

    struct Loaded {
        trainer::LoadedCheckpoint ckpt;
        Geometry geometry;
        data::ModelInputs inputs;
    };

    Loaded load(json& config, json& inputs) const {
        require_checkpoint(checkpoint);
        const fs::path panel_path = panel.empty() ? fs::path(checkpoint).parent_path() / kPanelFile : fs::path(panel);
        config["checkpoint"] = checkpoint;
        config["data"] = data;
        config["panel"] = panel_path.string();
        inputs["checkpoint"] = file_digest(checkpoint);
        inputs["panel"] = file_digest(panel_path);
        add_dataset_digests(inputs, data);

        Loaded l{trainer::load_checkpoint(checkpoint), {}, {}};
        l.geometry = parse_geometry(l.ckpt.meta);
        const data::Dataset d = data::load_dataset(data);
        l.inputs = data::build_inputs(d, data::load_panel(panel_path));
        const encoders::EncoderDims& dims = l.ckpt.state.params.dims;
        if (dims.gene_count != l.inputs.gene_count || dims.feat_dim != l.inputs.feat_dim)
            throw DataError("checkpoint expects " + std::to_string(dims.gene_count) + " genes and " +
                            std::to_string(dims.feat_dim) + " image features; inputs have " +
                            std::to_string(l.inputs.gene_count) + " and " + std::to_string(l.inputs.feat_dim));
        return l;
    }
};

// ---------------------------------------------------------------------------
// Commands

struct GenerateCmd {
    data::SyntheticConfig cfg;
    std::string out;

    void add(CLI::App& app) {
        app.add_option("--out", out, "output directory")->required();
        app.add_option("--seed", cfg.seed, "generator seed");
        app.add_option("--n-slides", cfg.n_slides, "slides");
        app.add_option("--spots-per-slide", cfg.spots_per_slide, "spots per slide");
        app.add_option("--n-genes", cfg.n_genes, "genes per spot");
        app.add_option("--n-classes", cfg.n_classes, "tissue classes");
        app.add_option("--feat-dim", cfg.feat_dim, "image feature dimension");
        app.add_option("--hierarchy-strength", cfg.hierarchy_strength, "coupling of NGEC to class specificity")
            ->check(CLI::Range(0.0, 1.0));
    }

    int run(std::ostream& os) const {
        const data::SyntheticDataset s = data::generate_synthetic(cfg);
        const fs::path dir = make_out_dir(out);
        data::save_dataset(dir, s.data);
        json config;
        config["n_slides"] = cfg.n_slides;
        config["spots_per_slide"] = cfg.spots_per_slide;
        config["n_genes"] = cfg.n_genes;
        config["n_classes"] = cfg.n_classes;
        config["feat_dim"] = cfg.feat_dim;
        config["hierarchy_strength"] = cfg.hierarchy_strength;
        write_manifest(dir, manifest("generate", cfg.seed, std::move(config), json::object()));
        os << "wrote " << s.data.spots.size() << " spots x " << s.data.genes.size() << " genes to " << dir.string()
           << '\n';
        return 0;
    }
};

struct SelectCmd {
    std::string data;
    std::string out;
    PanelFlags panel;

    void add(CLI::App& app) {
        app.add_option("--data", data, "dataset directory")->required();
        app.add_option("--out", out, "output directory")->required();
        panel.add(app, false);
    }

    int run(std::ostream& os) const {
        json config, inputs;
        config["data"] = data;
        add_dataset_digests(inputs, data);
        const data::Dataset d = data::load_dataset(data);
        const data::GenePanel p = panel.resolve(d, config, inputs);
        const fs::path dir = make_out_dir(out);
        data::save_panel(dir / kPanelFile, p);
        write_manifest(dir, manifest("select-genes", 0, std::move(config), std::move(inputs)));
        os << "selected " << p.gene_count << " genes (" << data::to_string(p.strategy) << ") over "
           << p.slide_ids.size() << " slides\n";
        return 0;
    }
};

struct TrainCmd {
    std::string data;
    std::string out;
    std::string resume;
    PanelFlags panel;
    TrainFlags train;

    void add(CLI::App& app) {
        app.add_option("--data", data, "dataset directory")->required();
        app.add_option("--out", out, "output directory")->required();
        app.add_option("--resume", resume, "continue from this checkpoint up to --epochs");
        panel.add(app, true);
        train.add(app);
    }

    int run(std::ostream& os) const {
        const trainer::TrainConfig cfg = train.resolve();
        json config = to_json(cfg);
        json inputs;
        config["data"] = data;
        add_dataset_digests(inputs, data);
        const data::Dataset d = data::load_dataset(data);
        const data::GenePanel p = panel.resolve(d, config, inputs);
        const data::ModelInputs in = data::build_inputs(d, p);

        trainer::TrainState state;
        if (!resume.empty()) {
            require_checkpoint(resume);
            config["resume"] = resume;
            inputs["resume"] = file_digest(resume);
            state = trainer::load_checkpoint(resume).state;
            const encoders::EncoderDims want{in.gene_count, in.feat_dim, cfg.hidden, cfg.embed_dim};
            if (!(state.params.dims == want))
                throw UsageError("--resume checkpoint dimensions do not match the panel, features, --hidden and "
                                 "--embed-dim of this run");
            if (state.epochs_done > cfg.epochs)
                throw UsageError("--resume checkpoint already has " + std::to_string(state.epochs_done) +
                                 " epochs, more than --epochs " + std::to_string(cfg.epochs));
        } else {
            state = trainer::initial_state(in, cfg);
        }

        const fs::path dir = make_out_dir(out);
        trainer::train(in, cfg, state, [&](const trainer::TrainState& s) {
            const trainer::EpochRecord& r = s.history.back();
            os << "epoch " << r.epoch << '/' << cfg.epochs << "  l_final " << r.loss.l_final << "  violation_rate "
               << r.violation_rate << '\n';
        });

        data::save_panel(dir / kPanelFile, p);
        trainer::save_checkpoint(dir / kCheckpointFile, state, geometry_meta(cfg));
        {
            auto h = open_out(dir / kHistoryFile);
            trainer::write_history(h, state.history);
        }
        write_manifest(dir, manifest("train", cfg.seed, std::move(config), std::move(inputs)));
        return 0;
    }
};

struct EmbedCmd {
    ModelFlags model;
    std::string modality = "image";
    bool include_time = false;
    std::string out;

    void add(CLI::App& app) {
        model.add(app);
        app.add_option("--modality", modality, "image or gene");
        app.add_flag("--include-time", include_time, "append the time coordinate");
        app.add_option("--out", out, "output directory")->required();
    }

    int run(std::ostream& os) const {
        const eval::Modality m = eval::parse_modality(modality);
        json config, inputs;
        const ModelFlags::Loaded l = model.load(config, inputs);
        const eval::EmbedOptions opts{m, include_time, l.geometry.curvature};
        config["modality"] = eval::to_string(opts.modality);
        config["include_time"] = include_time;
        const eval::Embeddings e = eval::embed_dataset(l.ckpt.state.params, l.inputs, opts);

        const data::Dataset d = data::load_dataset(model.data);
        const fs::path dir = make_out_dir(out);
        {
            auto f = open_out(dir / kEmbeddingFile);
            f << "spot_id\tlabel";
            for (std::size_t j = 0; j < e.cols; ++j) f << "\te" << j;
            f << '\n';
            for (std::size_t i = 0; i < e.rows; ++i) {
                f << d.spots[e.spot_index[i]].spot_id << '\t' << e.labels[i];
                for (std::size_t j = 0; j < e.cols; ++j) {
                    char buf[32];
                    std::snprintf(buf, sizeof buf, "%.17g", e.values[i * e.cols + j]);
                    f << '\t' << buf;
                }
                f << '\n';
            }
        }
        write_manifest(dir, manifest("embed", 0, std::move(config), std::move(inputs)));
        os << "embedded " << e.rows << " labeled spots (" << e.cols << " columns)\n";
        return 0;
    }
};

struct ProbeCmd {
    EmbedCmd embed;
    eval::ProbeConfig probe;

    void add(CLI::App& app) {
        embed.add(app);
        app.add_option("--n-seeds", probe.n_seeds, "split seeds");
        app.add_option("--seed", probe.seed, "first split seed");
        app.add_option("--train-frac", probe.train_frac, "training share per class");
        app.add_option("--val-frac", probe.val_frac, "validation share per class");
        app.add_option("--test-frac", probe.test_frac, "test share per class");
        app.add_option("--epochs", probe.epochs, "gradient descent epochs");
        app.add_option("--lr", probe.lr, "gradient descent step");
        app.add_option("--patience", probe.patience, "early stopping patience in epochs");
    }

    int run(std::ostream& os) const {
        probe.validate();
        const eval::Modality m = eval::parse_modality(embed.modality);
        json config, inputs;
        const ModelFlags::Loaded l = embed.model.load(config, inputs);
        const eval::EmbedOptions opts{m, embed.include_time, l.geometry.curvature};
        config["modality"] = eval::to_string(opts.modality);
        config["include_time"] = opts.include_time;
        config["n_seeds"] = probe.n_seeds;
        config["train_frac"] = probe.train_frac;
        config["val_frac"] = probe.val_frac;
        config["test_frac"] = probe.test_frac;
        config["epochs"] = probe.epochs;
        config["lr"] = probe.lr;
        config["patience"] = probe.patience;

        const eval::ProbeReport r = eval::linear_probe(eval::embed_dataset(l.ckpt.state.params, l.inputs, opts), probe);
        const fs::path dir = make_out_dir(embed.out);
        {
            auto f = open_out(dir / kProbeFile);
            eval::write_probe_tsv(f, r);
        }
        write_manifest(dir, manifest("probe", probe.seed, std::move(config), std::move(inputs)));
        os << eval::probe_summary(r) << '\n';
        return 0;
    }
};

struct DiagnoseCmd {
    ModelFlags model;
    std::string out;

    void add(CLI::App& app) {
        model.add(app);
        app.add_option("--out", out, "output directory")->required();
    }

    int run(std::ostream& os) const {
        json config, inputs;
        const ModelFlags::Loaded l = model.load(config, inputs);
        config["curvature"] = l.geometry.curvature;
        config["k_aper"] = l.geometry.k_aper;
        const eval::HierarchyReport r =
            eval::hierarchy_diagnostics(l.ckpt.state.params, l.inputs, l.geometry.curvature, l.geometry.k_aper);
        const fs::path dir = make_out_dir(out);
        {
            auto f = open_out(dir / kDiagnosticsFile);
            eval::write_diagnostics_tsv(f, r);
        }
        write_manifest(dir, manifest("diagnose", 0, std::move(config), std::move(inputs)));
        os << eval::diagnostics_summary(r) << '\n';
        return 0;
    }
};

struct GradcheckCmd {
    std::string checkpoint;
    std::string data;
    std::string panel;
    std::string out;
    TrainFlags train;
    std::size_t seeds = 5;
    double step = 1e-5;
    double tolerance = 1e-4;
    std::string fault_op;
    double fault_factor = 1.5;

    GradcheckCmd() {
        train.cfg.batch_size = 8;
        train.cfg.q = 2;
        train.cfg.hidden = 16;
        train.cfg.embed_dim = 8;
    }

    void add(CLI::App& app) {
        app.add_option("--checkpoint", checkpoint, "check at these parameters instead of fresh ones (needs --data)");
        app.add_option("--data", data, "dataset directory; a small synthetic fixture when absent");
        app.add_option("--panel", panel, "gene panel JSON; defaults to panel.json next to the checkpoint");
        app.add_option("--out", out, "write gradcheck.tsv and a manifest here");
        train.add(app);
        app.add_option("--seeds", seeds, "runs, seeded --seed, --seed + 1, ...");
        app.add_option("--step", step, "central difference step");
        app.add_option("--tolerance", tolerance, "largest accepted relative error");
        app.add_option("--inject-fault", fault_op)->group("");
        app.add_option("--fault-factor", fault_factor)->group("");
    }

    int run(std::ostream& os, std::ostream& es) const {
        trainer::TrainConfig cfg = train.resolve();
        if (seeds == 0) throw UsageError("--seeds must be positive");
        if (!(step > 0.0) || !(tolerance > 0.0)) throw UsageError("--step and --tolerance must be positive");
        if (!checkpoint.empty() && data.empty()) throw UsageError("--checkpoint needs --data");

        json config = to_json(cfg);
        json inputs = json::object();
        config["seeds"] = seeds;
        config["step"] = step;
        config["tolerance"] = tolerance;

        data::ModelInputs in;
        std::optional<encoders::EncoderParams> fixed;
        if (!checkpoint.empty()) {
            ModelFlags mf{checkpoint, data, panel};
            ModelFlags::Loaded l = mf.load(config, inputs);
            cfg.curvature = l.geometry.curvature;
            cfg.k_aper = l.geometry.k_aper;
            fixed = std::move(l.ckpt.state.params);
            in = std::move(l.inputs);
        } else if (!data.empty()) {
            config["data"] = data;
            add_dataset_digests(inputs, data);
            const data::Dataset d = data::load_dataset(data);
            PanelFlags pf;
            pf.panel = panel;
            in = data::build_inputs(d, pf.resolve(d, config, inputs));
        } else {
            data::SyntheticConfig sc;
            sc.n_slides = 1;
            sc.spots_per_slide = 64;
            sc.n_genes = 60;
            sc.feat_dim = 32;
            sc.seed = cfg.seed;
            const data::Dataset d = data::generate_synthetic(sc).data;
            in = data::build_inputs(d, data::select_hvg(data::split_by_slide(d), data::Strategy::hvg, 16));
            config["fixture"] = "synthetic 1x64 spots, 16 hvg genes, 32 features";
        }
        // A spot without panel expression maps to the origin while the gene bias is
        // zero; the cone terms are not differentiable there.
        std::vector<std::size_t> usable;
        for (std::size_t i = 0; i < in.rows(); ++i) {
            const auto row = std::span(in.genes).subspan(i * in.gene_count, in.gene_count);
            if (std::ranges::any_of(row, [](double v) { return v != 0.0; })) usable.push_back(i);
        }
        if (usable.size() < cfg.batch_size)
            throw DataError("gradcheck needs " + std::to_string(cfg.batch_size) +
                            " spots with panel expression; inputs have " + std::to_string(usable.size()));

        std::ostringstream table;
        table << "seed\tparameters\tmax_rel_error\tmean_rel_error\tworst_index\n";
        double worst = 0.0;
        for (std::size_t r = 0; r < seeds; ++r) {
            const std::uint64_t s = cfg.seed + r;
            encoders::EncoderParams params =
                fixed ? *fixed
                      : encoders::init_params({in.gene_count, in.feat_dim, cfg.hidden, cfg.embed_dim}, s);
            const std::vector<std::size_t> order = trainer::epoch_order(usable.size(), s, 0);
            std::vector<std::size_t> rows(cfg.batch_size);
            for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = usable[order[i]];
            const data::ModelInputs batch = data::take_rows(in, rows);

            ad::Tape tape;
            if (!fault_op.empty()) tape.inject_fault(fault_op, fault_factor);
            const trainer::BatchGraph g = trainer::batch_graph(tape, params, batch, cfg);
            tape.backward(g.loss.l_final);
            params.zero_grads();
            encoders::collect_grads(tape, g.vars, params);
            const std::vector<double> analytic = params.flatten_grads();

            const auto loss_at = [&](std::span<const double> x) {
                encoders::EncoderParams p = params;
                p.unflatten(x);
                ad::Tape t;
                return trainer::batch_graph(t, p, batch, cfg).loss.l_final.item();
            };
            const ad::GradCheckReport rep = ad::grad_check(loss_at, params.flatten(), analytic, step);
            if (!std::isfinite(rep.max_rel_error))
                throw NumericalError("non-finite gradient check at seed " + std::to_string(s));
            worst = std::max(worst, rep.max_rel_error);
            table << s << '\t' << analytic.size() << '\t' << rep.max_rel_error << '\t' << rep.mean_rel_error << '\t'
                  << rep.worst_index << '\n';
        }

        os << table.str();
        os << "max relative error " << worst << " (tolerance " << tolerance << ")\n";
        if (!out.empty()) {
            const fs::path dir = make_out_dir(out);
            open_out(dir / kGradcheckFile) << table.str();
            write_manifest(dir, manifest("gradcheck", cfg.seed, std::move(config), std::move(inputs)));
        }
        if (worst > tolerance) {
            es << "error: gradient check failed, max relative error " << worst << " exceeds " << tolerance << '\n';
            return static_cast<int>(Exit::numerical);
        }
        return 0;
    }
};

// Expands `--config FILE` into flag tokens placed ahead of the explicit ones.
// Options take their last value, so explicit flags override the file.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    if (args.empty() || args.front().starts_with("-")) return args;
    const std::string& command = args.front();
    std::vector<std::string> from_file, explicit_args;
    for (std::size_t i = 1; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config") {
            if (i + 1 == args.size()) throw UsageError("--config needs a file");
            path = args[++i];
        } else if (args[i].starts_with("--config=")) {
            path = args[i].substr(9);
        } else {
            explicit_args.push_back(args[i]);
            continue;
        }
        for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
            if (item.name == "++" || item.name == "--") continue;
            if (!item.parents.empty() && item.parents != std::vector<std::string>{command})
                throw UsageError(path + ": key '" + item.fullname() + "' does not belong to " + command);
            if (item.inputs.size() == 1 && item.inputs.front() == "false") continue;
            from_file.push_back("--" + item.name);
            if (item.inputs.size() == 1 && item.inputs.front() == "true") continue;
            from_file.insert(from_file.end(), item.inputs.begin(), item.inputs.end());
        }
    }
    std::vector<std::string> out{command};
    out.insert(out.end(), from_file.begin(), from_file.end());
    out.insert(out.end(), explicit_args.begin(), explicit_args.end());
    return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hyperbolic image and gene expression pretraining", "delst"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    GenerateCmd generate;
    SelectCmd select;
    TrainCmd train;
    EmbedCmd embed;
    ProbeCmd probe;
    DiagnoseCmd diagnose;
    GradcheckCmd gradcheck;

    std::string config_file;  // consumed by expand_config
    const auto sub = [&](const char* name, const char* desc) {
        CLI::App* s = app.add_subcommand(name, desc);
        s->add_option("--config", config_file, "key-value file with flag-name keys; flags override it");
        return s;
    };
    CLI::App* c_generate = sub("generate", "write a synthetic dataset");
    generate.add(*c_generate);
    CLI::App* c_select = sub("select-genes", "select a gene panel");
    select.add(*c_select);
    CLI::App* c_train = sub("train", "train the encoders");
    train.add(*c_train);
    CLI::App* c_embed = sub("embed", "write embeddings of labeled spots");
    embed.add(*c_embed);
    CLI::App* c_probe = sub("probe", "linear probe on frozen embeddings");
    probe.add(*c_probe);
    CLI::App* c_diagnose = sub("diagnose", "hierarchy diagnostics of a checkpoint");
    diagnose.add(*c_diagnose);
    CLI::App* c_gradcheck = sub("gradcheck", "compare analytic and finite-difference gradients");
    gradcheck.add(*c_gradcheck);

    try {
        const std::vector<std::string> expanded = expand_config(args);
        std::vector<std::string> rev(expanded.rbegin(), expanded.rend());
        app.parse(rev);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::usage);
    } catch (const CLI::FileError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::usage);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : static_cast<int>(Exit::usage);
    }

    try {
        if (c_generate->parsed()) return generate.run(out);
        if (c_select->parsed()) return select.run(out);
        if (c_train->parsed()) return train.run(out);
        if (c_embed->parsed()) return embed.run(out);
        if (c_probe->parsed()) return probe.run(out);
        if (c_diagnose->parsed()) return diagnose.run(out);
        if (c_gradcheck->parsed()) return gradcheck.run(out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::usage);
    } catch (const ContractViolation& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::usage);
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::numerical);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return static_cast<int>(Exit::data);
    }
    return static_cast<int>(Exit::usage);
}

}  // namespace delst::cli
