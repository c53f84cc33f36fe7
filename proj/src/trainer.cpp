#include "delst/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

namespace delst::trainer {

namespace {

std::vector<lorentz::HyperPoint> to_points(const losses::GraphPoints& g) {
    const ad::Shape s = g.space.shape();
    const auto space = g.space.values();
    const auto time = g.time.values();
    std::vector<lorentz::HyperPoint> out(s.rows);
    for (std::size_t i = 0; i < s.rows; ++i) {
        out[i].space.assign(space.begin() + static_cast<std::ptrdiff_t>(i * s.cols),
                            space.begin() + static_cast<std::ptrdiff_t>((i + 1) * s.cols));
        out[i].time = time[i];
    }
    return out;
}

void accumulate(losses::LossBreakdown& acc, const losses::LossBreakdown& b) {
    acc.l_cont += b.l_cont;
    acc.l_ent_cross += b.l_ent_cross;
    acc.l_ent_intra_gene += b.l_ent_intra_gene;
    acc.l_ent_intra_image += b.l_ent_intra_image;
    acc.l_ent_intra += b.l_ent_intra;
    acc.l_final += b.l_final;
}

void scale(losses::LossBreakdown& acc, double s) {
    acc.l_cont *= s;
    acc.l_ent_cross *= s;
    acc.l_ent_intra_gene *= s;
    acc.l_ent_intra_image *= s;
    acc.l_ent_intra *= s;
    acc.l_final *= s;
}

const char* first_non_finite(const losses::LossBreakdown& b) {
    if (!std::isfinite(b.l_cont)) return "l_cont";
    if (!std::isfinite(b.l_ent_cross)) return "l_ent_cross";
    if (!std::isfinite(b.l_ent_intra_gene)) return "l_ent_intra_gene";
    if (!std::isfinite(b.l_ent_intra_image)) return "l_ent_intra_image";
    if (!std::isfinite(b.l_final)) return "l_final";
    return nullptr;
}

std::string fmt(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

}  // namespace

std::size_t TrainConfig::effective_q() const {
    if (q != 0) return q;
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.15 * static_cast<double>(batch_size))));
}

losses::LossWeights TrainConfig::weights() const {
    return {enable_cmel ? lambda : 0.0, enable_imel ? beta : 0.0, tau, effective_q()};
}

losses::LossOptions TrainConfig::options() const {
    losses::LossOptions o;
    o.sim_mode = sim_mode;
    o.symmetric = symmetric;
    o.cone = lorentz::ConeConstants{k_aper};
    o.curvature = lorentz::Curvature(curvature);
    return o;
}

void TrainConfig::validate() const {
    require(epochs > 0, "epochs must be positive");
    require(batch_size > 0, "batch_size must be positive");
    require(lr >= 0.0 && std::isfinite(lr), "lr must be a finite non-negative number");
    require(weight_decay >= 0.0 && std::isfinite(weight_decay), "weight_decay must be non-negative");
    require(tau > 0.0, "tau must be positive");
    require(curvature > 0.0, "curvature must be positive");
    require(k_aper > 0.0, "k_aper must be positive");
    require(hidden > 0 && embed_dim > 0, "hidden and embed_dim must be positive");
    require(2 * effective_q() <= batch_size,
            "2q (" + std::to_string(2 * effective_q()) + ") exceeds batch_size (" + std::to_string(batch_size) + ")");
}

AdamState AdamState::zeros_like(const encoders::EncoderParams& p) {
    AdamState s;
    for (const auto& [name, param] : p.named()) {
        s.m.push_back(ad::Tensor::zeros(param->value.shape));
        s.v.push_back(ad::Tensor::zeros(param->value.shape));
    }
    return s;
}

bool operator==(const AdamState& a, const AdamState& b) {
    if (a.step != b.step || a.m.size() != b.m.size() || a.v.size() != b.v.size()) return false;
    for (std::size_t k = 0; k < a.m.size(); ++k)
        if (a.m[k].shape != b.m[k].shape || a.m[k].values != b.m[k].values || a.v[k].shape != b.v[k].shape ||
            a.v[k].values != b.v[k].values)
            return false;
    return true;
}

bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.violation_rate == b.violation_rate && a.loss.l_cont == b.loss.l_cont &&
           a.loss.l_ent_cross == b.loss.l_ent_cross && a.loss.l_ent_intra_gene == b.loss.l_ent_intra_gene &&
           a.loss.l_ent_intra_image == b.loss.l_ent_intra_image && a.loss.l_ent_intra == b.loss.l_ent_intra &&
           a.loss.l_final == b.loss.l_final;
}

void adam_step(encoders::EncoderParams& params, AdamState& state, double lr, double weight_decay) {
    auto named = params.named();
    require(state.m.size() == named.size() && state.v.size() == named.size(), "adam_step: state does not match params");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(AdamState::beta1, t);
    const double c2 = 1.0 - std::pow(AdamState::beta2, t);
    for (std::size_t k = 0; k < named.size(); ++k) {
        encoders::Param& p = *named[k].second;
        auto& m = state.m[k].values;
        auto& v = state.v[k].values;
        require(m.size() == p.value.values.size() && p.grad.values.size() == m.size(),
                "adam_step: shape mismatch for " + std::string(named[k].first));
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double g = p.grad.values[i];
            m[i] = AdamState::beta1 * m[i] + (1.0 - AdamState::beta1) * g;
            v[i] = AdamState::beta2 * v[i] + (1.0 - AdamState::beta2) * g * g;
            double& w = p.value.values[i];
            w -= lr * weight_decay * w;
            w -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + AdamState::eps);
        }
    }
}

TrainState initial_state(const data::ModelInputs& in, const TrainConfig& cfg) {
    TrainState s;
    s.params = encoders::init_params({in.gene_count, in.feat_dim, cfg.hidden, cfg.embed_dim}, cfg.seed);
    s.adam = AdamState::zeros_like(s.params);
    return s;
}

std::vector<std::size_t> epoch_order(std::size_t rows, std::uint64_t seed, std::size_t epoch) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> order(rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

BatchGraph batch_graph(ad::Tape& tape, const encoders::EncoderParams& params, const data::ModelInputs& batch,
                       const TrainConfig& cfg) {
    const lorentz::Curvature c(cfg.curvature);
    BatchGraph g;
    g.vars = encoders::bind(tape, params);
    const ad::Var genes = tape.constant({batch.rows(), batch.gene_count}, batch.genes);
    const ad::Var feats = tape.constant({batch.rows(), batch.feat_dim}, batch.feats);
    g.gene = encoders::encode_gene_graph(g.vars, genes, c);
    g.image = encoders::encode_image_graph(g.vars, feats, c);
    g.loss = losses::final_loss_graph(g.image, g.gene, batch.ngec, cfg.weights(), cfg.options());
    return g;
}

double batch_violation_rate(const BatchGraph& g, const TrainConfig& cfg) {
    losses::BatchEmbeddings b;
    b.gene_points = to_points(g.gene);
    b.image_points = to_points(g.image);
    b.ngec.assign(b.gene_points.size(), 0);
    return losses::violation_rate(b, lorentz::ConeConstants{cfg.k_aper}, lorentz::Curvature(cfg.curvature));
}

void train(const data::ModelInputs& in, const TrainConfig& cfg, TrainState& state, const EpochCallback& on_epoch) {
    cfg.validate();
    if (in.rows() < cfg.batch_size)
        throw DataError("dataset has " + std::to_string(in.rows()) + " spots, fewer than batch_size " +
                        std::to_string(cfg.batch_size));
    const encoders::EncoderDims dims{in.gene_count, in.feat_dim, cfg.hidden, cfg.embed_dim};
    require(state.params.dims == dims, "train: parameter shapes do not match the inputs and config");
    const std::size_t batches = in.rows() / cfg.batch_size;

    auto run_epoch = [&](std::size_t epoch, bool update) {
        const std::vector<std::size_t> order = epoch_order(in.rows(), cfg.seed, std::max<std::size_t>(epoch, 1));
        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t b = 0; b < batches; ++b) {
            const auto rows = std::span(order).subspan(b * cfg.batch_size, cfg.batch_size);
            const data::ModelInputs batch = data::take_rows(in, rows);
            ad::Tape tape;
            BatchGraph g = batch_graph(tape, state.params, batch, cfg);
            const losses::LossBreakdown vals = g.loss.values();
            if (const char* term = first_non_finite(vals))
                throw NumericalError("non-finite " + std::string(term) + " at epoch " + std::to_string(epoch) +
                                     ", batch " + std::to_string(b));
            accumulate(rec.loss, vals);
            rec.violation_rate += batch_violation_rate(g, cfg);
            if (update) {
                tape.backward(g.loss.l_final);
                encoders::collect_grads(tape, g.vars, state.params);
                adam_step(state.params, state.adam, cfg.lr, cfg.weight_decay);
            }
        }
        scale(rec.loss, 1.0 / static_cast<double>(batches));
        rec.violation_rate /= static_cast<double>(batches);
        return rec;
    };

    if (state.epochs_done == 0 && state.history.empty()) state.history.push_back(run_epoch(0, false));
    for (std::size_t epoch = state.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
        state.history.push_back(run_epoch(epoch, true));
        state.epochs_done = epoch;
        if (on_epoch) on_epoch(state);
    }
}

TrainState train(const data::ModelInputs& in, const TrainConfig& cfg) {
    TrainState s = initial_state(in, cfg);
    train(in, cfg, s);
    return s;
}

void write_history(std::ostream& out, std::span<const EpochRecord> history) {
    out << "epoch\tl_cont\tl_ent_cross\tl_ent_intra\tl_final\tviolation_rate\n";
    for (const EpochRecord& r : history)
        out << r.epoch << '\t' << fmt(r.loss.l_cont) << '\t' << fmt(r.loss.l_ent_cross) << '\t'
            << fmt(r.loss.l_ent_intra) << '\t' << fmt(r.loss.l_final) << '\t' << fmt(r.violation_rate) << '\n';
}

}  // namespace delst::trainer
