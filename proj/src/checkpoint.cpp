#include <bit>
#include <cmath>
#include <fstream>
#include <map>

#include "delst/trainer.hpp"

namespace delst::trainer {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'L', 'S', 'T', 'C', 'K', 'P'};
constexpr std::uint8_t kTensorEntry = 1;
constexpr std::uint8_t kStringEntry = 2;

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int b = 0; b < 4; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void u64(std::uint64_t v) {
        for (int b = 0; b < 8; ++b) u8(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void name(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void tensor(const std::string& n, const ad::Tensor& t) {
        u8(kTensorEntry);
        name(n);
        u64(t.shape.rows);
        u64(t.shape.cols);
        for (double v : t.values) f64(v);
        ++entries_;
    }
    void string(const std::string& n, const std::string& s) {
        u8(kStringEntry);
        name(n);
        u64(s.size());
        raw(s.data(), s.size());
        ++entries_;
    }
    std::string& bytes() { return buf_; }
    std::uint32_t entries() const { return entries_; }

private:
    std::string buf_;
    std::uint32_t entries_ = 0;
};

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end, std::string path) : b_(bytes), end_(end), path_(std::move(path)) {}

    [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }

    void need(std::size_t n) const {
        if (n > end_ - pos_) fail("checkpoint truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(b_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(u8()) << (8 * b);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(u8()) << (8 * b);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(std::uint64_t n) {
        need(n);
        std::string s = b_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == end_; }

private:
    const std::string& b_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string path_;
};

ad::Tensor history_tensor(std::span<const EpochRecord> h) {
    ad::Tensor t = ad::Tensor::zeros({h.size(), 8});
    for (std::size_t r = 0; r < h.size(); ++r) {
        const auto& l = h[r].loss;
        const double row[8] = {static_cast<double>(h[r].epoch), l.l_cont, l.l_ent_cross, l.l_ent_intra_gene,
                               l.l_ent_intra_image, l.l_ent_intra, l.l_final, h[r].violation_rate};
        std::copy(row, row + 8, t.values.begin() + static_cast<std::ptrdiff_t>(8 * r));
    }
    return t;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainState& state, const std::string& meta) {
    Writer body;
    const auto& d = state.params.dims;
    body.tensor("dims", ad::Tensor({1, 4}, {static_cast<double>(d.gene_count), static_cast<double>(d.feat_dim),
                                            static_cast<double>(d.hidden), static_cast<double>(d.embed_dim)}));
    const auto named = state.params.named();
    require(state.adam.m.size() == named.size(), "save_checkpoint: optimizer state does not match params");
    for (std::size_t k = 0; k < named.size(); ++k) {
        const std::string n(named[k].first);
        body.tensor("param/" + n, named[k].second->value);
        body.tensor("adam/m/" + n, state.adam.m[k]);
        body.tensor("adam/v/" + n, state.adam.v[k]);
    }
    body.tensor("adam/step", ad::Tensor::scalar(static_cast<double>(state.adam.step)));
    body.tensor("epochs_done", ad::Tensor::scalar(static_cast<double>(state.epochs_done)));
    body.tensor("history", history_tensor(state.history));
    body.string("meta", meta);

    Writer file;
    file.raw(kMagic, sizeof kMagic);
    file.u32(kCheckpointVersion);
    file.u32(body.entries());
    file.bytes() += body.bytes();
    file.u64(fnv1a(file.bytes()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(file.bytes().data(), static_cast<std::streamsize>(file.bytes().size()));
    if (!out) throw DataError("write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = path.string();

    if (bytes.size() < sizeof kMagic || bytes.compare(0, sizeof kMagic, kMagic, sizeof kMagic) != 0)
        throw DataError(where + ": not a checkpoint file");
    Reader head(bytes, bytes.size(), where);
    head.str(sizeof kMagic);
    const std::uint32_t version = head.u32();
    if (version != kCheckpointVersion)
        throw DataError(where + ": checkpoint version " + std::to_string(version) + ", expected " +
                        std::to_string(kCheckpointVersion));
    if (bytes.size() < sizeof kMagic + 16) throw DataError(where + ": checkpoint truncated");

    const std::size_t body_end = bytes.size() - 8;
    Reader tail(bytes, bytes.size(), where);
    tail.str(body_end);
    const std::uint64_t stored = tail.u64();

    Reader r(bytes, body_end, where);
    r.str(sizeof kMagic + 4);
    const std::uint32_t count = r.u32();
    std::map<std::string, ad::Tensor> tensors;
    std::map<std::string, std::string> strings;
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::uint8_t kind = r.u8();
        const std::string name = r.str(r.u32());
        if (kind == kTensorEntry) {
            const std::uint64_t rows = r.u64(), cols = r.u64();
            if (rows != 0 && cols > (body_end / 8) / rows) r.fail("checkpoint truncated");
            r.need(rows * cols * 8);
            std::vector<double> v(rows * cols);
            for (double& x : v) x = r.f64();
            tensors.emplace(name, ad::Tensor({rows, cols}, std::move(v)));
        } else if (kind == kStringEntry) {
            strings.emplace(name, r.str(r.u64()));
        } else {
            r.fail("unknown checkpoint entry kind " + std::to_string(kind));
        }
    }
    if (!r.done()) r.fail("trailing bytes after checkpoint entries");
    if (fnv1a(bytes.substr(0, body_end)) != stored) r.fail("checkpoint checksum mismatch");

    auto get = [&](const std::string& name, ad::Shape shape) -> const ad::Tensor& {
        auto it = tensors.find(name);
        if (it == tensors.end()) r.fail("checkpoint has no entry '" + name + "'");
        if (!(it->second.shape == shape))
            r.fail("checkpoint entry '" + name + "' has shape " + std::to_string(it->second.shape.rows) + "x" +
                   std::to_string(it->second.shape.cols));
        return it->second;
    };

    LoadedCheckpoint out;
    const ad::Tensor& dims = get("dims", {1, 4});
    encoders::EncoderDims d{static_cast<std::size_t>(dims.values[0]), static_cast<std::size_t>(dims.values[1]),
                            static_cast<std::size_t>(dims.values[2]), static_cast<std::size_t>(dims.values[3])};
    TrainState& s = out.state;
    s.params = encoders::zero_params(d);
    s.adam = AdamState::zeros_like(s.params);
    auto named = s.params.named();
    for (std::size_t k = 0; k < named.size(); ++k) {
        const std::string n(named[k].first);
        const ad::Shape shape = named[k].second->value.shape;
        named[k].second->value = get("param/" + n, shape);
        s.adam.m[k] = get("adam/m/" + n, shape);
        s.adam.v[k] = get("adam/v/" + n, shape);
    }
    s.adam.step = static_cast<std::uint64_t>(get("adam/step", {1, 1}).values[0]);
    s.epochs_done = static_cast<std::size_t>(get("epochs_done", {1, 1}).values[0]);
    auto hit = tensors.find("history");
    if (hit == tensors.end() || (hit->second.shape.cols != 8 && hit->second.shape.rows != 0))
        r.fail("checkpoint has no valid history entry");
    const ad::Tensor& h = hit->second;
    for (std::size_t row = 0; row < h.shape.rows; ++row) {
        const double* v = h.values.data() + 8 * row;
        EpochRecord rec;
        rec.epoch = static_cast<std::size_t>(v[0]);
        rec.loss = {v[1], v[2], v[3], v[4], v[5], v[6]};
        rec.violation_rate = v[7];
        s.history.push_back(rec);
    }
    if (auto m = strings.find("meta"); m != strings.end()) out.meta = m->second;
    return out;
}

}  // namespace delst::trainer
