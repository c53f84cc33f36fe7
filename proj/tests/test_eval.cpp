#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "delst/eval.hpp"
#include "delst/trainer.hpp"

using namespace delst;
using namespace delst::eval;

namespace {

data::ModelInputs golden_inputs() {
    data::SyntheticConfig sc;
    sc.n_slides = 2;
    sc.spots_per_slide = 60;
    sc.n_genes = 60;
    sc.feat_dim = 24;
    sc.seed = 11;
    const data::Dataset d = data::generate_synthetic(sc).data;
    const auto panel = data::select_hvg(data::split_by_slide(d), data::Strategy::hvg, 16);
    return data::build_inputs(d, panel);
}

Embeddings blobs(std::size_t per_class, std::size_t classes, double separation, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Embeddings e;
    e.cols = 5;
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            for (std::size_t j = 0; j < e.cols; ++j) e.values.push_back(n(rng) + (j == c ? separation : 0.0));
            e.labels.push_back(static_cast<int>(c));
            e.spot_index.push_back(e.rows++);
        }
    return e;
}

}  // namespace

TEST_CASE("embed_dataset shapes and order") {
    data::ModelInputs in = golden_inputs();
    const auto params = encoders::init_params({in.gene_count, in.feat_dim, 8, 6}, 0);

    const Embeddings img = embed_dataset(params, in);
    const Embeddings gene = embed_dataset(params, in, {Modality::gene});
    CHECK(img.rows == in.rows());
    CHECK(img.cols == 6);
    CHECK(gene.spot_index == img.spot_index);
    CHECK(gene.labels == img.labels);
    CHECK(gene.values != img.values);
    CHECK(embed_dataset(params, in, {Modality::image, true}).cols == 7);

    for (auto& l : in.labels) l.reset();
    in.labels[5] = 2;
    const Embeddings one = embed_dataset(params, in);
    CHECK(one.rows == 1);
    CHECK(one.cols == 6);
    CHECK(one.spot_index[0] == 5);
    in.labels[5].reset();
    CHECK_THROWS_AS(embed_dataset(params, in), DataError);
}

TEST_CASE("embedding checksum is frozen for the golden fixture") {
    const data::ModelInputs in = golden_inputs();
    const auto params = encoders::init_params({in.gene_count, in.feat_dim, 8, 6}, 0);
    const std::uint64_t img = checksum(embed_dataset(params, in));
    const std::uint64_t gene = checksum(embed_dataset(params, in, {Modality::gene}));
    CHECK(img == 8806923384490229332ULL);
    CHECK(gene == 5214081011602089204ULL);
}

TEST_CASE("macro_f1") {
    CHECK(macro_f1({0, 1, 0, 1}, {0, 1, 0, 1}) == 1.0);
    CHECK(macro_f1({0, 0, 0, 0}, {1, 1, 1, 1}) == 0.0);
    // class 0: tp 1 fp 1 fn 1 -> 0.5; class 1: tp 1 fp 1 fn 1 -> 0.5
    CHECK(macro_f1({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(0.5));
    // predicted-only class counts with F1 0
    CHECK(macro_f1({0, 0}, {0, 2}) == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0));

    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u(0, 3);
    for (int t = 0; t < 50; ++t) {
        std::vector<int> a(40), b(40);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
        }
        const int perm[4] = {2, 0, 3, 1};
        std::vector<int> pa, pb;
        for (int v : a) pa.push_back(perm[v]);
        for (int v : b) pb.push_back(perm[v]);
        CHECK(macro_f1(pa, pb) == doctest::Approx(macro_f1(a, b)).epsilon(1e-15));
    }
}

TEST_CASE("stratified split") {
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 17 + 9 * c; ++i) labels.push_back(c);
    std::mt19937_64 rng(1);
    std::shuffle(labels.begin(), labels.end(), rng);
    const ProbeConfig cfg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Split s = stratified_split(labels, cfg, seed);
        CHECK(s.train.size() + s.val.size() + s.test.size() == labels.size());
        std::vector<int> seen(labels.size(), 0);
        for (auto* part : {&s.train, &s.val, &s.test})
            for (std::size_t r : *part) ++seen[r];
        CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
        const std::pair<const std::vector<std::size_t>*, double> parts[] = {
            {&s.train, cfg.train_frac}, {&s.val, cfg.val_frac}, {&s.test, cfg.test_frac}};
        for (int c = 0; c < 4; ++c) {
            const double n_c = static_cast<double>(std::count(labels.begin(), labels.end(), c));
            for (const auto& [rows, frac] : parts) {
                const auto k = std::count_if(rows->begin(), rows->end(), [&](std::size_t r) { return labels[r] == c; });
                CHECK(std::abs(static_cast<double>(k) - frac * n_c) <= 1.0);
            }
        }
        const Split again = stratified_split(labels, cfg, seed);
        CHECK(again.test == s.test);
        CHECK(again.val == s.val);
    }
    CHECK(stratified_split(labels, cfg, 0).test != stratified_split(labels, cfg, 1).test);
}

TEST_CASE("linear probe on separable blobs") {
    const ProbeReport r = linear_probe(blobs(100, 2, 8.0, 1));
    CHECK(r.f1.size() == 5);
    CHECK(r.mean >= 0.99);
}

TEST_CASE("linear probe at chance on shuffled labels") {
    Embeddings e = blobs(250, 4, 3.0, 2);
    std::mt19937_64 rng(9);
    std::shuffle(e.labels.begin(), e.labels.end(), rng);
    const ProbeReport r = linear_probe(e);
    CHECK(std::abs(r.mean - 0.25) <= 0.1);
}

TEST_CASE("linear probe report invariants") {
    const Embeddings e = blobs(60, 3, 1.5, 4);
    ProbeConfig cfg;
    cfg.n_seeds = 1;
    const ProbeReport a = linear_probe(e, cfg);
    const ProbeReport b = linear_probe(e, cfg);
    CHECK(a.f1 == b.f1);
    CHECK(a.sd == 0.0);

    const ProbeReport full = linear_probe(e);
    double m = 0.0;
    for (double f : full.f1) m += f;
    m /= static_cast<double>(full.f1.size());
    CHECK(full.mean == doctest::Approx(m).epsilon(1e-15));
    double ss = 0.0;
    for (double f : full.f1) ss += (f - m) * (f - m);
    CHECK(full.sd == doctest::Approx(std::sqrt(ss / static_cast<double>(full.f1.size() - 1))).epsilon(1e-12));

    // Renaming classes changes neither splits nor scores.
    Embeddings renamed = e;
    const int to[3] = {7, 2, 5};
    for (int& l : renamed.labels) l = to[l];
    const ProbeReport r = linear_probe(renamed);
    CHECK(r.mean == doctest::Approx(full.mean).epsilon(1e-12));

    std::ostringstream tsv;
    write_probe_tsv(tsv, full);
    CHECK(tsv.str().rfind("seed\tf1\n", 0) == 0);
    CHECK(probe_summary(full).find("mean") != std::string::npos);
}

TEST_CASE("linear probe errors") {
    Embeddings one_class = blobs(20, 1, 0.0, 1);
    CHECK_THROWS_AS(linear_probe(one_class), DataError);

    Embeddings e = blobs(30, 2, 2.0, 1);
    e.labels[0] = 9;
    e.labels[1] = 9;
    ProbeConfig halves;
    halves.train_frac = 0.5;
    halves.val_frac = 0.25;
    halves.test_frac = 0.25;
    try {
        linear_probe(e, halves);
        FAIL("expected DataError");
    } catch (const DataError& err) {
        CHECK(std::string(err.what()).find("class 9") != std::string::npos);
    }
    ProbeConfig bad;
    bad.train_frac = 0.9;
    CHECK_THROWS_AS(linear_probe(blobs(20, 2, 1.0, 1), bad), ContractViolation);
}

TEST_CASE("probe and diagnostics leave parameters untouched") {
    const data::ModelInputs in = golden_inputs();
    const auto params = encoders::init_params({in.gene_count, in.feat_dim, 8, 6}, 0);
    const std::uint64_t before = encoders::checksum(params);
    linear_probe(embed_dataset(params, in));
    hierarchy_diagnostics(params, in);
    CHECK(encoders::checksum(params) == before);
}

TEST_CASE("hierarchy diagnostics") {
    data::ModelInputs in = golden_inputs();
    const auto params = encoders::init_params({in.gene_count, in.feat_dim, 8, 6}, 0);
    const HierarchyReport r = hierarchy_diagnostics(params, in);
    CHECK(r.n == in.rows());
    std::size_t total = 0;
    for (std::size_t v : r.gene_aperture_hist) total += v;
    CHECK(total == r.n);
    CHECK(r.spearman_gene.has_value());
    CHECK(r.violation_rate >= 0.0);
    CHECK(r.violation_rate <= 1.0);

    std::fill(in.ngec.begin(), in.ngec.end(), 7);
    const HierarchyReport flat = hierarchy_diagnostics(params, in);
    CHECK_FALSE(flat.spearman_gene.has_value());
    CHECK_FALSE(flat.spearman_image.has_value());
    std::ostringstream tsv;
    write_diagnostics_tsv(tsv, flat);
    CHECK(tsv.str().find("spearman_ngec_gene_norm\tn/a") != std::string::npos);
    CHECK(diagnostics_summary(flat).find("n/a") != std::string::npos);
}

TEST_CASE("untrained image norms do not follow NGEC without hierarchy") {
    data::SyntheticConfig sc;
    sc.hierarchy_strength = 0.0;
    sc.spots_per_slide = 250;
    for (std::uint64_t seed : {0u, 1u}) {
        sc.seed = seed;
        const data::Dataset d = data::generate_synthetic(sc).data;
        const data::ModelInputs in =
            data::build_inputs(d, data::select_hvg(data::split_by_slide(d), data::Strategy::e_overlap_hvg, 100));
        const auto params = encoders::init_params({in.gene_count, in.feat_dim, 64, 32}, seed);
        const HierarchyReport r = hierarchy_diagnostics(params, in);
        REQUIRE(r.spearman_image.has_value());
        CHECK(std::abs(*r.spearman_image) < 0.2);
        // Gene inputs grow with the number of detected genes, so the gene side is
        // already ordered by NGEC before training.
        REQUIRE(r.spearman_gene.has_value());
        CHECK(*r.spearman_gene > 0.2);
    }
}
