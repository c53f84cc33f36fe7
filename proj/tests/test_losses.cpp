#include "doctest.h"
#include "hp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "delst/losses.hpp"

using namespace delst;
using namespace delst::losses;
using lorentz::exp_map;

namespace {

const Curvature kC{1.0};
const ConeConstants kK{0.1};

HyperPoint point(std::vector<double> space) {
    HyperPoint p{std::move(space), 0.0};
    p.time = lorentz::time_from_space(p.space, kC);
    return p;
}

HyperPoint random_point(std::mt19937_64& rng, std::size_t n, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    return exp_map({v}, kC);
}

BatchEmbeddings random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim, double scale = 0.5) {
    BatchEmbeddings b;
    std::uniform_int_distribution<std::size_t> ng(0, 50);
    for (std::size_t i = 0; i < n; ++i) {
        b.image_points.push_back(random_point(rng, dim, scale));
        b.gene_points.push_back(random_point(rng, dim, scale));
        b.ngec.push_back(ng(rng));
    }
    return b;
}

// Point with the given half-aperture along axis 0 (k = 0.1, c = 1).
HyperPoint with_aperture(double aper, std::size_t dim = 3) {
    std::vector<double> s(dim, 0.0);
    s[0] = 2.0 * 0.1 / std::sin(aper);
    return point(s);
}

// Applies the same random rotation (a product of Givens rotations) to every space vector.
void rotate_all(BatchEmbeddings& b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = b.image_points.front().dim();
    std::uniform_real_distribution<double> ang(0.0, 2.0 * std::numbers::pi);
    std::vector<std::tuple<std::size_t, std::size_t, double>> rots;
    for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = p + 1; q < n; ++q) rots.emplace_back(p, q, ang(rng));
    auto apply = [&](HyperPoint& h) {
        for (auto [p, q, a] : rots) {
            const double x = h.space[p], y = h.space[q];
            h.space[p] = std::cos(a) * x - std::sin(a) * y;
            h.space[q] = std::sin(a) * x + std::cos(a) * y;
        }
    };
    for (auto& h : b.image_points) apply(h);
    for (auto& h : b.gene_points) apply(h);
}

struct Graph {
    ad::Tape tape;
    GraphPoints image, gene;

    explicit Graph(const BatchEmbeddings& b) {
        image = load(b.image_points);
        gene = load(b.gene_points);
    }

    GraphPoints load(const std::vector<HyperPoint>& pts) {
        const std::size_t n = pts.size(), d = pts.front().dim();
        std::vector<double> s, t;
        for (const auto& p : pts) {
            s.insert(s.end(), p.space.begin(), p.space.end());
            t.push_back(p.time);
        }
        return {tape.parameter(ad::Tensor({n, d}, s)), tape.parameter(ad::Tensor({n, 1}, t))};
    }
};

}  // namespace

TEST_CASE("contrastive_loss examples") {
    std::mt19937_64 rng(1);
    BatchEmbeddings one = random_batch(rng, 1, 4);
    CHECK(contrastive_loss(one, 0.07) == 0.0);

    BatchEmbeddings eq;
    for (int i = 0; i < 4; ++i) {
        eq.image_points.push_back(point({0.3, -0.2}));
        eq.gene_points.push_back(point({0.3, -0.2}));
        eq.ngec.push_back(1);
    }
    for (SimMode m : {SimMode::cosine_full, SimMode::cosine_space, SimMode::neg_lorentz_distance}) {
        LossOptions o;
        o.sim_mode = m;
        CHECK(std::abs(contrastive_loss(eq, 0.07, o) - std::log(4.0)) <= 1e-10);
    }

    // N = 3 against a naive 50-digit evaluation over the cosine_full matrix.
    BatchEmbeddings b3 = random_batch(rng, 3, 5);
    std::vector<std::vector<double>> sim(3, std::vector<double>(3));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            std::vector<oracle::hp> a = oracle::lift(b3.image_points[i].space), g = oracle::lift(b3.gene_points[j].space);
            a.push_back(b3.image_points[i].time);
            g.push_back(b3.gene_points[j].time);
            sim[i][j] = (oracle::dot(a, g) / sqrt(oracle::dot(a, a) * oracle::dot(g, g))).convert_to<double>();
        }
    const double ref = oracle::contrastive(sim, 0.07).convert_to<double>();
    CHECK(std::abs(contrastive_loss(b3, 0.07) - ref) < 1e-12);
}

TEST_CASE("contrastive_loss is log-sum-exp stable at logits of +-14.3") {
    // cosine_space with axis-aligned points gives similarities of exactly +-1.
    BatchEmbeddings b;
    const std::vector<int> signs{1, -1, 1, 1, -1, -1};
    for (std::size_t i = 0; i < signs.size(); ++i) {
        b.image_points.push_back(point({static_cast<double>(signs[i]), 0.0}));
        b.gene_points.push_back(point({static_cast<double>(signs[(i * 5 + 1) % signs.size()]), 0.0}));
        b.ngec.push_back(i);
    }
    std::vector<std::vector<double>> sim(signs.size(), std::vector<double>(signs.size()));
    for (std::size_t i = 0; i < signs.size(); ++i)
        for (std::size_t j = 0; j < signs.size(); ++j)
            sim[i][j] = b.image_points[i].space[0] * b.gene_points[j].space[0];
    LossOptions o;
    o.sim_mode = SimMode::cosine_space;
    const double got = contrastive_loss(b, 0.07, o);
    CHECK(std::isfinite(got));
    CHECK(std::abs(got - oracle::contrastive(sim, 0.07).convert_to<double>()) <= 1e-10);
}

TEST_CASE("contrastive_loss rejects bad input") {
    BatchEmbeddings empty;
    CHECK_THROWS_AS(contrastive_loss(empty, 0.07), ContractViolation);
    std::mt19937_64 rng(2);
    CHECK_THROWS_AS(contrastive_loss(random_batch(rng, 2, 3), 0.0), ContractViolation);
}

TEST_CASE("contrastive_loss is non-negative (property)") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        BatchEmbeddings b = random_batch(rng, 1 + trial % 9, 4, 1.5);
        for (SimMode m : {SimMode::cosine_full, SimMode::cosine_space, SimMode::neg_lorentz_distance}) {
            LossOptions o;
            o.sim_mode = m;
            o.symmetric = trial % 2 == 0;
            REQUIRE(contrastive_loss(b, 0.07, o) >= 0.0);
        }
    }
}

TEST_CASE("cmel_loss examples") {
    // Genes near the origin have half-space cones; images further along the same ray are inside.
    BatchEmbeddings inside;
    for (int i = 0; i < 4; ++i) {
        const double ang = 0.4 * i;
        inside.gene_points.push_back(point({0.1 * std::cos(ang), 0.1 * std::sin(ang)}));
        inside.image_points.push_back(point({1.5 * std::cos(ang), 1.5 * std::sin(ang)}));
        inside.ngec.push_back(i);
    }
    CHECK(cmel_loss(inside, kK, kC) == 0.0);

    // Pair with violation pi/6: aper(g) = pi/6 and an image at exterior angle pi/3,
    // located by bisection on its polar angle around g.
    HyperPoint g = point({0.4, 0.0});
    auto image_at = [](double phi) { return point({0.4 + 0.5 * std::cos(phi), 0.5 * std::sin(phi)}); };
    double lo = 0.0, hi = std::numbers::pi;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (lorentz::exterior_angle(g, image_at(mid), kC) < std::numbers::pi / 3 ? lo : hi) = mid;
    }
    HyperPoint img = image_at(lo);
    REQUIRE(std::abs(lorentz::exterior_angle(g, img, kC) - std::numbers::pi / 3) < 1e-12);
    BatchEmbeddings two;
    two.gene_points = {inside.gene_points[0], g};
    two.image_points = {inside.image_points[0], img};
    two.ngec = {0, 1};
    CHECK(std::abs(cmel_loss(two, kK, kC) - std::numbers::pi / 12) < 1e-11);

    // Random N = 8 against per-pair 50-digit recomputation.
    std::mt19937_64 rng(4);
    BatchEmbeddings b = random_batch(rng, 8, 4, 1.0);
    oracle::hp total = 0;
    for (std::size_t i = 0; i < 8; ++i) {
        oracle::Point og = oracle::point_from_space(b.gene_points[i].space);
        oracle::Point oi = oracle::point_from_space(b.image_points[i].space);
        oracle::hp v = oracle::exterior(og, oi) - oracle::aperture(og);
        if (v > 0) total += v;
    }
    CHECK(std::abs(cmel_loss(b, kK, kC) - (total / 8).convert_to<double>()) < 1e-9);
}

TEST_CASE("select_hngec_lngec examples") {
    const std::vector<std::size_t> a{5, 1, 9, 3};
    NgecSplit s = select_hngec_lngec(a, 1);
    CHECK(s.low == std::vector<std::size_t>{1});
    CHECK(s.high == std::vector<std::size_t>{2});

    const std::vector<std::size_t> tied{7, 7, 7, 7};
    NgecSplit t = select_hngec_lngec(tied, 2);
    CHECK(t.low == std::vector<std::size_t>{0, 1});
    CHECK(t.high == std::vector<std::size_t>{2, 3});

    CHECK_THROWS_AS(select_hngec_lngec(a, 3), ContractViolation);
    CHECK_THROWS_AS(select_hngec_lngec(a, 0), ContractViolation);
}

TEST_CASE("select_hngec_lngec matches a brute-force sort (property)") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> val(0, 20);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::size_t> ngec(6 + trial % 20);
        for (auto& v : ngec) v = val(rng);
        NgecSplit s = select_hngec_lngec(ngec, 3);
        // Oracle: full sort of (value, index) pairs.
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < ngec.size(); ++i) pairs.emplace_back(ngec[i], i);
        std::sort(pairs.begin(), pairs.end());
        std::vector<std::size_t> lo, hi;
        for (std::size_t k = 0; k < 3; ++k) {
            lo.push_back(pairs[k].second);
            hi.push_back(pairs[pairs.size() - 3 + k].second);
        }
        REQUIRE(s.low == lo);
        REQUIRE(s.high == hi);
        std::vector<std::size_t> both(s.low);
        both.insert(both.end(), s.high.begin(), s.high.end());
        std::sort(both.begin(), both.end());
        REQUIRE(std::adjacent_find(both.begin(), both.end()) == both.end());
    }
}

TEST_CASE("imel_loss examples") {
    // L spots (low NGEC) with wide cones, H spots with narrow ones: ordering satisfied.
    BatchEmbeddings ok;
    const std::vector<double> apers{1.2, 1.0, 0.3, 0.2};
    for (std::size_t i = 0; i < 4; ++i) {
        ok.gene_points.push_back(with_aperture(apers[i]));
        ok.image_points.push_back(with_aperture(apers[i]));
        ok.ngec.push_back(i);
    }
    ImelTerms z = imel_loss(ok, 2, kK, kC);
    CHECK(z.gene == 0.0);
    CHECK(z.image == 0.0);

    BatchEmbeddings one;
    one.gene_points = {with_aperture(0.3), with_aperture(0.5)};
    one.image_points = one.gene_points;
    one.ngec = {1, 9};
    ImelTerms t = imel_loss(one, 1, kK, kC);
    CHECK(t.gene == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(t.image == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(t.average == doctest::Approx(0.2).epsilon(1e-12));

    // q = 2 random batch against the explicit double sum.
    std::mt19937_64 rng(6);
    BatchEmbeddings b = random_batch(rng, 6, 3, 1.0);
    b.ngec = {4, 10, 2, 8, 0, 6};  // L = {4, 2}, H = {3, 1}
    auto ap = [&](const HyperPoint& p) {
        return oracle::aperture(oracle::point_from_space(p.space)).convert_to<double>();
    };
    auto expand = [&](const std::vector<HyperPoint>& pts) {
        const double l0 = ap(pts[4]), l1 = ap(pts[2]), h0 = ap(pts[3]), h1 = ap(pts[1]);
        return (std::max(0.0, h0 - l0) + std::max(0.0, h1 - l0) + std::max(0.0, h0 - l1) +
                std::max(0.0, h1 - l1)) / 4.0;
    };
    ImelTerms r = imel_loss(b, 2, kK, kC);
    CHECK(std::abs(r.gene - expand(b.gene_points)) < 1e-12);
    CHECK(std::abs(r.image - expand(b.image_points)) < 1e-12);
    CHECK(r.average == doctest::Approx(0.5 * (r.gene + r.image)));
}

TEST_CASE("final_loss examples") {
    std::mt19937_64 rng(7);
    BatchEmbeddings b = random_batch(rng, 8, 4, 1.0);
    LossWeights w;
    w.q = 2;

    LossWeights zero = w;
    zero.lambda = zero.beta = 0.0;
    LossBreakdown z = final_loss(b, zero);
    CHECK(z.l_final == z.l_cont);

    LossBreakdown r = final_loss(b, w);
    const double cont = contrastive_loss(b, 0.07);
    const double cross = cmel_loss(b, kK, kC);
    const ImelTerms intra = imel_loss(b, 2, kK, kC);
    CHECK(r.l_cont == cont);
    CHECK(r.l_ent_cross == cross);
    CHECK(r.l_ent_intra == intra.average);
    CHECK(r.l_final == doctest::Approx(cont + 0.1 * cross + 0.1 * intra.average).epsilon(1e-15));
    CHECK(r.l_ent_intra == doctest::Approx(0.5 * (r.l_ent_intra_gene + r.l_ent_intra_image)));

    // Constraint-satisfying fixture: every hinge inactive, so l_final is l_cont exactly.
    BatchEmbeddings sat;
    const std::vector<double> gene_norms{0.05, 0.1, 0.15, 0.18};
    for (std::size_t i = 0; i < 4; ++i) {
        const double ang = 0.7 * i;
        sat.gene_points.push_back(point({gene_norms[i] * std::cos(ang), gene_norms[i] * std::sin(ang)}));
        const double r = 1.5 + 0.5 * static_cast<double>(i);
        sat.image_points.push_back(point({r * std::cos(ang), r * std::sin(ang)}));
        sat.ngec.push_back(10 * i);
    }
    LossWeights ws;
    ws.q = 2;
    LossBreakdown s = final_loss(sat, ws);
    CHECK(s.l_ent_cross == 0.0);
    CHECK(s.l_ent_intra == 0.0);
    CHECK(s.l_final == s.l_cont);
}

TEST_CASE("entailment losses are rotation invariant (property)") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        BatchEmbeddings b = random_batch(rng, 8, 5, 1.0);
        BatchEmbeddings r = b;
        rotate_all(r, 100 + trial);
        const ImelTerms i0 = imel_loss(b, 2, kK, kC), i1 = imel_loss(r, 2, kK, kC);
        REQUIRE(std::abs(i0.average - i1.average) < 1e-12);
        REQUIRE(std::abs(cmel_loss(b, kK, kC) - cmel_loss(r, kK, kC)) < 1e-9);
        REQUIRE(cmel_loss(b, kK, kC) >= 0.0);
        REQUIRE(i0.average >= 0.0);
    }
}

TEST_CASE("tape losses agree with the direct evaluation") {
    std::mt19937_64 rng(9);
    for (SimMode m : {SimMode::cosine_full, SimMode::cosine_space, SimMode::neg_lorentz_distance}) {
        for (bool sym : {false, true}) {
            BatchEmbeddings b = random_batch(rng, 8, 4, 1.0);
            LossWeights w;
            w.q = 2;
            LossOptions o;
            o.sim_mode = m;
            o.symmetric = sym;
            Graph g(b);
            LossBreakdown tape = final_loss_graph(g.image, g.gene, b.ngec, w, o).values();
            LossBreakdown direct = final_loss(b, w, o);
            CHECK(tape.l_cont == doctest::Approx(direct.l_cont).epsilon(1e-12));
            CHECK(tape.l_ent_cross == doctest::Approx(direct.l_ent_cross).epsilon(1e-12));
            CHECK(tape.l_ent_intra_gene == doctest::Approx(direct.l_ent_intra_gene).epsilon(1e-12));
            CHECK(tape.l_ent_intra_image == doctest::Approx(direct.l_ent_intra_image).epsilon(1e-12));
            CHECK(tape.l_final == doctest::Approx(direct.l_final).epsilon(1e-12));
        }
    }
}

TEST_CASE("tape exterior angle handles coincident pairs and origin genes") {
    BatchEmbeddings b;
    b.gene_points = {point({0.4, 0.1}), point({0.0, 0.0}), point({0.3, 0.3})};
    b.image_points = {point({0.4, 0.1}), point({0.5, 0.2}), point({-0.6, 0.1})};
    b.ngec = {1, 2, 3};
    Graph g(b);
    ad::Var ext = exterior_angle_graph(g.gene, g.image, kC);
    auto v = ext.values();
    CHECK(v[0] == 0.0);
    CHECK(v[1] == 0.0);
    CHECK(v[2] == doctest::Approx(lorentz::exterior_angle(b.gene_points[2], b.image_points[2], kC)));
    g.tape.backward(ad::sum(ext));
    for (double x : g.tape.grad(g.gene.space).values) CHECK(std::isfinite(x));
    for (double x : g.tape.grad(g.image.space).values) CHECK(std::isfinite(x));

    ad::Var aper = half_aperture_graph(g.gene, kK, kC);
    CHECK(aper.values()[1] == std::numbers::pi / 2);
}

TEST_CASE("sim mode names round-trip") {
    for (SimMode m : {SimMode::cosine_full, SimMode::cosine_space, SimMode::neg_lorentz_distance})
        CHECK(parse_sim_mode(to_string(m)) == m);
    CHECK(parse_sim_mode("neg-lorentz-distance") == SimMode::neg_lorentz_distance);
    CHECK_THROWS_AS(parse_sim_mode("dot"), ContractViolation);
}
