#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include <treeattn/metrics.hpp>
#include <treeattn/rng.hpp>

#include "metric_oracles.hpp"

using treeattn::UniformRng;

namespace {

std::vector<double> random_scores(UniformRng& rng, size_t n, double lo, double hi) {
    std::vector<double> xs(n);
    for (double& x : xs) x = rng.uniform(lo, hi);
    return xs;
}

}  // namespace

TEST_CASE("average ranks share tie positions") {
    REQUIRE(treeattn::average_ranks({1.0, 2.0, 2.0, 3.0}) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    REQUIRE(treeattn::average_ranks({5.0, 1.0, 3.0}) == std::vector<double>{3.0, 1.0, 2.0});
    REQUIRE(treeattn::average_ranks({7.0, 7.0, 7.0}) == std::vector<double>{2.0, 2.0, 2.0});
    REQUIRE(treeattn::average_ranks({}).empty());

    SECTION("agrees with pairwise counting on random ties") {
        UniformRng rng(31);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> xs(40);
            for (double& x : xs) x = static_cast<double>(rng.below(8));  // heavy ties
            REQUIRE(treeattn::average_ranks(xs) == metoracle::counting_ranks(xs));
        }
    }
}

TEST_CASE("pearson correlation fundamentals") {
    const std::vector<double> xs = {1.0, 2.0, 3.0, 4.0};
    REQUIRE(treeattn::pearson(xs, xs).value() == Catch::Approx(1.0).margin(1e-12));

    std::vector<double> neg = {4.0, 3.0, 2.0, 1.0};
    REQUIRE(treeattn::pearson(xs, neg).value() == Catch::Approx(-1.0).margin(1e-12));

    SECTION("linear transforms keep |r| = 1") {
        std::vector<double> scaled(xs.size());
        for (size_t i = 0; i < xs.size(); ++i) scaled[i] = 3.5 * xs[i] - 2.0;
        REQUIRE(treeattn::pearson(xs, scaled).value() == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("zero variance and degenerate sizes are undefined, not zero") {
        REQUIRE_FALSE(treeattn::pearson({1.0, 1.0, 1.0}, xs.size() == 4 ? std::vector<double>{1, 2, 3}
                                                                        : xs).has_value());
        REQUIRE_FALSE(treeattn::pearson({2.0}, {3.0}).has_value());
        REQUIRE_FALSE(treeattn::pearson({}, {}).has_value());
    }

    SECTION("length mismatch throws") {
        REQUIRE_THROWS_AS(treeattn::pearson({1.0, 2.0}, {1.0}), std::invalid_argument);
    }

    SECTION("matches the raw-moment oracle on 1000 random samples") {
        UniformRng rng(32);
        const std::vector<double> a = random_scores(rng, 1000, 1.0, 5.0);
        std::vector<double> b = random_scores(rng, 1000, 1.0, 5.0);
        for (size_t i = 0; i < b.size(); ++i) b[i] = 0.6 * a[i] + 0.4 * b[i];  // induce correlation
        const double got = treeattn::pearson(a, b).value();
        const double want = metoracle::pearson_raw(a, b).value();
        REQUIRE(got == Catch::Approx(want).margin(1e-10));
        REQUIRE(got > 0.5);
    }
}

TEST_CASE("spearman is rank pearson") {
    // monotone but non-linear relation gives rho exactly 1
    const std::vector<double> a = {1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> cubed(a.size());
    for (size_t i = 0; i < a.size(); ++i) cubed[i] = a[i] * a[i] * a[i];
    REQUIRE(treeattn::spearman(a, cubed).value() == Catch::Approx(1.0).margin(1e-12));

    SECTION("invariant under strictly increasing transforms") {
        UniformRng rng(33);
        const std::vector<double> x = random_scores(rng, 200, 1.0, 5.0);
        const std::vector<double> y = random_scores(rng, 200, 1.0, 5.0);
        std::vector<double> ex(x.size());
        for (size_t i = 0; i < x.size(); ++i) ex[i] = std::exp(x[i]);
        REQUIRE(treeattn::spearman(x, y).value() == treeattn::spearman(ex, y).value());
    }

    SECTION("all-tied input is undefined") {
        REQUIRE_FALSE(treeattn::spearman({2.0, 2.0, 2.0}, {1.0, 2.0, 3.0}).has_value());
    }

    SECTION("matches the counting-rank oracle with heavy ties") {
        UniformRng rng(34);
        std::vector<double> a(1000), b(1000);
        for (size_t i = 0; i < a.size(); ++i) {
            a[i] = 1.0 + 0.5 * static_cast<double>(rng.below(9));  // 0.5-grid scores: many ties
            b[i] = 1.0 + 0.5 * static_cast<double>(rng.below(9));
        }
        REQUIRE(treeattn::spearman(a, b).value() ==
                Catch::Approx(metoracle::spearman_raw(a, b).value()).margin(1e-10));
    }
}

TEST_CASE("mse basics and oracle agreement") {
    REQUIRE(treeattn::mse({1.0, 2.0}, {1.0, 2.0}) == 0.0);
    REQUIRE(treeattn::mse({1.0, 2.0}, {2.0, 3.0}) == 1.0);
    REQUIRE(treeattn::mse({0.0, 0.0}, {3.0, 1.0}) == 5.0);
    REQUIRE_THROWS_AS(treeattn::mse({1.0}, {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(treeattn::mse({}, {}), std::invalid_argument);

    UniformRng rng(35);
    const std::vector<double> a = random_scores(rng, 1000, 1.0, 5.0);
    const std::vector<double> b = random_scores(rng, 1000, 1.0, 5.0);
    REQUIRE(treeattn::mse(a, b) == Catch::Approx(metoracle::mse_raw(a, b)).margin(1e-10));
}

TEST_CASE("binary scores cover the boundary conventions") {
    SECTION("one of each confusion cell") {
        const auto s = treeattn::accuracy_f1({1, 1, 0, 0}, {1, 0, 1, 0});
        REQUIRE(s.accuracy == 0.5);
        REQUIRE(s.precision == 0.5);
        REQUIRE(s.recall == 0.5);
        REQUIRE(s.f1 == 0.5);
    }

    SECTION("perfect prediction") {
        const auto s = treeattn::accuracy_f1({1, 0, 1}, {1, 0, 1});
        REQUIRE(s.accuracy == 1.0);
        REQUIRE(s.f1 == 1.0);
    }

    SECTION("no positives anywhere: f1 is 0 while accuracy is 1") {
        const auto s = treeattn::accuracy_f1({0, 0, 0}, {0, 0, 0});
        REQUIRE(s.accuracy == 1.0);
        REQUIRE(s.precision == 0.0);
        REQUIRE(s.recall == 0.0);
        REQUIRE(s.f1 == 0.0);
    }

    SECTION("labels outside 0/1 throw") {
        REQUIRE_THROWS_AS(treeattn::accuracy_f1({2, 0}, {1, 0}), std::invalid_argument);
        REQUIRE_THROWS_AS(treeattn::accuracy_f1({1, 0}, {1, -1}), std::invalid_argument);
        REQUIRE_THROWS_AS(treeattn::accuracy_f1({}, {}), std::invalid_argument);
    }

    SECTION("permutation invariance and oracle agreement on random labelings") {
        UniformRng rng(36);
        std::vector<int> pred(500), gold(500);
        for (size_t i = 0; i < pred.size(); ++i) {
            pred[i] = rng.bernoulli(0.4) ? 1 : 0;
            gold[i] = rng.bernoulli(0.5) ? 1 : 0;
        }
        const auto s = treeattn::accuracy_f1(pred, gold);
        const auto c = metoracle::confusion(pred, gold);
        REQUIRE(s.accuracy == Catch::Approx((c.tp + c.tn) / 500.0).margin(1e-12));
        REQUIRE(s.f1 == Catch::Approx(metoracle::f1_raw(c)).margin(1e-12));

        std::vector<size_t> order(pred.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        std::vector<int> pred2, gold2;
        for (size_t i : order) {
            pred2.push_back(pred[i]);
            gold2.push_back(gold[i]);
        }
        const auto s2 = treeattn::accuracy_f1(pred2, gold2);
        REQUIRE(s2.accuracy == s.accuracy);
        REQUIRE(s2.f1 == s.f1);
    }
}

TEST_CASE("ngram overlap score follows the shorter-sentence rule") {
    const std::vector<std::string> ten = {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"};
    REQUIRE(treeattn::ngram_overlap_score(ten, ten) == Catch::Approx(15.0).margin(1e-12));

    SECTION("disjoint sentences score zero") {
        REQUIRE(treeattn::ngram_overlap_score({"x", "y", "z"}, {"p", "q", "r"}) == 0.0);
    }

    SECTION("single shared token") {
        // uni: shared {x} over the shorter {x} = 1; bigrams/trigrams need two+
        // tokens and contribute nothing; mean length 1
        REQUIRE(treeattn::ngram_overlap_score({"x"}, {"x"}) == Catch::Approx(50.0).margin(1e-12));
    }

    SECTION("shorter side is the denominator") {
        // shorter {a b}: uni 2/2 shared, bi 1/1 shared; mean len 3
        const double s = treeattn::ngram_overlap_score({"a", "b"}, {"a", "b", "c", "d"});
        REQUIRE(s == Catch::Approx(50.0 * (1.0 + 1.0) / 3.0).margin(1e-12));
        // symmetric arguments give the same score here
        REQUIRE(treeattn::ngram_overlap_score({"a", "b", "c", "d"}, {"a", "b"}) ==
                Catch::Approx(s).margin(1e-12));
    }

    SECTION("equal lengths resolve toward the first sentence") {
        // a has 3 unigram types {u u v} -> {u, v}; b has {u, w, x}
        // denominator is a's type set (tie on length): shared {u} / 2 types
        const std::vector<std::string> a = {"u", "u", "v"};
        const std::vector<std::string> b = {"u", "w", "x"};
        const double got = treeattn::ngram_overlap_score(a, b);
        REQUIRE(got == Catch::Approx(50.0 * (1.0 / 2.0) / 3.0).margin(1e-12));
    }

    SECTION("empty sentences are rejected") {
        REQUIRE_THROWS_AS(treeattn::ngram_overlap_score({}, {"a"}), std::invalid_argument);
    }
}

TEST_CASE("bucket report partitions by half-open edges") {
    std::vector<treeattn::BucketInput> rows;
    UniformRng rng(37);
    for (int i = 0; i < 200; ++i) {
        treeattn::BucketInput r;
        r.key = rng.uniform(0.0, 10.0);
        r.gold = rng.uniform(1.0, 5.0);
        r.pred = 0.5 * r.gold + rng.uniform(0.0, 2.0);
        rows.push_back(r);
    }

    SECTION("a single bucket over everything reproduces the global metric") {
        const auto out = treeattn::bucket_report(rows, {0.0, 10.5}, true);
        REQUIRE(out.size() == 1);
        REQUIRE(out[0].count == 200);
        std::vector<double> preds, golds;
        for (const auto& r : rows) {
            preds.push_back(r.pred);
            golds.push_back(r.gold);
        }
        REQUIRE(out[0].metric.value() == treeattn::pearson(preds, golds).value());
    }

    SECTION("counts split across buckets and keys at the top edge drop out") {
        std::vector<treeattn::BucketInput> simple = {
            {0.0, 1.0, 1.0}, {4.9, 2.0, 2.0}, {5.0, 3.0, 3.0}, {10.0, 4.0, 4.0}};
        const auto out = treeattn::bucket_report(simple, {0.0, 5.0, 10.0}, true);
        REQUIRE(out.size() == 2);
        REQUIRE(out[0].count == 2);  // 0.0 and 4.9
        REQUIRE(out[1].count == 1);  // 5.0; the key equal to the last edge is excluded
        REQUIRE(out[0].lo == 0.0);
        REQUIRE(out[0].hi == 5.0);
    }

    SECTION("empty buckets have no metric") {
        const auto out = treeattn::bucket_report(rows, {-20.0, -10.0, 0.0, 10.5}, true);
        REQUIRE(out[0].count == 0);
        REQUIRE_FALSE(out[0].metric.has_value());
        REQUIRE(out[1].count == 0);
        REQUIRE(out[2].count == 200);
    }

    SECTION("single-valued bucket yields an undefined metric, not a crash") {
        std::vector<treeattn::BucketInput> one = {{1.0, 2.0, 3.0}};
        const auto out = treeattn::bucket_report(one, {0.0, 2.0}, true);
        REQUIRE(out[0].count == 1);
        REQUIRE_FALSE(out[0].metric.has_value());
    }

    SECTION("binary buckets use exact-match accuracy") {
        std::vector<treeattn::BucketInput> bin = {
            {1.0, 1.0, 1.0}, {1.5, 0.0, 1.0}, {6.0, 1.0, 1.0}, {7.0, 0.0, 0.0}};
        const auto out = treeattn::bucket_report(bin, {0.0, 5.0, 10.0}, false);
        REQUIRE(out[0].metric.value() == 0.5);
        REQUIRE(out[1].metric.value() == 1.0);
    }

    SECTION("bad edge lists throw") {
        REQUIRE_THROWS_AS(treeattn::bucket_report(rows, {1.0}, true), std::invalid_argument);
        REQUIRE_THROWS_AS(treeattn::bucket_report(rows, {5.0, 1.0}, true), std::invalid_argument);
    }
}
