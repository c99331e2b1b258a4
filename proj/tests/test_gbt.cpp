#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stellar/gbt.hpp"
#include "stellar/rng.hpp"
#include "stellar/synthgen.hpp"
#include "test_oracles.hpp"

using namespace stellar;

namespace {

// 60-sample 3-class blobs in 4 dimensions.
void smoke_dataset(std::vector<std::vector<double>>& xs, std::vector<int>& ys,
                   std::uint64_t seed = 99) {
    Rng rng(seed);
    const double centers[3][4] = {{0, 0, 1, 0}, {1, 0, 0, 1}, {0, 1, 0, 0}};
    for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 20; ++i) {
            std::vector<double> x;
            for (int d = 0; d < 4; ++d) x.push_back(centers[c][d] + rng.normal(0.0, 0.25));
            xs.push_back(std::move(x));
            ys.push_back(c);
        }
    }
}

}  // namespace

TEST_CASE("zero rounds with balanced classes predicts the uniform prior") {
    std::vector<std::vector<double>> xs = {{0.0}, {1.0}, {2.0}, {3.0}};
    std::vector<int> ys = {0, 1, 2, 3};
    GbtParams params;
    params.num_rounds = 0;
    auto model = gbt_fit(xs, ys, {"a", "b", "c", "d"}, params);
    auto p = model.predict_proba(std::vector<double>{0.5});
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("first depth-1 split matches the exhaustive stump oracle") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed * 7 + 1);
        // linearly separable two-class set in 2 features
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        for (int i = 0; i < 12; ++i) {
            double cls = i % 2 == 0 ? 0.0 : 4.0;
            xs.push_back({cls + rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
            ys.push_back(i % 2);
        }
        GbtParams params;
        params.max_depth = 1;
        params.num_rounds = 1;
        auto model = gbt_fit(xs, ys, {"c0", "c1"}, params);

        // recompute the round-0 gradients the same way the fit does
        std::vector<double> grad, hess;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double p = 0.5;  // balanced prior
            grad.push_back(p - (ys[i] == 0 ? 1.0 : 0.0));
            hess.push_back(2.0 * p * (1.0 - p));
        }
        auto stump = oracle::exhaustive_best_stump(xs, grad, hess, params.l2_lambda,
                                                   params.min_child_weight);
        const auto& tree = model.rounds()[0][0];
        REQUIRE(tree.nodes.size() == 3);
        CHECK(tree.nodes[0].feature == stump.feature);
        CHECK(tree.nodes[0].threshold == doctest::Approx(stump.threshold).epsilon(1e-12));
    }
}

TEST_CASE("training log-loss decreases and never increases on the smoke dataset") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys);
    GbtParams params;
    params.num_rounds = 50;
    auto model = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);
    const auto& loss = model.train_loss();
    REQUIRE(loss.size() == 51);
    CHECK(loss[50] < loss[0]);
    for (std::size_t i = 1; i < loss.size(); ++i) CHECK(loss[i] <= loss[i - 1] + 1e-9);
}

TEST_CASE("predictions agree with the recursive tree-walk re-implementation") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys);
    GbtParams params;
    params.num_rounds = 30;
    auto model = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);

    Rng rng(55);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x;
        for (int d = 0; d < 4; ++d) x.push_back(rng.uniform(-1.0, 2.0));
        CHECK(model.predict_class(x) == oracle::naive_gbt_predict(model, x));
    }
    // training points classify correctly once converged
    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (model.predict_class(xs[i]) == ys[i]) ++correct;
    CHECK(correct == static_cast<int>(xs.size()));
}

TEST_CASE("a constant single-leaf tree adds directly onto the bias") {
    RegressionTree constant;
    constant.nodes.push_back({-1, 0.0, -1, -1, 0.7});
    RegressionTree zero;
    zero.nodes.push_back({-1, 0.0, -1, -1, 0.0});
    auto model = BoostedEnsemble::assemble({std::log(0.5), std::log(0.5)},
                                           {{constant, zero}}, {"c0", "c1"}, 2, GbtParams{});
    auto scores = model.predict_scores(std::vector<double>{0.0, 0.0});
    CHECK(scores[0] == doctest::Approx(std::log(0.5) + 0.7).epsilon(1e-12));
    CHECK(scores[1] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("probabilities form a distribution and ties go to the lowest class") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys);
    auto model = gbt_fit(xs, ys, {"c0", "c1", "c2"}, GbtParams{});
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x;
        for (int d = 0; d < 4; ++d) x.push_back(rng.uniform(-2.0, 3.0));
        auto p = model.predict_proba(x);
        double sum = 0.0;
        for (double v : p) {
            CHECK(v >= 0.0);
            sum += v;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }

    auto tied = BoostedEnsemble::assemble({0.0, 0.0}, {}, {"c0", "c1"}, 1, GbtParams{});
    CHECK(tied.predict_class(std::vector<double>{0.0}) == 0);
}

TEST_CASE("tree depth never exceeds max_depth") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys, 123);
    for (int depth : {1, 3, 7}) {
        GbtParams params;
        params.max_depth = depth;
        params.num_rounds = 10;
        auto model = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);
        for (const auto& round : model.rounds())
            for (const auto& tree : round) CHECK(tree.depth() <= depth);
    }
}

TEST_CASE("fit rejects bad input") {
    std::vector<std::vector<double>> xs = {{0.0}, {1.0}};
    CHECK_THROWS(static_cast<void>(gbt_fit(xs, {0, 0}, {"only"}, GbtParams{})));
    CHECK_THROWS_WITH_AS(
        static_cast<void>(gbt_fit(xs, {0, 0}, {"c0", "c1"}, GbtParams{})),
        doctest::Contains("no samples"), std::runtime_error);
    std::vector<std::vector<double>> bad = {{std::nan("")}, {1.0}};
    CHECK_THROWS_WITH_AS(static_cast<void>(gbt_fit(bad, {0, 1}, {"c0", "c1"}, GbtParams{})),
                         doctest::Contains("non-finite"), std::runtime_error);

    auto ok = gbt_fit(xs, {0, 1}, {"c0", "c1"}, GbtParams{});
    CHECK_THROWS(static_cast<void>(ok.predict_class(std::vector<double>{0.0, 1.0})));
}

TEST_CASE("fit is deterministic") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys);
    GbtParams params;
    params.num_rounds = 20;
    auto a = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);
    auto b = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);
    CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("ensemble serialization round-trips exactly") {
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    smoke_dataset(xs, ys);
    GbtParams params;
    params.num_rounds = 15;
    auto model = gbt_fit(xs, ys, {"c0", "c1", "c2"}, params);
    auto back = BoostedEnsemble::from_json(model.to_json());
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x;
        for (int d = 0; d < 4; ++d) x.push_back(rng.uniform(-1.0, 2.0));
        CHECK(model.predict_scores(x) == back.predict_scores(x));
    }

    std::string path = "gbt_roundtrip_test.json";
    model.save(path);
    auto loaded = BoostedEnsemble::load(path);
    CHECK(loaded.to_json().dump() == model.to_json().dump());
    std::remove(path.c_str());
}

TEST_CASE("knn basics: memorization and global majority") {
    std::vector<std::vector<double>> xs = {{0.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}};
    std::vector<std::string> ys = {"a", "a", "a", "b"};
    KnnModel one(xs, ys, 1);
    CHECK(one.predict(std::vector<double>{1.0, 0.0}) == "a");
    CHECK(one.predict(std::vector<double>{3.0, 0.0}) == "b");
    KnnModel all(xs, ys, 4);
    CHECK(all.predict(std::vector<double>{10.0, 0.0}) == "a");

    CHECK_THROWS(static_cast<void>(KnnModel(xs, ys, 5)));
    CHECK_THROWS(static_cast<void>(KnnModel(xs, ys, 0)));
}

TEST_CASE("knn matches the full-sort scan oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::vector<double>> xs;
        std::vector<std::string> ys;
        int n = 20 + static_cast<int>(rng.below(40));
        for (int i = 0; i < n; ++i) {
            xs.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
            ys.push_back("rp" + std::to_string(rng.below(5)));
        }
        KnnModel model(xs, ys, 4);
        for (int q = 0; q < 20; ++q) {
            std::vector<double> x{rng.uniform(), rng.uniform(), rng.uniform()};
            CHECK(model.predict(x) == oracle::knn_scan(xs, ys, 4, x));
        }
    }
}

TEST_CASE("lt-knn refits on schedule and degenerates to static knn") {
    // stream of 7 CIs over a small synthetic world with growing outages
    EnvironmentModel env;
    env.building_id = "t";
    env.num_rps = 8;
    env.extent_x_m = 8.0;
    env.extent_y_m = 6.0;
    env.pathloss = {-40.0, 1.0, 3.0, 1.5};
    env.seed = 5;
    place_aps(env, 12);
    std::vector<double> fractions = {0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.5};
    auto schedule = banded_schedule(fractions, 12, -0.1, 3);
    auto data = generate(env, {{"devA", 0.0, 1.0, 0.1}}, schedule, 4, 11);

    std::vector<CiSlice> stream;
    for (int ci = 0; ci < 7; ++ci) {
        auto slice = data.slice("devA", ci);
        auto sp = split(slice, {3, 1, 21});
        stream.push_back({ci, sp.train, sp.test});
    }

    auto st = ltknn_evaluate(stream, 3, 0);
    CHECK(st.refit_cis.empty());

    auto lt = ltknn_evaluate(stream, 3, 3);
    CHECK(lt.refit_cis == std::vector<int>{3, 6});
    REQUIRE(lt.per_ci_error_m.size() == 7);
    // before the first refit the curves agree
    for (int ci = 0; ci < 3; ++ci)
        CHECK(lt.per_ci_error_m[static_cast<std::size_t>(ci)] ==
              st.per_ci_error_m[static_cast<std::size_t>(ci)]);

    std::vector<CiSlice> gap = {stream[0], stream[2]};
    CHECK_THROWS_WITH_AS(static_cast<void>(ltknn_evaluate(gap, 3, 3)),
                         doctest::Contains("missing CI"), std::runtime_error);
}
