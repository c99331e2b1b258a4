#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "stellar/rng.hpp"
#include "stellar/synthgen.hpp"

using namespace stellar;

namespace {

EnvironmentModel quiet_env(int num_rps, std::vector<std::array<double, 2>> aps,
                           double shadow = 0.0) {
    EnvironmentModel env;
    env.building_id = "t";
    env.num_rps = num_rps;
    env.rp_spacing_m = 1.0;
    env.extent_x_m = num_rps;
    env.extent_y_m = 4.0;
    env.ap_positions = std::move(aps);
    env.pathloss = {-40.0, 1.0, 3.0, shadow};
    return env;
}

TemporalSchedule flat_schedule(int cis) {
    TemporalSchedule s;
    s.disabled_aps.assign(static_cast<std::size_t>(cis), {});
    s.drift_db.assign(static_cast<std::size_t>(cis), 0.0);
    return s;
}

}  // namespace

TEST_CASE("path loss matches the log-distance formula") {
    PathLossParams pl{-40.0, 1.0, 3.0, 0.0};
    CHECK(path_loss_rss(pl, 1.0) == doctest::Approx(-40.0));
    CHECK(path_loss_rss(pl, 10.0) == doctest::Approx(-70.0));
    CHECK(path_loss_rss(pl, 1000.0) == -100.0);  // clamped floor
    CHECK(path_loss_rss(pl, 0.1) == doctest::Approx(-40.0));  // clamped to d0
}

TEST_CASE("mean rss is non-increasing with distance") {
    auto env = quiet_env(12, {{0.0, 2.0}});
    double prev = mean_rss(env, 0, 0);
    for (int r = 1; r < env.num_rps; ++r) {
        double cur = mean_rss(env, 0, r);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("disabled APs read -100 for every fingerprint of the CI") {
    auto env = quiet_env(4, {{0, 2}, {1, 2}, {2, 2}, {3, 2}, {1, 0}, {2, 0}, {0, 0}, {3, 0},
                             {1, 3}, {2, 3}});
    TemporalSchedule s = flat_schedule(2);
    // floor(0.4 * 10) = 4 APs out at CI 1
    s.disabled_aps[1] = {1, 4, 6, 9};
    auto ds = generate(env, {{"devA", 0.0, 0.0, 0.0}}, s, 3, 77);

    std::set<int> all_dead_columns;
    for (std::size_t a = 0; a < ds.ap_universe.size(); ++a) {
        bool all_dead = true;
        for (const auto& r : ds.records) {
            if (r.ci == 1 && r.ap_values[a] != -100.0) all_dead = false;
        }
        if (all_dead) all_dead_columns.insert(static_cast<int>(a));
    }
    CHECK(all_dead_columns == std::set<int>{1, 4, 6, 9});
}

TEST_CASE("gain offsets shift readings by exactly their difference when noiseless") {
    auto env = quiet_env(4, {{0, 2}, {3, 1}});
    auto s = flat_schedule(1);
    std::vector<DeviceProfile> devices = {{"devA", 0.0, 0.0, 0.0}, {"devB", -10.0, 0.0, 0.0}};
    auto ds = generate(env, devices, s, 1, 5);
    auto a = ds.slice("devA", 0);
    auto b = ds.slice("devB", 0);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        for (std::size_t ap = 0; ap < ds.ap_universe.size(); ++ap) {
            double va = a.records[i].ap_values[ap];
            double vb = b.records[i].ap_values[ap];
            if (va > -90.0 && vb > -100.0)  // both unclamped
                CHECK(va - vb == doctest::Approx(10.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("inter-device offset spread falls in the observed 5-30 dB band") {
    // Monte-Carlo oracle: offsets ~ U(-15,15) give E|u1-u2| = 10 dB.
    auto env = quiet_env(2, {{0.0, 2.0}, {1.0, 1.0}, {0.5, 3.0}});
    auto s = flat_schedule(1);
    Rng rng(1234);
    double sum = 0.0;
    int count = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<DeviceProfile> devices = {{"devA", rng.uniform(-15.0, 15.0), 0.0, 0.0},
                                              {"devB", rng.uniform(-15.0, 15.0), 0.0, 0.0}};
        auto ds = generate(env, devices, s, 1, trial);
        auto a = ds.slice("devA", 0);
        auto b = ds.slice("devB", 0);
        for (std::size_t ap = 0; ap < ds.ap_universe.size(); ++ap) {
            double va = a.records[0].ap_values[ap];
            double vb = b.records[0].ap_values[ap];
            if (va > -100.0 && va < 0.0 && vb > -100.0 && vb < 0.0) {
                sum += std::abs(va - vb);
                ++count;
            }
        }
    }
    double mean_abs_diff = sum / count;
    CHECK(mean_abs_diff >= 5.0);
    CHECK(mean_abs_diff <= 30.0);
}

TEST_CASE("all emitted RSS stays in range and generation is deterministic") {
    BenchmarkShape shape{6, 8, 2, 3, 2};
    auto s1 = make_benchmark(shape, 9);
    auto s2 = make_benchmark(shape, 9);
    REQUIRE(s1.buildings.size() == 2);
    for (const auto& b : s1.buildings) {
        for (const auto& r : b.data.records) {
            for (double v : r.ap_values) {
                CHECK(v >= -100.0);
                CHECK(v <= 0.0);
            }
        }
    }
    CHECK(to_csv(s1.buildings[0].data) == to_csv(s2.buildings[0].data));
    CHECK(to_csv(s1.buildings[1].data) == to_csv(s2.buildings[1].data));
    CHECK(s1.buildings[0].data.building_id != s1.buildings[1].data.building_id);
}

TEST_CASE("default benchmark mirrors the outage bands") {
    auto suite = default_benchmark(42);
    REQUIRE(suite.buildings.size() == 2);
    const auto& b = suite.buildings[0];
    CHECK(b.data.rps.size() == 16);
    CHECK(b.data.ap_universe.size() == 40);
    CHECK(b.data.device_ids().size() == 4);
    CHECK(b.data.cis().size() == 17);
    // 4 devices x 17 CIs x 16 RPs x 6 fingerprints
    CHECK(b.data.records.size() == 4 * 17 * 16 * 6);

    CHECK(b.schedule.disabled_aps[0].empty());
    CHECK(b.schedule.disabled_aps[2].empty());
    CHECK(b.schedule.disabled_aps[3].size() == 8);    // 20% of 40
    CHECK(b.schedule.disabled_aps[10].size() == 16);  // 40% of 40
    CHECK(b.schedule.disabled_aps[16].size() == 24);  // 60% of 40

    // outages accumulate: earlier bands are subsets of later ones
    std::set<int> band20(b.schedule.disabled_aps[3].begin(), b.schedule.disabled_aps[3].end());
    std::set<int> band40(b.schedule.disabled_aps[10].begin(), b.schedule.disabled_aps[10].end());
    for (int ap : band20) CHECK(band40.count(ap) == 1);
}

TEST_CASE("benchmark churn fractions follow the CI bands") {
    CHECK(benchmark_churn_fraction(0) == 0.0);
    CHECK(benchmark_churn_fraction(2) == 0.0);
    CHECK(benchmark_churn_fraction(3) == 0.2);
    CHECK(benchmark_churn_fraction(9) == 0.2);
    CHECK(benchmark_churn_fraction(10) == 0.4);
    CHECK(benchmark_churn_fraction(15) == 0.4);
    CHECK(benchmark_churn_fraction(16) == 0.6);
}

TEST_CASE("schedule validation rejects out-of-universe APs") {
    auto env = quiet_env(4, {{0, 2}, {1, 2}});
    TemporalSchedule s = flat_schedule(1);
    s.disabled_aps[0] = {5};
    CHECK_THROWS(static_cast<void>(generate(env, {{"devA", 0, 0, 0}}, s, 1, 1)));
}
