#include "stellar/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include "stellar/rng.hpp"

namespace stellar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr double kWeakThresholdDbm = -90.0;

}  // namespace

void EnvironmentModel::validate() const {
    if (pathloss.exponent <= 0.0) fail("path-loss exponent must be > 0");
    if (pathloss.shadow_sigma_db < 0.0) fail("shadow sigma must be >= 0");
    if (pathloss.d0_m <= 0.0) fail("reference distance must be > 0");
    if (ap_positions.empty()) fail("environment needs at least 1 AP");
    if (num_rps < 2) fail("environment needs at least 2 RPs");
    if (rp_spacing_m <= 0.0) fail("rp spacing must be > 0");
}

std::vector<ReferencePoint> EnvironmentModel::reference_points() const {
    std::vector<ReferencePoint> rps;
    rps.reserve(static_cast<std::size_t>(num_rps));
    int width = num_rps > 100 ? 3 : 2;
    for (int i = 0; i < num_rps; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "rp%0*d", width, i);
        rps.push_back({buf, i * rp_spacing_m, extent_y_m / 2.0});
    }
    return rps;
}

std::vector<std::string> EnvironmentModel::ap_ids() const {
    std::vector<std::string> ids;
    ids.reserve(ap_positions.size());
    for (std::size_t i = 0; i < ap_positions.size(); ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "02:00:00:00:%02x:%02x",
                      static_cast<unsigned>((i >> 8) & 0xff), static_cast<unsigned>(i & 0xff));
        ids.emplace_back(buf);
    }
    return ids;
}

void place_aps(EnvironmentModel& env, int num_aps) {
    Rng rng(derive_seed(env.seed, {hash_tag("ap-layout")}));
    env.ap_positions.clear();
    env.ap_positions.reserve(static_cast<std::size_t>(num_aps));
    for (int i = 0; i < num_aps; ++i) {
        double x = rng.uniform(0.0, env.extent_x_m);
        double y = rng.uniform(0.0, env.extent_y_m);
        env.ap_positions.push_back({x, y});
    }
}

void TemporalSchedule::validate(int num_aps) const {
    if (disabled_aps.size() != drift_db.size())
        fail("schedule disabled/drift lengths disagree");
    for (std::size_t ci = 0; ci < disabled_aps.size(); ++ci) {
        for (int ap : disabled_aps[ci]) {
            if (ap < 0 || ap >= num_aps)
                fail("schedule disables AP " + std::to_string(ap) + " outside universe at CI " +
                     std::to_string(ci));
        }
    }
}

TemporalSchedule banded_schedule(const std::vector<double>& fraction_per_ci,
                                 int num_aps, double drift_per_ci_db,
                                 std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(num_aps));
    for (int i = 0; i < num_aps; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(derive_seed(seed, {hash_tag("churn")}));
    rng.shuffle(order);

    TemporalSchedule s;
    for (std::size_t ci = 0; ci < fraction_per_ci.size(); ++ci) {
        double f = fraction_per_ci[ci];
        if (f < 0.0 || f > 1.0) fail("churn fraction out of [0,1]");
        auto count = static_cast<std::size_t>(std::floor(f * num_aps));
        std::vector<int> disabled(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
        std::sort(disabled.begin(), disabled.end());
        s.disabled_aps.push_back(std::move(disabled));
        s.drift_db.push_back(drift_per_ci_db * static_cast<double>(ci));
    }
    return s;
}

double path_loss_rss(const PathLossParams& pl, double distance_m) {
    double d = std::max(distance_m, pl.d0_m);
    double rss = pl.p0_dbm - 10.0 * pl.exponent * std::log10(d / pl.d0_m);
    return std::clamp(rss, kInvisibleRssDbm, kMaxRssDbm);
}

double mean_rss(const EnvironmentModel& env, int ap_index, int rp_index) {
    const auto& ap = env.ap_positions.at(static_cast<std::size_t>(ap_index));
    auto rps = env.reference_points();
    const auto& rp = rps.at(static_cast<std::size_t>(rp_index));
    double dx = ap[0] - rp.x;
    double dy = ap[1] - rp.y;
    return path_loss_rss(env.pathloss, std::sqrt(dx * dx + dy * dy));
}

FingerprintDataset generate(const EnvironmentModel& env,
                            const std::vector<DeviceProfile>& devices,
                            const TemporalSchedule& schedule,
                            int fingerprints_per_rp, std::uint64_t seed) {
    env.validate();
    if (devices.empty()) fail("need at least one device profile");
    if (fingerprints_per_rp < 1) fail("fingerprints_per_rp must be >= 1");
    int num_aps = static_cast<int>(env.ap_positions.size());
    schedule.validate(num_aps);
    if (schedule.num_cis() < 1) fail("schedule covers no CIs");
    for (const auto& d : devices) {
        if (d.dropout_bias < 0.0 || d.dropout_bias > 1.0) fail("dropout_bias out of [0,1]");
        if (d.per_ap_jitter_sigma_db < 0.0) fail("jitter sigma must be >= 0");
    }

    FingerprintDataset ds;
    ds.building_id = env.building_id;
    ds.ap_universe = env.ap_ids();
    ds.rps = env.reference_points();

    // Mean RSS per (rp, ap) from geometry alone.
    std::vector<std::vector<double>> means(static_cast<std::size_t>(env.num_rps));
    for (int r = 0; r < env.num_rps; ++r) {
        auto& row = means[static_cast<std::size_t>(r)];
        row.resize(static_cast<std::size_t>(num_aps));
        const auto& rp = ds.rps[static_cast<std::size_t>(r)];
        for (int a = 0; a < num_aps; ++a) {
            const auto& ap = env.ap_positions[static_cast<std::size_t>(a)];
            double dx = ap[0] - rp.x;
            double dy = ap[1] - rp.y;
            double d = std::max(std::sqrt(dx * dx + dy * dy), env.pathloss.d0_m);
            row[static_cast<std::size_t>(a)] =
                env.pathloss.p0_dbm - 10.0 * env.pathloss.exponent * std::log10(d / env.pathloss.d0_m);
        }
    }

    // Fixed per-(device, AP) bias: the systematic chipset/firmware signature.
    std::vector<std::vector<double>> device_bias(devices.size());
    for (std::size_t d = 0; d < devices.size(); ++d) {
        device_bias[d].resize(static_cast<std::size_t>(num_aps));
        Rng rng(derive_seed(seed, {hash_tag("device-bias"), hash_tag(devices[d].device_id)}));
        for (int a = 0; a < num_aps; ++a)
            device_bias[d][static_cast<std::size_t>(a)] =
                rng.normal(0.0, devices[d].per_ap_jitter_sigma_db);
    }

    for (std::size_t d = 0; d < devices.size(); ++d) {
        const auto& dev = devices[d];
        for (int ci = 0; ci < schedule.num_cis(); ++ci) {
            // One independent stream per (device, CI) slice.
            Rng rng(derive_seed(seed, {hash_tag("slice"), hash_tag(dev.device_id),
                                       static_cast<std::uint64_t>(ci)}));
            const auto& disabled = schedule.disabled_aps[static_cast<std::size_t>(ci)];
            std::vector<char> is_disabled(static_cast<std::size_t>(num_aps), 0);
            for (int a : disabled) is_disabled[static_cast<std::size_t>(a)] = 1;
            double drift = schedule.drift_db[static_cast<std::size_t>(ci)];

            for (int r = 0; r < env.num_rps; ++r) {
                for (int k = 0; k < fingerprints_per_rp; ++k) {
                    Fingerprint rec;
                    rec.device_id = dev.device_id;
                    rec.ci = ci;
                    rec.rp_id = ds.rps[static_cast<std::size_t>(r)].rp_id;
                    rec.ap_values.resize(static_cast<std::size_t>(num_aps));
                    for (int a = 0; a < num_aps; ++a) {
                        double shadow = rng.normal(0.0, env.pathloss.shadow_sigma_db);
                        if (is_disabled[static_cast<std::size_t>(a)]) {
                            rec.ap_values[static_cast<std::size_t>(a)] = kInvisibleRssDbm;
                            continue;
                        }
                        double v = means[static_cast<std::size_t>(r)][static_cast<std::size_t>(a)] +
                                   shadow + dev.gain_offset_db +
                                   device_bias[d][static_cast<std::size_t>(a)] + drift;
                        if (v < kWeakThresholdDbm && rng.uniform() < dev.dropout_bias) {
                            rec.ap_values[static_cast<std::size_t>(a)] = kInvisibleRssDbm;
                            continue;
                        }
                        rec.ap_values[static_cast<std::size_t>(a)] =
                            std::clamp(v, kInvisibleRssDbm, kMaxRssDbm);
                    }
                    ds.records.push_back(std::move(rec));
                }
            }
        }
    }
    ds.validate();
    return ds;
}

std::vector<DeviceProfile> benchmark_devices(int count, std::uint64_t seed) {
    static const DeviceProfile base[] = {
        {"devA", 0.0, 1.0, 0.05},
        {"devB", -7.0, 1.5, 0.10},
        {"devC", 5.0, 2.0, 0.15},
        {"devD", -12.0, 2.5, 0.20},
    };
    std::vector<DeviceProfile> out;
    for (int i = 0; i < count && i < 4; ++i) out.push_back(base[i]);
    Rng rng(derive_seed(seed, {hash_tag("extra-devices")}));
    for (int i = 4; i < count; ++i) {
        DeviceProfile p;
        p.device_id = "dev" + std::to_string(i);
        p.gain_offset_db = rng.uniform(-15.0, 15.0);
        p.per_ap_jitter_sigma_db = rng.uniform(1.0, 3.0);
        p.dropout_bias = rng.uniform(0.05, 0.25);
        out.push_back(p);
    }
    return out;
}

double benchmark_churn_fraction(int ci) {
    if (ci <= 2) return 0.0;
    if (ci <= 9) return 0.2;
    if (ci <= 15) return 0.4;
    return 0.6;
}

BenchmarkSuite make_benchmark(const BenchmarkShape& shape, std::uint64_t seed) {
    BenchmarkSuite suite;
    const char* names[] = {"bldgA", "bldgB"};
    for (int b = 0; b < 2; ++b) {
        BenchmarkBuilding bb;
        bb.env.building_id = names[b];
        bb.env.num_rps = shape.num_rps;
        bb.env.rp_spacing_m = 1.0;
        bb.env.extent_x_m = static_cast<double>(shape.num_rps) * bb.env.rp_spacing_m;
        bb.env.extent_y_m = 20.0;
        bb.env.seed = derive_seed(seed, {hash_tag("env"), static_cast<std::uint64_t>(b)});
        place_aps(bb.env, shape.num_aps);

        bb.devices = benchmark_devices(shape.num_devices, seed);

        std::vector<double> fractions(static_cast<std::size_t>(shape.num_cis));
        for (int ci = 0; ci < shape.num_cis; ++ci)
            fractions[static_cast<std::size_t>(ci)] = benchmark_churn_fraction(ci);
        bb.schedule = banded_schedule(
            fractions, shape.num_aps, -0.15,
            derive_seed(seed, {hash_tag("sched"), static_cast<std::uint64_t>(b)}));

        bb.data = generate(bb.env, bb.devices, bb.schedule, shape.fingerprints_per_rp,
                           derive_seed(seed, {hash_tag("gen"), static_cast<std::uint64_t>(b)}));
        suite.buildings.push_back(std::move(bb));
    }
    return suite;
}

BenchmarkSuite default_benchmark(std::uint64_t seed) {
    return make_benchmark(BenchmarkShape{}, seed);
}

}  // namespace stellar
