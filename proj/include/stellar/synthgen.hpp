#ifndef STELLAR_SYNTHGEN_HPP
#define STELLAR_SYNTHGEN_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stellar/dataset.hpp"

namespace stellar {

// Log-distance path loss with log-normal shadowing.
struct PathLossParams {
    double p0_dbm = -35.0;      // mean RSS at reference distance d0
    double d0_m = 1.0;
    double exponent = 3.2;      // > 0
    double shadow_sigma_db = 3.0;
};

// Synthetic RF world: a line of reference points plus scattered APs.
struct EnvironmentModel {
    std::string building_id = "bldg";
    double extent_x_m = 16.0;
    double extent_y_m = 20.0;
    int num_rps = 16;
    double rp_spacing_m = 1.0;
    std::vector<std::array<double, 2>> ap_positions;
    PathLossParams pathloss;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<ReferencePoint> reference_points() const;  // along y = extent_y/2
    std::vector<std::string> ap_ids() const;               // MAC-style names
};

// Places num_aps APs uniformly in the extent using the env seed.
void place_aps(EnvironmentModel& env, int num_aps);

// Per-device systematic distortion: additive gain, a fixed per-AP bias
// drawn once per (device, AP), and a chance that weak APs read as absent.
struct DeviceProfile {
    std::string device_id;
    double gain_offset_db = 0.0;
    double per_ap_jitter_sigma_db = 0.0;
    double dropout_bias = 0.0;  // in [0,1]
};

// Per-CI AP outages plus a slow global drift.
struct TemporalSchedule {
    std::vector<std::vector<int>> disabled_aps;  // per CI, sorted AP indices
    std::vector<double> drift_db;                // per CI

    int num_cis() const { return static_cast<int>(disabled_aps.size()); }
    void validate(int num_aps) const;
};

// Disables floor(fraction * num_aps) APs per CI. Sets grow along a single
// seeded permutation, so outages accumulate in bands over time.
TemporalSchedule banded_schedule(const std::vector<double>& fraction_per_ci,
                                 int num_aps, double drift_per_ci_db,
                                 std::uint64_t seed);

double path_loss_rss(const PathLossParams& pl, double distance_m);  // clamped to [-100,0]
double mean_rss(const EnvironmentModel& env, int ap_index, int rp_index);

// One building worth of fingerprints covering every (device, CI, RP).
// Each reading = mean_rss + shadowing + device gain + per-AP device bias
// + CI drift; disabled APs read -100; readings below -90 dBm flip to -100
// with the device's dropout_bias. Fully determined by the seed.
FingerprintDataset generate(const EnvironmentModel& env,
                            const std::vector<DeviceProfile>& devices,
                            const TemporalSchedule& schedule,
                            int fingerprints_per_rp, std::uint64_t seed);

struct BenchmarkShape {
    int num_rps = 16;
    int num_aps = 40;
    int num_devices = 4;
    int num_cis = 17;
    int fingerprints_per_rp = 6;
};

struct BenchmarkBuilding {
    EnvironmentModel env;
    std::vector<DeviceProfile> devices;
    TemporalSchedule schedule;
    FingerprintDataset data;
};

struct BenchmarkSuite {
    std::vector<BenchmarkBuilding> buildings;
};

// Default device roster used by the benchmark (first entry trains).
std::vector<DeviceProfile> benchmark_devices(int count, std::uint64_t seed);

// Outage fraction for a CI: 0% through CI 2, 20% for CI 3-9, 40% for
// CI 10-15, 60% from CI 16 on.
double benchmark_churn_fraction(int ci);

BenchmarkSuite make_benchmark(const BenchmarkShape& shape, std::uint64_t seed);

// Two-building suite with the default shape (16 RPs, 40 APs, 4 devices,
// 17 CIs, 6 fingerprints per RP).
BenchmarkSuite default_benchmark(std::uint64_t seed);

}  // namespace stellar

#endif  // STELLAR_SYNTHGEN_HPP
