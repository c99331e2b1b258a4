#ifndef STELLAR_DATASET_HPP
#define STELLAR_DATASET_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace stellar {

// RSS conventions: dBm in [-100, 0], -100 marks an invisible AP.
inline constexpr double kInvisibleRssDbm = -100.0;
inline constexpr double kMaxRssDbm = 0.0;

// One RSS reading per AP at one reference point, one device, one
// collection instance. Values align positionally to the owning dataset's
// AP universe.
struct Fingerprint {
    std::vector<double> ap_values;  // dBm
    std::string rp_id;
    std::string device_id;
    int ci = 0;  // collection instance, non-negative
};

// Same record after the [-100,0] -> [0,1] affine map. 0 = invisible or
// weakest AP, 1 = strongest.
struct NormalizedFingerprint {
    std::vector<double> values;
    std::string rp_id;
    std::string device_id;
    int ci = 0;
};

struct ReferencePoint {
    std::string rp_id;
    double x = 0.0;  // meters
    double y = 0.0;
};

// Indexed fingerprint collection for one building. Immutable by
// convention after construction; safe to share across readers.
struct FingerprintDataset {
    std::string building_id;
    std::vector<std::string> ap_universe;  // ordered, no duplicates
    std::vector<ReferencePoint> rps;
    std::vector<Fingerprint> records;

    int rp_index(std::string_view rp_id) const;  // -1 when unknown
    const ReferencePoint& rp(std::string_view rp_id) const;
    std::vector<std::string> device_ids() const;  // sorted unique
    std::vector<int> cis() const;                 // sorted unique
    FingerprintDataset slice(std::string_view device_id, int ci) const;
    void validate() const;
};

struct NormalizedDataset {
    std::string building_id;
    std::vector<std::string> ap_universe;
    std::vector<ReferencePoint> rps;
    std::vector<NormalizedFingerprint> records;

    int rp_index(std::string_view rp_id) const;
};

struct SplitSpec {
    int train_per_rp = 5;
    int test_per_rp = 1;
    std::uint64_t seed = 0;
};

struct SplitResult {
    FingerprintDataset train;
    FingerprintDataset test;
};

// Affine map between dBm and [0,1]; out-of-range inputs are clamped.
double normalize_rss(double dbm);
double denormalize_rss(double value);

// Throws on non-finite values, naming the offending AP index.
NormalizedFingerprint normalize(const Fingerprint& f);
NormalizedDataset normalize(const FingerprintDataset& ds);

struct AlignResult {
    Fingerprint fingerprint;
    int dropped_aps = 0;  // APs present in the scan but not in the universe
};

// Orders a raw AP->dBm scan by the universe. Missing APs read -100,
// unknown APs are dropped and counted. Total: never throws.
AlignResult align(const std::map<std::string, double>& scan,
                  const std::vector<std::string>& universe);

// Deterministic per-RP split: draws test then train fingerprints without
// replacement from a counter-based stream, so partitions are identical on
// every platform. Throws when an RP has fewer than train+test records.
SplitResult split(const FingerprintDataset& ds, const SplitSpec& spec);

// Draws per_rp records per RP uniformly without replacement (used to pick
// online-phase queries from evaluation cells).
FingerprintDataset sample_per_rp(const FingerprintDataset& ds, int per_rp,
                                 std::uint64_t seed);

// CSV format (one file per building):
//   header  device,ci,rp_id,x,y,<ap_1>,...,<ap_M>
//   rows    one fingerprint per line, RSS in dBm, invisible AP = -100
// UTF-8, LF line endings, '.' decimal separator, no quoting. RP lists
// round-trip in first-appearance order.
FingerprintDataset load_csv(const std::string& path);
void save_csv(const FingerprintDataset& ds, const std::string& path);
std::string to_csv(const FingerprintDataset& ds);
FingerprintDataset parse_csv(std::string_view text, std::string building_id);

}  // namespace stellar

#endif  // STELLAR_DATASET_HPP
