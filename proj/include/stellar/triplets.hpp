#ifndef STELLAR_TRIPLETS_HPP
#define STELLAR_TRIPLETS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "stellar/dataset.hpp"
#include "stellar/rng.hpp"

namespace stellar {

// Anchor/positive/negative trio mined from normalized training data. The
// positive is the anchor with a fraction of APs dropped to 0; the negative
// is the nearest fingerprint from a different RP.
struct Triplet {
    NormalizedFingerprint anchor;
    NormalizedFingerprint positive;
    NormalizedFingerprint negative;
    std::string anchor_rp;
};

// Which member of the trio receives the D% dropout. Dropping on the
// positive simulates AP loss on a same-location fingerprint; the negative
// variant is kept as a switch for experimentation.
enum class DropoutTarget { kPositive, kNegative };

struct MinerConfig {
    double d_fraction = 0.6;  // D in [0,1]
    std::uint64_t seed = 0;
    bool resample_per_epoch = true;
    DropoutTarget dropout_target = DropoutTarget::kPositive;
};

// Copies the anchor and forces exactly round(d_fraction * M) uniformly
// chosen entries to 0 (round-half-up).
NormalizedFingerprint make_positive(const NormalizedFingerprint& anchor,
                                    double d_fraction, Rng& rng);

// sqrt of the summed squared elementwise differences. Throws on length
// mismatch.
double euclidean(std::span<const double> a, std::span<const double> b);

// Index of the training fingerprint at a different RP closest to the
// anchor; ties break on lowest (rp_id, record index). Throws when no
// eligible candidate exists.
int select_negative_index(const NormalizedDataset& db,
                          const NormalizedFingerprint& anchor);
NormalizedFingerprint select_negative(const NormalizedDataset& db,
                                      const NormalizedFingerprint& anchor);

// Mines one triplet per training fingerprint. Negatives are computed once
// and cached (the distance does not depend on the epoch); positives are
// redrawn per epoch when resample_per_epoch is set.
class TripletMiner {
public:
    TripletMiner(const NormalizedDataset& db, MinerConfig cfg);

    std::vector<Triplet> mine_epoch(int epoch) const;
    const std::vector<int>& negative_indices() const { return negatives_; }

private:
    const NormalizedDataset& db_;
    MinerConfig cfg_;
    std::vector<int> negatives_;  // per anchor index
};

}  // namespace stellar

#endif  // STELLAR_TRIPLETS_HPP
