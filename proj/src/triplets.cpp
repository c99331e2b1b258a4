#include "stellar/triplets.hpp"

#include <cmath>
#include <stdexcept>

namespace stellar {

NormalizedFingerprint make_positive(const NormalizedFingerprint& anchor,
                                    double d_fraction, Rng& rng) {
    if (d_fraction < 0.0 || d_fraction > 1.0)
        throw std::invalid_argument("d_fraction must be in [0,1]");
    NormalizedFingerprint out = anchor;
    std::size_t m = out.values.size();
    auto k = static_cast<std::size_t>(std::floor(d_fraction * static_cast<double>(m) + 0.5));
    if (k > m) k = m;
    if (k == 0) return out;
    for (std::size_t i : rng.sample_indices(m, k)) out.values[i] = 0.0;
    return out;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("euclidean: length mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

int select_negative_index(const NormalizedDataset& db,
                          const NormalizedFingerprint& anchor) {
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        const auto& cand = db.records[i];
        if (cand.rp_id == anchor.rp_id) continue;
        double d = euclidean(anchor.values, cand.values);
        if (best < 0 || d < best_dist ||
            (d == best_dist && cand.rp_id < db.records[static_cast<std::size_t>(best)].rp_id)) {
            best = static_cast<int>(i);
            best_dist = d;
        }
    }
    if (best < 0)
        throw std::runtime_error("no negative candidate: every fingerprint is at RP '" +
                                 anchor.rp_id + "'");
    return best;
}

NormalizedFingerprint select_negative(const NormalizedDataset& db,
                                      const NormalizedFingerprint& anchor) {
    return db.records[static_cast<std::size_t>(select_negative_index(db, anchor))];
}

TripletMiner::TripletMiner(const NormalizedDataset& db, MinerConfig cfg)
    : db_(db), cfg_(cfg) {
    if (cfg_.d_fraction < 0.0 || cfg_.d_fraction > 1.0)
        throw std::invalid_argument("d_fraction must be in [0,1]");
    negatives_.reserve(db_.records.size());
    for (const auto& rec : db_.records)
        negatives_.push_back(select_negative_index(db_, rec));
}

std::vector<Triplet> TripletMiner::mine_epoch(int epoch) const {
    std::uint64_t epoch_word =
        cfg_.resample_per_epoch ? static_cast<std::uint64_t>(epoch) : 0ull;
    std::vector<Triplet> out;
    out.reserve(db_.records.size());
    for (std::size_t a = 0; a < db_.records.size(); ++a) {
        Rng rng(derive_seed(cfg_.seed, {hash_tag("positive"), epoch_word,
                                        static_cast<std::uint64_t>(a)}));
        Triplet t;
        t.anchor = db_.records[a];
        t.anchor_rp = t.anchor.rp_id;
        t.negative = db_.records[static_cast<std::size_t>(negatives_[a])];
        if (cfg_.dropout_target == DropoutTarget::kPositive) {
            t.positive = make_positive(t.anchor, cfg_.d_fraction, rng);
        } else {
            t.positive = t.anchor;
            t.negative = make_positive(t.negative, cfg_.d_fraction, rng);
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace stellar
