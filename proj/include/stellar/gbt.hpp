#ifndef STELLAR_GBT_HPP
#define STELLAR_GBT_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stellar/dataset.hpp"
#include "stellar/jsonutil.hpp"

namespace stellar {

struct GbtParams {
    int max_depth = 7;
    int num_rounds = 100;
    double learning_rate = 0.3;     // absorbed into stored leaf values
    double l2_lambda = 1.0;
    double min_child_weight = 1.0;  // minimum hessian sum per child

    void validate() const;
};

Json to_json(const GbtParams& p);
GbtParams gbt_params_from_json(const Json& j);

// Axis-aligned regression tree stored as a flat node array. Samples go
// left when x[feature] < threshold.
struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double leaf_value = 0.0;
};

struct RegressionTree {
    std::vector<TreeNode> nodes;  // node 0 is the root

    double value_at(std::span<const double> x) const;
    int depth() const;
};

// Gradient-boosted multiclass classifier: per-class score is the class
// bias (log prior) plus the sum of that class's tree outputs; class
// probabilities come from a softmax over the scores.
class BoostedEnsemble {
public:
    const std::vector<double>& bias() const { return bias_; }
    const std::vector<std::vector<RegressionTree>>& rounds() const { return rounds_; }
    const std::vector<std::string>& class_ids() const { return class_ids_; }
    int num_features() const { return num_features_; }
    const GbtParams& params() const { return params_; }
    const std::vector<double>& train_loss() const { return train_loss_; }  // per round, [0] = bias only

    std::vector<double> predict_scores(std::span<const double> x) const;
    std::vector<double> predict_proba(std::span<const double> x) const;
    int predict_class(std::span<const double> x) const;  // argmax, ties to lowest index
    const std::string& predict_id(std::span<const double> x) const;

    Json to_json() const;
    static BoostedEnsemble from_json(const Json& j);
    void save(const std::string& path) const;
    static BoostedEnsemble load(const std::string& path);

    // Test hook: assemble an ensemble directly from parts.
    static BoostedEnsemble assemble(std::vector<double> bias,
                                    std::vector<std::vector<RegressionTree>> rounds,
                                    std::vector<std::string> class_ids, int num_features,
                                    GbtParams params);

private:
    friend BoostedEnsemble gbt_fit(const std::vector<std::vector<double>>&,
                                   const std::vector<int>&, const std::vector<std::string>&,
                                   const GbtParams&);
    std::vector<double> bias_;
    std::vector<std::vector<RegressionTree>> rounds_;
    std::vector<std::string> class_ids_;
    int num_features_ = 0;
    GbtParams params_;
    std::vector<double> train_loss_;
};

// Softmax cross-entropy boosting: per round, one regression tree per class
// is fit to the first/second-order gradients with exact greedy splits over
// sorted feature values. Throws on single-class input or non-finite
// features.
BoostedEnsemble gbt_fit(const std::vector<std::vector<double>>& features,
                        const std::vector<int>& labels,
                        const std::vector<std::string>& class_ids, const GbtParams& params);

// Brute-force k-nearest-neighbour classifier. Majority label of the k
// nearest by euclidean distance; label ties break on smaller mean
// distance, then lowest label.
class KnnModel {
public:
    KnnModel(std::vector<std::vector<double>> vectors, std::vector<std::string> labels, int k);

    const std::string& predict(std::span<const double> x) const;
    int k() const { return k_; }
    std::size_t size() const { return vectors_.size(); }

private:
    std::vector<std::vector<double>> vectors_;
    std::vector<std::string> labels_;
    int k_;
};

// One collection instance of the temporal stream fed to the LT-KNN
// baseline: the slice a refit may train on plus the queries scored at
// that CI.
struct CiSlice {
    int ci = 0;
    FingerprintDataset train;
    FingerprintDataset test;
};

struct LtknnResult {
    std::vector<double> per_ci_error_m;
    std::vector<int> refit_cis;  // CIs at which the model was refit
};

// Replays the stream in CI order, refitting the KNN on the current CI's
// training slice whenever ci % retrain_every == 0 (ci > 0).
// retrain_every == 0 means never refit (static KNN). The CI sequence must
// be contiguous from its first element.
LtknnResult ltknn_evaluate(const std::vector<CiSlice>& stream, int k,
                           std::size_t retrain_every);

}  // namespace stellar

#endif  // STELLAR_GBT_HPP
