#include "stellar/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

#include "stellar/triplets.hpp"

namespace stellar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

constexpr double kMinGain = 1e-12;
constexpr double kMinHessian = 1e-16;
constexpr double kProbFloor = 1e-15;

}  // namespace

void GbtParams::validate() const {
    if (max_depth < 1) fail("max_depth must be >= 1");
    if (num_rounds < 0) fail("num_rounds must be >= 0");
    if (learning_rate <= 0.0) fail("learning_rate must be > 0");
    if (l2_lambda < 0.0) fail("l2_lambda must be >= 0");
    if (min_child_weight < 0.0) fail("min_child_weight must be >= 0");
}

Json to_json(const GbtParams& p) {
    return Json{{"max_depth", p.max_depth},
                {"num_rounds", p.num_rounds},
                {"learning_rate", p.learning_rate},
                {"l2_lambda", p.l2_lambda},
                {"min_child_weight", p.min_child_weight}};
}

GbtParams gbt_params_from_json(const Json& j) {
    require_keys(j, {"max_depth", "num_rounds", "learning_rate", "l2_lambda", "min_child_weight"},
                 "gbt");
    GbtParams p;
    p.max_depth = json_get(j, "max_depth", p.max_depth);
    p.num_rounds = json_get(j, "num_rounds", p.num_rounds);
    p.learning_rate = json_get(j, "learning_rate", p.learning_rate);
    p.l2_lambda = json_get(j, "l2_lambda", p.l2_lambda);
    p.min_child_weight = json_get(j, "min_child_weight", p.min_child_weight);
    p.validate();
    return p;
}

double RegressionTree::value_at(std::span<const double> x) const {
    int node = 0;
    while (true) {
        const TreeNode& n = nodes[static_cast<std::size_t>(node)];
        if (n.feature < 0) return n.leaf_value;
        node = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
    }
}

int RegressionTree::depth() const {
    // iterative depth over the flat representation
    std::vector<int> depth(nodes.size(), 0);
    int max_d = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const TreeNode& n = nodes[i];
        if (n.feature < 0) continue;
        depth[static_cast<std::size_t>(n.left)] = depth[i] + 1;
        depth[static_cast<std::size_t>(n.right)] = depth[i] + 1;
        max_d = std::max(max_d, depth[i] + 1);
    }
    return max_d;
}

namespace {

void softmax_row(std::vector<double>& scores) {
    double mx = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - mx);
        sum += s;
    }
    for (double& s : scores) s /= sum;
}

struct SplitChoice {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
};

double leaf_objective(double g, double h, double lambda) { return g * g / (h + lambda); }

// Exact greedy split search over the node's samples, tie-broken to the
// lowest feature index and then the lowest threshold.
SplitChoice best_split(const std::vector<std::vector<double>>& features,
                       const std::vector<double>& grad, const std::vector<double>& hess,
                       const std::vector<int>& samples, const GbtParams& params) {
    double g_total = 0.0, h_total = 0.0;
    for (int i : samples) {
        g_total += grad[static_cast<std::size_t>(i)];
        h_total += hess[static_cast<std::size_t>(i)];
    }
    double parent_obj = leaf_objective(g_total, h_total, params.l2_lambda);

    SplitChoice best;
    std::size_t n_features = features.front().size();
    std::vector<int> order(samples);
    for (std::size_t f = 0; f < n_features; ++f) {
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            double va = features[static_cast<std::size_t>(a)][f];
            double vb = features[static_cast<std::size_t>(b)][f];
            if (va != vb) return va < vb;
            return a < b;
        });
        double g_left = 0.0, h_left = 0.0;
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            int s = order[i];
            g_left += grad[static_cast<std::size_t>(s)];
            h_left += hess[static_cast<std::size_t>(s)];
            double v = features[static_cast<std::size_t>(s)][f];
            double v_next = features[static_cast<std::size_t>(order[i + 1])][f];
            if (v == v_next) continue;
            double h_right = h_total - h_left;
            if (h_left < params.min_child_weight || h_right < params.min_child_weight) continue;
            double g_right = g_total - g_left;
            double gain = 0.5 * (leaf_objective(g_left, h_left, params.l2_lambda) +
                                 leaf_objective(g_right, h_right, params.l2_lambda) - parent_obj);
            double threshold = (v + v_next) / 2.0;
            bool better = gain > best.gain + kMinGain;
            bool tie = std::abs(gain - best.gain) <= kMinGain && best.feature >= 0;
            if (better || (tie && (static_cast<int>(f) < best.feature ||
                                   (static_cast<int>(f) == best.feature &&
                                    threshold < best.threshold)))) {
                best = {gain, static_cast<int>(f), threshold};
            }
        }
    }
    return best;
}

RegressionTree build_tree(const std::vector<std::vector<double>>& features,
                          const std::vector<double>& grad, const std::vector<double>& hess,
                          const GbtParams& params) {
    RegressionTree tree;
    struct Work {
        int node;
        std::vector<int> samples;
        int depth;
    };
    std::vector<int> all(features.size());
    std::iota(all.begin(), all.end(), 0);
    tree.nodes.push_back({});
    std::vector<Work> stack;
    stack.push_back({0, std::move(all), 0});

    while (!stack.empty()) {
        Work w = std::move(stack.back());
        stack.pop_back();
        double g = 0.0, h = 0.0;
        for (int i : w.samples) {
            g += grad[static_cast<std::size_t>(i)];
            h += hess[static_cast<std::size_t>(i)];
        }
        double leaf = -params.learning_rate * g / (h + params.l2_lambda);

        SplitChoice split;
        if (w.depth < params.max_depth && w.samples.size() >= 2)
            split = best_split(features, grad, hess, w.samples, params);

        if (split.feature < 0 || split.gain <= kMinGain) {
            tree.nodes[static_cast<std::size_t>(w.node)].leaf_value = leaf;
            continue;
        }

        std::vector<int> left, right;
        for (int i : w.samples) {
            if (features[static_cast<std::size_t>(i)][static_cast<std::size_t>(split.feature)] <
                split.threshold)
                left.push_back(i);
            else
                right.push_back(i);
        }
        int li = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        int ri = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back({});
        TreeNode& node = tree.nodes[static_cast<std::size_t>(w.node)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = li;
        node.right = ri;
        stack.push_back({ri, std::move(right), w.depth + 1});
        stack.push_back({li, std::move(left), w.depth + 1});
    }
    return tree;
}

double mean_log_loss(const std::vector<std::vector<double>>& scores,
                     const std::vector<int>& labels) {
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        std::vector<double> p = scores[i];
        softmax_row(p);
        total -= std::log(std::max(p[static_cast<std::size_t>(labels[i])], kProbFloor));
    }
    return total / static_cast<double>(scores.size());
}

}  // namespace

BoostedEnsemble gbt_fit(const std::vector<std::vector<double>>& features,
                        const std::vector<int>& labels,
                        const std::vector<std::string>& class_ids, const GbtParams& params) {
    params.validate();
    if (features.empty()) fail("gbt_fit: empty training set");
    if (features.size() != labels.size()) fail("gbt_fit: features/labels size mismatch");
    std::size_t dim = features.front().size();
    if (dim == 0) fail("gbt_fit: zero-width features");
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != dim) fail("gbt_fit: ragged feature matrix");
        for (double v : features[i])
            if (!std::isfinite(v)) fail("gbt_fit: non-finite feature in sample " + std::to_string(i));
    }
    int r = static_cast<int>(class_ids.size());
    if (r < 2) fail("gbt_fit: need at least 2 classes");
    std::vector<std::size_t> counts(static_cast<std::size_t>(r), 0);
    for (int y : labels) {
        if (y < 0 || y >= r) fail("gbt_fit: label out of range");
        ++counts[static_cast<std::size_t>(y)];
    }
    std::size_t present = 0;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) fail("gbt_fit: class '" + class_ids[c] + "' has no samples");
        ++present;
    }
    if (present < 2) fail("gbt_fit: single-class input");

    BoostedEnsemble model;
    model.params_ = params;
    model.class_ids_ = class_ids;
    model.num_features_ = static_cast<int>(dim);
    model.bias_.resize(static_cast<std::size_t>(r));
    auto n = static_cast<double>(features.size());
    for (std::size_t c = 0; c < model.bias_.size(); ++c)
        model.bias_[c] = std::log(static_cast<double>(counts[c]) / n);

    std::vector<std::vector<double>> scores(features.size(), model.bias_);
    model.train_loss_.push_back(mean_log_loss(scores, labels));

    std::vector<double> grad(features.size()), hess(features.size());
    for (int round = 0; round < params.num_rounds; ++round) {
        std::vector<RegressionTree> round_trees;
        round_trees.reserve(static_cast<std::size_t>(r));
        // probabilities at the start of the round, shared by all classes
        std::vector<std::vector<double>> probs = scores;
        for (auto& p : probs) softmax_row(p);

        for (int c = 0; c < r; ++c) {
            for (std::size_t i = 0; i < features.size(); ++i) {
                double p = probs[i][static_cast<std::size_t>(c)];
                double y = labels[i] == c ? 1.0 : 0.0;
                grad[i] = p - y;
                // softmax hessian with the conventional factor 2
                hess[i] = std::max(2.0 * p * (1.0 - p), kMinHessian);
            }
            round_trees.push_back(build_tree(features, grad, hess, params));
        }
        for (std::size_t i = 0; i < features.size(); ++i)
            for (int c = 0; c < r; ++c)
                scores[i][static_cast<std::size_t>(c)] +=
                    round_trees[static_cast<std::size_t>(c)].value_at(features[i]);
        model.rounds_.push_back(std::move(round_trees));
        model.train_loss_.push_back(mean_log_loss(scores, labels));
    }
    return model;
}

std::vector<double> BoostedEnsemble::predict_scores(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(num_features_))
        fail("gbt predict: input has " + std::to_string(x.size()) + " features, model expects " +
             std::to_string(num_features_));
    for (double v : x)
        if (!std::isfinite(v)) fail("gbt predict: non-finite feature");
    std::vector<double> scores = bias_;
    for (const auto& round : rounds_)
        for (std::size_t c = 0; c < scores.size(); ++c) scores[c] += round[c].value_at(x);
    return scores;
}

std::vector<double> BoostedEnsemble::predict_proba(std::span<const double> x) const {
    std::vector<double> p = predict_scores(x);
    softmax_row(p);
    return p;
}

int BoostedEnsemble::predict_class(std::span<const double> x) const {
    std::vector<double> scores = predict_scores(x);
    int best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[static_cast<std::size_t>(best)]) best = static_cast<int>(c);
    return best;
}

const std::string& BoostedEnsemble::predict_id(std::span<const double> x) const {
    return class_ids_[static_cast<std::size_t>(predict_class(x))];
}

BoostedEnsemble BoostedEnsemble::assemble(std::vector<double> bias,
                                          std::vector<std::vector<RegressionTree>> rounds,
                                          std::vector<std::string> class_ids, int num_features,
                                          GbtParams params) {
    BoostedEnsemble m;
    m.bias_ = std::move(bias);
    m.rounds_ = std::move(rounds);
    m.class_ids_ = std::move(class_ids);
    m.num_features_ = num_features;
    m.params_ = params;
    return m;
}

Json BoostedEnsemble::to_json() const {
    Json rounds = Json::array();
    for (const auto& round : rounds_) {
        Json trees = Json::array();
        for (const auto& tree : round) {
            Json nodes = Json::array();
            for (const auto& n : tree.nodes)
                nodes.push_back(Json{{"feature", n.feature},
                                     {"threshold", n.threshold},
                                     {"left", n.left},
                                     {"right", n.right},
                                     {"leaf_value", n.leaf_value}});
            trees.push_back(std::move(nodes));
        }
        rounds.push_back(std::move(trees));
    }
    return Json{{"format", "stellar-model"},
                {"version", 1},
                {"kind", "gbt"},
                {"params", stellar::to_json(params_)},
                {"class_ids", class_ids_},
                {"num_features", num_features_},
                {"bias", bias_},
                {"train_loss", train_loss_},
                {"rounds", rounds}};
}

BoostedEnsemble BoostedEnsemble::from_json(const Json& j) {
    if (json_get<std::string>(j, "format", "") != "stellar-model" ||
        json_get<std::string>(j, "kind", "") != "gbt")
        fail("not a gbt model file");
    if (json_get<int>(j, "version", 0) != 1) fail("unsupported model file version");
    BoostedEnsemble m;
    m.params_ = gbt_params_from_json(j.at("params"));
    m.class_ids_ = j.at("class_ids").get<std::vector<std::string>>();
    m.num_features_ = j.at("num_features").get<int>();
    m.bias_ = j.at("bias").get<std::vector<double>>();
    m.train_loss_ = json_get(j, "train_loss", std::vector<double>{});
    if (m.bias_.size() != m.class_ids_.size()) fail("bias/class count mismatch");
    for (const auto& round : j.at("rounds")) {
        std::vector<RegressionTree> trees;
        for (const auto& tj : round) {
            RegressionTree tree;
            for (const auto& nj : tj) {
                TreeNode n;
                n.feature = nj.at("feature").get<int>();
                n.threshold = nj.at("threshold").get<double>();
                n.left = nj.at("left").get<int>();
                n.right = nj.at("right").get<int>();
                n.leaf_value = nj.at("leaf_value").get<double>();
                tree.nodes.push_back(n);
            }
            trees.push_back(std::move(tree));
        }
        if (trees.size() != m.class_ids_.size()) fail("round tree count mismatch");
        m.rounds_.push_back(std::move(trees));
    }
    return m;
}

void BoostedEnsemble::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << to_json().dump(2) << '\n';
    if (!out) fail("write failed for '" + path + "'");
}

BoostedEnsemble BoostedEnsemble::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open '" + path + "'");
    Json j = Json::parse(in);
    return from_json(j);
}

// ---------------------------------------------------------------------------
// KNN baselines

KnnModel::KnnModel(std::vector<std::vector<double>> vectors, std::vector<std::string> labels,
                   int k)
    : vectors_(std::move(vectors)), labels_(std::move(labels)), k_(k) {
    if (vectors_.empty()) fail("knn: empty training set");
    if (vectors_.size() != labels_.size()) fail("knn: vectors/labels size mismatch");
    if (k_ < 1 || static_cast<std::size_t>(k_) > vectors_.size())
        fail("knn: k must be in [1, training size]");
}

const std::string& KnnModel::predict(std::span<const double> x) const {
    struct Hit {
        double dist;
        std::size_t index;
    };
    std::vector<Hit> hits;
    hits.reserve(vectors_.size());
    for (std::size_t i = 0; i < vectors_.size(); ++i)
        hits.push_back({euclidean(x, vectors_[i]), i});
    auto kth = hits.begin() + k_;
    std::partial_sort(hits.begin(), kth, hits.end(), [](const Hit& a, const Hit& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        return a.index < b.index;
    });

    // majority vote; ties by smaller mean distance, then lowest label
    struct Tally {
        int count = 0;
        double dist_sum = 0.0;
    };
    std::map<std::string_view, Tally> votes;
    for (int i = 0; i < k_; ++i) {
        auto& t = votes[labels_[hits[static_cast<std::size_t>(i)].index]];
        ++t.count;
        t.dist_sum += hits[static_cast<std::size_t>(i)].dist;
    }
    std::string_view best;
    int best_count = -1;
    double best_mean = 0.0;
    for (const auto& [label, t] : votes) {
        double mean = t.dist_sum / t.count;
        if (t.count > best_count || (t.count == best_count && mean < best_mean)) {
            best = label;
            best_count = t.count;
            best_mean = mean;
        }
        // equal count and mean: keep the lexicographically lowest label,
        // which is the map iteration order
    }
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == best) return labels_[i];
    fail("knn: internal vote error");
}

LtknnResult ltknn_evaluate(const std::vector<CiSlice>& stream, int k,
                           std::size_t retrain_every) {
    if (stream.empty()) fail("ltknn: empty stream");
    for (std::size_t i = 1; i < stream.size(); ++i) {
        if (stream[i].ci != stream[i - 1].ci + 1)
            fail("ltknn: missing CI " + std::to_string(stream[i - 1].ci + 1));
    }

    auto fit = [&](const FingerprintDataset& train) {
        NormalizedDataset norm = normalize(train);
        std::vector<std::vector<double>> xs;
        std::vector<std::string> ys;
        xs.reserve(norm.records.size());
        for (const auto& r : norm.records) {
            xs.push_back(r.values);
            ys.push_back(r.rp_id);
        }
        return KnnModel(std::move(xs), std::move(ys), k);
    };

    LtknnResult result;
    KnnModel model = fit(stream.front().train);
    for (const auto& slice : stream) {
        if (retrain_every > 0 && slice.ci > 0 &&
            static_cast<std::size_t>(slice.ci) % retrain_every == 0) {
            model = fit(slice.train);
            result.refit_cis.push_back(slice.ci);
        }
        NormalizedDataset queries = normalize(slice.test);
        double err_sum = 0.0;
        std::size_t count = 0;
        for (const auto& q : queries.records) {
            const std::string& pred = model.predict(q.values);
            const ReferencePoint& p = slice.train.rp(pred);
            const ReferencePoint& t = slice.test.rp(q.rp_id);
            double dx = p.x - t.x;
            double dy = p.y - t.y;
            err_sum += std::sqrt(dx * dx + dy * dy);
            ++count;
        }
        if (count == 0) fail("ltknn: CI " + std::to_string(slice.ci) + " has no test queries");
        result.per_ci_error_m.push_back(err_sum / static_cast<double>(count));
    }
    return result;
}

}  // namespace stellar
