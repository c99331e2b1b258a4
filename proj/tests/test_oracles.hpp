// Independent reference implementations used to check the library. These
// deliberately avoid the library's code paths: scalar loops instead of
// Eigen, full sorts instead of partial selection, recursion instead of the
// flat traversal.
#ifndef STELLAR_TEST_ORACLES_HPP
#define STELLAR_TEST_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stellar/dataset.hpp"
#include "stellar/gbt.hpp"
#include "stellar/siamese.hpp"
#include "stellar/triplets.hpp"

namespace oracle {

// --- scalar euclidean -------------------------------------------------------

inline double euclidean_loop(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(sum);
}

// --- brute-force negative selection -----------------------------------------

inline int brute_force_negative(const stellar::NormalizedDataset& db,
                                const stellar::NormalizedFingerprint& anchor) {
    int best = -1;
    double best_dist = 0.0;
    std::string best_rp;
    for (std::size_t i = 0; i < db.records.size(); ++i) {
        const auto& cand = db.records[i];
        if (cand.rp_id == anchor.rp_id) continue;
        double d = euclidean_loop(anchor.values, cand.values);
        if (best < 0 || d < best_dist || (d == best_dist && cand.rp_id < best_rp)) {
            best = static_cast<int>(i);
            best_dist = d;
            best_rp = cand.rp_id;
        }
    }
    return best;
}

// --- straight-line encoder forward ------------------------------------------

inline double param_at(const std::vector<double>& params, const stellar::TensorSpec& t, int r,
                       int c) {
    return params[t.offset + static_cast<std::size_t>(c) * static_cast<std::size_t>(t.rows) +
                  static_cast<std::size_t>(r)];
}

// Scalar re-implementation of the full forward pass (heads, output
// projection, dense stack, normalized embedding).
inline std::vector<double> reference_forward(const stellar::SiameseModel& m,
                                             std::span<const double> q) {
    const auto& cfg = m.config();
    const auto& layout = m.layout();
    const auto& params = m.params();
    const auto& keys = m.context_keys();
    const auto& labels = m.context_labels();
    int M = m.num_aps();
    int N = m.num_context();
    int dk = cfg.head_size;

    auto find = [&](const std::string& name) -> const stellar::TensorSpec& {
        for (const auto& t : layout)
            if (t.name == name) return t;
        throw std::runtime_error("tensor not found: " + name);
    };

    std::vector<double> concat;
    for (int h = 0; h < cfg.num_heads; ++h) {
        std::string p = "head" + std::to_string(h);
        const auto& wq = find(p + ".wq");
        const auto& wk = find(p + ".wk");
        const auto& wv = find(p + ".wv");

        std::vector<double> qi(static_cast<std::size_t>(dk), 0.0);
        for (int j = 0; j < dk; ++j)
            for (int a = 0; a < M; ++a) qi[static_cast<std::size_t>(j)] += q[static_cast<std::size_t>(a)] * param_at(params, wq, a, j);

        std::vector<std::vector<double>> kp(static_cast<std::size_t>(N)),
            vp(static_cast<std::size_t>(N));
        for (int n = 0; n < N; ++n) {
            kp[static_cast<std::size_t>(n)].assign(static_cast<std::size_t>(dk), 0.0);
            vp[static_cast<std::size_t>(n)].assign(static_cast<std::size_t>(dk), 0.0);
            for (int j = 0; j < dk; ++j) {
                double acc = 0.0;
                for (int a = 0; a < M; ++a) acc += keys(n, a) * param_at(params, wk, a, j);
                kp[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)] = acc;
                vp[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)] =
                    param_at(params, wv, labels[static_cast<std::size_t>(n)], j);
            }
        }

        std::vector<double> scores(static_cast<std::size_t>(N), 0.0);
        for (int n = 0; n < N; ++n) {
            double acc = 0.0;
            for (int j = 0; j < dk; ++j)
                acc += qi[static_cast<std::size_t>(j)] *
                       kp[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
            scores[static_cast<std::size_t>(n)] = acc / std::sqrt(static_cast<double>(dk));
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double sum = 0.0;
        for (double& s : scores) {
            s = std::exp(s - mx);
            sum += s;
        }
        for (double& s : scores) s /= sum;

        for (int j = 0; j < dk; ++j) {
            double acc = 0.0;
            for (int n = 0; n < N; ++n)
                acc += scores[static_cast<std::size_t>(n)] *
                       vp[static_cast<std::size_t>(n)][static_cast<std::size_t>(j)];
            concat.push_back(acc);
        }
    }

    const auto& wo = find("wo");
    std::vector<double> x(static_cast<std::size_t>(wo.cols), 0.0);
    for (int c = 0; c < wo.cols; ++c)
        for (int r = 0; r < wo.rows; ++r)
            x[static_cast<std::size_t>(c)] += concat[static_cast<std::size_t>(r)] * param_at(params, wo, r, c);

    for (std::size_t layer = 0; layer < cfg.dense_widths.size(); ++layer) {
        const auto& w = find("dense" + std::to_string(layer) + ".w");
        const auto& b = find("dense" + std::to_string(layer) + ".b");
        std::vector<double> next(static_cast<std::size_t>(w.cols), 0.0);
        for (int c = 0; c < w.cols; ++c) {
            double acc = param_at(params, b, 0, c);
            for (int r = 0; r < w.rows; ++r) acc += x[static_cast<std::size_t>(r)] * param_at(params, w, r, c);
            next[static_cast<std::size_t>(c)] = acc > 0.0 ? acc : 0.0;
        }
        x = std::move(next);
    }

    const auto& ew = find("embed.w");
    const auto& eb = find("embed.b");
    std::vector<double> e(static_cast<std::size_t>(ew.cols), 0.0);
    for (int c = 0; c < ew.cols; ++c) {
        double acc = param_at(params, eb, 0, c);
        for (int r = 0; r < ew.rows; ++r) acc += x[static_cast<std::size_t>(r)] * param_at(params, ew, r, c);
        e[static_cast<std::size_t>(c)] = acc;
    }
    double norm = 0.0;
    for (double v : e) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : e) v /= norm;
    return e;
}

// --- central finite differences ---------------------------------------------

inline double fd_gradient(stellar::SiameseModel& m, const std::vector<stellar::Triplet>& batch,
                          std::size_t coord, double step = 1e-5) {
    auto& params = m.params();
    double saved = params[coord];
    params[coord] = saved + step;
    double up = stellar::triplet_batch_loss(m, batch);
    params[coord] = saved - step;
    double down = stellar::triplet_batch_loss(m, batch);
    params[coord] = saved;
    return (up - down) / (2.0 * step);
}

// --- exhaustive best-stump search -------------------------------------------

struct StumpChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

// Enumerates every (feature, midpoint) pair and evaluates the second-order
// gain by partitioning the samples from scratch.
inline StumpChoice exhaustive_best_stump(const std::vector<std::vector<double>>& xs,
                                         const std::vector<double>& grad,
                                         const std::vector<double>& hess, double lambda,
                                         double min_child_weight) {
    StumpChoice best;
    std::size_t dim = xs.front().size();
    auto obj = [&](double g, double h) { return g * g / (h + lambda); };
    double g_all = 0.0, h_all = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        g_all += grad[i];
        h_all += hess[i];
    }
    for (std::size_t f = 0; f < dim; ++f) {
        std::vector<double> vals;
        for (const auto& x : xs) vals.push_back(x[f]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            double thr = (vals[i] + vals[i + 1]) / 2.0;
            double gl = 0.0, hl = 0.0;
            for (std::size_t s = 0; s < xs.size(); ++s) {
                if (xs[s][f] < thr) {
                    gl += grad[s];
                    hl += hess[s];
                }
            }
            double gr = g_all - gl, hr = h_all - hl;
            if (hl < min_child_weight || hr < min_child_weight) continue;
            double gain = 0.5 * (obj(gl, hl) + obj(gr, hr) - obj(g_all, h_all));
            if (gain > best.gain + 1e-12) best = {static_cast<int>(f), thr, gain};
        }
    }
    return best;
}

// --- recursive tree walk + softmax argmax ------------------------------------

inline double walk_tree(const stellar::RegressionTree& tree, std::span<const double> x,
                        int node = 0) {
    const auto& n = tree.nodes[static_cast<std::size_t>(node)];
    if (n.feature < 0) return n.leaf_value;
    if (x[static_cast<std::size_t>(n.feature)] < n.threshold) return walk_tree(tree, x, n.left);
    return walk_tree(tree, x, n.right);
}

inline int naive_gbt_predict(const stellar::BoostedEnsemble& model, std::span<const double> x) {
    std::vector<double> scores = model.bias();
    for (const auto& round : model.rounds())
        for (std::size_t c = 0; c < scores.size(); ++c) scores[c] += walk_tree(round[c], x);
    int arg = 0;
    for (std::size_t c = 1; c < scores.size(); ++c)
        if (scores[c] > scores[static_cast<std::size_t>(arg)]) arg = static_cast<int>(c);
    return arg;
}

// --- full-sort KNN -----------------------------------------------------------

inline std::string knn_scan(const std::vector<std::vector<double>>& vectors,
                            const std::vector<std::string>& labels, int k,
                            std::span<const double> x) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < vectors.size(); ++i)
        order.push_back({euclidean_loop(x, vectors[i]), i});
    std::sort(order.begin(), order.end());
    struct Tally {
        int count = 0;
        double sum = 0.0;
    };
    std::map<std::string, Tally> votes;
    for (int i = 0; i < k; ++i) {
        auto& t = votes[labels[order[static_cast<std::size_t>(i)].second]];
        ++t.count;
        t.sum += order[static_cast<std::size_t>(i)].first;
    }
    std::string best;
    int bc = -1;
    double bm = 0.0;
    for (const auto& [label, t] : votes) {
        double mean = t.sum / t.count;
        if (t.count > bc || (t.count == bc && mean < bm)) {
            best = label;
            bc = t.count;
            bm = mean;
        }
    }
    return best;
}

}  // namespace oracle

#endif  // STELLAR_TEST_ORACLES_HPP
