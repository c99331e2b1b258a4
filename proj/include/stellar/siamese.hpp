#ifndef STELLAR_SIAMESE_HPP
#define STELLAR_SIAMESE_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stellar/dataset.hpp"
#include "stellar/jsonutil.hpp"
#include "stellar/rng.hpp"
#include "stellar/triplets.hpp"

namespace stellar {

using Embedding = std::vector<double>;  // unit L2 norm

// Fingerprint augmentation stack applied to the anchor branch during
// training: AP dropout with Gaussian infill, random brightness, random
// contrast, additive Gaussian noise. Inference is always clean.
struct FaStConfig {
    double ap_dropout_p = 0.1;
    double contrast_delta = 0.1;
    double brightness_delta = 0.1;
    double gaussian_sigma = 0.12;
    double infill_sigma = 0.12;

    void validate() const;
};

enum class LossMode { kHinge, kRawPaper };

struct ModelConfig {
    int num_heads = 7;
    int head_size = 50;  // d_k
    std::vector<int> dense_widths = {128, 64};
    int embedding_dim = 64;
    double learning_rate = 1e-4;
    int epochs = 300;
    int batch_size = 32;
    double margin = 0.2;
    LossMode loss_mode = LossMode::kHinge;
    FaStConfig fast;
    std::uint64_t seed = 0;
    // adaptive-moment optimizer constants
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // init scale multiplier for the query/key projections
    double attention_init_gain = 6.0;

    void validate() const;
};

Json to_json(const FaStConfig& cfg);
Json to_json(const ModelConfig& cfg);
FaStConfig fast_config_from_json(const Json& j);
ModelConfig model_config_from_json(const Json& j);

// FaSt building blocks, exposed so the exact arithmetic is testable with
// pinned draws.
void apply_brightness(std::vector<double>& values, double shift);
void apply_contrast(std::vector<double>& values, double scale);  // around the mean

std::vector<double> fast_augment(std::span<const double> x, const FaStConfig& cfg, Rng& rng);

// Scaled dot-product attention: weights = softmax(q K^T / sqrt(d_k)),
// output = weights V. Throws on shape mismatch.
struct AttentionResult {
    Eigen::RowVectorXd weights;  // 1 x N, non-negative, sums to 1
    Eigen::RowVectorXd output;   // 1 x V.cols()
};
AttentionResult attention(const Eigen::RowVectorXd& q, const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values, int d_k);

struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;  // into the flat parameter buffer, column-major
};

// Per-head context projections, rebuilt whenever parameters change.
struct ContextProjection {
    std::vector<Eigen::MatrixXd> keys;    // per head, N x d_k
    std::vector<Eigen::MatrixXd> values;  // per head, N x d_k
};

// Shared-weight multi-head attention encoder. The context is fixed at
// construction: K holds every training fingerprint, V their one-hot RP
// labels. Immutable (and safe to share) once training finishes.
class SiameseModel {
public:
    SiameseModel() = default;  // empty; usable only after init/load

    static SiameseModel init(const NormalizedDataset& db, const ModelConfig& cfg);

    // Forward pass through heads, output projection, dense stack and the
    // L2-normalized embedding layer. Validates vector length only.
    Embedding multi_head(std::span<const double> q) const;

    // Inference entry point: additionally checks the input is normalized.
    Embedding encode(std::span<const double> q) const;

    const ModelConfig& config() const { return cfg_; }
    int num_aps() const { return num_aps_; }
    int num_context() const { return num_context_; }
    int num_classes() const { return num_classes_; }
    const std::vector<std::string>& ap_universe() const { return ap_universe_; }
    const std::vector<std::string>& rp_ids() const { return rp_ids_; }
    const Eigen::MatrixXd& context_keys() const { return context_keys_; }
    const std::vector<int>& context_labels() const { return context_labels_; }
    const std::vector<TensorSpec>& layout() const { return layout_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }

    Eigen::Map<const Eigen::MatrixXd> tensor(std::string_view name) const;
    ContextProjection project_context() const;

    std::string params_hash() const;  // FNV-1a over raw parameter bytes

    Json to_json() const;
    static SiameseModel from_json(const Json& j);
    void save(const std::string& path) const;
    static SiameseModel load(const std::string& path);

private:
    ModelConfig cfg_;
    int num_aps_ = 0;      // M
    int num_context_ = 0;  // N
    int num_classes_ = 0;  // R
    Eigen::MatrixXd context_keys_;    // N x M
    std::vector<int> context_labels_; // class index per context row
    std::vector<std::string> rp_ids_;
    std::vector<std::string> ap_universe_;
    std::vector<TensorSpec> layout_;
    std::vector<double> params_;

    friend std::vector<TensorSpec> build_layout(const ModelConfig&, int, int, std::size_t&);
};

// Triplet loss over a batch of embeddings. Hinge mode:
// sum_i max(0, ||A-P||^2 - ||A-N||^2 + margin). Raw mode drops the hinge
// and margin (unbounded below; kept for study).
struct EmbeddingTriple {
    Embedding anchor;
    Embedding positive;
    Embedding negative;
};
double triplet_loss(const std::vector<EmbeddingTriple>& batch, double margin, LossMode mode);

// Loss of a triplet batch through the model (three shared-weight forward
// passes per triplet). No augmentation; used by the trainer and by the
// finite-difference oracle.
double triplet_batch_loss(const SiameseModel& model, const std::vector<Triplet>& batch);

// Same loss plus the analytic gradient w.r.t. every parameter.
double triplet_batch_gradient(const SiameseModel& model, const std::vector<Triplet>& batch,
                              std::vector<double>& grad);

struct TrainResult {
    SiameseModel model;
    std::vector<double> epoch_loss;  // mean triplet loss per epoch
};

// Mini-batch adaptive-moment descent over mined triplets; FaSt is applied
// to the anchor branch input each step. Deterministic given the seeds.
TrainResult train(const NormalizedDataset& db, const MinerConfig& miner_cfg,
                  const ModelConfig& model_cfg);

}  // namespace stellar

#endif  // STELLAR_SIAMESE_HPP
