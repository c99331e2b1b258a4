#ifndef STELLAR_EVAL_HPP
#define STELLAR_EVAL_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stellar/dataset.hpp"
#include "stellar/gbt.hpp"
#include "stellar/jsonutil.hpp"
#include "stellar/siamese.hpp"
#include "stellar/synthgen.hpp"
#include "stellar/triplets.hpp"

namespace stellar {

inline constexpr const char* kVersion = "0.1.0";

// Error thrown by the experiment runner, annotated with the pipeline
// stage that failed.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct DatasetSource {
    bool synthetic = true;
    BenchmarkShape shape;                       // synthetic only
    std::optional<std::uint64_t> synth_seed;    // default: derived from run seed
    std::vector<std::string> csv_paths;         // file ingestion
};

struct KnnParams {
    int k = 4;
};

struct ExperimentConfig {
    DatasetSource dataset;
    std::string train_device = "devA";
    int train_ci = 0;
    std::vector<std::string> test_devices;  // empty = every device in the data
    std::vector<int> test_cis;              // empty = every CI in the data
    SplitSpec split;                        // seed derived from run seed
    MinerConfig miner;
    ModelConfig model;
    GbtParams gbt;
    KnnParams knn;
    std::size_t ltknn_retrain_every = 3;    // 0 = never refit
    std::vector<double> sweep_d_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::vector<int> sweep_samples_grid = {1, 2, 3, 4, 5};
    std::string out_dir = "out";
    std::uint64_t seed = 42;

    static ExperimentConfig from_json(const Json& j);  // unknown keys rejected
    Json to_json() const;
    std::string config_hash() const;

    // Propagates the run seed into the sub-configs (split, miner, model).
    void derive_sub_seeds();
};

// Euclidean distance in meters between two reference points; throws on an
// unknown rp_id.
double localization_error(const std::string& predicted_rp, const std::string& true_rp,
                          const std::vector<ReferencePoint>& rps);

struct CellResult {
    std::string test_device;
    int ci = 0;
    double mean_error_m = 0.0;
    int queries = 0;
    bool training_cell = false;
};

struct PerCiStat {
    int ci = 0;
    double mean_error_m = 0.0;         // over devices
    double best_device_error_m = 0.0;
    double worst_device_error_m = 0.0;
};

struct EvalReport {
    std::string building_id;
    std::string train_device;
    int train_ci = 0;
    std::vector<CellResult> cells;  // device-major, CI ascending
    std::vector<PerCiStat> per_ci;
    double overall_mean_error_m = 0.0;
    std::string params_hash_before;
    std::string params_hash_after;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string version;

    Json to_json() const;
};

struct TrainedPipeline {
    SiameseModel model;
    BoostedEnsemble classifier;
    FingerprintDataset train_part;  // raw records used for training
    NormalizedDataset train_norm;
    std::vector<Embedding> train_embeddings;
    std::vector<double> siamese_epoch_loss;
};

// Offline phase: slice the training (device, CI), split per RP, mine
// triplets, train the encoder, fit the boosted classifier on the training
// embeddings.
TrainedPipeline train_pipeline(const FingerprintDataset& building, const ExperimentConfig& cfg);

// Full experiment: train once, then evaluate every requested
// (test device, CI) cell without retraining. The training cell is scored
// on its held-out split.
EvalReport run_pipeline(const FingerprintDataset& building, const ExperimentConfig& cfg);

struct DSweepRow {
    double d_fraction = 0.0;
    double mean_error_m = 0.0;
    double min_cell_error_m = 0.0;
    double max_cell_error_m = 0.0;
};

struct DSweepReport {
    std::vector<DSweepRow> rows;
    std::string building_id;
    std::uint64_t seed = 0;
    std::string config_hash;

    Json to_json() const;
};

// One full pipeline per dropout fraction in the grid.
DSweepReport sweep_d(const FingerprintDataset& building, const ExperimentConfig& cfg,
                     const std::vector<double>& grid);

struct SamplesRow {
    int samples_per_rp = 0;
    int ci = 0;
    double mean_error_m = 0.0;
};

struct SamplesReport {
    std::vector<SamplesRow> rows;              // count-major, CI ascending
    std::vector<int> counts;
    std::vector<double> overall_mean_error_m;  // per count
    std::string building_id;
    std::uint64_t seed = 0;
    std::string config_hash;

    Json to_json() const;
};

// One full pipeline per training-samples-per-RP count in the grid.
SamplesReport sweep_samples(const FingerprintDataset& building, const ExperimentConfig& cfg,
                            const std::vector<int>& grid);

inline constexpr const char* kArmStellar = "stellar";
inline constexpr const char* kArmRawKnn = "raw_knn";
inline constexpr const char* kArmLtKnn = "lt_knn";
inline constexpr const char* kArmEmbedKnn = "embed_knn";

struct CompareRow {
    std::string arm;
    int ci = 0;
    double mean_error_m = 0.0;
};

struct CompareReport {
    std::vector<std::string> arms;
    std::vector<CompareRow> rows;  // arm-major, CI ascending
    EvalReport stellar_report;     // full detail for the encoder+GBT arm
    std::vector<int> ltknn_refit_cis;

    Json to_json() const;
    double arm_mean(const std::string& arm, int min_ci) const;  // mean over CIs >= min_ci
};

// All four arms share the same splits, queries and seeds.
CompareReport compare_baselines(const FingerprintDataset& building, const ExperimentConfig& cfg);

// Writes the tidy plot-data CSVs a report supports into out_dir:
// device_matrix.csv, temporal_curves.csv, d_sweep.csv, samples.csv,
// box_deltas.csv. Deterministic bytes for a given report.
void emit_plots(const Json& report, const std::string& out_dir);

}  // namespace stellar

#endif  // STELLAR_EVAL_HPP
