#include "stellar/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "stellar/textio.hpp"

namespace stellar {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

Json miner_to_json(const MinerConfig& m) {
    return Json{{"d_fraction", m.d_fraction},
                {"resample_per_epoch", m.resample_per_epoch},
                {"dropout_target",
                 m.dropout_target == DropoutTarget::kPositive ? "positive" : "negative"}};
}

MinerConfig miner_from_json(const Json& j) {
    require_keys(j, {"d_fraction", "resample_per_epoch", "dropout_target"}, "miner");
    MinerConfig m;
    m.d_fraction = json_get(j, "d_fraction", m.d_fraction);
    m.resample_per_epoch = json_get(j, "resample_per_epoch", m.resample_per_epoch);
    std::string target = json_get<std::string>(j, "dropout_target", "positive");
    if (target == "positive") {
        m.dropout_target = DropoutTarget::kPositive;
    } else if (target == "negative") {
        m.dropout_target = DropoutTarget::kNegative;
    } else {
        fail("miner.dropout_target must be 'positive' or 'negative'");
    }
    if (m.d_fraction < 0.0 || m.d_fraction > 1.0) fail("miner.d_fraction must be in [0,1]");
    return m;
}

Json split_to_json(const SplitSpec& s) {
    return Json{{"train_per_rp", s.train_per_rp}, {"test_per_rp", s.test_per_rp}};
}

SplitSpec split_from_json(const Json& j) {
    require_keys(j, {"train_per_rp", "test_per_rp"}, "split");
    SplitSpec s;
    s.train_per_rp = json_get(j, "train_per_rp", s.train_per_rp);
    s.test_per_rp = json_get(j, "test_per_rp", s.test_per_rp);
    if (s.train_per_rp < 1 || s.test_per_rp < 1)
        fail("split counts must be >= 1");
    return s;
}

Json shape_to_json(const BenchmarkShape& s) {
    return Json{{"num_rps", s.num_rps},
                {"num_aps", s.num_aps},
                {"num_devices", s.num_devices},
                {"num_cis", s.num_cis},
                {"fingerprints_per_rp", s.fingerprints_per_rp}};
}

BenchmarkShape shape_from_json(const Json& j) {
    require_keys(j, {"seed", "num_rps", "num_aps", "num_devices", "num_cis",
                     "fingerprints_per_rp"},
                 "dataset.synthetic");
    BenchmarkShape s;
    s.num_rps = json_get(j, "num_rps", s.num_rps);
    s.num_aps = json_get(j, "num_aps", s.num_aps);
    s.num_devices = json_get(j, "num_devices", s.num_devices);
    s.num_cis = json_get(j, "num_cis", s.num_cis);
    s.fingerprints_per_rp = json_get(j, "fingerprints_per_rp", s.fingerprints_per_rp);
    return s;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    require_keys(j, {"dataset", "train_device", "train_ci", "test_devices", "test_cis", "split",
                     "miner", "model", "gbt", "knn", "ltknn_retrain_every", "sweep_d_grid",
                     "sweep_samples_grid", "out_dir", "seed"},
                 "config");
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const Json& d = j.at("dataset");
        require_keys(d, {"synthetic", "csv_paths"}, "dataset");
        bool has_synth = d.contains("synthetic");
        bool has_csv = d.contains("csv_paths");
        if (has_synth && has_csv) fail("dataset: choose either synthetic or csv_paths, not both");
        if (has_csv) {
            cfg.dataset.synthetic = false;
            cfg.dataset.csv_paths = d.at("csv_paths").get<std::vector<std::string>>();
            if (cfg.dataset.csv_paths.empty()) fail("dataset.csv_paths is empty");
        } else if (has_synth) {
            cfg.dataset.synthetic = true;
            cfg.dataset.shape = shape_from_json(d.at("synthetic"));
            if (d.at("synthetic").contains("seed"))
                cfg.dataset.synth_seed = d.at("synthetic").at("seed").get<std::uint64_t>();
        }
    }
    cfg.train_device = json_get<std::string>(j, "train_device", cfg.train_device);
    cfg.train_ci = json_get(j, "train_ci", cfg.train_ci);
    cfg.test_devices = json_get(j, "test_devices", cfg.test_devices);
    cfg.test_cis = json_get(j, "test_cis", cfg.test_cis);
    if (j.contains("split")) cfg.split = split_from_json(j.at("split"));
    if (j.contains("miner")) cfg.miner = miner_from_json(j.at("miner"));
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
    if (j.contains("gbt")) cfg.gbt = gbt_params_from_json(j.at("gbt"));
    if (j.contains("knn")) {
        require_keys(j.at("knn"), {"k"}, "knn");
        cfg.knn.k = json_get(j.at("knn"), "k", cfg.knn.k);
        if (cfg.knn.k < 1) fail("knn.k must be >= 1");
    }
    cfg.ltknn_retrain_every = json_get(j, "ltknn_retrain_every", cfg.ltknn_retrain_every);
    cfg.sweep_d_grid = json_get(j, "sweep_d_grid", cfg.sweep_d_grid);
    cfg.sweep_samples_grid = json_get(j, "sweep_samples_grid", cfg.sweep_samples_grid);
    cfg.out_dir = json_get<std::string>(j, "out_dir", cfg.out_dir);
    cfg.seed = json_get<std::uint64_t>(j, "seed", cfg.seed);
    cfg.derive_sub_seeds();
    return cfg;
}

Json ExperimentConfig::to_json() const {
    Json dataset;
    if (this->dataset.synthetic) {
        Json synth = shape_to_json(this->dataset.shape);
        if (this->dataset.synth_seed) synth["seed"] = *this->dataset.synth_seed;
        dataset = Json{{"synthetic", synth}};
    } else {
        dataset = Json{{"csv_paths", this->dataset.csv_paths}};
    }
    return Json{{"dataset", dataset},
                {"train_device", train_device},
                {"train_ci", train_ci},
                {"test_devices", test_devices},
                {"test_cis", test_cis},
                {"split", split_to_json(split)},
                {"miner", miner_to_json(miner)},
                {"model", stellar::to_json(model)},
                {"gbt", stellar::to_json(gbt)},
                {"knn", Json{{"k", knn.k}}},
                {"ltknn_retrain_every", ltknn_retrain_every},
                {"sweep_d_grid", sweep_d_grid},
                {"sweep_samples_grid", sweep_samples_grid},
                {"out_dir", out_dir},
                {"seed", seed}};
}

std::string ExperimentConfig::config_hash() const {
    std::string dump = to_json().dump();
    return hash_hex(fnv1a(dump.data(), dump.size()));
}

void ExperimentConfig::derive_sub_seeds() {
    split.seed = derive_seed(seed, {hash_tag("split")});
    miner.seed = derive_seed(seed, {hash_tag("miner")});
    model.seed = derive_seed(seed, {hash_tag("model")});
}

double localization_error(const std::string& predicted_rp, const std::string& true_rp,
                          const std::vector<ReferencePoint>& rps) {
    const ReferencePoint* pred = nullptr;
    const ReferencePoint* truth = nullptr;
    for (const auto& rp : rps) {
        if (rp.rp_id == predicted_rp) pred = &rp;
        if (rp.rp_id == true_rp) truth = &rp;
    }
    if (!pred) fail("unknown reference point '" + predicted_rp + "'");
    if (!truth) fail("unknown reference point '" + true_rp + "'");
    double dx = pred->x - truth->x;
    double dy = pred->y - truth->y;
    return std::sqrt(dx * dx + dy * dy);
}

namespace {

bool is_training_cell(const ExperimentConfig& cfg, const std::string& dev, int ci) {
    return dev == cfg.train_device && ci == cfg.train_ci;
}

FingerprintDataset slice_checked(const FingerprintDataset& building, const std::string& dev,
                                 int ci, const char* stage) {
    FingerprintDataset s = building.slice(dev, ci);
    if (s.records.empty())
        throw StageError(stage,
                         "no records for device '" + dev + "' CI " + std::to_string(ci) +
                             " in building '" + building.building_id + "'");
    return s;
}

// Online-phase queries for one cell. The training cell reuses its held-out
// split so train and test stay disjoint; other cells draw test_per_rp
// fingerprints per RP.
FingerprintDataset eval_queries(const FingerprintDataset& building, const ExperimentConfig& cfg,
                                const std::string& dev, int ci) {
    FingerprintDataset s = slice_checked(building, dev, ci, "evaluation");
    if (is_training_cell(cfg, dev, ci)) return split(s, cfg.split).test;
    return sample_per_rp(s, cfg.split.test_per_rp,
                         derive_seed(cfg.seed, {hash_tag("eval"), hash_tag(dev),
                                                static_cast<std::uint64_t>(ci)}));
}

std::vector<std::string> resolve_devices(const FingerprintDataset& building,
                                         const ExperimentConfig& cfg) {
    return cfg.test_devices.empty() ? building.device_ids() : cfg.test_devices;
}

std::vector<int> resolve_cis(const FingerprintDataset& building, const ExperimentConfig& cfg) {
    return cfg.test_cis.empty() ? building.cis() : cfg.test_cis;
}

struct CellAccum {
    double error_sum = 0.0;
    int queries = 0;

    double mean() const { return queries ? error_sum / queries : 0.0; }
};

void finish_report(EvalReport& report, const std::vector<std::string>& devices,
                   const std::vector<int>& cis,
                   const std::map<std::pair<std::string, int>, CellAccum>& cells,
                   const ExperimentConfig& cfg) {
    double total_err = 0.0;
    int total_q = 0;
    for (const auto& dev : devices) {
        for (int ci : cis) {
            const CellAccum& acc = cells.at({dev, ci});
            report.cells.push_back(
                {dev, ci, acc.mean(), acc.queries, is_training_cell(cfg, dev, ci)});
            total_err += acc.error_sum;
            total_q += acc.queries;
        }
    }
    for (int ci : cis) {
        PerCiStat stat;
        stat.ci = ci;
        double sum = 0.0;
        double best = std::numeric_limits<double>::infinity();
        double worst = -std::numeric_limits<double>::infinity();
        for (const auto& dev : devices) {
            double m = cells.at({dev, ci}).mean();
            sum += m;
            best = std::min(best, m);
            worst = std::max(worst, m);
        }
        stat.mean_error_m = sum / static_cast<double>(devices.size());
        stat.best_device_error_m = best;
        stat.worst_device_error_m = worst;
        report.per_ci.push_back(stat);
    }
    report.overall_mean_error_m = total_q ? total_err / total_q : 0.0;
}

}  // namespace

TrainedPipeline train_pipeline(const FingerprintDataset& building, const ExperimentConfig& cfg) {
    TrainedPipeline tp;
    try {
        FingerprintDataset slice =
            slice_checked(building, cfg.train_device, cfg.train_ci, "training-data");
        SplitResult sp = split(slice, cfg.split);
        tp.train_part = std::move(sp.train);
        tp.train_norm = normalize(tp.train_part);
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("training-data", e.what());
    }

    try {
        TrainResult tr = train(tp.train_norm, cfg.miner, cfg.model);
        tp.model = std::move(tr.model);
        tp.siamese_epoch_loss = std::move(tr.epoch_loss);
    } catch (const std::exception& e) {
        throw StageError("siamese-training", e.what());
    }

    try {
        std::vector<std::vector<double>> xs;
        std::vector<int> ys;
        xs.reserve(tp.train_norm.records.size());
        for (const auto& rec : tp.train_norm.records) {
            xs.push_back(tp.model.encode(rec.values));
            ys.push_back(tp.train_norm.rp_index(rec.rp_id));
        }
        std::vector<std::string> class_ids;
        for (const auto& rp : tp.train_norm.rps) class_ids.push_back(rp.rp_id);
        tp.classifier = gbt_fit(xs, ys, class_ids, cfg.gbt);
        tp.train_embeddings = std::move(xs);
    } catch (const std::exception& e) {
        throw StageError("gbt-training", e.what());
    }
    return tp;
}

EvalReport run_pipeline(const FingerprintDataset& building, const ExperimentConfig& cfg) {
    TrainedPipeline tp = train_pipeline(building, cfg);

    EvalReport report;
    report.building_id = building.building_id;
    report.train_device = cfg.train_device;
    report.train_ci = cfg.train_ci;
    report.seed = cfg.seed;
    report.config_hash = cfg.config_hash();
    report.version = kVersion;
    report.params_hash_before = tp.model.params_hash();

    auto devices = resolve_devices(building, cfg);
    auto cis = resolve_cis(building, cfg);
    std::map<std::pair<std::string, int>, CellAccum> cells;
    try {
        for (const auto& dev : devices) {
            for (int ci : cis) {
                FingerprintDataset queries = eval_queries(building, cfg, dev, ci);
                CellAccum acc;
                for (const auto& q : queries.records) {
                    NormalizedFingerprint nq = normalize(q);
                    Embedding emb = tp.model.encode(nq.values);
                    const std::string& pred = tp.classifier.predict_id(emb);
                    acc.error_sum += localization_error(pred, q.rp_id, building.rps);
                    ++acc.queries;
                }
                cells[{dev, ci}] = acc;
            }
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("evaluation", e.what());
    }
    report.params_hash_after = tp.model.params_hash();
    finish_report(report, devices, cis, cells, cfg);
    return report;
}

DSweepReport sweep_d(const FingerprintDataset& building, const ExperimentConfig& cfg,
                     const std::vector<double>& grid) {
    if (grid.empty()) throw StageError("sweep-d", "empty D grid");
    DSweepReport out;
    out.building_id = building.building_id;
    out.seed = cfg.seed;
    out.config_hash = cfg.config_hash();
    for (double d : grid) {
        if (d < 0.0 || d > 1.0) throw StageError("sweep-d", "D fraction out of [0,1]");
        ExperimentConfig c = cfg;
        c.miner.d_fraction = d;
        EvalReport rep = run_pipeline(building, c);
        DSweepRow row;
        row.d_fraction = d;
        row.mean_error_m = rep.overall_mean_error_m;
        row.min_cell_error_m = std::numeric_limits<double>::infinity();
        row.max_cell_error_m = 0.0;
        for (const auto& cell : rep.cells) {
            row.min_cell_error_m = std::min(row.min_cell_error_m, cell.mean_error_m);
            row.max_cell_error_m = std::max(row.max_cell_error_m, cell.mean_error_m);
        }
        out.rows.push_back(row);
    }
    return out;
}

SamplesReport sweep_samples(const FingerprintDataset& building, const ExperimentConfig& cfg,
                            const std::vector<int>& grid) {
    if (grid.empty()) throw StageError("sweep-samples", "empty samples grid");
    SamplesReport out;
    out.building_id = building.building_id;
    out.seed = cfg.seed;
    out.config_hash = cfg.config_hash();
    for (int count : grid) {
        if (count < 1) throw StageError("sweep-samples", "samples per RP must be >= 1");
        ExperimentConfig c = cfg;
        c.split.train_per_rp = count;
        EvalReport rep = run_pipeline(building, c);
        for (const auto& stat : rep.per_ci)
            out.rows.push_back({count, stat.ci, stat.mean_error_m});
        out.counts.push_back(count);
        out.overall_mean_error_m.push_back(rep.overall_mean_error_m);
    }
    return out;
}

CompareReport compare_baselines(const FingerprintDataset& building, const ExperimentConfig& cfg) {
    TrainedPipeline tp = train_pipeline(building, cfg);

    CompareReport out;
    out.arms = {kArmStellar, kArmRawKnn, kArmLtKnn, kArmEmbedKnn};

    // Shared training slice, three baseline fits.
    std::vector<std::vector<double>> raw_x, emb_x;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < tp.train_norm.records.size(); ++i) {
        raw_x.push_back(tp.train_norm.records[i].values);
        emb_x.push_back(tp.train_embeddings[i]);
        labels.push_back(tp.train_norm.records[i].rp_id);
    }
    KnnModel raw_knn(raw_x, labels, cfg.knn.k);
    KnnModel embed_knn(emb_x, labels, cfg.knn.k);
    KnnModel lt_knn = raw_knn;

    auto devices = resolve_devices(building, cfg);
    std::vector<int> cis = resolve_cis(building, cfg);
    std::sort(cis.begin(), cis.end());

    EvalReport& stellar = out.stellar_report;
    stellar.building_id = building.building_id;
    stellar.train_device = cfg.train_device;
    stellar.train_ci = cfg.train_ci;
    stellar.seed = cfg.seed;
    stellar.config_hash = cfg.config_hash();
    stellar.version = kVersion;
    stellar.params_hash_before = tp.model.params_hash();

    std::map<std::pair<std::string, int>, CellAccum> stellar_cells;
    std::map<std::string, std::map<int, CellAccum>> arm_ci;  // arm -> ci -> accum

    try {
        for (int ci : cis) {
            if (cfg.ltknn_retrain_every > 0 && ci > 0 &&
                static_cast<std::size_t>(ci) % cfg.ltknn_retrain_every == 0) {
                FingerprintDataset refit_slice =
                    slice_checked(building, cfg.train_device, ci, "lt-knn-refit");
                SplitResult sp = split(refit_slice, cfg.split);
                NormalizedDataset norm = normalize(sp.train);
                std::vector<std::vector<double>> xs;
                std::vector<std::string> ys;
                for (const auto& r : norm.records) {
                    xs.push_back(r.values);
                    ys.push_back(r.rp_id);
                }
                lt_knn = KnnModel(std::move(xs), std::move(ys), cfg.knn.k);
                out.ltknn_refit_cis.push_back(ci);
            }

            for (const auto& dev : devices) {
                FingerprintDataset queries = eval_queries(building, cfg, dev, ci);
                CellAccum sa;
                CellAccum raw_a, lt_a, emb_a;
                for (const auto& q : queries.records) {
                    NormalizedFingerprint nq = normalize(q);
                    Embedding emb = tp.model.encode(nq.values);

                    sa.error_sum += localization_error(tp.classifier.predict_id(emb), q.rp_id,
                                                       building.rps);
                    ++sa.queries;
                    raw_a.error_sum +=
                        localization_error(raw_knn.predict(nq.values), q.rp_id, building.rps);
                    ++raw_a.queries;
                    lt_a.error_sum +=
                        localization_error(lt_knn.predict(nq.values), q.rp_id, building.rps);
                    ++lt_a.queries;
                    emb_a.error_sum +=
                        localization_error(embed_knn.predict(emb), q.rp_id, building.rps);
                    ++emb_a.queries;
                }
                stellar_cells[{dev, ci}] = sa;
                auto add = [&](const char* arm, const CellAccum& a) {
                    auto& dst = arm_ci[arm][ci];
                    dst.error_sum += a.mean();  // accumulate device means
                    dst.queries += 1;
                };
                add(kArmStellar, sa);
                add(kArmRawKnn, raw_a);
                add(kArmLtKnn, lt_a);
                add(kArmEmbedKnn, emb_a);
            }
        }
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("comparison", e.what());
    }

    stellar.params_hash_after = tp.model.params_hash();
    finish_report(stellar, devices, cis, stellar_cells, cfg);

    for (const auto& arm : out.arms) {
        for (int ci : cis) {
            const CellAccum& acc = arm_ci.at(arm).at(ci);
            out.rows.push_back({arm, ci, acc.mean()});
        }
    }
    return out;
}

double CompareReport::arm_mean(const std::string& arm, int min_ci) const {
    double sum = 0.0;
    int count = 0;
    for (const auto& row : rows) {
        if (row.arm == arm && row.ci >= min_ci) {
            sum += row.mean_error_m;
            ++count;
        }
    }
    if (!count) fail("no rows for arm '" + arm + "'");
    return sum / count;
}

// ---------------------------------------------------------------------------
// report serialization

Json EvalReport::to_json() const {
    Json cells_json = Json::array();
    for (const auto& c : cells)
        cells_json.push_back(Json{{"test_device", c.test_device},
                                  {"ci", c.ci},
                                  {"mean_error_m", c.mean_error_m},
                                  {"queries", c.queries},
                                  {"training_cell", c.training_cell}});
    Json per_ci_json = Json::array();
    for (const auto& s : per_ci)
        per_ci_json.push_back(Json{{"ci", s.ci},
                                   {"mean_error_m", s.mean_error_m},
                                   {"best_device_error_m", s.best_device_error_m},
                                   {"worst_device_error_m", s.worst_device_error_m}});
    return Json{{"kind", "evaluate"},
                {"version", version},
                {"seed", seed},
                {"config_hash", config_hash},
                {"building_id", building_id},
                {"train_device", train_device},
                {"train_ci", train_ci},
                {"params_hash_before", params_hash_before},
                {"params_hash_after", params_hash_after},
                {"overall_mean_error_m", overall_mean_error_m},
                {"cells", cells_json},
                {"per_ci", per_ci_json}};
}

Json DSweepReport::to_json() const {
    Json rows_json = Json::array();
    for (const auto& r : rows)
        rows_json.push_back(Json{{"d_fraction", r.d_fraction},
                                 {"mean_error_m", r.mean_error_m},
                                 {"min_cell_error_m", r.min_cell_error_m},
                                 {"max_cell_error_m", r.max_cell_error_m}});
    return Json{{"kind", "sweep_d"},
                {"version", kVersion},
                {"seed", seed},
                {"config_hash", config_hash},
                {"building_id", building_id},
                {"rows", rows_json}};
}

Json SamplesReport::to_json() const {
    Json rows_json = Json::array();
    for (const auto& r : rows)
        rows_json.push_back(Json{{"samples_per_rp", r.samples_per_rp},
                                 {"ci", r.ci},
                                 {"mean_error_m", r.mean_error_m}});
    return Json{{"kind", "sweep_samples"},
                {"version", kVersion},
                {"seed", seed},
                {"config_hash", config_hash},
                {"building_id", building_id},
                {"counts", counts},
                {"overall_mean_error_m", overall_mean_error_m},
                {"rows", rows_json}};
}

Json CompareReport::to_json() const {
    Json rows_json = Json::array();
    for (const auto& r : rows)
        rows_json.push_back(
            Json{{"arm", r.arm}, {"ci", r.ci}, {"mean_error_m", r.mean_error_m}});
    return Json{{"kind", "compare"},
                {"version", kVersion},
                {"seed", stellar_report.seed},
                {"config_hash", stellar_report.config_hash},
                {"building_id", stellar_report.building_id},
                {"arms", arms},
                {"ltknn_refit_cis", ltknn_refit_cis},
                {"rows", rows_json},
                {"stellar", stellar_report.to_json()}};
}

// ---------------------------------------------------------------------------
// plot data

namespace {

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open '" + path + "' for writing");
    out << content;
    if (!out) fail("write failed for '" + path + "'");
}

std::string device_matrix_csv(const Json& eval_report) {
    // one row per test device, error averaged over the report's CIs
    std::vector<std::string> order;
    std::map<std::string, std::pair<double, long long>> agg;  // err_sum, queries
    for (const auto& cell : eval_report.at("cells")) {
        std::string dev = cell.at("test_device").get<std::string>();
        if (!agg.count(dev)) order.push_back(dev);
        auto& a = agg[dev];
        auto q = cell.at("queries").get<long long>();
        a.first += cell.at("mean_error_m").get<double>() * static_cast<double>(q);
        a.second += q;
    }
    std::string train_device = eval_report.at("train_device").get<std::string>();
    std::string csv = "train_device,test_device,mean_error_m\n";
    for (const auto& dev : order) {
        const auto& a = agg.at(dev);
        double mean = a.second ? a.first / static_cast<double>(a.second) : 0.0;
        csv += train_device + "," + dev + "," + format_double(mean) + "\n";
    }
    return csv;
}

std::string temporal_curves_csv(const Json& rows, const std::string& single_arm = "") {
    std::string csv = "arm,ci,mean_error_m\n";
    for (const auto& row : rows) {
        std::string arm = single_arm.empty() ? row.at("arm").get<std::string>() : single_arm;
        csv += arm + "," + std::to_string(row.at("ci").get<int>()) + "," +
               format_double(row.at("mean_error_m").get<double>()) + "\n";
    }
    return csv;
}

}  // namespace

void emit_plots(const Json& report, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail("cannot create directory '" + out_dir + "': " + ec.message());
    auto path = [&](const char* name) { return out_dir + "/" + name; };

    std::string kind = report.at("kind").get<std::string>();
    if (kind == "evaluate") {
        write_text_file(path("device_matrix.csv"), device_matrix_csv(report));
        write_text_file(path("temporal_curves.csv"),
                        temporal_curves_csv(report.at("per_ci"), kArmStellar));
    } else if (kind == "sweep_d") {
        std::string csv = "d_percent,mean_error_m,min_error_m,max_error_m\n";
        for (const auto& row : report.at("rows")) {
            csv += format_double(row.at("d_fraction").get<double>() * 100.0) + "," +
                   format_double(row.at("mean_error_m").get<double>()) + "," +
                   format_double(row.at("min_cell_error_m").get<double>()) + "," +
                   format_double(row.at("max_cell_error_m").get<double>()) + "\n";
        }
        write_text_file(path("d_sweep.csv"), csv);
    } else if (kind == "sweep_samples") {
        std::string csv = "samples_per_rp,ci,mean_error_m\n";
        for (const auto& row : report.at("rows")) {
            csv += std::to_string(row.at("samples_per_rp").get<int>()) + "," +
                   std::to_string(row.at("ci").get<int>()) + "," +
                   format_double(row.at("mean_error_m").get<double>()) + "\n";
        }
        write_text_file(path("samples.csv"), csv);
    } else if (kind == "compare") {
        write_text_file(path("temporal_curves.csv"), temporal_curves_csv(report.at("rows")));
        write_text_file(path("device_matrix.csv"), device_matrix_csv(report.at("stellar")));

        // per-CI spread of arm errors relative to the encoder+GBT arm
        std::map<int, double> stellar_by_ci;
        for (const auto& row : report.at("rows")) {
            if (row.at("arm").get<std::string>() == kArmStellar)
                stellar_by_ci[row.at("ci").get<int>()] = row.at("mean_error_m").get<double>();
        }
        std::map<int, std::vector<double>> deltas;
        for (const auto& row : report.at("rows")) {
            std::string arm = row.at("arm").get<std::string>();
            if (arm == kArmStellar) continue;
            int ci = row.at("ci").get<int>();
            deltas[ci].push_back(row.at("mean_error_m").get<double>() - stellar_by_ci.at(ci));
        }
        std::string csv = "ci,min_delta_m,mean_delta_m,max_delta_m\n";
        for (const auto& [ci, v] : deltas) {
            double mn = *std::min_element(v.begin(), v.end());
            double mx = *std::max_element(v.begin(), v.end());
            double mean = 0.0;
            for (double d : v) mean += d;
            mean /= static_cast<double>(v.size());
            csv += std::to_string(ci) + "," + format_double(mn) + "," + format_double(mean) +
                   "," + format_double(mx) + "\n";
        }
        write_text_file(path("box_deltas.csv"), csv);
    } else {
        fail("unknown report kind '" + kind + "'");
    }
}

}  // namespace stellar
