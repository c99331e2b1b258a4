#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stellar/eval.hpp"

namespace fs = std::filesystem;
using stellar::ExperimentConfig;
using stellar::FingerprintDataset;
using stellar::Json;

namespace {

ExperimentConfig load_config(const std::string& config_path, std::optional<std::uint64_t> seed,
                             const std::string& out_dir) {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
        cfg = ExperimentConfig::from_json(Json::parse(in));
    } else {
        cfg.derive_sub_seeds();
    }
    if (seed) {
        cfg.seed = *seed;
        cfg.derive_sub_seeds();
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return cfg;
}

std::vector<FingerprintDataset> load_buildings(const ExperimentConfig& cfg) {
    std::vector<FingerprintDataset> out;
    if (cfg.dataset.synthetic) {
        std::uint64_t synth_seed = cfg.dataset.synth_seed
                                       ? *cfg.dataset.synth_seed
                                       : stellar::derive_seed(cfg.seed, {stellar::hash_tag("synth")});
        auto suite = stellar::make_benchmark(cfg.dataset.shape, synth_seed);
        for (auto& b : suite.buildings) out.push_back(std::move(b.data));
    } else {
        for (const auto& path : cfg.dataset.csv_paths) out.push_back(stellar::load_csv(path));
    }
    return out;
}

void write_json_file(const std::string& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string building_dir(const ExperimentConfig& cfg, const FingerprintDataset& b) {
    fs::path dir = fs::path(cfg.out_dir) / b.building_id;
    fs::create_directories(dir);
    return dir.string();
}

int cmd_generate(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    for (const auto& b : load_buildings(cfg)) {
        std::string path = (fs::path(cfg.out_dir) / (b.building_id + ".csv")).string();
        stellar::save_csv(b, path);
        std::cout << "wrote " << path << " (" << b.records.size() << " fingerprints)\n";
    }
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    for (const auto& b : load_buildings(cfg)) {
        auto tp = stellar::train_pipeline(b, cfg);
        std::string dir = building_dir(cfg, b);
        tp.model.save(dir + "/siamese.json");
        tp.classifier.save(dir + "/gbt.json");
        std::cout << b.building_id << ": trained on " << tp.train_norm.records.size()
                  << " fingerprints, final epoch loss "
                  << (tp.siamese_epoch_loss.empty() ? 0.0 : tp.siamese_epoch_loss.back())
                  << ", models in " << dir << "\n";
    }
    return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg) {
    for (const auto& b : load_buildings(cfg)) {
        auto report = stellar::run_pipeline(b, cfg);
        std::string dir = building_dir(cfg, b);
        Json j = report.to_json();
        write_json_file(dir + "/report.json", j);
        stellar::emit_plots(j, dir);
        std::cout << b.building_id << ": overall mean error "
                  << report.overall_mean_error_m << " m, report in " << dir << "\n";
    }
    return 0;
}

int cmd_sweep_d(const ExperimentConfig& cfg) {
    for (const auto& b : load_buildings(cfg)) {
        auto report = stellar::sweep_d(b, cfg, cfg.sweep_d_grid);
        std::string dir = building_dir(cfg, b);
        Json j = report.to_json();
        write_json_file(dir + "/sweep_d.json", j);
        stellar::emit_plots(j, dir);
        std::cout << b.building_id << ": " << report.rows.size() << " D values, report in "
                  << dir << "\n";
    }
    return 0;
}

int cmd_sweep_samples(const ExperimentConfig& cfg) {
    for (const auto& b : load_buildings(cfg)) {
        auto report = stellar::sweep_samples(b, cfg, cfg.sweep_samples_grid);
        std::string dir = building_dir(cfg, b);
        Json j = report.to_json();
        write_json_file(dir + "/sweep_samples.json", j);
        stellar::emit_plots(j, dir);
        std::cout << b.building_id << ": " << report.counts.size()
                  << " sample counts, report in " << dir << "\n";
    }
    return 0;
}

int cmd_compare(const ExperimentConfig& cfg) {
    for (const auto& b : load_buildings(cfg)) {
        auto report = stellar::compare_baselines(b, cfg);
        std::string dir = building_dir(cfg, b);
        Json j = report.to_json();
        write_json_file(dir + "/compare.json", j);
        stellar::emit_plots(j, dir);
        std::cout << b.building_id << ": compared " << report.arms.size()
                  << " arms, report in " << dir << "\n";
    }
    return 0;
}

int cmd_plots(const std::string& report_path, const std::string& out_dir) {
    std::ifstream in(report_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open report '" + report_path + "'");
    Json report = Json::parse(in);
    stellar::emit_plots(report, out_dir.empty() ? "." : out_dir);
    std::cout << "plot data written to " << (out_dir.empty() ? "." : out_dir) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RSS-fingerprint indoor localization pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, report_path;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "experiment config JSON")->capture_default_str();
    app.add_option("--seed", seed, "override the run seed");
    app.add_option("--out", out_dir, "override the output directory");

    auto* generate = app.add_subcommand("generate", "write synthetic building CSVs");
    auto* train = app.add_subcommand("train", "train encoder + classifier, write model files");
    auto* evaluate = app.add_subcommand("evaluate", "train once, evaluate every cell");
    auto* sweepd = app.add_subcommand("sweep-d", "pipeline per AP-dropout fraction");
    auto* sweeps = app.add_subcommand("sweep-samples", "pipeline per training-samples count");
    auto* compare = app.add_subcommand("compare", "encoder+GBT vs KNN baselines");
    auto* plots = app.add_subcommand("plots", "re-emit plot CSVs from a report");
    plots->add_option("--report", report_path, "report JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (plots->parsed()) return cmd_plots(report_path, out_dir);
        ExperimentConfig cfg = load_config(config_path, seed, out_dir);
        if (generate->parsed()) return cmd_generate(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg);
        if (sweepd->parsed()) return cmd_sweep_d(cfg);
        if (sweeps->parsed()) return cmd_sweep_samples(cfg);
        if (compare->parsed()) return cmd_compare(cfg);
    } catch (const stellar::StageError& e) {
        std::cerr << Json{{"error", e.what()}, {"stage", e.stage()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << Json{{"error", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}
