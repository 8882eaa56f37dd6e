#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ckd/metrics.hpp"
#include "ckd/model.hpp"
#include "ckd/synth_data.hpp"
#include "ckd/trainer.hpp"

namespace ckd {

// One config file drives data generation, model shape, the training
// schedule, and the ablation grid. Sections: [data] [model] [train]
// [experiment]; unknown keys are hard errors.
struct ExperimentConfig {
    GeneratorConfig data;
    ModelConfig model;
    TrainConfig train;
    std::vector<Variant> variants = all_variants();
    std::vector<std::uint64_t> seeds{0};
    std::size_t cmc_max_rank = 10;
    std::size_t calibration_bins = 15;
    std::size_t verification_samples = 4;  // gallery picks per identity

    void validate() const;
};

ExperimentConfig parse_experiment_config(const std::string &text);
ExperimentConfig load_experiment_config(const std::string &path);
// Every field spelled out, parseable back to an identical config.
std::string resolved_config_text(const ExperimentConfig &cfg);

// Model and schedule configs for one grid cell.
ModelConfig cell_model_config(const ExperimentConfig &cfg, Variant v, std::uint64_t seed);
TrainConfig cell_train_config(const ExperimentConfig &cfg, Variant v, std::uint64_t seed);

MetricReport evaluate_model(const TrainResult &result, const Dataset &dataset,
                            const ExperimentConfig &cfg, Variant v, std::uint64_t seed);

// Trains one grid cell and writes metrics.json, epoch_log.csv, cmc.csv,
// roc.csv, and checkpoints under out_dir.
MetricReport run_cell(const ExperimentConfig &cfg, const Dataset &dataset, Variant v,
                      std::uint64_t seed, const std::string &out_dir);

struct AblationSummaryRow {
    std::string variant;
    double rank1_mean = 0;
    double eer_mean = 0;
    double gain_id = kMissing;
    double gain_ver = kMissing;
};

// Full grid: every (variant, seed) cell plus summary.csv with gains
// against the single-view bounds. Returns the summary rows.
std::vector<AblationSummaryRow> run_ablation(const ExperimentConfig &cfg,
                                             const std::string &out_dir);

std::string summary_csv(const std::vector<AblationSummaryRow> &rows);

// Collates a finished ablation directory into per-channel CSVs under
// <run_dir>/report; errors list every missing artifact.
void write_experiment_report(const std::string &run_dir);

}  // namespace ckd
