#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlf/corpus.hpp"
#include "xlf/metrics.hpp"
#include "xlf/persistence.hpp"
#include "xlf/regimes.hpp"

namespace xlf {

struct ExternalData {
    std::vector<std::string> paths;   // one JSONL file per language
    uint32_t n_classes = 2;
};

// Full experiment description. Exactly one of {corpus, data} must be set.
struct ExperimentConfig {
    std::string dataset_name = "synthetic";
    std::optional<CorpusSpec> corpus;
    uint64_t corpus_seed = 7;
    std::optional<ExternalData> data;

    VectorizerConfig vectorizer;
    std::vector<uint32_t> encoder_dims{64, 64};
    uint32_t adapter_bottleneck = 8;
    double init_scale = 0.05;
    TuningMode tuning_mode = TuningMode::full_tune;

    std::string profile = "desk";            // "paper" | "desk"
    nlohmann::json optim_overrides;          // scalar OptimConfig fields

    std::vector<RegimeKind> regimes{RegimeKind::zs, RegimeKind::it};
    std::vector<std::string> chain;          // resolved chain (preset or explicit)
    std::vector<uint64_t> seeds{1234, 1903, 42};
    std::filesystem::path out_dir = "out";
    bool cap_omega = true;
    bool exclusive_all = false;              // alpha_all without the new language

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    // Sets one scalar field addressed by a dotted path, e.g. "optim.lr_peak=0.01".
    void apply_override(const std::string& dotted_key, const std::string& value);
    void validate() const;

    OptimConfig make_optim(uint64_t seed) const;
    ModelConfig make_model(uint32_t n_classes) const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Generated or loaded per the config; key = language code.
Corpus build_datasets(const ExperimentConfig& cfg);

struct RunArtifacts {
    ResultsTable table;
    RunManifest manifest;
    std::filesystem::path results_csv;
    std::filesystem::path manifest_path;
};

// One single-transfer experiment: every configured regime x target language
// x seed, plus a monolingual source baseline per seed. Writes results.csv,
// per-run checkpoints, and run_manifest.json under cfg.out_dir.
RunArtifacts run_experiment(const ExperimentConfig& cfg);

struct ChainArtifacts {
    // One trace per (regime, seed), in canonical order.
    std::vector<ChainTrace> traces;
    ResultsTable omega_table;
    ResultsTable retention_table;
    RunManifest manifest;
    std::filesystem::path omega_csv;
    std::filesystem::path retention_csv;
    std::filesystem::path manifest_path;
};

// Chain experiment over the configured chain regimes and seeds. Writes
// per-episode checkpoints, trace JSON files, omega.csv, retention.csv,
// and chain_manifest.json under cfg.out_dir.
ChainArtifacts chain_experiment(const ExperimentConfig& cfg);

// Dataset statistics for every configured language, in language order.
std::vector<DatasetStats> stats_experiment(const ExperimentConfig& cfg);
void write_stats_csv(const std::vector<DatasetStats>& stats, const std::string& dataset_name,
                     const std::filesystem::path& path);

// Writes one JSONL corpus file per language; returns the file paths.
std::vector<std::filesystem::path> gen_data(const ExperimentConfig& cfg);

// Table-8-shaped timing aggregation over every *manifest*.json in `dir`.
struct TimingRow {
    std::string regime;
    std::string mode;
    double avg_epochs = 0.0;
    double avg_time_per_epoch_s = 0.0;
    double avg_total_time_s = 0.0;   // phases of one run are summed first
};
std::vector<TimingRow> aggregate_timings(const std::filesystem::path& dir);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path);

// Static SVG line chart of the three alpha series against the episode index.
void write_retention_svg(const ChainTrace& trace, const std::filesystem::path& path);

// Worker cap for seed fan-out: XLF_THREADS when set and valid, else 1.
unsigned worker_limit();

} // namespace xlf
