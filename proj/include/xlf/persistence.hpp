#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlf/model.hpp"
#include "xlf/optim.hpp"
#include "xlf/trace.hpp"

namespace xlf {

inline constexpr const char* kHarnessVersion = "0.1.0";

struct SaveOptions {
    // Test-only: abort after the temporary file is written, before the
    // rename, to exercise the atomicity contract.
    bool fail_before_rename_for_test = false;
};

// Atomic write: temp file in the same directory, then rename.
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes,
                       const SaveOptions& opts = {});

std::string sha256_hex(const std::string& bytes);
std::string sha256_hex_file(const std::filesystem::path& path);

// Checkpoint: magic "XLFC", version byte, then length-prefixed sections
// (config JSON, metadata JSON, one little-endian f64 array per parameter
// slice in declared order). Bit-exact across save/load.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path,
                     const SaveOptions& opts = {});
ModelState load_checkpoint(const std::filesystem::path& path);
// Additionally verifies the stored config hash against `expect`.
ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expect);

struct ResultRow {
    std::string dataset;
    std::string tuning_mode;
    std::string regime;
    std::string language;
    std::string metric;
    std::string seed;     // a number, or "mean"/"std" for aggregate rows
    double value = 0.0;
};

// Long-format results with canonical ordering and per-seed mean/std rows.
struct ResultsTable {
    std::vector<ResultRow> rows;

    void add(const std::string& dataset, const std::string& mode, const std::string& regime,
             const std::string& language, const std::string& metric, uint64_t seed, double value);
    // Appends mean and sample-std rows per (dataset, mode, regime, language, metric).
    void add_aggregates();
    // Checks that every aggregate row matches its per-seed rows within 1e-9.
    void validate_aggregates() const;
    void sort_canonical();
};

// F1 and omega values are written as percentages with two decimals;
// everything else as plain two-decimal values.
void write_results_csv(const ResultsTable& table, const std::filesystem::path& path,
                       const SaveOptions& opts = {});

struct PhaseReport {
    std::string regime;
    std::string mode;
    std::string src;
    std::string tgt;
    uint64_t seed = 0;
    uint32_t phase = 1;      // 1-based phase within the run (IT has 2)
    TrainReport report;
};

struct RunManifest {
    std::string harness_version = kHarnessVersion;
    nlohmann::json config;
    std::vector<uint64_t> seeds;
    std::vector<PhaseReport> phases;
    // Paths relative to the manifest location; digests computed at write time.
    std::vector<std::string> output_files;
};

// JSON with sorted keys; throws if a listed output file is missing.
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path,
                    const SaveOptions& opts = {});
RunManifest load_manifest(const std::filesystem::path& path);

void save_trace(const ChainTrace& trace, const std::filesystem::path& path,
                const SaveOptions& opts = {});
ChainTrace load_trace(const std::filesystem::path& path);

} // namespace xlf
