#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlf/features.hpp"

namespace xlf {

enum class TuningMode { full_tune, adapter };

std::string to_string(TuningMode mode);
TuningMode tuning_mode_from_string(const std::string& s);

struct ModelConfig {
    uint32_t input_dim = 4096;                 // must equal the vectorizer dim
    std::vector<uint32_t> encoder_dims{64, 64};
    uint32_t adapter_bottleneck = 8;
    uint32_t n_classes = 2;
    TuningMode tuning_mode = TuningMode::full_tune;
    double init_scale = 0.05;

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    // FNV-1a over the canonical JSON encoding; any field change changes it.
    uint64_t hash() const;
};

// Row-major dense matrix.
struct Tensor2 {
    size_t rows = 0, cols = 0;
    std::vector<double> a;

    Tensor2() = default;
    Tensor2(size_t r, size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
    double& at(size_t r, size_t c) { return a[r * cols + c]; }
    double at(size_t r, size_t c) const { return a[r * cols + c]; }
};

struct Linear {
    Tensor2 w;               // out x in
    std::vector<double> b;   // out

    Linear() = default;
    Linear(size_t out, size_t in) : w(out, in), b(out, 0.0) {}
    size_t out_dim() const { return w.rows; }
    size_t in_dim() const { return w.cols; }
};

struct EpisodeRecord {
    std::string regime;
    std::string src;
    std::string tgt;
};

struct StateMeta {
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    std::vector<EpisodeRecord> history;
};

// All learnable parameters, partitioned into base encoder / adapter / head.
// In adapter mode the base partition is frozen: training never writes to it.
struct ModelState {
    ModelConfig cfg;
    std::vector<Linear> base;      // encoder layers, input to output order
    Linear adapter_down;
    Linear adapter_up;             // zero-initialized: the adapter starts as identity
    Linear head;
    StateMeta meta;
};

// Gradients for the trainable partitions only, as flat slices aligned with
// trainable_views(state). Frozen partitions have no entries at all.
struct GradientSet {
    std::vector<std::vector<double>> slices;
};

struct ParamCounts {
    size_t base = 0;
    size_t adapter = 0;
    size_t head = 0;
    size_t total = 0;
    size_t trainable = 0;
};

ModelState init_model(const ModelConfig& cfg, uint64_t seed);

// Parameter slices in declared order (base W/b per layer, adapter down W/b,
// adapter up W/b, head W/b). trainable_views omits frozen partitions.
std::vector<std::span<double>> all_views(ModelState& state);
std::vector<std::span<const double>> all_views(const ModelState& state);
std::vector<std::span<double>> trainable_views(ModelState& state);

// Class probabilities; softmax with max subtraction, sums to 1 +- 1e-9.
std::vector<double> forward(const ModelState& state, const FeatureVector& x);

std::vector<double> softmax(std::vector<double> logits);

// Mean cross-entropy over the batch plus analytic gradients restricted to
// the trainable partitions for state.cfg.tuning_mode.
std::pair<double, GradientSet> loss_and_grad(
    const ModelState& state, const std::vector<std::pair<FeatureVector, uint32_t>>& batch);

double mean_loss(const ModelState& state,
                 const std::vector<std::pair<FeatureVector, uint32_t>>& batch);

ParamCounts param_counts(const ModelState& state);

} // namespace xlf
