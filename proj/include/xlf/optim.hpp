#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "xlf/corpus.hpp"
#include "xlf/model.hpp"

namespace xlf {

// Defaults are the "paper" profile; the "desk" profile raises lr_peak to a
// value suited to the toy model (2e-5 is tuned for a 289M-parameter encoder).
struct OptimConfig {
    double lr_peak = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    uint32_t batch_size = 32;
    double warmup_fraction = 0.10;
    uint32_t patience = 3;
    double tolerance = 0.01;     // absolute improvement on validation loss
    uint32_t max_epochs = 50;
    uint64_t seed = 1234;

    void validate() const;
    static OptimConfig profile(const std::string& name);   // "paper" | "desk"
    nlohmann::json to_json() const;
};

struct TrainReport {
    uint32_t epochs_run = 0;
    double best_valid_loss = 0.0;
    double time_per_epoch_seconds = 0.0;
    double total_time_seconds = 0.0;
    uint64_t steps_taken = 0;

    nlohmann::json to_json() const;
    static TrainReport from_json(const nlohmann::json& j);
};

// One decoupled-weight-decay Adam update on a flat parameter slice.
// m and v are the first/second moment buffers for the same slice;
// step_index starts at 1 and drives the bias correction.
void adamw_step(std::span<double> params, std::span<const double> grads,
                std::span<double> m, std::span<double> v, uint64_t step_index,
                double lr_now, const OptimConfig& cfg);

// Linear warmup to lr_peak over ceil(warmup_fraction * total_steps) steps,
// then linear decay to zero at total_steps. 1-based steps.
double lr_at(uint64_t step, uint64_t total_steps, const OptimConfig& cfg);

// Tolerance-gated early stopping. An epoch counts as an improvement only if
// it beats the best loss seen so far by at least `tolerance`; `patience`
// consecutive non-improving epochs stop the run. The best-seen tracker
// follows every new minimum, so a slow drift below tolerance still stops,
// while snapshots are taken only at improvement epochs.
class EarlyStopper {
public:
    EarlyStopper(double tolerance, uint32_t patience)
        : tolerance_(tolerance), patience_(patience) {}

    // True when this epoch's state should become the restore snapshot.
    bool observe(double valid_loss);
    bool should_stop() const { return bad_epochs_ >= patience_; }
    // Validation loss of the snapshot-worthy epoch (the restored state).
    double best() const { return best_gated_; }

private:
    double tolerance_;
    uint32_t patience_;
    uint32_t bad_epochs_ = 0;
    double best_seen_ = std::numeric_limits<double>::infinity();
    double best_gated_ = std::numeric_limits<double>::infinity();
};

struct TrainHooks {
    // Test-only: replaces the computed validation loss for the given
    // 1-based epoch (used to exercise the early-stopping contract).
    std::function<double(uint32_t epoch, double computed_loss)> valid_loss_override;
    // Test-only: observes the state at the end of each epoch, before any
    // early-stopping decision.
    std::function<void(uint32_t epoch, const ModelState& state)> on_epoch_end;
};

struct TrainResult {
    ModelState state;        // the restored best-validation-loss state
    TrainReport report;
};

// Mini-batch AdamW with per-epoch seeded shuffles and early stopping.
// Deterministic: identical (state, data, cfg) reproduce the result bitwise.
TrainResult train(ModelState state, const DocView& train_docs, const DocView& valid_docs,
                  const VectorizerConfig& vec_cfg, const OptimConfig& cfg,
                  const TrainHooks* hooks = nullptr);

} // namespace xlf
