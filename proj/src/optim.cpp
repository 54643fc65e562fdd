#include "xlf/optim.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "xlf/error.hpp"
#include "xlf/rng.hpp"

namespace xlf {

void OptimConfig::validate() const {
    if (!(lr_peak > 0.0)) throw ValidationError("optim.lr_peak must be positive");
    if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
        throw ValidationError("optim.warmup_fraction must be in (0,1)");
    if (patience < 1) throw ValidationError("optim.patience must be >= 1");
    if (tolerance < 0.0) throw ValidationError("optim.tolerance must be >= 0");
    if (batch_size < 1) throw ValidationError("optim.batch_size must be >= 1");
    if (max_epochs < 1) throw ValidationError("optim.max_epochs must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ValidationError("optim.betas must be in [0,1)");
    if (!(eps > 0.0)) throw ValidationError("optim.eps must be positive");
    if (weight_decay < 0.0) throw ValidationError("optim.weight_decay must be >= 0");
}

OptimConfig OptimConfig::profile(const std::string& name) {
    OptimConfig c;
    if (name == "paper") return c;
    if (name == "desk") {
        c.lr_peak = 5e-3;
        return c;
    }
    throw ValidationError("unknown optim profile '" + name + "' (expected paper|desk)");
}

nlohmann::json OptimConfig::to_json() const {
    return {{"lr_peak", lr_peak},       {"beta1", beta1},
            {"beta2", beta2},           {"eps", eps},
            {"weight_decay", weight_decay}, {"batch_size", batch_size},
            {"warmup_fraction", warmup_fraction}, {"patience", patience},
            {"tolerance", tolerance},   {"max_epochs", max_epochs},
            {"seed", seed}};
}

nlohmann::json TrainReport::to_json() const {
    return {{"epochs_run", epochs_run},
            {"best_valid_loss", best_valid_loss},
            {"time_per_epoch_seconds", time_per_epoch_seconds},
            {"total_time_seconds", total_time_seconds},
            {"steps_taken", steps_taken}};
}

TrainReport TrainReport::from_json(const nlohmann::json& j) {
    TrainReport r;
    r.epochs_run = j.at("epochs_run").get<uint32_t>();
    r.best_valid_loss = j.at("best_valid_loss").get<double>();
    r.time_per_epoch_seconds = j.at("time_per_epoch_seconds").get<double>();
    r.total_time_seconds = j.at("total_time_seconds").get<double>();
    r.steps_taken = j.at("steps_taken").get<uint64_t>();
    return r;
}

void adamw_step(std::span<double> params, std::span<const double> grads,
                std::span<double> m, std::span<double> v, uint64_t step_index,
                double lr_now, const OptimConfig& cfg) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
        throw ValidationError("adamw_step: shape mismatch between params, grads, and moments");
    if (step_index < 1) throw ValidationError("adamw_step: step_index must be >= 1");

    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_index));
    for (size_t i = 0; i < params.size(); ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grads[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        params[i] -= lr_now * (m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * params[i]);
    }
}

double lr_at(uint64_t step, uint64_t total_steps, const OptimConfig& cfg) {
    if (step < 1 || step > total_steps)
        throw ValidationError("lr_at: step " + std::to_string(step) + " out of range [1, " +
                              std::to_string(total_steps) + "]");
    const auto warmup_steps = static_cast<uint64_t>(
        std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
    if (step <= warmup_steps)
        return cfg.lr_peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    return cfg.lr_peak * static_cast<double>(total_steps - step) /
           static_cast<double>(total_steps - warmup_steps);
}

bool EarlyStopper::observe(double valid_loss) {
    const bool improved = best_seen_ - valid_loss >= tolerance_;
    if (valid_loss < best_seen_) best_seen_ = valid_loss;
    if (improved) {
        best_gated_ = valid_loss;
        bad_epochs_ = 0;
        return true;
    }
    ++bad_epochs_;
    return false;
}

namespace {

struct Encoded {
    std::vector<std::pair<FeatureVector, uint32_t>> samples;
};

Encoded encode(const DocView& docs, const VectorizerConfig& vec_cfg) {
    Encoded e;
    e.samples.reserve(docs.size());
    for (size_t i = 0; i < docs.size(); ++i) {
        const Document& d = docs[i];
        e.samples.emplace_back(vectorize(vec_cfg, d.text), d.label);
    }
    return e;
}

} // namespace

TrainResult train(ModelState state, const DocView& train_docs, const DocView& valid_docs,
                  const VectorizerConfig& vec_cfg, const OptimConfig& cfg,
                  const TrainHooks* hooks) {
    cfg.validate();
    if (train_docs.empty()) throw ValidationError("train: empty training split");
    if (valid_docs.empty()) throw ValidationError("train: empty validation split");

    const Encoded tr = encode(train_docs, vec_cfg);
    const Encoded va = encode(valid_docs, vec_cfg);

    const auto steps_per_epoch = static_cast<uint64_t>(
        (tr.samples.size() + cfg.batch_size - 1) / cfg.batch_size);
    const uint64_t total_steps = static_cast<uint64_t>(cfg.max_epochs) * steps_per_epoch;

    auto params = trainable_views(state);
    size_t n_trainable = 0;
    for (const auto& p : params) n_trainable += p.size();
    std::vector<double> m(n_trainable, 0.0), v(n_trainable, 0.0);

    EarlyStopper stopper(cfg.tolerance, cfg.patience);
    ModelState best_state = state;
    TrainReport report;

    std::vector<size_t> order(tr.samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::vector<std::pair<FeatureVector, uint32_t>> batch;

    uint64_t global_step = 0;
    const auto t_start = std::chrono::steady_clock::now();
    for (uint32_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, epoch));
        shuffle_rng.shuffle(order);

        for (size_t off = 0; off < order.size(); off += cfg.batch_size) {
            batch.clear();
            const size_t end = std::min(order.size(), off + cfg.batch_size);
            for (size_t i = off; i < end; ++i) batch.push_back(tr.samples[order[i]]);

            auto [loss, grads] = loss_and_grad(state, batch);
            (void)loss;
            ++global_step;
            const double lr = lr_at(global_step, total_steps, cfg);

            size_t moment_off = 0;
            for (size_t s = 0; s < params.size(); ++s) {
                const size_t n = params[s].size();
                adamw_step(params[s], grads.slices[s],
                           std::span<double>(m).subspan(moment_off, n),
                           std::span<double>(v).subspan(moment_off, n), global_step, lr, cfg);
                moment_off += n;
            }
        }

        double valid_loss = mean_loss(state, va.samples);
        if (hooks && hooks->valid_loss_override)
            valid_loss = hooks->valid_loss_override(epoch, valid_loss);
        if (hooks && hooks->on_epoch_end) hooks->on_epoch_end(epoch, state);

        report.epochs_run = epoch;
        if (stopper.observe(valid_loss)) best_state = state;
        if (stopper.should_stop()) break;
    }
    const auto t_end = std::chrono::steady_clock::now();

    report.steps_taken = global_step;
    report.best_valid_loss = stopper.best();
    report.total_time_seconds = std::chrono::duration<double>(t_end - t_start).count();
    report.time_per_epoch_seconds =
        report.epochs_run > 0 ? report.total_time_seconds / report.epochs_run : 0.0;
    return {std::move(best_state), report};
}

} // namespace xlf
