#include "xlf/metrics.hpp"

#include <algorithm>

#include "xlf/error.hpp"

namespace xlf {

double macro_f1(const std::vector<uint32_t>& gold, const std::vector<uint32_t>& pred,
                uint32_t n_classes) {
    if (gold.size() != pred.size())
        throw ValidationError("macro_f1: gold and pred lengths differ");
    if (gold.empty()) throw ValidationError("macro_f1: empty inputs");

    std::vector<size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
    for (size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= n_classes || pred[i] >= n_classes)
            throw ValidationError("macro_f1: label >= n_classes at position " + std::to_string(i));
        if (gold[i] == pred[i]) {
            ++tp[gold[i]];
        } else {
            ++fn[gold[i]];
            ++fp[pred[i]];
        }
    }

    double f1_sum = 0.0;
    for (uint32_t c = 0; c < n_classes; ++c) {
        const double precision =
            tp[c] + fp[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fp[c]);
        const double recall =
            tp[c] + fn[c] == 0 ? 0.0 : static_cast<double>(tp[c]) / static_cast<double>(tp[c] + fn[c]);
        const double f1 =
            precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        f1_sum += f1;
    }
    return f1_sum / static_cast<double>(n_classes);
}

void EpisodeTrace::validate() const {
    if (alpha_base.empty())
        throw ValidationError("episode trace needs at least one episode (T >= 2)");
    if (alpha_new.size() != alpha_base.size() || alpha_all.size() != alpha_base.size())
        throw ValidationError("episode trace: alpha vectors must have equal length");
    if (!(alpha_ideal > 0.0 && alpha_ideal <= 1.0))
        throw ValidationError("episode trace: alpha_ideal must be in (0,1]");
    auto in_unit = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return x >= 0.0 && x <= 1.0; });
    };
    if (!in_unit(alpha_base) || !in_unit(alpha_new) || !in_unit(alpha_all))
        throw ValidationError("episode trace: alpha values must be in [0,1]");
}

RetentionScores omega_scores(const EpisodeTrace& trace, bool cap) {
    if (trace.alpha_ideal == 0.0)
        throw ValidationError("omega_scores: alpha_ideal must be nonzero");
    trace.validate();

    const double n = static_cast<double>(trace.alpha_base.size());
    double sum_base = 0.0, sum_new = 0.0, sum_all = 0.0;
    for (size_t k = 0; k < trace.alpha_base.size(); ++k) {
        sum_base += trace.alpha_base[k] / trace.alpha_ideal;
        sum_new += trace.alpha_new[k];
        sum_all += trace.alpha_all[k] / trace.alpha_ideal;
    }

    RetentionScores s;
    s.omega_base = sum_base / n;
    s.omega_new = sum_new / n;
    s.omega_all = sum_all / n;
    s.capped = cap;
    if (cap) {
        s.omega_base = std::min(s.omega_base, 1.0);
        s.omega_new = std::min(s.omega_new, 1.0);
        s.omega_all = std::min(s.omega_all, 1.0);
    }
    return s;
}

void ChainTrace::validate() const {
    if (chain.size() < 2) throw ValidationError("chain trace: chain length must be >= 2");
    if (episode_scores.size() != chain.size() - 1)
        throw ValidationError("chain trace: expected " + std::to_string(chain.size() - 1) +
                              " episodes, got " + std::to_string(episode_scores.size()));
    for (size_t k = 0; k < episode_scores.size(); ++k) {
        if (episode_scores[k].size() != k + 2)
            throw ValidationError("chain trace: episode " + std::to_string(k + 2) +
                                  " must record exactly " + std::to_string(k + 2) + " scores");
        for (double x : episode_scores[k])
            if (x < 0.0 || x > 1.0)
                throw ValidationError("chain trace: scores must be in [0,1]");
    }
}

nlohmann::json ChainTrace::to_json() const {
    nlohmann::json episodes = nlohmann::json::array();
    for (size_t k = 0; k < episode_scores.size(); ++k) {
        episodes.push_back({{"index", k + 2},
                            {"tgt", chain[k + 1]},
                            {"scores", episode_scores[k]}});
    }
    return {{"chain", chain},
            {"alpha_ideal", alpha_ideal},
            {"episodes", episodes},
            {"regime", regime},
            {"tuning_mode", tuning_mode},
            {"seed", seed}};
}

ChainTrace ChainTrace::from_json(const nlohmann::json& j) {
    ChainTrace t;
    t.chain = j.at("chain").get<std::vector<std::string>>();
    t.alpha_ideal = j.at("alpha_ideal").get<double>();
    for (const auto& ep : j.at("episodes"))
        t.episode_scores.push_back(ep.at("scores").get<std::vector<double>>());
    t.regime = j.value("regime", "");
    t.tuning_mode = j.value("tuning_mode", "");
    t.seed = j.value("seed", uint64_t{0});
    t.validate();
    return t;
}

EpisodeTrace trace_from_chain(const ChainTrace& chain_trace, bool exclusive_all) {
    chain_trace.validate();
    EpisodeTrace t;
    t.alpha_ideal = chain_trace.alpha_ideal;
    for (const auto& scores : chain_trace.episode_scores) {
        t.alpha_base.push_back(scores.front());
        t.alpha_new.push_back(scores.back());
        const size_t n = exclusive_all ? scores.size() - 1 : scores.size();
        double sum = 0.0;
        for (size_t i = 0; i < n; ++i) sum += scores[i];
        t.alpha_all.push_back(sum / static_cast<double>(n));
    }
    return t;
}

} // namespace xlf
