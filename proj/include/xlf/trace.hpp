#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xlf {

// Scores collected along one transfer chain. Session 1 trains monolingually
// on chain[0]; episode i (i >= 2) adapts to chain[i-1]. After episode i the
// current model is evaluated on the test split of every language seen so
// far, so episode i records exactly i scores, aligned with chain[0..i-1].
struct ChainTrace {
    std::vector<std::string> chain;
    double alpha_ideal = 0.0;                        // session-1 source test F1
    std::vector<std::vector<double>> episode_scores; // entry k = episode k+2

    // Provenance, carried into reports.
    std::string regime;
    std::string tuning_mode;
    uint64_t seed = 0;

    size_t sessions() const { return episode_scores.size() + 1; }
    void validate() const;

    nlohmann::json to_json() const;
    static ChainTrace from_json(const nlohmann::json& j);
};

} // namespace xlf
