#pragma once

#include <cstdint>
#include <vector>

#include "xlf/trace.hpp"

namespace xlf {

// Unweighted mean of per-class F1 over all n_classes classes. A class with
// no predicted and no actual support contributes F1 = 0.
double macro_f1(const std::vector<uint32_t>& gold, const std::vector<uint32_t>& pred,
                uint32_t n_classes);

// Per-episode retention values over T sessions. Index k of each vector holds
// the value for episode i = k + 2 (sessions 2..T).
struct EpisodeTrace {
    double alpha_ideal = 0.0;           // monolingual source test F1
    std::vector<double> alpha_base;     // source-language F1 after episode i
    std::vector<double> alpha_new;      // F1 on episode i's new language
    std::vector<double> alpha_all;      // mean F1 over all languages seen through i

    size_t sessions() const { return alpha_base.size() + 1; }
    void validate() const;
};

struct RetentionScores {
    double omega_base = 0.0;
    double omega_new = 0.0;
    double omega_all = 0.0;
    bool capped = false;
};

// Omega_base = mean_i alpha_base_i / alpha_ideal,
// Omega_new  = mean_i alpha_new_i (unnormalized),
// Omega_all  = mean_i alpha_all_i / alpha_ideal,
// each over i = 2..T. With cap, all three are clamped to <= 1.
RetentionScores omega_scores(const EpisodeTrace& trace, bool cap);

// alpha_all_i includes episode i's new language by default;
// `exclusive_all` restricts it to strictly-previous languages.
EpisodeTrace trace_from_chain(const ChainTrace& chain_trace, bool exclusive_all = false);

} // namespace xlf
