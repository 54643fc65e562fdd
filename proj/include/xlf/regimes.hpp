#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xlf/corpus.hpp"
#include "xlf/model.hpp"
#include "xlf/optim.hpp"
#include "xlf/trace.hpp"

namespace xlf {

// The transfer strategies. CLV comes in two flavors: `valid` stops on the
// target validation split only; `valid_train` stops on target train+valid
// merged (and trains on source train+valid merged), which makes its
// document exposure identical to IT's.
enum class RegimeKind { zs, it, clv_valid, clv_valid_train };

std::string to_string(RegimeKind kind);
RegimeKind regime_from_string(const std::string& s);

struct TransferConfig {
    VectorizerConfig vec;
    OptimConfig optim;
};

struct TransferOutcome {
    ModelState final_state;
    double tgt_test_f1 = 0.0;
    double src_test_f1 = 0.0;
    std::vector<TrainReport> reports;     // one per training phase (IT has two)
    RegimeKind regime = RegimeKind::zs;
    TuningMode tuning_mode = TuningMode::full_tune;
    std::vector<AccessLog> phase_logs;    // documents touched per training phase
};

// Macro-F1 of the model's argmax predictions over a document list.
double evaluate_macro_f1(const ModelState& state, const std::vector<Document>& docs,
                         const VectorizerConfig& vec_cfg);

// Applies one transfer regime from `init_state`:
//   ZS               train on src.train/src.valid, never touch target data
//   IT               phase 1 as ZS, then phase 2 on tgt.train/tgt.valid
//   CLV (valid)      train on src.train, stop on tgt.valid
//   CLV (valid+train) train on src merged, stop on tgt merged
// The outcome carries test F1 on both the target and the source language.
TransferOutcome run_single_transfer(RegimeKind kind, ModelState init_state,
                                    const SplitDataset& src, const SplitDataset& tgt,
                                    const TransferConfig& cfgs);

// Signed percentage-point change on the source test set relative to the
// monolingual baseline: positive means improvement, negative forgetting.
double forgetting_delta(const TransferOutcome& outcome, double base_src_f1);

// Multiset of document ids a regime exposes during training+validation.
std::map<std::string, int> episode_exposure(RegimeKind kind, const SplitDataset& src,
                                            const SplitDataset& tgt);

// The comparability contract: IT and CLV(valid+train) must expose identical
// document multisets for the same (src, tgt) pair. Throws when violated.
void assert_it_clv_comparable(const SplitDataset& src, const SplitDataset& tgt);

struct ChainConfig {
    TransferConfig transfer;
    // When non-empty, a checkpoint is written after session 1 and after each
    // episode as <dir>/<prefix>_ep<i>.ckpt.
    std::filesystem::path checkpoint_dir;
    std::string checkpoint_prefix = "chain";
};

// Sequential multi-episode transfer: session 1 trains monolingually on
// chain[0] from a fresh init; episode i applies the regime with
// src = chain[i-1], tgt = chain[i], starting from the previous state.
// Only IT and CLV(valid+train) are valid chain regimes.
ChainTrace run_chain(RegimeKind kind, const ModelConfig& model_cfg,
                     const std::vector<std::string>& chain, const Corpus& datasets,
                     const ChainConfig& cfgs);

// Published chain orders, for users supplying the corresponding real data.
const std::map<std::string, std::vector<std::string>>& chain_presets();

} // namespace xlf
