#include "xlf/regimes.hpp"

#include <algorithm>

#include "xlf/error.hpp"
#include "xlf/metrics.hpp"
#include "xlf/persistence.hpp"

namespace xlf {

std::string to_string(RegimeKind kind) {
    switch (kind) {
        case RegimeKind::zs: return "zs";
        case RegimeKind::it: return "it";
        case RegimeKind::clv_valid: return "clv-valid";
        case RegimeKind::clv_valid_train: return "clv-merged";
    }
    return "?";
}

RegimeKind regime_from_string(const std::string& s) {
    if (s == "zs") return RegimeKind::zs;
    if (s == "it") return RegimeKind::it;
    if (s == "clv-valid") return RegimeKind::clv_valid;
    if (s == "clv-merged" || s == "clv-valid-train") return RegimeKind::clv_valid_train;
    throw ValidationError("unknown regime '" + s + "' (expected zs|it|clv-valid|clv-merged)");
}

double evaluate_macro_f1(const ModelState& state, const std::vector<Document>& docs,
                         const VectorizerConfig& vec_cfg) {
    if (docs.empty()) throw ValidationError("evaluate_macro_f1: empty document list");
    std::vector<uint32_t> gold, pred;
    gold.reserve(docs.size());
    pred.reserve(docs.size());
    for (const auto& d : docs) {
        const auto probs = forward(state, vectorize(vec_cfg, d.text));
        const auto arg = static_cast<uint32_t>(
            std::max_element(probs.begin(), probs.end()) - probs.begin());
        gold.push_back(d.label);
        pred.push_back(arg);
    }
    return macro_f1(gold, pred, state.cfg.n_classes);
}

namespace {

void note_docs(std::map<std::string, int>& multiset, const std::vector<Document>& docs) {
    for (const auto& d : docs) ++multiset[d.id];
}

// Training must never see a test document; checked against the access log
// of every finished phase.
void assert_no_test_reads(const AccessLog& log, const SplitDataset& src,
                          const SplitDataset& tgt) {
    for (const auto* ds : {&src, &tgt})
        for (const auto& d : ds->test)
            if (log.contains(d.id))
                throw std::logic_error("regime read test document '" + d.id +
                                       "' during training");
}

struct Phase {
    TrainResult result;
    AccessLog log;
};

Phase run_phase(ModelState state, const std::vector<Document>& train_docs,
                const std::vector<Document>& valid_docs, const TransferConfig& cfgs) {
    Phase p;
    DocView tr(train_docs, &p.log);
    DocView va(valid_docs, &p.log);
    p.result = train(std::move(state), tr, va, cfgs.vec, cfgs.optim);
    return p;
}

} // namespace

std::map<std::string, int> episode_exposure(RegimeKind kind, const SplitDataset& src,
                                            const SplitDataset& tgt) {
    std::map<std::string, int> m;
    switch (kind) {
        case RegimeKind::zs:
            note_docs(m, src.train);
            note_docs(m, src.valid);
            break;
        case RegimeKind::it:
            note_docs(m, src.train);
            note_docs(m, src.valid);
            note_docs(m, tgt.train);
            note_docs(m, tgt.valid);
            break;
        case RegimeKind::clv_valid:
            note_docs(m, src.train);
            note_docs(m, tgt.valid);
            break;
        case RegimeKind::clv_valid_train:
            note_docs(m, src.train);
            note_docs(m, src.valid);
            note_docs(m, tgt.train);
            note_docs(m, tgt.valid);
            break;
    }
    return m;
}

void assert_it_clv_comparable(const SplitDataset& src, const SplitDataset& tgt) {
    const auto it_docs = episode_exposure(RegimeKind::it, src, tgt);
    const auto clv_docs = episode_exposure(RegimeKind::clv_valid_train, src, tgt);
    if (it_docs != clv_docs)
        throw std::logic_error(
            "comparability contract violated: IT and CLV(valid+train) expose different "
            "document multisets for src=" + src.lang + " tgt=" + tgt.lang);
}

TransferOutcome run_single_transfer(RegimeKind kind, ModelState init_state,
                                    const SplitDataset& src, const SplitDataset& tgt,
                                    const TransferConfig& cfgs) {
    if (src.n_classes != tgt.n_classes)
        throw ValidationError("run_single_transfer: class counts differ (" + src.lang + "=" +
                              std::to_string(src.n_classes) + ", " + tgt.lang + "=" +
                              std::to_string(tgt.n_classes) + ")");
    if (kind == RegimeKind::it || kind == RegimeKind::clv_valid_train)
        assert_it_clv_comparable(src, tgt);

    TransferOutcome out;
    out.regime = kind;
    out.tuning_mode = init_state.cfg.tuning_mode;

    ModelState state = std::move(init_state);
    switch (kind) {
        case RegimeKind::zs: {
            Phase p = run_phase(std::move(state), src.train, src.valid, cfgs);
            state = std::move(p.result.state);
            out.reports.push_back(p.result.report);
            out.phase_logs.push_back(std::move(p.log));
            break;
        }
        case RegimeKind::it: {
            Phase p1 = run_phase(std::move(state), src.train, src.valid, cfgs);
            out.reports.push_back(p1.result.report);
            out.phase_logs.push_back(std::move(p1.log));
            Phase p2 = run_phase(std::move(p1.result.state), tgt.train, tgt.valid, cfgs);
            state = std::move(p2.result.state);
            out.reports.push_back(p2.result.report);
            out.phase_logs.push_back(std::move(p2.log));
            break;
        }
        case RegimeKind::clv_valid: {
            Phase p = run_phase(std::move(state), src.train, tgt.valid, cfgs);
            state = std::move(p.result.state);
            out.reports.push_back(p.result.report);
            out.phase_logs.push_back(std::move(p.log));
            break;
        }
        case RegimeKind::clv_valid_train: {
            const auto src_merged = merge_train_valid(src);
            const auto tgt_merged = merge_train_valid(tgt);
            Phase p = run_phase(std::move(state), src_merged, tgt_merged, cfgs);
            state = std::move(p.result.state);
            out.reports.push_back(p.result.report);
            out.phase_logs.push_back(std::move(p.log));
            break;
        }
    }
    for (const auto& log : out.phase_logs) assert_no_test_reads(log, src, tgt);

    state.meta.history.push_back({to_string(kind), src.lang, tgt.lang});
    out.tgt_test_f1 = evaluate_macro_f1(state, tgt.test, cfgs.vec);
    out.src_test_f1 = evaluate_macro_f1(state, src.test, cfgs.vec);
    out.final_state = std::move(state);
    return out;
}

double forgetting_delta(const TransferOutcome& outcome, double base_src_f1) {
    if (base_src_f1 < 0.0 || base_src_f1 > 1.0)
        throw ValidationError("forgetting_delta: base_src_f1 must be in [0,1]");
    return 100.0 * (outcome.src_test_f1 - base_src_f1);
}

ChainTrace run_chain(RegimeKind kind, const ModelConfig& model_cfg,
                     const std::vector<std::string>& chain, const Corpus& datasets,
                     const ChainConfig& cfgs) {
    if (kind != RegimeKind::it && kind != RegimeKind::clv_valid_train)
        throw ValidationError("run_chain: regime must be it or clv-merged");
    if (chain.size() < 2) throw ValidationError("run_chain: chain length must be >= 2");
    for (const auto& lang : chain)
        if (datasets.find(lang) == datasets.end())
            throw ValidationError("run_chain: unknown language '" + lang + "' in chain");

    const auto& cls = datasets.at(chain[0]).n_classes;
    for (const auto& lang : chain)
        if (datasets.at(lang).n_classes != cls)
            throw ValidationError("run_chain: class counts differ across chain languages");

    ChainTrace trace;
    trace.chain = chain;
    trace.regime = to_string(kind);
    trace.tuning_mode = to_string(model_cfg.tuning_mode);
    trace.seed = cfgs.transfer.optim.seed;

    auto checkpoint = [&](const ModelState& state, size_t session) {
        if (cfgs.checkpoint_dir.empty()) return;
        const auto path = cfgs.checkpoint_dir /
                          (cfgs.checkpoint_prefix + "_ep" + std::to_string(session) + ".ckpt");
        save_checkpoint(state, path);
    };

    // Session 1: monolingual training on the chain head.
    const SplitDataset& source = datasets.at(chain[0]);
    Phase p1 = run_phase(init_model(model_cfg, cfgs.transfer.optim.seed), source.train,
                         source.valid, cfgs.transfer);
    assert_no_test_reads(p1.log, source, source);
    ModelState state = std::move(p1.result.state);
    state.meta.history.push_back({"mono", source.lang, source.lang});
    trace.alpha_ideal = evaluate_macro_f1(state, source.test, cfgs.transfer.vec);
    checkpoint(state, 1);

    for (size_t i = 2; i <= chain.size(); ++i) {
        const SplitDataset& src = datasets.at(chain[i - 2]);
        const SplitDataset& tgt = datasets.at(chain[i - 1]);
        TransferOutcome outcome = run_single_transfer(kind, std::move(state), src, tgt,
                                                      cfgs.transfer);
        state = std::move(outcome.final_state);

        std::vector<double> scores;
        scores.reserve(i);
        for (size_t j = 0; j < i; ++j)
            scores.push_back(evaluate_macro_f1(state, datasets.at(chain[j]).test,
                                               cfgs.transfer.vec));
        trace.episode_scores.push_back(std::move(scores));
        checkpoint(state, i);
    }
    trace.validate();
    return trace;
}

const std::map<std::string, std::vector<std::string>>& chain_presets() {
    static const std::map<std::string, std::vector<std::string>> presets{
        {"hatespeech", {"en", "ge", "sl", "hr", "ar"}},
        {"reviews", {"en", "ge", "fr", "jp"}},
        {"slu", {"en", "es", "th"}},
        {"xglue", {"en", "de", "es", "fr", "ru"}},
    };
    return presets;
}

} // namespace xlf
