#include "xlf/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "xlf/error.hpp"
#include "xlf/experiment.hpp"

namespace xlf {

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<uint64_t> seeds;
    std::string out_dir;
    std::string profile;
    std::vector<std::string> regimes;
    std::string mode;
    std::string chain;
    std::vector<std::string> sets;   // dotted-path overrides key=value
    bool cap = true;
    CLI::Option* cap_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required = true) {
    auto* opt = cmd->add_option("--config", f.config_path, "experiment config (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--seed", f.seeds, "training seed (repeatable, replaces config seeds)");
    cmd->add_option("--out", f.out_dir, "output directory");
    cmd->add_option("--profile", f.profile, "optimizer profile: paper|desk");
    cmd->add_option("--regime", f.regimes, "regime: zs|it|clv-valid|clv-merged (repeatable)");
    cmd->add_option("--mode", f.mode, "tuning mode: full|adapter");
    cmd->add_option("--chain", f.chain, "chain preset name or lang,lang,...");
    cmd->add_option("--set", f.sets, "override a scalar config field: dotted.path=value");
    f.cap_opt = cmd->add_flag("--cap,!--no-cap", f.cap, "cap omega scores at 100");
}

ExperimentConfig make_config(const CommonFlags& f) {
    ExperimentConfig cfg = load_experiment_config(f.config_path);
    if (!f.seeds.empty()) cfg.seeds = f.seeds;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.profile.empty()) cfg.profile = f.profile;
    if (!f.regimes.empty()) {
        cfg.regimes.clear();
        for (const auto& r : f.regimes) cfg.regimes.push_back(regime_from_string(r));
    }
    if (!f.mode.empty()) cfg.tuning_mode = tuning_mode_from_string(f.mode);
    if (!f.chain.empty()) {
        const auto& presets = chain_presets();
        auto it = presets.find(f.chain);
        if (it != presets.end()) {
            cfg.chain = it->second;
        } else {
            cfg.chain.clear();
            std::string item;
            std::stringstream ss(f.chain);
            while (std::getline(ss, item, ',')) cfg.chain.push_back(item);
        }
    }
    for (const auto& kv : f.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects dotted.path=value, got '" + kv + "'");
        cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (f.cap_opt && f.cap_opt->count() > 0) cfg.cap_omega = f.cap;
    cfg.validate();
    return cfg;
}

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

int cmd_gen_data(const CommonFlags& f) {
    const ExperimentConfig cfg = make_config(f);
    for (const auto& p : gen_data(cfg)) std::cout << "wrote " << p.string() << "\n";
    return 0;
}

int cmd_run(const CommonFlags& f) {
    const ExperimentConfig cfg = make_config(f);
    const RunArtifacts art = run_experiment(cfg);
    std::cout << "wrote " << art.results_csv.string() << "\n"
              << "wrote " << art.manifest_path.string() << "\n";
    for (const auto& r : art.table.rows)
        if (r.seed == "mean" && r.metric == "tgt_test_f1")
            std::cout << r.regime << " " << r.language << " tgt_test_f1 mean = " << pct(r.value)
                      << "\n";
    return 0;
}

int cmd_chain(const CommonFlags& f) {
    ExperimentConfig cfg = make_config(f);
    if (cfg.chain.empty() && cfg.corpus) cfg.chain = cfg.corpus->languages;
    // Chains support only the two full-regime strategies; default to both so
    // the comparison the harness is meant to produce comes out of one run.
    std::vector<RegimeKind> chain_regimes;
    for (RegimeKind r : cfg.regimes)
        if (r == RegimeKind::it || r == RegimeKind::clv_valid_train) chain_regimes.push_back(r);
    if (chain_regimes.empty())
        chain_regimes = {RegimeKind::it, RegimeKind::clv_valid_train};
    cfg.regimes = chain_regimes;

    const ChainArtifacts art = chain_experiment(cfg);
    std::cout << "wrote " << art.omega_csv.string() << "\n"
              << "wrote " << art.retention_csv.string() << "\n"
              << "wrote " << art.manifest_path.string() << "\n";

    // Mean alpha_new and omega_base per regime, for a direct comparison.
    for (RegimeKind r : cfg.regimes) {
        const std::string reg = to_string(r);
        double sum_new = 0.0, sum_base = 0.0;
        size_t n = 0;
        for (const auto& t : art.traces) {
            if (t.regime != reg) continue;
            const EpisodeTrace et = trace_from_chain(t, cfg.exclusive_all);
            const RetentionScores om = omega_scores(et, cfg.cap_omega);
            double mean_new = 0.0;
            for (double a : et.alpha_new) mean_new += a;
            sum_new += mean_new / static_cast<double>(et.alpha_new.size());
            sum_base += om.omega_base;
            ++n;
        }
        if (n == 0) continue;
        std::cout << reg << ": mean alpha_new = " << pct(sum_new / static_cast<double>(n))
                  << ", Omega_base = " << pct(sum_base / static_cast<double>(n)) << "\n";
    }
    return 0;
}

int cmd_stats(const CommonFlags& f) {
    const ExperimentConfig cfg = make_config(f);
    const auto stats = stats_experiment(cfg);
    std::printf("%-10s %-6s %10s %10s %8s %12s %12s\n", "dataset", "lang", "instances",
                "mean_len", "classes", "max_support", "min_support");
    for (const auto& st : stats)
        std::printf("%-10s %-6s %10zu %10.2f %8u %12.2f %12.2f\n", cfg.dataset_name.c_str(),
                    st.lang.c_str(), st.instances, st.mean_len, st.n_classes, st.max_support,
                    st.min_support);
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "stats.csv";
    write_stats_csv(stats, cfg.dataset_name, path);
    std::cout << "wrote " << path.string() << "\n";
    return 0;
}

int cmd_metrics(const std::string& trace_path, bool cap, bool exclusive_all) {
    const ChainTrace trace = load_trace(trace_path);
    const EpisodeTrace et = trace_from_chain(trace, exclusive_all);
    const RetentionScores om = omega_scores(et, cap);
    std::cout << "Omega_base = " << pct(om.omega_base) << "\n"
              << "Omega_new = " << pct(om.omega_new) << "\n"
              << "Omega_all = " << pct(om.omega_all) << "\n";
    return 0;
}

int cmd_report(const std::string& dir) {
    const std::filesystem::path out(dir);
    if (!std::filesystem::exists(out))
        throw ValidationError("report: directory does not exist: " + dir);

    const auto timings = aggregate_timings(out);
    const auto timing_path = out / "timing.csv";
    write_timing_csv(timings, timing_path);
    std::cout << "wrote " << timing_path.string() << "\n";

    std::vector<std::filesystem::path> traces;
    for (const auto& e : std::filesystem::directory_iterator(out)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.rfind("trace_", 0) == 0 && name.size() > 11 &&
            name.compare(name.size() - 5, 5, ".json") == 0)
            traces.push_back(e.path());
    }
    std::sort(traces.begin(), traces.end());
    for (const auto& tp : traces) {
        const ChainTrace trace = load_trace(tp);
        auto svg = tp;
        svg.replace_extension(".svg");
        svg = svg.parent_path() / ("retention_" + svg.filename().string().substr(6));
        write_retention_svg(trace, svg);
        std::cout << "wrote " << svg.string() << "\n";
    }
    return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"cross-lingual transfer and forgetting harness"};
    app.require_subcommand(1);

    CommonFlags gen_f, run_f, chain_f, stats_f;
    std::string trace_path, report_dir;
    bool cap = true, exclusive_all = false;

    add_common(app.add_subcommand("gen-data", "write synthetic corpora as JSONL"), gen_f);
    add_common(app.add_subcommand("run", "single transfers: regimes x targets x seeds"), run_f);
    add_common(app.add_subcommand("chain", "sequential multi-episode transfer"), chain_f);
    add_common(app.add_subcommand("stats", "dataset statistics table"), stats_f);

    auto* metrics = app.add_subcommand("metrics", "recompute omega scores from a stored trace");
    metrics->add_option("trace", trace_path, "chain trace JSON file")->required();
    metrics->add_flag("--cap,!--no-cap", cap, "cap omega scores at 100 (default on)");
    metrics->add_flag("--exclusive-all", exclusive_all,
                      "alpha_all over strictly-previous languages only");

    auto* report = app.add_subcommand("report", "timing CSV and retention SVG charts");
    report->add_option("--out", report_dir, "directory with run/chain outputs")->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_f);
        if (app.got_subcommand("run")) return cmd_run(run_f);
        if (app.got_subcommand("chain")) return cmd_chain(chain_f);
        if (app.got_subcommand("stats")) return cmd_stats(stats_f);
        if (app.got_subcommand("metrics")) return cmd_metrics(trace_path, cap, exclusive_all);
        if (app.got_subcommand("report")) return cmd_report(report_dir);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace xlf
