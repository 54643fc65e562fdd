#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "xlf/cli.hpp"
#include "xlf/error.hpp"
#include "xlf/experiment.hpp"

using namespace xlf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "xlf_exp_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small, fast experiment used across these tests.
ExperimentConfig tiny_experiment(const fs::path& out) {
    ExperimentConfig cfg;
    CorpusSpec s = desk_corpus_spec();
    s.languages = {"en", "aa"};
    s.train_size = 80;
    s.valid_size = 20;
    s.test_size = 40;
    s.vocab_size = 400;
    s.doc_len_min = 8;
    s.doc_len_max = 16;
    cfg.corpus = s;
    cfg.vectorizer.dim = 512;
    cfg.encoder_dims = {24};
    cfg.adapter_bottleneck = 4;
    cfg.optim_overrides = {{"max_epochs", 5}, {"batch_size", 16}};
    cfg.seeds = {1234, 42};
    cfg.out_dir = out;
    return cfg;
}

nlohmann::json strip_timing(nlohmann::json j) {
    for (auto& p : j.at("phases")) {
        p.at("report").erase("time_per_epoch_seconds");
        p.at("report").erase("total_time_seconds");
    }
    return j;
}

} // namespace

TEST_CASE("config json round trip and validation") {
    const auto cfg = tiny_experiment("out");
    const auto j = cfg.to_json();
    const auto back = ExperimentConfig::from_json(j);
    CHECK(back.to_json().dump() == j.dump());
    CHECK_NOTHROW(back.validate());

    ExperimentConfig both = cfg;
    both.data = ExternalData{{"x.jsonl"}, 2};
    CHECK_THROWS_AS(both.validate(), ValidationError);
    ExperimentConfig neither = cfg;
    neither.corpus.reset();
    CHECK_THROWS_AS(neither.validate(), ValidationError);
    ExperimentConfig no_seeds = cfg;
    no_seeds.seeds.clear();
    CHECK_THROWS_AS(no_seeds.validate(), ValidationError);
}

TEST_CASE("dotted overrides reach nested scalar fields") {
    ExperimentConfig cfg = tiny_experiment("out");
    cfg.apply_override("optim.lr_peak", "0.002");
    CHECK(cfg.make_optim(1).lr_peak == doctest::Approx(0.002));
    cfg.apply_override("corpus.noise_rate", "0.25");
    CHECK(cfg.corpus->noise_rate == doctest::Approx(0.25));
    cfg.apply_override("vectorizer.dim", "1024");
    CHECK(cfg.vectorizer.dim == 1024);
    cfg.apply_override("tuning_mode", "adapter");
    CHECK(cfg.tuning_mode == TuningMode::adapter);
}

TEST_CASE("profiles and overrides compose") {
    ExperimentConfig cfg = tiny_experiment("out");
    cfg.profile = "paper";
    CHECK(cfg.make_optim(7).lr_peak == doctest::Approx(2e-5));
    CHECK(cfg.make_optim(7).max_epochs == 5);   // override still applies
    CHECK(cfg.make_optim(7).seed == 7);
    cfg.profile = "desk";
    CHECK(cfg.make_optim(7).lr_peak == doctest::Approx(5e-3));
}

TEST_CASE("run experiment writes results, checkpoints, and a manifest") {
    const auto out = fresh_dir("run1");
    ExperimentConfig cfg = tiny_experiment(out);
    cfg.regimes = {RegimeKind::zs, RegimeKind::it};
    const RunArtifacts art = run_experiment(cfg);

    CHECK(fs::exists(art.results_csv));
    CHECK(fs::exists(art.manifest_path));

    // 2 regimes x 1 target x 2 seeds x 3 metrics + 2 base rows = 14 per-seed
    // rows, plus mean/std per (regime, language, metric) group: 7 groups.
    size_t per_seed = 0, mean_rows = 0, std_rows = 0;
    for (const auto& r : art.table.rows) {
        if (r.seed == "mean") ++mean_rows;
        else if (r.seed == "std") ++std_rows;
        else ++per_seed;
    }
    CHECK(per_seed == 14);
    CHECK(mean_rows == 7);
    CHECK(std_rows == 7);
    CHECK_NOTHROW(art.table.validate_aggregates());

    // Checkpoints named per (regime, mode, target, seed).
    CHECK(fs::exists(out / "run_zs_full_tune_aa_s1234.ckpt"));
    CHECK(fs::exists(out / "run_it_full_tune_aa_s42.ckpt"));

    // Manifest digests verify against the files on disk.
    const RunManifest m = load_manifest(art.manifest_path);
    CHECK(m.seeds == cfg.seeds);
    // mono(1 phase) + zs(1) + it(2) per seed = 4 phases x 2 seeds.
    CHECK(m.phases.size() == 8);
}

TEST_CASE("identical runs produce identical csv and checkpoints") {
    const auto out1 = fresh_dir("det1");
    const auto out2 = fresh_dir("det2");
    ExperimentConfig c1 = tiny_experiment(out1);
    ExperimentConfig c2 = tiny_experiment(out2);
    const auto a1 = run_experiment(c1);
    const auto a2 = run_experiment(c2);
    CHECK(slurp(a1.results_csv) == slurp(a2.results_csv));
    CHECK(slurp(out1 / "run_it_full_tune_aa_s42.ckpt") ==
          slurp(out2 / "run_it_full_tune_aa_s42.ckpt"));

    // Manifests match except wall-clock timing fields.
    auto j1 = strip_timing(nlohmann::json::parse(slurp(a1.manifest_path)));
    auto j2 = strip_timing(nlohmann::json::parse(slurp(a2.manifest_path)));
    j1.erase("config");
    j2.erase("config");   // configs differ only in out_dir
    j1.erase("outputs");
    j2.erase("outputs");
    CHECK(j1.dump() == j2.dump());
}

TEST_CASE("chain experiment emits traces, omega and retention tables") {
    const auto out = fresh_dir("chain1");
    ExperimentConfig cfg = tiny_experiment(out);
    cfg.corpus->languages = {"en", "aa", "bb"};
    cfg.chain = {"en", "aa", "bb"};
    cfg.seeds = {1234};
    cfg.regimes = {RegimeKind::it, RegimeKind::clv_valid_train};
    const ChainArtifacts art = chain_experiment(cfg);

    CHECK(art.traces.size() == 2);
    CHECK(fs::exists(art.omega_csv));
    CHECK(fs::exists(art.retention_csv));
    CHECK(fs::exists(out / "trace_chain_it_full_tune_s1234.json"));
    CHECK(fs::exists(out / "chain_it_full_tune_s1234_ep1.ckpt"));
    CHECK(fs::exists(out / "chain_it_full_tune_s1234_ep3.ckpt"));
    CHECK(fs::exists(out / "chain_clv-merged_full_tune_s1234_ep2.ckpt"));

    // Retention rows: episode 2 scores 2 langs, episode 3 scores 3.
    size_t retention_rows = 0;
    for (const auto& r : art.retention_table.rows)
        if (r.seed == "1234" && r.regime == "it") ++retention_rows;
    CHECK(retention_rows == 5);

    // Omega values recomputed from the persisted trace agree exactly.
    const ChainTrace t = load_trace(out / "trace_chain_it_full_tune_s1234.json");
    const auto om = omega_scores(trace_from_chain(t), cfg.cap_omega);
    for (const auto& r : art.omega_table.rows) {
        if (r.seed != "1234" || r.regime != "it") continue;
        if (r.metric == "omega_base") CHECK(r.value == om.omega_base);
        if (r.metric == "omega_new") CHECK(r.value == om.omega_new);
        if (r.metric == "omega_all") CHECK(r.value == om.omega_all);
    }
}

TEST_CASE("stats experiment matches direct computation") {
    ExperimentConfig cfg = tiny_experiment(fresh_dir("stats1"));
    const auto stats = stats_experiment(cfg);
    REQUIRE(stats.size() == 2);
    CHECK(stats[0].lang == "en");
    CHECK(stats[0].instances == 140);
    CHECK(stats[0].max_support == doctest::Approx(50.0));

    const auto dir = fresh_dir("stats2");
    write_stats_csv(stats, "synthetic", dir / "stats.csv");
    const auto text = slurp(dir / "stats.csv");
    CHECK(text.find("dataset,lang,instances,mean_len,n_classes,max_support,min_support") == 0);
    CHECK(text.find("synthetic,en,140,") != std::string::npos);
}

TEST_CASE("gen-data writes loadable jsonl corpora") {
    const auto out = fresh_dir("gen1");
    ExperimentConfig cfg = tiny_experiment(out);
    const auto paths = gen_data(cfg);
    REQUIRE(paths.size() == 2);
    const SplitDataset ds = load_jsonl(paths[0], cfg.corpus->n_classes);
    CHECK(ds.lang == "en");
    CHECK(ds.train.size() == 80);
    CHECK(ds.valid.size() == 20);
    CHECK(ds.test.size() == 40);
}

TEST_CASE("external data config runs end to end") {
    const auto data_dir = fresh_dir("ext_data");
    ExperimentConfig gen_cfg = tiny_experiment(data_dir);
    const auto paths = gen_data(gen_cfg);

    ExperimentConfig cfg = tiny_experiment(fresh_dir("ext_out"));
    cfg.corpus.reset();
    ExternalData d;
    for (const auto& p : paths) d.paths.push_back(p.string());
    d.n_classes = 2;
    cfg.data = d;
    cfg.regimes = {RegimeKind::zs};
    cfg.seeds = {7};
    const auto art = run_experiment(cfg);
    bool saw_zs = false;
    for (const auto& r : art.table.rows)
        if (r.regime == "zs" && r.metric == "tgt_test_f1" && r.seed == "7") saw_zs = true;
    CHECK(saw_zs);
}

TEST_CASE("seed fan-out under XLF_THREADS matches sequential output") {
    const auto out_seq = fresh_dir("threads_seq");
    const auto out_par = fresh_dir("threads_par");
    ExperimentConfig seq = tiny_experiment(out_seq);
    ExperimentConfig par = tiny_experiment(out_par);
    seq.seeds = {1234, 1903, 42};
    par.seeds = {1234, 1903, 42};

    const auto a = run_experiment(seq);
    setenv("XLF_THREADS", "3", 1);
    CHECK(worker_limit() == 3);
    const auto b = run_experiment(par);
    unsetenv("XLF_THREADS");
    CHECK(worker_limit() == 1);
    CHECK(slurp(a.results_csv) == slurp(b.results_csv));

    setenv("XLF_THREADS", "banana", 1);
    CHECK(worker_limit() == 1);
    unsetenv("XLF_THREADS");
}

TEST_CASE("bare corpus-spec json is accepted as a config") {
    const auto j = nlohmann::json{{"languages", {"en", "aa"}},
                                  {"n_classes", 2},
                                  {"vocab_size", 300},
                                  {"cipher_overlap", 0.5}};
    const auto cfg = ExperimentConfig::from_json(j);
    REQUIRE(cfg.corpus.has_value());
    CHECK(cfg.corpus->languages == std::vector<std::string>{"en", "aa"});
    CHECK(cfg.corpus->vocab_size == 300);
    CHECK(cfg.corpus->cipher_overlap == doctest::Approx(0.5));
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("timing aggregation has the documented columns") {
    const auto out = fresh_dir("timing1");
    ExperimentConfig cfg = tiny_experiment(out);
    cfg.regimes = {RegimeKind::zs, RegimeKind::it};
    cfg.seeds = {1234};
    run_experiment(cfg);

    const auto rows = aggregate_timings(out);
    CHECK(rows.size() == 3);   // mono, zs, it
    for (const auto& r : rows) {
        CHECK(r.avg_epochs > 0.0);
        CHECK(r.avg_total_time_s >= 0.0);
    }
    write_timing_csv(rows, out / "timing.csv");
    const auto text = slurp(out / "timing.csv");
    CHECK(text.find("regime,mode,avg_epochs,avg_time_per_epoch_s,avg_total_time_s") == 0);
}

TEST_CASE("retention svg renders the three alpha series") {
    ChainTrace t;
    t.chain = {"en", "aa", "bb"};
    t.alpha_ideal = 0.9;
    t.episode_scores = {{0.85, 0.8}, {0.7, 0.65, 0.9}};
    t.regime = "it";
    t.tuning_mode = "full_tune";
    t.seed = 42;
    const auto out = fresh_dir("svg1");
    write_retention_svg(t, out / "retention.svg");
    const auto svg = slurp(out / "retention.svg");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("alpha_base") != std::string::npos);
    CHECK(svg.find("alpha_new") != std::string::npos);
    CHECK(svg.find("alpha_all") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("cli subcommands wire up and report exit codes") {
    const auto dir = fresh_dir("cli1");
    const auto cfg_path = dir / "config.json";
    ExperimentConfig cfg = tiny_experiment(dir / "out");
    {
        std::ofstream out(cfg_path);
        out << cfg.to_json().dump(2);
    }

    CHECK(run_cli({"stats", "--config", cfg_path.string()}) == 0);
    CHECK(run_cli({"gen-data", "--config", cfg_path.string(), "--out",
                   (dir / "data").string()}) == 0);
    CHECK(run_cli({"run", "--config", cfg_path.string(), "--regime", "zs", "--seed", "7",
                   "--out", (dir / "run_out").string()}) == 0);
    CHECK(fs::exists(dir / "run_out" / "results.csv"));

    // Validation problems exit 1.
    CHECK(run_cli({"run", "--config", (dir / "missing.json").string()}) == 1);
    CHECK(run_cli({"metrics", (dir / "missing_trace.json").string()}) == 2);
    CHECK(run_cli({"run"}) == 1);   // missing required --config

    // A handcrafted trace reproduces the documented omega printout.
    ChainTrace t;
    t.chain = {"en", "aa", "bb"};
    t.alpha_ideal = 0.8;
    t.episode_scores = {{0.72, 0.5}, {0.64, 0.5, 0.5}};
    save_trace(t, dir / "trace.json");
    auto capture_cli = [](const std::vector<std::string>& args) {
        std::ostringstream captured;
        auto* old = std::cout.rdbuf(captured.rdbuf());
        const int code = run_cli(args);
        std::cout.rdbuf(old);
        return std::make_pair(code, captured.str());
    };
    auto [code, text] = capture_cli({"metrics", (dir / "trace.json").string()});
    CHECK(code == 0);
    CHECK(text.find("Omega_base = 85.00") != std::string::npos);

    // Above-ideal retention is clamped unless --no-cap is given.
    ChainTrace over = t;
    over.alpha_ideal = 0.5;
    over.episode_scores = {{0.6, 0.5}, {0.55, 0.5, 0.5}};
    save_trace(over, dir / "over.json");
    auto [c1, capped] = capture_cli({"metrics", (dir / "over.json").string()});
    CHECK(c1 == 0);
    CHECK(capped.find("Omega_base = 100.00") != std::string::npos);
    auto [c2, uncapped] = capture_cli({"metrics", (dir / "over.json").string(), "--no-cap"});
    CHECK(c2 == 0);
    CHECK(uncapped.find("Omega_base = 115.00") != std::string::npos);

    CHECK(run_cli({"report", "--out", (dir / "run_out").string()}) == 0);
    CHECK(fs::exists(dir / "run_out" / "timing.csv"));
}
