#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "xlf/error.hpp"
#include "xlf/persistence.hpp"
#include "xlf/rng.hpp"

using namespace xlf;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "xlf_persist_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig small_cfg() {
    ModelConfig cfg;
    cfg.input_dim = 32;
    cfg.encoder_dims = {12, 6};
    cfg.adapter_bottleneck = 3;
    cfg.n_classes = 4;
    return cfg;
}

FeatureVector random_sparse(uint32_t dim, Rng& rng) {
    FeatureVector x;
    x.dim = dim;
    std::map<uint32_t, double> e;
    for (int i = 0; i < 5; ++i) e[static_cast<uint32_t>(rng.below(dim))] = 1.0;
    x.entries.assign(e.begin(), e.end());
    return x;
}

} // namespace

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("file digest matches the in-memory digest") {
    const auto path = temp_dir() / "digest.bin";
    const std::string payload = "the quick brown fox\n\x00\x01\x02";
    atomic_write_file(path, payload);
    CHECK(sha256_hex_file(path) == sha256_hex(payload));
}

TEST_CASE("checkpoint roundtrip preserves forward outputs bitwise") {
    const ModelConfig cfg = small_cfg();
    ModelState state = init_model(cfg, 99);
    state.meta.history.push_back({"it", "en", "aa"});
    // Perturb all parameters so we are not checking a freshly seeded state.
    Rng rng(1);
    for (auto& view : all_views(state))
        for (double& w : view) w += rng.uniform(-1.0, 1.0);

    const auto path = temp_dir() / "roundtrip.ckpt";
    save_checkpoint(state, path);
    const ModelState loaded = load_checkpoint(path);

    CHECK(loaded.meta.seed == state.meta.seed);
    CHECK(loaded.meta.config_hash == state.meta.config_hash);
    REQUIRE(loaded.meta.history.size() == 1);
    CHECK(loaded.meta.history[0].regime == "it");

    Rng inputs(2);
    for (int rep = 0; rep < 100; ++rep) {
        const auto x = random_sparse(cfg.input_dim, inputs);
        const auto a = forward(state, x);
        const auto b = forward(loaded, x);
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("checkpoint error kinds are distinct") {
    const ModelConfig cfg = small_cfg();
    const ModelState state = init_model(cfg, 4);
    const auto dir = temp_dir();
    const auto path = dir / "errors.ckpt";
    save_checkpoint(state, path);
    const std::string good = slurp(path);

    SUBCASE("truncation") {
        const auto p = dir / "truncated.ckpt";
        atomic_write_file(p, good.substr(0, good.size() - 1));
        try {
            load_checkpoint(p);
            FAIL("expected truncation error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::truncated);
        }
    }
    SUBCASE("bad magic") {
        std::string bad = good;
        bad[0] = 'Y';
        const auto p = dir / "magic.ckpt";
        atomic_write_file(p, bad);
        try {
            load_checkpoint(p);
            FAIL("expected magic error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::bad_magic);
        }
    }
    SUBCASE("version mismatch") {
        std::string bad = good;
        bad[4] = 9;
        const auto p = dir / "version.ckpt";
        atomic_write_file(p, bad);
        try {
            load_checkpoint(p);
            FAIL("expected version error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::version_mismatch);
        }
    }
    SUBCASE("config hash guard on load") {
        ModelConfig other = cfg;
        other.encoder_dims = {12, 7};
        try {
            load_checkpoint(path, other);
            FAIL("expected hash error");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointError::Kind::hash_mismatch);
        }
        CHECK_NOTHROW(load_checkpoint(path, cfg));
    }
}

TEST_CASE("save is atomic under injected failure") {
    const auto dir = temp_dir() / "atomic";
    fs::remove_all(dir);
    const auto path = dir / "never.ckpt";
    const ModelState state = init_model(small_cfg(), 4);
    SaveOptions opts;
    opts.fail_before_rename_for_test = true;
    CHECK_THROWS_AS(save_checkpoint(state, path, opts), IoError);
    CHECK(!fs::exists(path));
    // No stray temp file is left behind either.
    size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        (void)e;
        ++files;
    }
    CHECK(files == 0);
}

TEST_CASE("checkpoint bytes are deterministic") {
    const ModelState state = init_model(small_cfg(), 123);
    const auto dir = temp_dir();
    save_checkpoint(state, dir / "a.ckpt");
    save_checkpoint(state, dir / "b.ckpt");
    CHECK(slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt"));
}

TEST_CASE("results table aggregates and canonical order") {
    ResultsTable t;
    t.add("synthetic", "full_tune", "it", "aa", "tgt_test_f1", 1234, 0.90);
    t.add("synthetic", "full_tune", "it", "aa", "tgt_test_f1", 42, 0.80);
    t.add("synthetic", "full_tune", "it", "aa", "tgt_test_f1", 1903, 0.70);
    t.add_aggregates();
    CHECK_NOTHROW(t.validate_aggregates());

    REQUIRE(t.rows.size() == 5);
    // Numeric seeds ascend, then mean, then std.
    CHECK(t.rows[0].seed == "42");
    CHECK(t.rows[1].seed == "1234");
    CHECK(t.rows[2].seed == "1903");
    CHECK(t.rows[3].seed == "mean");
    CHECK(t.rows[4].seed == "std");
    CHECK(t.rows[3].value == doctest::Approx(0.8));
    CHECK(t.rows[4].value == doctest::Approx(0.1));

    t.rows[3].value = 0.5;   // corrupt the mean
    CHECK_THROWS(t.validate_aggregates());
}

TEST_CASE("results csv formatting") {
    const auto dir = temp_dir();
    SUBCASE("empty table gives a header-only file") {
        ResultsTable t;
        write_results_csv(t, dir / "empty.csv");
        CHECK(slurp(dir / "empty.csv") ==
              "dataset,tuning_mode,regime,language,metric,seed,value\n");
    }
    SUBCASE("f1 cells print as two-decimal percentages") {
        ResultsTable t;
        t.add("synthetic", "full_tune", "zs", "ge", "tgt_test_f1", 1234, 0.5969);
        write_results_csv(t, dir / "fmt.csv");
        const auto text = slurp(dir / "fmt.csv");
        CHECK(text.find("59.69") != std::string::npos);
        CHECK(text.find("0.5969") == std::string::npos);
    }
    SUBCASE("delta rows are already percentage points") {
        ResultsTable t;
        t.add("synthetic", "full_tune", "it", "ge", "delta_pp", 1234, -2.19);
        write_results_csv(t, dir / "delta.csv");
        CHECK(slurp(dir / "delta.csv").find("-2.19") != std::string::npos);
    }
    SUBCASE("identical tables give identical bytes") {
        ResultsTable t;
        t.add("synthetic", "adapter", "clv-valid", "aa", "src_test_f1", 7, 0.25);
        t.add("synthetic", "adapter", "clv-valid", "aa", "tgt_test_f1", 7, 0.75);
        write_results_csv(t, dir / "c1.csv");
        write_results_csv(t, dir / "c2.csv");
        CHECK(slurp(dir / "c1.csv") == slurp(dir / "c2.csv"));
    }
}

TEST_CASE("manifest digests and guards") {
    const auto dir = temp_dir() / "manifest";
    fs::remove_all(dir);
    fs::create_directories(dir);
    atomic_write_file(dir / "results.csv", "dataset\nx\n");

    RunManifest m;
    m.config = {{"profile", "desk"}};
    m.seeds = {1234, 42};
    PhaseReport pr;
    pr.regime = "it";
    pr.mode = "full_tune";
    pr.src = "en";
    pr.tgt = "aa";
    pr.seed = 1234;
    pr.phase = 2;
    pr.report.epochs_run = 5;
    pr.report.best_valid_loss = 0.25;
    pr.report.steps_taken = 80;
    m.phases.push_back(pr);
    m.output_files = {"results.csv"};

    const auto mpath = dir / "run_manifest.json";
    write_manifest(m, mpath);

    const auto j = nlohmann::json::parse(slurp(mpath));
    CHECK(j.at("outputs").at("results.csv").get<std::string>() ==
          sha256_hex_file(dir / "results.csv"));
    CHECK(j.at("harness_version").get<std::string>() == kHarnessVersion);

    const RunManifest back = load_manifest(mpath);
    CHECK(back.seeds == m.seeds);
    REQUIRE(back.phases.size() == 1);
    CHECK(back.phases[0].report.epochs_run == 5);
    CHECK(back.phases[0].report.steps_taken == 80);

    SUBCASE("missing output file fails loudly") {
        m.output_files.push_back("gone.csv");
        CHECK_THROWS_AS(write_manifest(m, dir / "bad.json"), IoError);
    }
}

TEST_CASE("trace file roundtrip") {
    ChainTrace t;
    t.chain = {"en", "aa", "bb"};
    t.alpha_ideal = 0.875;
    t.episode_scores = {{0.8125, 0.9375}, {0.75, 0.5, 0.625}};
    t.regime = "clv-merged";
    t.tuning_mode = "adapter";
    t.seed = 1903;
    const auto path = temp_dir() / "trace.json";
    save_trace(t, path);
    const auto back = load_trace(path);
    CHECK(back.to_json().dump() == t.to_json().dump());
    save_trace(t, temp_dir() / "trace2.json");
    CHECK(slurp(path) == slurp(temp_dir() / "trace2.json"));
}
