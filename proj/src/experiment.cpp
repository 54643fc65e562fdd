#include "xlf/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "xlf/error.hpp"

namespace xlf {

namespace {

CorpusSpec corpus_spec_from_json(const nlohmann::json& j) {
    CorpusSpec s = desk_corpus_spec();
    if (j.contains("languages")) s.languages = j.at("languages").get<std::vector<std::string>>();
    if (j.contains("n_classes")) s.n_classes = j.at("n_classes").get<uint32_t>();
    if (j.contains("split_sizes")) {
        const auto& sp = j.at("split_sizes");
        s.train_size = sp.at("train").get<uint32_t>();
        s.valid_size = sp.at("valid").get<uint32_t>();
        s.test_size = sp.at("test").get<uint32_t>();
    }
    if (j.contains("class_priors")) {
        const auto& p = j.at("class_priors");
        s.class_priors.clear();
        if (!p.empty() && p.front().is_array())
            s.class_priors = p.get<std::vector<std::vector<double>>>();
        else
            s.class_priors = {p.get<std::vector<double>>()};
    }
    if (j.contains("vocab_size")) s.vocab_size = j.at("vocab_size").get<uint32_t>();
    if (j.contains("doc_len")) {
        s.doc_len_min = j.at("doc_len").at("min").get<uint32_t>();
        s.doc_len_max = j.at("doc_len").at("max").get<uint32_t>();
    }
    if (j.contains("cipher_overlap")) s.cipher_overlap = j.at("cipher_overlap").get<double>();
    if (j.contains("noise_rate")) s.noise_rate = j.at("noise_rate").get<double>();
    return s;
}

nlohmann::json corpus_spec_to_json(const CorpusSpec& s) {
    nlohmann::json priors;
    if (s.class_priors.size() == 1)
        priors = s.class_priors[0];
    else
        priors = s.class_priors;
    return {{"languages", s.languages},
            {"n_classes", s.n_classes},
            {"split_sizes", {{"train", s.train_size}, {"valid", s.valid_size}, {"test", s.test_size}}},
            {"class_priors", priors},
            {"vocab_size", s.vocab_size},
            {"doc_len", {{"min", s.doc_len_min}, {"max", s.doc_len_max}}},
            {"cipher_overlap", s.cipher_overlap},
            {"noise_rate", s.noise_rate}};
}

void apply_optim_override(OptimConfig& c, const std::string& key, const nlohmann::json& v) {
    if (key == "lr_peak") c.lr_peak = v.get<double>();
    else if (key == "beta1") c.beta1 = v.get<double>();
    else if (key == "beta2") c.beta2 = v.get<double>();
    else if (key == "eps") c.eps = v.get<double>();
    else if (key == "weight_decay") c.weight_decay = v.get<double>();
    else if (key == "batch_size") c.batch_size = v.get<uint32_t>();
    else if (key == "warmup_fraction") c.warmup_fraction = v.get<double>();
    else if (key == "patience") c.patience = v.get<uint32_t>();
    else if (key == "tolerance") c.tolerance = v.get<double>();
    else if (key == "max_epochs") c.max_epochs = v.get<uint32_t>();
    else throw ValidationError("unknown optim override '" + key + "'");
}

nlohmann::json parse_scalar(const std::string& value) {
    // Accept JSON scalars; anything that does not parse is taken as a string.
    try {
        return nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        return nlohmann::json(value);
    }
}

std::vector<std::string> resolve_chain(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        const auto& presets = chain_presets();
        auto it = presets.find(name);
        if (it == presets.end()) {
            // Explicit comma-separated list.
            std::vector<std::string> langs;
            std::stringstream ss(name);
            std::string item;
            while (std::getline(ss, item, ',')) langs.push_back(item);
            if (langs.size() >= 2) return langs;
            throw ValidationError("unknown chain preset '" + name + "'");
        }
        return it->second;
    }
    return j.get<std::vector<std::string>>();
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Runs fn(i) for i in [0, n) on up to worker_limit() threads. Exceptions
// are rethrown on the caller thread.
void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    const unsigned workers = std::min<size_t>(worker_limit(), n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::mutex mu;
    size_t next = 0;
    std::exception_ptr error;
    auto body = [&] {
        for (;;) {
            size_t i;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (next >= n || error) return;
                i = next++;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace

unsigned worker_limit() {
    const char* env = std::getenv("XLF_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) return 1;
    return static_cast<unsigned>(v);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    // A bare CorpusSpec document (as written for gen-data) is accepted and
    // treated as the corpus section of an otherwise-default experiment.
    if (j.contains("languages") && !j.contains("corpus") && !j.contains("data")) {
        nlohmann::json wrapped{{"corpus", j}};
        return from_json(wrapped);
    }
    ExperimentConfig c;
    if (j.contains("dataset_name")) c.dataset_name = j.at("dataset_name").get<std::string>();
    if (j.contains("corpus")) {
        c.corpus = corpus_spec_from_json(j.at("corpus"));
        if (j.at("corpus").contains("seed")) c.corpus_seed = j.at("corpus").at("seed").get<uint64_t>();
    }
    if (j.contains("data")) {
        ExternalData d;
        d.paths = j.at("data").at("paths").get<std::vector<std::string>>();
        d.n_classes = j.at("data").at("n_classes").get<uint32_t>();
        c.data = std::move(d);
    }
    if (j.contains("vectorizer")) {
        const auto& v = j.at("vectorizer");
        if (v.contains("ngram_max")) c.vectorizer.ngram_max = v.at("ngram_max").get<uint32_t>();
        if (v.contains("dim")) c.vectorizer.dim = v.at("dim").get<uint32_t>();
        if (v.contains("hash_algo")) c.vectorizer.hash_algo = v.at("hash_algo").get<std::string>();
    }
    if (j.contains("model")) {
        const auto& m = j.at("model");
        if (m.contains("encoder_dims")) c.encoder_dims = m.at("encoder_dims").get<std::vector<uint32_t>>();
        if (m.contains("adapter_bottleneck")) c.adapter_bottleneck = m.at("adapter_bottleneck").get<uint32_t>();
        if (m.contains("init_scale")) c.init_scale = m.at("init_scale").get<double>();
    }
    if (j.contains("tuning_mode")) c.tuning_mode = tuning_mode_from_string(j.at("tuning_mode").get<std::string>());
    if (j.contains("optim")) {
        const auto& o = j.at("optim");
        if (o.contains("profile")) c.profile = o.at("profile").get<std::string>();
        for (const auto& [key, value] : o.items())
            if (key != "profile") c.optim_overrides[key] = value;
    }
    if (j.contains("regimes")) {
        c.regimes.clear();
        if (j.at("regimes").is_string())
            c.regimes.push_back(regime_from_string(j.at("regimes").get<std::string>()));
        else
            for (const auto& r : j.at("regimes"))
                c.regimes.push_back(regime_from_string(r.get<std::string>()));
    } else if (j.contains("regime")) {
        c.regimes = {regime_from_string(j.at("regime").get<std::string>())};
    }
    if (j.contains("chain")) c.chain = resolve_chain(j.at("chain"));
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("cap_omega")) c.cap_omega = j.at("cap_omega").get<bool>();
    if (j.contains("exclusive_all")) c.exclusive_all = j.at("exclusive_all").get<bool>();
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["dataset_name"] = dataset_name;
    if (corpus) {
        j["corpus"] = corpus_spec_to_json(*corpus);
        j["corpus"]["seed"] = corpus_seed;
    }
    if (data) j["data"] = {{"paths", data->paths}, {"n_classes", data->n_classes}};
    j["vectorizer"] = {{"ngram_max", vectorizer.ngram_max},
                       {"dim", vectorizer.dim},
                       {"hash_algo", vectorizer.hash_algo}};
    j["model"] = {{"encoder_dims", encoder_dims},
                  {"adapter_bottleneck", adapter_bottleneck},
                  {"init_scale", init_scale}};
    j["tuning_mode"] = to_string(tuning_mode);
    j["optim"] = optim_overrides.is_null() ? nlohmann::json::object() : optim_overrides;
    j["optim"]["profile"] = profile;
    nlohmann::json regs = nlohmann::json::array();
    for (auto r : regimes) regs.push_back(to_string(r));
    j["regimes"] = regs;
    if (!chain.empty()) j["chain"] = chain;
    j["seeds"] = seeds;
    j["out_dir"] = out_dir.string();
    j["cap_omega"] = cap_omega;
    j["exclusive_all"] = exclusive_all;
    return j;
}

void ExperimentConfig::apply_override(const std::string& dotted_key, const std::string& value) {
    const auto eq = nlohmann::json::json_pointer("/" + [&] {
        std::string p = dotted_key;
        std::replace(p.begin(), p.end(), '.', '/');
        return p;
    }());
    nlohmann::json j = to_json();
    j[eq] = parse_scalar(value);
    *this = from_json(j);
}

void ExperimentConfig::validate() const {
    if (corpus.has_value() == data.has_value())
        throw ValidationError("config must set exactly one of corpus / data");
    if (corpus) corpus->validate();
    if (data && data->paths.empty())
        throw ValidationError("config.data.paths must be non-empty");
    if (seeds.empty()) throw ValidationError("config.seeds must be non-empty");
    if (regimes.empty()) throw ValidationError("config.regimes must be non-empty");
    vectorizer.validate();
    make_optim(seeds[0]).validate();
    uint32_t n_classes = corpus ? corpus->n_classes : data->n_classes;
    make_model(n_classes).validate();
}

OptimConfig ExperimentConfig::make_optim(uint64_t seed) const {
    OptimConfig c = OptimConfig::profile(profile);
    if (optim_overrides.is_object())
        for (const auto& [key, value] : optim_overrides.items())
            apply_optim_override(c, key, value);
    c.seed = seed;
    return c;
}

ModelConfig ExperimentConfig::make_model(uint32_t n_classes) const {
    ModelConfig m;
    m.input_dim = vectorizer.dim;
    m.encoder_dims = encoder_dims;
    m.adapter_bottleneck = adapter_bottleneck;
    m.n_classes = n_classes;
    m.tuning_mode = tuning_mode;
    m.init_scale = init_scale;
    return m;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config parse error in " + path.string() + ": " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

Corpus build_datasets(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.corpus) return generate_synthetic_corpus(*cfg.corpus, cfg.corpus_seed);
    Corpus corpus;
    for (const auto& p : cfg.data->paths) {
        SplitDataset ds = load_jsonl(p, cfg.data->n_classes);
        ds.validate();
        if (corpus.count(ds.lang))
            throw ValidationError("duplicate language '" + ds.lang + "' across data files");
        corpus[ds.lang] = std::move(ds);
    }
    return corpus;
}

namespace {

// Synthetic corpora order languages per the spec (first = source); external
// data follows the config's file order, peeking each file for its language.
std::vector<std::string> language_order(const ExperimentConfig& cfg, const Corpus& corpus) {
    if (cfg.corpus) return cfg.corpus->languages;
    std::vector<std::string> langs;
    for (const auto& p : cfg.data->paths) {
        std::ifstream in(p);
        std::string line;
        std::string lang;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            lang = nlohmann::json::parse(line).at("lang").get<std::string>();
            break;
        }
        if (lang.empty() || !corpus.count(lang))
            throw ValidationError("cannot determine language of data file " + p);
        langs.push_back(lang);
    }
    return langs;
}

} // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const Corpus corpus = build_datasets(cfg);
    const auto langs = language_order(cfg, corpus);
    if (langs.size() < 2)
        throw ValidationError("run requires at least two languages (source + target)");
    const std::string src_lang = langs[0];
    const SplitDataset& src = corpus.at(src_lang);
    const std::string mode = to_string(cfg.tuning_mode);

    std::filesystem::create_directories(cfg.out_dir);

    struct SeedResult {
        std::vector<ResultRow> rows;
        std::vector<PhaseReport> phases;
        std::vector<std::string> outputs;
    };
    std::vector<SeedResult> per_seed(cfg.seeds.size());

    parallel_for(cfg.seeds.size(), [&](size_t si) {
        const uint64_t seed = cfg.seeds[si];
        SeedResult& out = per_seed[si];
        TransferConfig tc{cfg.vectorizer, cfg.make_optim(seed)};
        const ModelConfig mcfg = cfg.make_model(src.n_classes);

        // Monolingual source baseline for the forgetting deltas.
        AccessLog base_log;
        DocView btr(src.train, &base_log), bva(src.valid, &base_log);
        TrainResult base = train(init_model(mcfg, seed), btr, bva, tc.vec, tc.optim);
        const double base_f1 = evaluate_macro_f1(base.state, src.test, tc.vec);
        out.rows.push_back({cfg.dataset_name, mode, "mono", src_lang, "base_src_f1",
                            std::to_string(seed), base_f1});
        out.phases.push_back({"mono", mode, src_lang, src_lang, seed, 1, base.report});

        for (RegimeKind regime : cfg.regimes) {
            for (size_t li = 1; li < langs.size(); ++li) {
                const std::string& tgt_lang = langs[li];
                TransferOutcome o = run_single_transfer(regime, init_model(mcfg, seed), src,
                                                        corpus.at(tgt_lang), tc);
                const std::string reg = to_string(regime);
                out.rows.push_back({cfg.dataset_name, mode, reg, tgt_lang, "tgt_test_f1",
                                    std::to_string(seed), o.tgt_test_f1});
                out.rows.push_back({cfg.dataset_name, mode, reg, tgt_lang, "src_test_f1",
                                    std::to_string(seed), o.src_test_f1});
                out.rows.push_back({cfg.dataset_name, mode, reg, tgt_lang, "delta_pp",
                                    std::to_string(seed), forgetting_delta(o, base_f1)});
                for (size_t ph = 0; ph < o.reports.size(); ++ph)
                    out.phases.push_back({reg, mode, src_lang, tgt_lang, seed,
                                          static_cast<uint32_t>(ph + 1), o.reports[ph]});

                char name[128];
                std::snprintf(name, sizeof(name), "run_%s_%s_%s_s%llu.ckpt", reg.c_str(),
                              mode.c_str(), tgt_lang.c_str(),
                              static_cast<unsigned long long>(seed));
                save_checkpoint(o.final_state, cfg.out_dir / name);
                out.outputs.push_back(name);
            }
        }
    });

    RunArtifacts art;
    for (const auto& sr : per_seed)
        art.table.rows.insert(art.table.rows.end(), sr.rows.begin(), sr.rows.end());
    art.table.add_aggregates();
    art.table.validate_aggregates();

    art.results_csv = cfg.out_dir / "results.csv";
    write_results_csv(art.table, art.results_csv);

    art.manifest.config = cfg.to_json();
    art.manifest.seeds = cfg.seeds;
    for (const auto& sr : per_seed)
        art.manifest.phases.insert(art.manifest.phases.end(), sr.phases.begin(), sr.phases.end());
    art.manifest.output_files.push_back("results.csv");
    for (const auto& sr : per_seed)
        art.manifest.output_files.insert(art.manifest.output_files.end(), sr.outputs.begin(),
                                         sr.outputs.end());
    art.manifest_path = cfg.out_dir / "run_manifest.json";
    write_manifest(art.manifest, art.manifest_path);
    return art;
}

ChainArtifacts chain_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.chain.size() < 2)
        throw ValidationError("chain command needs a chain of at least two languages");
    std::vector<RegimeKind> regimes;
    for (RegimeKind r : cfg.regimes)
        if (r == RegimeKind::it || r == RegimeKind::clv_valid_train) regimes.push_back(r);
    if (regimes.empty())
        throw ValidationError("chain regimes must include it and/or clv-merged");

    const Corpus corpus = build_datasets(cfg);
    for (const auto& lang : cfg.chain)
        if (!corpus.count(lang))
            throw ValidationError("chain language '" + lang + "' not present in the datasets");

    const std::string mode = to_string(cfg.tuning_mode);
    const uint32_t n_classes = corpus.at(cfg.chain[0]).n_classes;
    std::filesystem::create_directories(cfg.out_dir);

    struct Job {
        RegimeKind regime;
        uint64_t seed;
    };
    std::vector<Job> jobs;
    for (RegimeKind r : regimes)
        for (uint64_t s : cfg.seeds) jobs.push_back({r, s});

    struct JobResult {
        ChainTrace trace;
        std::vector<std::string> outputs;
    };
    std::vector<JobResult> results(jobs.size());

    parallel_for(jobs.size(), [&](size_t ji) {
        const Job& job = jobs[ji];
        const std::string reg = to_string(job.regime);
        char prefix[128];
        std::snprintf(prefix, sizeof(prefix), "chain_%s_%s_s%llu", reg.c_str(), mode.c_str(),
                      static_cast<unsigned long long>(job.seed));

        ChainConfig cc;
        cc.transfer = {cfg.vectorizer, cfg.make_optim(job.seed)};
        cc.checkpoint_dir = cfg.out_dir;
        cc.checkpoint_prefix = prefix;

        ModelConfig mcfg = cfg.make_model(n_classes);
        JobResult& res = results[ji];
        res.trace = run_chain(job.regime, mcfg, cfg.chain, corpus, cc);
        for (size_t ep = 1; ep <= cfg.chain.size(); ++ep)
            res.outputs.push_back(std::string(prefix) + "_ep" + std::to_string(ep) + ".ckpt");

        const std::string trace_name = std::string("trace_") + prefix + ".json";
        save_trace(res.trace, cfg.out_dir / trace_name);
        res.outputs.push_back(trace_name);
    });

    ChainArtifacts art;
    for (size_t ji = 0; ji < jobs.size(); ++ji) {
        const Job& job = jobs[ji];
        const std::string reg = to_string(job.regime);
        const ChainTrace& trace = results[ji].trace;
        art.traces.push_back(trace);

        const EpisodeTrace et = trace_from_chain(trace, cfg.exclusive_all);
        const RetentionScores om = omega_scores(et, cfg.cap_omega);
        art.omega_table.add(cfg.dataset_name, mode, reg, "all", "omega_base", job.seed, om.omega_base);
        art.omega_table.add(cfg.dataset_name, mode, reg, "all", "omega_new", job.seed, om.omega_new);
        art.omega_table.add(cfg.dataset_name, mode, reg, "all", "omega_all", job.seed, om.omega_all);
        art.omega_table.add(cfg.dataset_name, mode, reg, trace.chain[0], "alpha_ideal", job.seed,
                            trace.alpha_ideal);

        for (size_t k = 0; k < trace.episode_scores.size(); ++k) {
            const std::string& tgt = trace.chain[k + 1];
            for (size_t j = 0; j < trace.episode_scores[k].size(); ++j)
                art.retention_table.add(cfg.dataset_name, mode, reg, trace.chain[j],
                                        "test_f1_after_" + tgt, job.seed,
                                        trace.episode_scores[k][j]);
        }

        for (const auto& f : results[ji].outputs) art.manifest.output_files.push_back(f);
    }

    art.omega_table.add_aggregates();
    art.omega_table.validate_aggregates();
    art.retention_table.add_aggregates();
    art.retention_table.validate_aggregates();

    art.omega_csv = cfg.out_dir / "omega.csv";
    art.retention_csv = cfg.out_dir / "retention.csv";
    write_results_csv(art.omega_table, art.omega_csv);
    write_results_csv(art.retention_table, art.retention_csv);

    art.manifest.config = cfg.to_json();
    art.manifest.seeds = cfg.seeds;
    art.manifest.output_files.insert(art.manifest.output_files.begin(),
                                     {"omega.csv", "retention.csv"});
    art.manifest_path = cfg.out_dir / "chain_manifest.json";
    write_manifest(art.manifest, art.manifest_path);
    return art;
}

std::vector<DatasetStats> stats_experiment(const ExperimentConfig& cfg) {
    const Corpus corpus = build_datasets(cfg);
    std::vector<DatasetStats> stats;
    for (const auto& lang : language_order(cfg, corpus))
        stats.push_back(compute_stats(corpus.at(lang)));
    return stats;
}

void write_stats_csv(const std::vector<DatasetStats>& stats, const std::string& dataset_name,
                     const std::filesystem::path& path) {
    std::string out = "dataset,lang,instances,mean_len,n_classes,max_support,min_support\n";
    for (const auto& st : stats)
        out += dataset_name + ',' + st.lang + ',' + std::to_string(st.instances) + ',' +
               fmt2(st.mean_len) + ',' + std::to_string(st.n_classes) + ',' +
               fmt2(st.max_support) + ',' + fmt2(st.min_support) + '\n';
    atomic_write_file(path, out);
}

std::vector<std::filesystem::path> gen_data(const ExperimentConfig& cfg) {
    cfg.validate();
    if (!cfg.corpus)
        throw ValidationError("gen-data requires a corpus spec in the config");
    const Corpus corpus = generate_synthetic_corpus(*cfg.corpus, cfg.corpus_seed);
    std::filesystem::create_directories(cfg.out_dir);
    std::vector<std::filesystem::path> paths;
    for (const auto& lang : cfg.corpus->languages) {
        const auto path = cfg.out_dir / (lang + ".jsonl");
        save_jsonl(corpus.at(lang), path);
        paths.push_back(path);
    }
    return paths;
}

std::vector<TimingRow> aggregate_timings(const std::filesystem::path& dir) {
    struct Acc {
        double epochs = 0.0, per_epoch = 0.0;
        size_t phases = 0;
        std::map<std::string, double> run_totals;   // run key -> summed phase time
    };
    std::map<std::pair<std::string, std::string>, Acc> acc;

    std::vector<std::filesystem::path> manifests;
    if (std::filesystem::exists(dir))
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (e.is_regular_file() && name.size() > 13 &&
                name.find("manifest") != std::string::npos &&
                name.compare(name.size() - 5, 5, ".json") == 0)
                manifests.push_back(e.path());
        }
    std::sort(manifests.begin(), manifests.end());

    for (const auto& mp : manifests) {
        const RunManifest m = load_manifest(mp);
        for (const auto& p : m.phases) {
            Acc& a = acc[{p.regime, p.mode}];
            a.epochs += p.report.epochs_run;
            a.per_epoch += p.report.time_per_epoch_seconds;
            ++a.phases;
            const std::string run_key =
                mp.string() + '|' + std::to_string(p.seed) + '|' + p.src + '>' + p.tgt;
            a.run_totals[run_key] += p.report.total_time_seconds;
        }
    }

    std::vector<TimingRow> rows;
    for (const auto& [key, a] : acc) {
        TimingRow r;
        r.regime = key.first;
        r.mode = key.second;
        r.avg_epochs = a.epochs / static_cast<double>(a.phases);
        r.avg_time_per_epoch_s = a.per_epoch / static_cast<double>(a.phases);
        double total = 0.0;
        for (const auto& [rk, t] : a.run_totals) total += t;
        r.avg_total_time_s = total / static_cast<double>(a.run_totals.size());
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::filesystem::path& path) {
    std::string out = "regime,mode,avg_epochs,avg_time_per_epoch_s,avg_total_time_s\n";
    for (const auto& r : rows)
        out += r.regime + ',' + r.mode + ',' + fmt2(r.avg_epochs) + ',' +
               fmt2(r.avg_time_per_epoch_s) + ',' + fmt2(r.avg_total_time_s) + '\n';
    atomic_write_file(path, out);
}

void write_retention_svg(const ChainTrace& trace, const std::filesystem::path& path) {
    const EpisodeTrace et = trace_from_chain(trace);
    const size_t n = et.alpha_base.size();

    const double w = 640, h = 400, ml = 60, mr = 160, mt = 40, mb = 50;
    const double px = w - ml - mr, py = h - mt - mb;
    auto x_at = [&](size_t k) {
        return n == 1 ? ml + px / 2 : ml + px * static_cast<double>(k) / static_cast<double>(n - 1);
    };
    auto y_at = [&](double v) { return mt + py * (1.0 - v); };

    struct Series {
        const char* label;
        const char* color;
        const std::vector<double>* values;
    };
    const Series series[] = {{"alpha_base", "#1f77b4", &et.alpha_base},
                             {"alpha_new", "#d62728", &et.alpha_new},
                             {"alpha_all", "#2ca02c", &et.alpha_all}};

    std::string s;
    char buf[256];
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\" font-family=\"sans-serif\" font-size=\"12\">\n";
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"20\" font-size=\"14\">Retention vs episode (%s, %s, seed %llu)</text>\n",
                  ml, trace.regime.c_str(), trace.tuning_mode.c_str(),
                  static_cast<unsigned long long>(trace.seed));
    s += buf;

    // Axes and gridlines.
    for (int g = 0; g <= 4; ++g) {
        const double v = 0.25 * g;
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#ddd\"/>\n"
                      "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.2f</text>\n",
                      ml, y_at(v), ml + px, y_at(v), ml - 6, y_at(v) + 4, v);
        s += buf;
    }
    for (size_t k = 0; k < n; ++k) {
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%zu (%s)</text>\n",
                      x_at(k), mt + py + 18, k + 2, trace.chain[k + 1].c_str());
        s += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#333\"/>\n"
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#333\"/>\n",
                  ml, mt, ml, mt + py, ml, mt + py, ml + px, mt + py);
    s += buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">episode</text>\n",
                  ml + px / 2, h - 12);
    s += buf;

    // Ideal reference line.
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#999\" "
                  "stroke-dasharray=\"4 3\"/>\n",
                  ml, y_at(et.alpha_ideal), ml + px, y_at(et.alpha_ideal));
    s += buf;

    int legend = 0;
    for (const auto& se : series) {
        std::string pts;
        for (size_t k = 0; k < n; ++k) {
            std::snprintf(buf, sizeof(buf), "%g,%g ", x_at(k), y_at((*se.values)[k]));
            pts += buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                      pts.c_str(), se.color);
        s += buf;
        for (size_t k = 0; k < n; ++k) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%g\" cy=\"%g\" r=\"3\" fill=\"%s\"/>\n", x_at(k),
                          y_at((*se.values)[k]), se.color);
            s += buf;
        }
        std::snprintf(buf, sizeof(buf),
                      "<rect x=\"%g\" y=\"%g\" width=\"12\" height=\"12\" fill=\"%s\"/>\n"
                      "<text x=\"%g\" y=\"%g\">%s</text>\n",
                      ml + px + 16, mt + 20.0 * legend, se.color, ml + px + 34,
                      mt + 20.0 * legend + 10, se.label);
        s += buf;
        ++legend;
    }
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%g\" y=\"%g\" width=\"12\" height=\"2\" fill=\"#999\"/>\n"
                  "<text x=\"%g\" y=\"%g\">alpha_ideal</text>\n",
                  ml + px + 16, mt + 20.0 * legend + 5, ml + px + 34, mt + 20.0 * legend + 10);
    s += buf;
    s += "</svg>\n";
    atomic_write_file(path, s);
}

} // namespace xlf
