#include "xlf/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "xlf/error.hpp"
#include "xlf/rng.hpp"

namespace xlf {

namespace {

constexpr char kMagic[4] = {'X', 'L', 'F', 'C'};
constexpr uint8_t kCheckpointVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(out, bits);
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& what) : bytes_(bytes), what_(what) {}

    uint32_t u32() { return static_cast<uint32_t>(u_n(4)); }
    uint64_t u64() { return u_n(8); }

    double f64() {
        const uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }

    std::string raw(size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    uint64_t u_n(size_t n) {
        need(n);
        uint64_t v = 0;
        for (size_t i = 0; i < n; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += n;
        return v;
    }

    void need(size_t n) {
        if (pos_ + n > bytes_.size())
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  what_ + ": truncated file (needed " + std::to_string(n) +
                                      " bytes at offset " + std::to_string(pos_) + ")");
    }

    const std::string& bytes_;
    std::string what_;
    size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string format_2dp(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

bool percent_scaled(const std::string& metric) {
    // F1, omega, and alpha metrics are stored on [0,1] and print as
    // percentages; deltas and timings are already in display units.
    if (metric.size() >= 3 && metric.compare(metric.size() - 3, 3, "_f1") == 0) return true;
    return metric.rfind("omega", 0) == 0 || metric.rfind("alpha", 0) == 0;
}

// Numeric seeds sort numerically and come before the aggregate rows.
int seed_rank(const std::string& seed) {
    if (seed == "mean") return 1;
    if (seed == "std") return 2;
    return 0;
}

bool row_less(const ResultRow& a, const ResultRow& b) {
    auto key = [](const ResultRow& r) {
        return std::tie(r.dataset, r.tuning_mode, r.regime, r.language, r.metric);
    };
    if (key(a) != key(b)) return key(a) < key(b);
    const int ra = seed_rank(a.seed), rb = seed_rank(b.seed);
    if (ra != rb) return ra < rb;
    if (ra == 0) return std::stoull(a.seed) < std::stoull(b.seed);
    return false;
}

} // namespace

void atomic_write_file(const std::filesystem::path& path, const std::string& bytes,
                       const SaveOptions& opts) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    if (opts.fail_before_rename_for_test) {
        fs::remove(tmp);
        throw IoError("injected failure before rename: " + path.string());
    }
    fs::rename(tmp, path);
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string sha256_hex_file(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path,
                     const SaveOptions& opts) {
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kCheckpointVersion));

    const std::string config_json = state.cfg.to_json().dump();
    put_u32(out, static_cast<uint32_t>(config_json.size()));
    out += config_json;

    nlohmann::json history = nlohmann::json::array();
    for (const auto& e : state.meta.history)
        history.push_back({{"regime", e.regime}, {"src", e.src}, {"tgt", e.tgt}});
    const std::string meta_json =
        nlohmann::json{{"seed", state.meta.seed},
                       {"config_hash", state.meta.config_hash},
                       {"history", history}}
            .dump();
    put_u32(out, static_cast<uint32_t>(meta_json.size()));
    out += meta_json;

    const auto views = all_views(state);
    put_u32(out, static_cast<uint32_t>(views.size()));
    for (const auto& v : views) {
        put_u64(out, v.size());
        for (double d : v) put_f64(out, d);
    }
    atomic_write_file(path, out, opts);
}

namespace {

ModelState parse_checkpoint(const std::string& bytes, const std::string& what) {
    Reader r(bytes, what);
    const std::string magic = r.raw(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0)
        throw CheckpointError(CheckpointError::Kind::bad_magic,
                              what + ": not a checkpoint file (bad magic)");
    const auto version = static_cast<uint8_t>(r.raw(1)[0]);
    if (version != kCheckpointVersion)
        throw CheckpointError(CheckpointError::Kind::version_mismatch,
                              what + ": unsupported checkpoint version " +
                                  std::to_string(version));

    const auto config_json = r.raw(r.u32());
    ModelConfig cfg;
    try {
        cfg = ModelConfig::from_json(nlohmann::json::parse(config_json));
        cfg.validate();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::truncated,
                              what + ": corrupt config section: " + e.what());
    }

    const auto meta_json = r.raw(r.u32());
    StateMeta meta;
    try {
        const auto j = nlohmann::json::parse(meta_json);
        meta.seed = j.at("seed").get<uint64_t>();
        meta.config_hash = j.at("config_hash").get<uint64_t>();
        for (const auto& e : j.at("history"))
            meta.history.push_back({e.at("regime").get<std::string>(),
                                    e.at("src").get<std::string>(),
                                    e.at("tgt").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(CheckpointError::Kind::truncated,
                              what + ": corrupt metadata section: " + e.what());
    }
    if (meta.config_hash != cfg.hash())
        throw CheckpointError(CheckpointError::Kind::hash_mismatch,
                              what + ": config hash does not match stored config");

    // Rebuild the state from the config, then fill slices in declared order.
    ModelState state = init_model(cfg, meta.seed);
    state.meta = std::move(meta);

    auto views = all_views(state);
    const uint32_t n_slices = r.u32();
    if (n_slices != views.size())
        throw CheckpointError(CheckpointError::Kind::truncated,
                              what + ": slice count mismatch (" + std::to_string(n_slices) +
                                  " vs " + std::to_string(views.size()) + ")");
    for (auto& view : views) {
        const uint64_t n = r.u64();
        if (n != view.size())
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  what + ": slice length mismatch");
        for (size_t i = 0; i < n; ++i) view[i] = r.f64();
    }
    if (!r.exhausted())
        throw CheckpointError(CheckpointError::Kind::truncated,
                              what + ": trailing bytes after final slice");
    return state;
}

} // namespace

ModelState load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(read_file(path), path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expect) {
    ModelState state = load_checkpoint(path);
    if (state.cfg.hash() != expect.hash())
        throw CheckpointError(CheckpointError::Kind::hash_mismatch,
                              path.string() + ": checkpoint config hash " +
                                  std::to_string(state.cfg.hash()) +
                                  " does not match expected config");
    return state;
}

void ResultsTable::add(const std::string& dataset, const std::string& mode,
                       const std::string& regime, const std::string& language,
                       const std::string& metric, uint64_t seed, double value) {
    rows.push_back({dataset, mode, regime, language, metric, std::to_string(seed), value});
}

void ResultsTable::add_aggregates() {
    std::map<std::vector<std::string>, std::vector<double>> groups;
    for (const auto& r : rows) {
        if (seed_rank(r.seed) != 0) continue;
        groups[{r.dataset, r.tuning_mode, r.regime, r.language, r.metric}].push_back(r.value);
    }
    for (const auto& [key, values] : groups) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        if (values.size() > 1) {
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size() - 1);
        }
        rows.push_back({key[0], key[1], key[2], key[3], key[4], "mean", mean});
        rows.push_back({key[0], key[1], key[2], key[3], key[4], "std", std::sqrt(var)});
    }
    sort_canonical();
}

void ResultsTable::validate_aggregates() const {
    std::map<std::vector<std::string>, std::vector<double>> groups;
    std::map<std::vector<std::string>, std::pair<double, double>> aggs;
    for (const auto& r : rows) {
        std::vector<std::string> key{r.dataset, r.tuning_mode, r.regime, r.language, r.metric};
        if (seed_rank(r.seed) == 0)
            groups[key].push_back(r.value);
        else if (r.seed == "mean")
            aggs[key].first = r.value;
        else
            aggs[key].second = r.value;
    }
    for (const auto& [key, agg] : aggs) {
        const auto& values = groups.at(key);
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        if (values.size() > 1) {
            for (double v : values) var += (v - mean) * (v - mean);
            var /= static_cast<double>(values.size() - 1);
        }
        if (std::abs(mean - agg.first) > 1e-9 || std::abs(std::sqrt(var) - agg.second) > 1e-9)
            throw std::logic_error("results table: aggregate rows do not match per-seed rows");
    }
}

void ResultsTable::sort_canonical() {
    std::stable_sort(rows.begin(), rows.end(), row_less);
}

void write_results_csv(const ResultsTable& table, const std::filesystem::path& path,
                       const SaveOptions& opts) {
    ResultsTable sorted = table;
    sorted.sort_canonical();
    std::string out = "dataset,tuning_mode,regime,language,metric,seed,value\n";
    for (const auto& r : sorted.rows) {
        const double display = percent_scaled(r.metric) ? 100.0 * r.value : r.value;
        out += r.dataset + ',' + r.tuning_mode + ',' + r.regime + ',' + r.language + ',' +
               r.metric + ',' + r.seed + ',' + format_2dp(display) + '\n';
    }
    atomic_write_file(path, out, opts);
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path,
                    const SaveOptions& opts) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& p : manifest.phases)
        phases.push_back({{"regime", p.regime},
                          {"mode", p.mode},
                          {"src", p.src},
                          {"tgt", p.tgt},
                          {"seed", p.seed},
                          {"phase", p.phase},
                          {"report", p.report.to_json()}});

    const auto base_dir = path.has_parent_path() ? path.parent_path()
                                                 : std::filesystem::path(".");
    nlohmann::json digests = nlohmann::json::object();
    for (const auto& rel : manifest.output_files) {
        const auto file = base_dir / rel;
        if (!std::filesystem::exists(file))
            throw IoError("manifest output file missing: " + file.string());
        digests[rel] = sha256_hex_file(file);
    }

    const nlohmann::json j{{"harness_version", manifest.harness_version},
                           {"config", manifest.config},
                           {"seeds", manifest.seeds},
                           {"phases", phases},
                           {"outputs", digests}};
    atomic_write_file(path, j.dump(2) + "\n", opts);
}

RunManifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest parse error in " + path.string() + ": " + e.what());
    }
    RunManifest m;
    m.harness_version = j.at("harness_version").get<std::string>();
    m.config = j.at("config");
    m.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    for (const auto& p : j.at("phases")) {
        PhaseReport pr;
        pr.regime = p.at("regime").get<std::string>();
        pr.mode = p.at("mode").get<std::string>();
        pr.src = p.at("src").get<std::string>();
        pr.tgt = p.at("tgt").get<std::string>();
        pr.seed = p.at("seed").get<uint64_t>();
        pr.phase = p.at("phase").get<uint32_t>();
        pr.report = TrainReport::from_json(p.at("report"));
        m.phases.push_back(std::move(pr));
    }
    for (const auto& [file, digest] : j.at("outputs").items()) {
        (void)digest;
        m.output_files.push_back(file);
    }
    return m;
}

void save_trace(const ChainTrace& trace, const std::filesystem::path& path,
                const SaveOptions& opts) {
    atomic_write_file(path, trace.to_json().dump(2) + "\n", opts);
}

ChainTrace load_trace(const std::filesystem::path& path) {
    try {
        return ChainTrace::from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw IoError("trace parse error in " + path.string() + ": " + e.what());
    }
}

} // namespace xlf
