#include "xlf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xlf/error.hpp"
#include "xlf/rng.hpp"

namespace xlf {

namespace {

// Generator shape constants: the lower half of the vocabulary is split into
// one band per class, the upper half is shared by all classes. A token comes
// from its class band with probability kSignalRate.
constexpr double kSignalRate = 0.7;

std::string render_token(uint32_t index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%04u", index);
    return buf;
}

// Exact per-class counts for `total` documents under `priors`
// (largest-remainder rounding; remainder ties broken by class index).
std::vector<uint32_t> allocate_counts(const std::vector<double>& priors, uint32_t total) {
    const size_t k = priors.size();
    std::vector<uint32_t> counts(k, 0);
    std::vector<std::pair<double, size_t>> remainders;
    uint32_t assigned = 0;
    for (size_t c = 0; c < k; ++c) {
        double exact = priors[c] * total;
        counts[c] = static_cast<uint32_t>(std::floor(exact));
        assigned += counts[c];
        remainders.push_back({exact - std::floor(exact), c});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (uint32_t i = 0; assigned < total; ++i, ++assigned)
        ++counts[remainders[i % k].second];
    return counts;
}

// Bijective vocabulary permutation with `overlap` of indices kept fixed.
std::vector<uint32_t> build_cipher(uint32_t vocab, double overlap, Rng& rng) {
    std::vector<uint32_t> order(vocab);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    const auto n_fixed = static_cast<size_t>(std::llround(overlap * vocab));

    std::vector<uint32_t> cipher(vocab);
    std::iota(cipher.begin(), cipher.end(), 0u);
    std::vector<uint32_t> movable(order.begin() + static_cast<long>(n_fixed), order.end());
    std::vector<uint32_t> images = movable;
    rng.shuffle(images);
    for (size_t i = 0; i < movable.size(); ++i) cipher[movable[i]] = images[i];
    return cipher;
}

uint32_t draw_class_token(uint32_t vocab, uint32_t n_classes, uint32_t label, Rng& rng) {
    const uint32_t half = vocab / 2;
    const uint32_t band = std::max(1u, half / n_classes);
    if (rng.next_unit() < kSignalRate) {
        uint32_t lo = std::min(label * band, half - 1);
        return lo + static_cast<uint32_t>(rng.below(band));
    }
    return half + static_cast<uint32_t>(rng.below(vocab - half));
}

std::vector<Document> generate_split(const CorpusSpec& spec, size_t lang_index,
                                     const std::string& split_name, uint32_t count,
                                     const std::vector<uint32_t>* cipher, Rng& rng) {
    const std::string& lang = spec.languages[lang_index];
    const auto& priors = spec.priors_for(lang_index);

    std::vector<uint32_t> labels;
    auto counts = allocate_counts(priors, count);
    for (uint32_t c = 0; c < counts.size(); ++c)
        labels.insert(labels.end(), counts[c], c);
    rng.shuffle(labels);

    std::vector<Document> docs;
    docs.reserve(count);
    for (uint32_t n = 0; n < count; ++n) {
        Document d;
        char idbuf[64];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%s-%05u", lang.c_str(), split_name.c_str(), n);
        d.id = idbuf;
        d.lang = lang;
        d.label = labels[n];
        const auto len = static_cast<uint32_t>(rng.range(spec.doc_len_min, spec.doc_len_max));
        d.text.reserve(len);
        for (uint32_t t = 0; t < len; ++t) {
            uint32_t idx = draw_class_token(spec.vocab_size, spec.n_classes, d.label, rng);
            if (cipher) {
                idx = (*cipher)[idx];
                if (spec.noise_rate > 0.0 && rng.bernoulli(spec.noise_rate))
                    idx = static_cast<uint32_t>(rng.below(spec.vocab_size));
            }
            d.text.push_back(render_token(idx));
        }
        docs.push_back(std::move(d));
    }
    return docs;
}

std::vector<std::string> split_whitespace(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(tok);
    return out;
}

} // namespace

void SplitDataset::validate() const {
    std::set<std::string> ids;
    auto check = [&](const std::vector<Document>& docs, const char* split) {
        for (const auto& d : docs) {
            if (!ids.insert(d.id).second)
                throw ValidationError("dataset " + lang + ": duplicate document id '" + d.id +
                                      "' across splits (" + split + ")");
            if (d.label >= n_classes)
                throw ValidationError("dataset " + lang + ": document '" + d.id + "' has label " +
                                      std::to_string(d.label) + " >= n_classes " +
                                      std::to_string(n_classes));
        }
    };
    check(train, "train");
    check(valid, "valid");
    check(test, "test");
}

const std::vector<double>& CorpusSpec::priors_for(size_t lang_index) const {
    if (class_priors.size() == 1) return class_priors[0];
    return class_priors.at(lang_index);
}

void CorpusSpec::validate() const {
    if (languages.empty())
        throw ValidationError("corpus.languages must be non-empty");
    std::set<std::string> uniq(languages.begin(), languages.end());
    if (uniq.size() != languages.size())
        throw ValidationError("corpus.languages contains duplicates");
    if (n_classes < 2)
        throw ValidationError("corpus.n_classes must be >= 2, got " + std::to_string(n_classes));
    if (train_size == 0 || valid_size == 0 || test_size == 0)
        throw ValidationError("corpus.split_sizes must all be positive");
    if (class_priors.empty())
        throw ValidationError("corpus.class_priors must be non-empty");
    if (class_priors.size() != 1 && class_priors.size() != languages.size())
        throw ValidationError("corpus.class_priors must hold one vector or one per language");
    for (size_t j = 0; j < class_priors.size(); ++j) {
        const auto& p = class_priors[j];
        if (p.size() != n_classes)
            throw ValidationError("corpus.class_priors[" + std::to_string(j) + "] must have n_classes entries");
        double sum = 0.0;
        for (double x : p) {
            if (x < 0.0) throw ValidationError("corpus.class_priors entries must be non-negative");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw ValidationError("corpus.class_priors[" + std::to_string(j) + "] must sum to 1 +- 1e-9");
    }
    if (vocab_size < 2 * n_classes)
        throw ValidationError("corpus.vocab_size too small for class bands");
    if (doc_len_min == 0 || doc_len_max < doc_len_min)
        throw ValidationError("corpus.doc_len must satisfy 0 < min <= max");
    if (cipher_overlap < 0.0 || cipher_overlap > 1.0)
        throw ValidationError("corpus.cipher_overlap must be in [0,1]");
    if (noise_rate < 0.0 || noise_rate > 1.0)
        throw ValidationError("corpus.noise_rate must be in [0,1]");
}

DocView::DocView(const std::vector<Document>& docs, AccessLog* log) : log_(log) {
    append(docs);
}

void DocView::append(const std::vector<Document>& docs) {
    ptrs_.reserve(ptrs_.size() + docs.size());
    for (const auto& d : docs) ptrs_.push_back(&d);
}

SplitDataset generate_language(const CorpusSpec& spec, size_t lang_index, uint64_t seed) {
    spec.validate();
    Rng rng(derive_seed(seed, lang_index));

    std::vector<uint32_t> cipher;
    const bool is_source = lang_index == 0;
    if (!is_source) cipher = build_cipher(spec.vocab_size, spec.cipher_overlap, rng);

    SplitDataset ds;
    ds.lang = spec.languages[lang_index];
    ds.n_classes = spec.n_classes;
    const std::vector<uint32_t>* cp = is_source ? nullptr : &cipher;
    ds.train = generate_split(spec, lang_index, "train", spec.train_size, cp, rng);
    ds.valid = generate_split(spec, lang_index, "valid", spec.valid_size, cp, rng);
    ds.test = generate_split(spec, lang_index, "test", spec.test_size, cp, rng);
    return ds;
}

Corpus generate_synthetic_corpus(const CorpusSpec& spec, uint64_t seed) {
    spec.validate();
    Corpus corpus;
    for (size_t j = 0; j < spec.languages.size(); ++j)
        corpus[spec.languages[j]] = generate_language(spec, j, seed);
    return corpus;
}

std::pair<std::vector<Document>, std::vector<Document>>
resplit_train_80_20(const std::vector<Document>& train_docs, uint64_t seed) {
    if (train_docs.size() < 5)
        throw ValidationError("resplit_train_80_20 needs at least 5 documents, got " +
                              std::to_string(train_docs.size()));
    std::vector<size_t> order(train_docs.size());
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    const size_t n_train = static_cast<size_t>(std::floor(0.8 * static_cast<double>(train_docs.size())));
    std::vector<Document> tr, va;
    tr.reserve(n_train);
    va.reserve(train_docs.size() - n_train);
    for (size_t i = 0; i < order.size(); ++i)
        (i < n_train ? tr : va).push_back(train_docs[order[i]]);
    return {std::move(tr), std::move(va)};
}

std::vector<Document> merge_train_valid(const SplitDataset& ds) {
    std::vector<Document> merged;
    merged.reserve(ds.train.size() + ds.valid.size());
    merged.insert(merged.end(), ds.train.begin(), ds.train.end());
    merged.insert(merged.end(), ds.valid.begin(), ds.valid.end());
    return merged;
}

DatasetStats compute_stats(const SplitDataset& ds) {
    if (ds.instances() == 0)
        throw ValidationError("compute_stats: dataset '" + ds.lang + "' is empty");
    DatasetStats st;
    st.lang = ds.lang;
    st.instances = ds.instances();
    st.n_classes = ds.n_classes;

    size_t token_total = 0;
    std::vector<size_t> label_counts(ds.n_classes, 0);
    auto scan = [&](const std::vector<Document>& docs) {
        for (const auto& d : docs) {
            token_total += d.text.size();
            ++label_counts.at(d.label);
        }
    };
    scan(ds.train);
    scan(ds.valid);
    scan(ds.test);

    st.mean_len = static_cast<double>(token_total) / static_cast<double>(st.instances);
    const auto [mn, mx] = std::minmax_element(label_counts.begin(), label_counts.end());
    st.max_support = 100.0 * static_cast<double>(*mx) / static_cast<double>(st.instances);
    st.min_support = 100.0 * static_cast<double>(*mn) / static_cast<double>(st.instances);
    return st;
}

SplitDataset load_jsonl(const std::filesystem::path& path, uint32_t n_classes) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset file: " + path.string());

    SplitDataset ds;
    ds.n_classes = n_classes;
    std::string line;
    size_t line_no = 0;
    size_t records = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": malformed JSON record: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("lang") || !rec.contains("split") ||
            !rec.contains("text") || !rec.contains("label"))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": record must have keys lang, split, text, label");

        Document d;
        d.id = std::to_string(line_no);
        try {
            d.lang = rec.at("lang").get<std::string>();
            d.text = split_whitespace(rec.at("text").get<std::string>());
            const auto label = rec.at("label").get<int64_t>();
            if (label < 0)
                throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                      ": label must be >= 0");
            d.label = static_cast<uint32_t>(label);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": bad field type: " + e.what());
        }
        if (d.label >= n_classes)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": label " +
                                  std::to_string(d.label) + " >= n_classes " +
                                  std::to_string(n_classes));
        if (records == 0) {
            ds.lang = d.lang;
        } else if (d.lang != ds.lang) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": mixed languages in one file ('" + ds.lang + "' vs '" +
                                  d.lang + "')");
        }

        const auto split = rec.at("split").get<std::string>();
        if (split == "train")
            ds.train.push_back(std::move(d));
        else if (split == "valid")
            ds.valid.push_back(std::move(d));
        else if (split == "test")
            ds.test.push_back(std::move(d));
        else
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": split must be train|valid|test, got '" + split + "'");
        ++records;
    }
    if (records == 0)
        throw ValidationError(path.string() + ": empty dataset file");
    return ds;
}

void save_jsonl(const SplitDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    auto dump = [&](const std::vector<Document>& docs, const char* split) {
        for (const auto& d : docs) {
            std::string text;
            for (size_t i = 0; i < d.text.size(); ++i) {
                if (i > 0) text.push_back(' ');
                text += d.text[i];
            }
            nlohmann::json rec{{"lang", d.lang}, {"split", split}, {"text", text}, {"label", d.label}};
            out << rec.dump() << '\n';
        }
    };
    dump(ds.train, "train");
    dump(ds.valid, "valid");
    dump(ds.test, "test");
    if (!out) throw IoError("write failed: " + path.string());
}

CorpusSpec desk_corpus_spec() {
    CorpusSpec s;
    s.languages = {"en", "aa", "bb", "cc"};
    s.n_classes = 2;
    s.train_size = 500;
    s.valid_size = 100;
    s.test_size = 200;
    s.class_priors = {{0.5, 0.5}};
    s.vocab_size = 2000;
    s.doc_len_min = 20;
    s.doc_len_max = 60;
    s.cipher_overlap = 0.3;
    s.noise_rate = 0.0;
    return s;
}

CorpusSpec forgetting_corpus_spec() {
    CorpusSpec s = desk_corpus_spec();
    s.cipher_overlap = 0.1;
    s.noise_rate = 0.05;
    return s;
}

} // namespace xlf
