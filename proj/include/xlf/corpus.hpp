#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace xlf {

struct Document {
    std::string id;                  // unique within a corpus
    std::string lang;
    std::vector<std::string> text;   // token sequence; may be empty for loaded data
    uint32_t label = 0;              // 0-based class index
};

struct SplitDataset {
    std::string lang;
    uint32_t n_classes = 0;
    std::vector<Document> train;
    std::vector<Document> valid;
    std::vector<Document> test;

    size_t instances() const { return train.size() + valid.size() + test.size(); }
    // Checks split disjointness (by id) and label ranges.
    void validate() const;
};

// Recipe for the deterministic synthetic multilingual corpus. The first
// language is the source; every other language is a substitution-cipher
// transform of the same class-conditional generative process.
struct CorpusSpec {
    std::vector<std::string> languages;
    uint32_t n_classes = 2;
    uint32_t train_size = 500;
    uint32_t valid_size = 100;
    uint32_t test_size = 200;
    // One prior vector shared by all languages, or one vector per language.
    std::vector<std::vector<double>> class_priors;
    uint32_t vocab_size = 2000;
    uint32_t doc_len_min = 20;
    uint32_t doc_len_max = 60;
    double cipher_overlap = 0.3;   // fraction of vocabulary shared verbatim
    double noise_rate = 0.0;       // per-token corruption probability

    void validate() const;
    const std::vector<double>& priors_for(size_t lang_index) const;
};

struct DatasetStats {
    std::string lang;
    size_t instances = 0;
    double mean_len = 0.0;
    uint32_t n_classes = 0;
    double max_support = 0.0;      // percent of the most common label
    double min_support = 0.0;      // percent of the least common label
};

// Records which documents a consumer touched. Used to prove the data-flow
// contracts of the transfer regimes (e.g. zero-shot never reads target data).
struct AccessLog {
    std::map<std::string, int> reads;   // doc id -> access count

    void note(const Document& d) { ++reads[d.id]; }
    bool contains(const std::string& id) const { return reads.count(id) != 0; }
    bool empty() const { return reads.empty(); }
};

// Read-only view over documents that reports every access to an AccessLog.
class DocView {
public:
    DocView() = default;
    explicit DocView(const std::vector<Document>& docs, AccessLog* log = nullptr);

    void append(const std::vector<Document>& docs);

    size_t size() const { return ptrs_.size(); }
    bool empty() const { return ptrs_.empty(); }
    const Document& operator[](size_t i) const {
        if (log_) log_->note(*ptrs_[i]);
        return *ptrs_[i];
    }

private:
    std::vector<const Document*> ptrs_;
    AccessLog* log_ = nullptr;
};

using Corpus = std::map<std::string, SplitDataset>;

// Deterministic: identical (spec, seed) yields byte-identical corpora.
// Each language draws from its own derived sub-seed, so languages could be
// generated concurrently with results equal to the sequential output.
Corpus generate_synthetic_corpus(const CorpusSpec& spec, uint64_t seed);

// Single-language generation; `lang_index` selects spec.languages[lang_index].
SplitDataset generate_language(const CorpusSpec& spec, size_t lang_index, uint64_t seed);

// Seeded shuffle, then floor(0.8*N) documents to train and the rest to valid.
std::pair<std::vector<Document>, std::vector<Document>>
resplit_train_80_20(const std::vector<Document>& train_docs, uint64_t seed);

// L_merged = train followed by valid. The test split is untouched.
std::vector<Document> merge_train_valid(const SplitDataset& ds);

// Counts, mean token length, and label prevalence over all three splits.
DatasetStats compute_stats(const SplitDataset& ds);

// JSON Lines loader: one record per line with keys lang/split/text/label.
// Text is whitespace-tokenized; ids are 1-based line numbers.
SplitDataset load_jsonl(const std::filesystem::path& path, uint32_t n_classes);

// Writer for the same format (used by the gen-data command).
void save_jsonl(const SplitDataset& ds, const std::filesystem::path& path);

// Bundled presets for the synthetic corpus.
CorpusSpec desk_corpus_spec();         // 4 languages, 500/100/200, overlap 0.3
CorpusSpec forgetting_corpus_spec();   // same sizes, overlap 0.1, noise 0.05

} // namespace xlf
