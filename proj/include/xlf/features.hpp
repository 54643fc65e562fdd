#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xlf {

struct VectorizerConfig {
    uint32_t ngram_max = 2;       // 1 or 2
    uint32_t dim = 4096;          // power of two
    std::string hash_algo = "fnv1a-64";

    void validate() const;
};

// Sparse count vector. Indices are strictly increasing and < dim.
struct FeatureVector {
    uint32_t dim = 0;
    std::vector<std::pair<uint32_t, double>> entries;

    size_t nnz() const { return entries.size(); }
    double total_count() const;
};

// Hash n-grams (n <= ngram_max) into a fixed-dimension count vector.
// Stateless: there is no fitted vocabulary, so any token sequence maps to
// the same indices on every run and platform.
FeatureVector vectorize(const VectorizerConfig& cfg, const std::vector<std::string>& tokens);

} // namespace xlf
