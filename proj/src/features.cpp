#include "xlf/features.hpp"

#include <map>

#include "xlf/error.hpp"
#include "xlf/rng.hpp"

namespace xlf {

void VectorizerConfig::validate() const {
    if (ngram_max != 1 && ngram_max != 2)
        throw ValidationError("vectorizer.ngram_max must be 1 or 2, got " + std::to_string(ngram_max));
    if (dim == 0 || (dim & (dim - 1)) != 0)
        throw ValidationError("vectorizer.dim must be a power of two, got " + std::to_string(dim));
    if (hash_algo != "fnv1a-64")
        throw ValidationError("vectorizer.hash_algo must be \"fnv1a-64\", got \"" + hash_algo + "\"");
}

double FeatureVector::total_count() const {
    double s = 0.0;
    for (const auto& [idx, c] : entries) s += c;
    return s;
}

FeatureVector vectorize(const VectorizerConfig& cfg, const std::vector<std::string>& tokens) {
    cfg.validate();
    std::map<uint32_t, double> counts;
    std::string buf;
    for (size_t n = 1; n <= cfg.ngram_max; ++n) {
        if (tokens.size() < n) break;
        for (size_t i = 0; i + n <= tokens.size(); ++i) {
            buf.clear();
            for (size_t k = 0; k < n; ++k) {
                if (k > 0) buf.push_back('\x1f');
                buf += tokens[i + k];
            }
            counts[static_cast<uint32_t>(fnv1a64(buf) % cfg.dim)] += 1.0;
        }
    }
    FeatureVector out;
    out.dim = cfg.dim;
    out.entries.assign(counts.begin(), counts.end());
    return out;
}

} // namespace xlf
