#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embforge/corpus.hpp"
#include "embforge/errors.hpp"

// Scorer-driven hard-negative mining, dedup, and query-positive filtering.

namespace embforge {

// Pluggable similarity oracle. The default rank() scores every corpus entry
// and sorts by descending score, breaking ties by corpus index ascending.
class Scorer {
  public:
    virtual ~Scorer() = default;
    virtual double score(const std::string& a, const std::string& b) const = 0;
    virtual std::vector<size_t> rank(const std::string& query,
                                     const std::vector<std::string>& corpus) const;
};

struct MiningConfig {
    size_t rank_lo = 10; // 1-based, inclusive
    size_t rank_hi = 30; // 1-based, inclusive
    size_t negatives_per_query = 4;
    double filter_threshold = 0.3;

    void validate() const;
};

// Draw negatives_per_query texts (uniform, without replacement, seeded) from
// rank window [rank_lo, rank_hi] of the scorer's ranking. Samples that
// already carry negatives pass through unchanged: mining supplements, it
// never overwrites. The query and positive texts are never selected.
TrainingSample mine_hard_negatives(const TrainingSample& sample,
                                   const std::vector<std::string>& corpus, const Scorer& scorer,
                                   const MiningConfig& cfg, uint64_t seed);

// Keep the first occurrence of each (query, positive) pair, compared after
// whitespace trim and ASCII case fold. Order is stable.
std::vector<TrainingSample> dedup(const std::vector<TrainingSample>& samples);

struct FilterResult {
    std::vector<TrainingSample> kept;
    size_t dropped_count = 0;
};

FilterResult quality_filter(const std::vector<TrainingSample>& samples, const Scorer& scorer,
                            double threshold);

// Deterministic hash split used to route a fixed fraction of queries to
// synthetic-negative generation instead of mining.
bool assigned_to_synth(const std::string& query, double synth_fraction);

// The mining candidate pool: every distinct positive in the dataset except
// the sample's own (removed per sample by the miner's caller).
std::vector<std::string> positives_pool(const std::vector<TrainingSample>& samples);

} // namespace embforge
