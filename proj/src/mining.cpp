#include "embforge/mining.hpp"

#include <algorithm>
#include <set>
#include <utility>

#include "embforge/text.hpp"

namespace embforge {

std::vector<size_t> Scorer::rank(const std::string& query,
                                 const std::vector<std::string>& corpus) const {
    std::vector<std::pair<double, size_t>> scored;
    scored.reserve(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) scored.emplace_back(score(query, corpus[i]), i);
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<size_t> order(scored.size());
    for (size_t i = 0; i < scored.size(); ++i) order[i] = scored[i].second;
    return order;
}

void MiningConfig::validate() const {
    if (rank_lo < 1 || rank_lo > rank_hi)
        throw Error(ErrorCode::InvalidArgument, "need 1 <= rank_lo <= rank_hi");
    if (negatives_per_query > rank_hi - rank_lo + 1)
        throw Error(ErrorCode::InvalidArgument, "negatives_per_query exceeds the rank window");
    if (filter_threshold < -1.0 || filter_threshold > 1.0)
        throw Error(ErrorCode::InvalidArgument, "filter_threshold outside [-1, 1]");
}

TrainingSample mine_hard_negatives(const TrainingSample& sample,
                                   const std::vector<std::string>& corpus, const Scorer& scorer,
                                   const MiningConfig& cfg, uint64_t seed) {
    cfg.validate();
    if (!sample.negatives.empty()) return sample;
    if (corpus.size() < cfg.rank_hi)
        throw Error(ErrorCode::CorpusTooSmall,
                    "mining needs a corpus of at least rank_hi = " + std::to_string(cfg.rank_hi));

    const std::vector<size_t> order = scorer.rank(sample.query, corpus);

    std::vector<size_t> window;
    for (size_t r = cfg.rank_lo; r <= cfg.rank_hi; ++r) {
        const size_t idx = order[r - 1];
        if (corpus[idx] == sample.positive || corpus[idx] == sample.query) continue;
        window.push_back(idx);
    }

    TrainingSample out = sample;
    SplitMix rng(derive_seed(seed, "mine:" + sample.query));
    const size_t want = std::min(cfg.negatives_per_query, window.size());
    for (size_t k = 0; k < want; ++k) {
        const size_t pick = uniform_below(rng, window.size() - k);
        out.negatives.push_back(corpus[window[pick]]);
        std::swap(window[pick], window[window.size() - 1 - k]);
    }
    out.validate();
    return out;
}

std::vector<TrainingSample> dedup(const std::vector<TrainingSample>& samples) {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<TrainingSample> out;
    for (const auto& s : samples) {
        auto key = std::make_pair(ascii_lower(trim(s.query)), ascii_lower(trim(s.positive)));
        if (seen.insert(std::move(key)).second) out.push_back(s);
    }
    return out;
}

FilterResult quality_filter(const std::vector<TrainingSample>& samples, const Scorer& scorer,
                            double threshold) {
    if (threshold < -1.0 || threshold > 1.0)
        throw Error(ErrorCode::InvalidArgument, "threshold outside [-1, 1]");
    FilterResult result;
    for (const auto& s : samples) {
        if (scorer.score(s.query, s.positive) >= threshold)
            result.kept.push_back(s);
        else
            result.dropped_count += 1;
    }
    return result;
}

bool assigned_to_synth(const std::string& query, double synth_fraction) {
    if (synth_fraction <= 0.0) return false;
    if (synth_fraction >= 1.0) return true;
    const uint64_t h = fnv1a64(query);
    return (static_cast<double>(h >> 11) * 0x1.0p-53) < synth_fraction;
}

std::vector<std::string> positives_pool(const std::vector<TrainingSample>& samples) {
    std::set<std::string> seen;
    std::vector<std::string> pool;
    for (const auto& s : samples)
        if (seen.insert(s.positive).second) pool.push_back(s.positive);
    return pool;
}

} // namespace embforge
