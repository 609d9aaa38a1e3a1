#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embforge/corpus.hpp"
#include "embforge/errors.hpp"

// Task-specific conversions from raw records into training samples and scored
// pairs. All transforms are pure given (record, config, seed).

namespace embforge {

// A whole classification dataset viewed as (text, label) entries with a
// label -> entry-indices index. Built once per dataset before sampling.
struct ClsDatasetView {
    std::vector<std::pair<std::string, std::string>> entries; // (text, label)
    std::map<std::string, std::vector<size_t>> label_index;

    void add(const std::string& text, const std::string& label);
    size_t label_count() const { return label_index.size(); }
};

ClsDatasetView view_from_records(const std::vector<RawRecord>& records);

// title -> query, body -> positive (prefix-truncated to max_chars codepoints).
TrainingSample transform_title_body(const RawRecord& record, size_t max_chars);

// One record -> one partial sample: Supports evidence lands in positive,
// Refutes evidence in negatives. Callers merge records sharing a claim via
// merge_claim_evidence, which also drops claims that never got a positive.
TrainingSample transform_claim_evidence(const RawRecord& record);

std::vector<TrainingSample> merge_claim_evidence(const std::vector<RawRecord>& records,
                                                 Warnings* warnings = nullptr);

// Single-turn question/answer pair. Records carrying a "turns" field are
// conversations and are rejected with MultiTurn.
TrainingSample transform_qa(const RawRecord& record);

// Binary or thresholded similarity pair, emitted in both directions.
std::vector<ScoredPair> transform_sts(const RawRecord& record,
                                      std::optional<double> binarize_threshold = std::nullopt);

// entailment/neutral/contradiction -> 2/1/0, emitted in both directions.
std::vector<ScoredPair> transform_entailment(const RawRecord& record);

// One sample per entry whose label has at least one other member: that other
// member (uniform) becomes the positive, negatives_per_sample texts drawn
// uniformly without replacement from other labels become negatives.
std::vector<TrainingSample> transform_cls(const ClsDatasetView& view, size_t negatives_per_sample,
                                          uint64_t seed, const std::string& dataset_name);

// Dispatch by record kind for the CLI. CLS datasets go through transform_cls,
// STS/entailment produce pairs, the rest produce samples.
struct TransformConfig {
    size_t max_chars = 1536;
    size_t negatives_per_sample = 4;
    uint64_t seed = 0;
    std::optional<double> binarize_threshold;
};

struct TransformResult {
    std::vector<TrainingSample> samples;
    std::vector<ScoredPair> pairs;
    Warnings warnings;
};

TransformResult transform_records(const std::vector<RawRecord>& records, RecordKind kind,
                                  const TransformConfig& cfg);

} // namespace embforge
