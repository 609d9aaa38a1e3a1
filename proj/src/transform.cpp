#include "embforge/transform.hpp"

#include <algorithm>
#include <cstdlib>

#include "embforge/text.hpp"

namespace embforge {

namespace {

std::string lower(const std::string& s) { return ascii_lower(std::string(trim(s))); }

// Strict numeric parse of the whole trimmed string.
std::optional<double> parse_number(const std::string& s) {
    const std::string t{trim(s)};
    if (t.empty()) return std::nullopt;
    const char* begin = t.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end != begin + t.size()) return std::nullopt;
    return v;
}

} // namespace

void ClsDatasetView::add(const std::string& text, const std::string& label) {
    if (trim(text).empty() || trim(label).empty())
        throw Error(ErrorCode::EmptyField, "CLS entry needs non-empty text and label");
    label_index[label].push_back(entries.size());
    entries.emplace_back(text, label);
}

ClsDatasetView view_from_records(const std::vector<RawRecord>& records) {
    ClsDatasetView view;
    for (const auto& r : records) {
        if (r.kind != RecordKind::LabeledText)
            throw Error(ErrorCode::InvalidArgument, "CLS view needs labeled records");
        view.add(r.field("text"), r.field("label"));
    }
    return view;
}

TrainingSample transform_title_body(const RawRecord& record, size_t max_chars) {
    if (record.kind != RecordKind::TitleBody)
        throw Error(ErrorCode::InvalidArgument, "record kind is not title_body");
    TrainingSample s;
    s.query = trim(record.field("title"));
    s.positive = truncate_codepoints(trim(record.field("body")), max_chars);
    s.task = TaskKind::Retrieval;
    s.dataset_name = record.dataset_name;
    s.validate();
    return s;
}

TrainingSample transform_claim_evidence(const RawRecord& record) {
    if (record.kind != RecordKind::ClaimEvidence)
        throw Error(ErrorCode::InvalidArgument, "record kind is not claim_evidence");
    const std::string label = lower(record.field("evidence_label"));
    if (label != "supports" && label != "refutes")
        throw Error(ErrorCode::UnknownLabel, "evidence_label '" + record.field("evidence_label") +
                                                 "' is neither Supports nor Refutes");
    TrainingSample s;
    s.query = trim(record.field("claim"));
    s.task = TaskKind::Retrieval;
    s.dataset_name = record.dataset_name;
    if (label == "supports")
        s.positive = trim(record.field("evidence"));
    else
        s.negatives.push_back(std::string(trim(record.field("evidence"))));
    return s; // possibly positive-less; merge_claim_evidence completes it
}

std::vector<TrainingSample> merge_claim_evidence(const std::vector<RawRecord>& records,
                                                 Warnings* warnings) {
    std::vector<std::string> claim_order;
    std::map<std::string, TrainingSample> by_claim;
    for (const auto& record : records) {
        TrainingSample piece = transform_claim_evidence(record);
        auto it = by_claim.find(piece.query);
        if (it == by_claim.end()) {
            claim_order.push_back(piece.query);
            by_claim.emplace(piece.query, std::move(piece));
            continue;
        }
        TrainingSample& merged = it->second;
        if (!piece.positive.empty()) {
            if (merged.positive.empty()) {
                merged.positive = piece.positive;
            } else if (warnings) {
                warnings->add("claim '" + piece.query + "' has extra Supports evidence; keeping the first");
            }
        }
        for (auto& neg : piece.negatives) merged.negatives.push_back(std::move(neg));
    }

    std::vector<TrainingSample> out;
    for (const auto& claim : claim_order) {
        TrainingSample& s = by_claim.at(claim);
        if (s.positive.empty()) {
            if (warnings)
                warnings->add("claim '" + claim + "' has only Refutes evidence; dropped");
            continue;
        }
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

TrainingSample transform_qa(const RawRecord& record) {
    if (record.kind != RecordKind::QuestionAnswer)
        throw Error(ErrorCode::InvalidArgument, "record kind is not qa");
    if (record.has("turns"))
        throw Error(ErrorCode::MultiTurn, "multi-turn conversation records are not supported");
    TrainingSample s;
    s.query = trim(record.field("question"));
    s.positive = trim(record.field("answer"));
    s.task = TaskKind::Retrieval;
    s.dataset_name = record.dataset_name;
    s.validate();
    return s;
}

std::vector<ScoredPair> transform_sts(const RawRecord& record,
                                      std::optional<double> binarize_threshold) {
    if (record.kind != RecordKind::StsPair)
        throw Error(ErrorCode::InvalidArgument, "record kind is not sts");
    const std::string raw = record.field("label");
    const std::string label = lower(raw);

    int score;
    if (label == "yes" || label == "true") {
        score = 1;
    } else if (label == "no" || label == "false") {
        score = 0;
    } else if (auto num = parse_number(raw)) {
        if (!binarize_threshold)
            throw Error(ErrorCode::MissingThreshold,
                        "numeric label '" + raw + "' needs --binarize-threshold");
        score = *num >= *binarize_threshold ? 1 : 0;
    } else {
        throw Error(ErrorCode::UnknownLabel, "STS label '" + raw + "' is not recognized");
    }

    ScoredPair fwd;
    fwd.text_a = trim(record.field("sentence_a"));
    fwd.text_b = trim(record.field("sentence_b"));
    fwd.score = score;
    fwd.dataset_name = record.dataset_name;
    ScoredPair rev = fwd;
    std::swap(rev.text_a, rev.text_b);
    fwd.validate();
    rev.validate();
    return {fwd, rev};
}

std::vector<ScoredPair> transform_entailment(const RawRecord& record) {
    if (record.kind != RecordKind::EntailmentTriple)
        throw Error(ErrorCode::InvalidArgument, "record kind is not entailment");
    const std::string label = lower(record.field("label"));
    int score;
    if (label == "entailment")
        score = 2;
    else if (label == "neutral")
        score = 1;
    else if (label == "contradiction")
        score = 0;
    else
        throw Error(ErrorCode::UnknownLabel, "entailment label '" + record.field("label") +
                                                 "' is not recognized");

    ScoredPair fwd;
    fwd.text_a = trim(record.field("sentence_a"));
    fwd.text_b = trim(record.field("sentence_b"));
    fwd.score = score;
    fwd.dataset_name = record.dataset_name;
    ScoredPair rev = fwd;
    std::swap(rev.text_a, rev.text_b);
    fwd.validate();
    rev.validate();
    return {fwd, rev};
}

std::vector<TrainingSample> transform_cls(const ClsDatasetView& view, size_t negatives_per_sample,
                                          uint64_t seed, const std::string& dataset_name) {
    if (view.label_count() < 2)
        throw Error(ErrorCode::InsufficientLabels, "CLS sampling needs at least 2 distinct labels");

    std::vector<TrainingSample> out;
    for (size_t idx = 0; idx < view.entries.size(); ++idx) {
        const auto& [text, label] = view.entries[idx];
        const std::vector<size_t>& peers = view.label_index.at(label);
        if (peers.size() < 2) continue; // no same-label positive exists

        // Per-entry stream keeps output independent of evaluation order.
        SplitMix rng(derive_seed(seed, "cls:" + std::to_string(idx)));

        std::vector<size_t> positive_pool;
        for (size_t p : peers)
            if (p != idx) positive_pool.push_back(p);
        const size_t pos_idx = positive_pool[uniform_below(rng, positive_pool.size())];

        std::vector<size_t> negative_pool;
        for (size_t p = 0; p < view.entries.size(); ++p)
            if (view.entries[p].second != label) negative_pool.push_back(p);

        TrainingSample s;
        s.query = text;
        s.positive = view.entries[pos_idx].first;
        s.task = TaskKind::CLS;
        s.class_label = label;
        s.dataset_name = dataset_name;
        const size_t want = std::min(negatives_per_sample, negative_pool.size());
        for (size_t k = 0; k < want; ++k) {
            const size_t pick = uniform_below(rng, negative_pool.size() - k);
            s.negatives.push_back(view.entries[negative_pool[pick]].first);
            std::swap(negative_pool[pick], negative_pool[negative_pool.size() - 1 - k]);
        }
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

TransformResult transform_records(const std::vector<RawRecord>& records, RecordKind kind,
                                  const TransformConfig& cfg) {
    TransformResult result;
    switch (kind) {
        case RecordKind::TitleBody:
            for (const auto& r : records) result.samples.push_back(transform_title_body(r, cfg.max_chars));
            break;
        case RecordKind::ClaimEvidence:
            result.samples = merge_claim_evidence(records, &result.warnings);
            break;
        case RecordKind::QuestionAnswer:
            for (const auto& r : records) result.samples.push_back(transform_qa(r));
            break;
        case RecordKind::StsPair:
            for (const auto& r : records) {
                auto pairs = transform_sts(r, cfg.binarize_threshold);
                result.pairs.insert(result.pairs.end(), pairs.begin(), pairs.end());
            }
            break;
        case RecordKind::EntailmentTriple:
            for (const auto& r : records) {
                auto pairs = transform_entailment(r);
                result.pairs.insert(result.pairs.end(), pairs.begin(), pairs.end());
            }
            break;
        case RecordKind::LabeledText: {
            if (records.empty())
                throw Error(ErrorCode::EmptyList, "no labeled records to transform");
            ClsDatasetView view = view_from_records(records);
            result.samples =
                transform_cls(view, cfg.negatives_per_sample, cfg.seed, records.front().dataset_name);
            break;
        }
    }
    return result;
}

} // namespace embforge
