#include "embforge/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "embforge/text.hpp"

namespace embforge {

using ordered_json = nlohmann::ordered_json;

const char* synth_kind_name(SynthKind k) {
    switch (k) {
        case SynthKind::Paraphrase: return "paraphrase";
        case SynthKind::Augment: return "augment";
        case SynthKind::HardNegative: return "hardneg";
    }
    return "?";
}

SynthKind parse_synth_kind(const std::string& s) {
    if (s == "paraphrase") return SynthKind::Paraphrase;
    if (s == "augment") return SynthKind::Augment;
    if (s == "hardneg") return SynthKind::HardNegative;
    throw Error(ErrorCode::ParseError, "unknown synthesis mode '" + s + "'");
}

void ConstraintSet::validate(SynthKind kind) const {
    if (!(max_length_deviation > 0.0 && max_length_deviation < 1.0))
        throw Error(ErrorCode::InvalidArgument, "max_length_deviation outside (0, 1)");
    if (require_topic_shift && kind != SynthKind::Augment)
        throw Error(ErrorCode::ConstraintKindMismatch, "topic shift applies to augmentation only");
    if (!negative_degradation_modes.empty() && kind != SynthKind::HardNegative)
        throw Error(ErrorCode::ConstraintKindMismatch,
                    "degradation modes apply to hard-negative generation only");
    if (kind == SynthKind::HardNegative && negative_degradation_modes.empty())
        throw Error(ErrorCode::ConstraintKindMismatch,
                    "hard-negative generation needs at least one degradation mode");
}

ConstraintSet paraphrase_constraints() {
    ConstraintSet c;
    c.keep_core_semantics = true;
    c.allow_structural_variation = true;
    c.keep_language = true;
    return c;
}

ConstraintSet augment_constraints() {
    ConstraintSet c;
    c.keep_language = true;
    c.stay_in_field = true;
    c.require_topic_shift = true;
    return c;
}

ConstraintSet hard_negative_constraints() {
    ConstraintSet c;
    c.keep_language = true;
    c.pos_necessary_and_sufficient = true;
    c.negative_degradation_modes = {DegradationMode::SemanticDeviation,
                                    DegradationMode::IrrelevantInfo,
                                    DegradationMode::SameTopicDifferentAspect};
    c.imitate_structure = true;
    return c;
}

// --- prompt assembly -----------------------------------------------------------

namespace {

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", fraction * 100.0);
    return buf;
}

std::vector<std::string> constraint_clauses(const ConstraintSet& c) {
    std::vector<std::string> clauses;
    if (c.keep_core_semantics)
        clauses.push_back("Preserve the core semantics of the source; this is the most "
                          "critical requirement.");
    if (c.allow_structural_variation)
        clauses.push_back("Variation in morphology, syntax, grammar, tense, and rhetoric "
                          "is permitted.");
    clauses.push_back("Keep the length deviation from the original sentence within +/-" +
                      format_percent(c.max_length_deviation) + "% of its length.");
    if (c.keep_language)
        clauses.push_back("Keep language: write in the same language as the original sentence.");
    if (c.stay_in_field)
        clauses.push_back("The content must remain strictly aligned with the field of the "
                          "given sentence.");
    if (c.require_topic_shift)
        clauses.push_back("Shift, extend, or expand the topic, prohibiting pure rewriting "
                          "of the original content.");
    if (c.pos_necessary_and_sufficient)
        clauses.push_back("The positive must be the perfect answer to the query: necessary "
                          "and sufficient, with no extraneous information.");
    if (!c.negative_degradation_modes.empty()) {
        std::string modes = "Each hard negative must be worse than the positive via one of:";
        for (DegradationMode m : c.negative_degradation_modes) {
            switch (m) {
                case DegradationMode::SemanticDeviation:
                    modes += " semantic deviation (failing to accurately address the query);";
                    break;
                case DegradationMode::IrrelevantInfo:
                    modes += " inclusion of irrelevant information;";
                    break;
                case DegradationMode::SameTopicDifferentAspect:
                    modes += " same topic but a different aspect;";
                    break;
            }
        }
        clauses.push_back(modes);
    }
    if (c.imitate_structure)
        clauses.push_back("Imitate the syntax and sentence structure of the given positive "
                          "instance.");
    return clauses;
}

const char* kind_task_line(SynthKind kind) {
    switch (kind) {
        case SynthKind::Paraphrase:
            return "Rewrite the source while preserving its meaning.";
        case SynthKind::Augment:
            return "Write new query/positive/negative items on a shifted topic within the "
                   "same field.";
        case SynthKind::HardNegative:
            return "Write hard negative documents for the given query and positive.";
    }
    return "";
}

} // namespace

PromptSpec build_prompt(SynthKind kind, const TrainingSample& sample,
                        const ConstraintSet& constraints, size_t expected_outputs) {
    constraints.validate(kind);
    if (kind != SynthKind::Paraphrase && sample.task != TaskKind::Retrieval)
        throw Error(ErrorCode::PolicyViolation,
                    "augmentation and hard-negative synthesis apply to retrieval data only");

    PromptSpec spec;
    spec.kind = kind;
    spec.constraints = constraints;
    spec.expected_outputs = expected_outputs;
    spec.source_query = sample.query;
    spec.source_positive = sample.positive;
    spec.pair_mode = kind != SynthKind::HardNegative && !sample.positive.empty();

    spec.system_text = std::string("You generate training data for a text embedding model. ") +
                       kind_task_line(kind);

    std::string user = "Source query:\n" + sample.query + "\n";
    if (!sample.positive.empty()) user += "Source positive:\n" + sample.positive + "\n";
    user += "Constraints:\n";
    for (const auto& clause : constraint_clauses(constraints)) user += "- " + clause + "\n";
    user += "Produce " + std::to_string(expected_outputs) + " items, one per line";
    if (spec.pair_mode) {
        user += kind == SynthKind::Augment
                    ? ", each a JSON object {\"query\", \"positive\", \"negative\"}."
                    : ", each a JSON object {\"query\", \"positive\"}.";
    } else {
        user += ", each a plain text line.";
    }
    spec.user_text = user;
    return spec;
}

// --- stub client ---------------------------------------------------------------

namespace {

std::vector<std::string> token_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto tv : tokenize(text)) out.emplace_back(tv);
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

// Length-preserving letter/digit substitution; leaves other bytes alone.
std::string cipher_token(const std::string& token) {
    std::string out = token;
    for (char& ch : out) {
        if (ch >= 'a' && ch <= 'z')
            ch = static_cast<char>('a' + (ch - 'a' + 13) % 26);
        else if (ch >= 'A' && ch <= 'Z')
            ch = static_cast<char>('A' + (ch - 'A' + 13) % 26);
        else if (ch >= '0' && ch <= '9')
            ch = static_cast<char>('0' + (ch - '0' + 5) % 10);
    }
    return out;
}

// Reorder tokens; shift is forced into [1, n-1] so the result differs
// whenever the token sequence is not rotation-invariant.
std::string rotate_text(const std::string& text, uint64_t shift) {
    std::vector<std::string> tokens = token_list(text);
    if (tokens.size() >= 2) {
        const size_t s = 1 + static_cast<size_t>(shift % (tokens.size() - 1));
        std::rotate(tokens.begin(), tokens.begin() + static_cast<long>(s), tokens.end());
        return join_tokens(tokens);
    }
    if (tokens.size() == 1 && tokens[0].size() >= 2) {
        std::string t = tokens[0];
        std::rotate(t.begin(), t.begin() + 1, t.end());
        return t;
    }
    return cipher_token(text);
}

std::string degrade_positive(const std::string& positive, DegradationMode mode, uint64_t shift) {
    std::vector<std::string> tokens = token_list(rotate_text(positive, shift));
    switch (mode) {
        case DegradationMode::SemanticDeviation:
            for (size_t i = 0; i < tokens.size(); i += 3) tokens[i] = cipher_token(tokens[i]);
            break;
        case DegradationMode::IrrelevantInfo: {
            const size_t start = tokens.size() - (tokens.size() + 3) / 4;
            for (size_t i = start; i < tokens.size(); ++i) tokens[i] = cipher_token(tokens[i]);
            break;
        }
        case DegradationMode::SameTopicDifferentAspect:
            if (!tokens.empty()) tokens[tokens.size() / 2] = cipher_token(tokens[tokens.size() / 2]);
            break;
    }
    return join_tokens(tokens);
}

// Swap one seeded token between the two texts; the toy analogue of moving to
// a neighboring topic while staying in the field. Only near-equal-length
// tokens are swapped so the length band is never at risk.
void cross_pollinate(std::vector<std::string>& a, std::vector<std::string>& b, SplitMix& rng) {
    if (a.empty() || b.empty()) return;
    const size_t ia = static_cast<size_t>(uniform_below(rng, a.size()));
    const size_t start = static_cast<size_t>(uniform_below(rng, b.size()));
    for (size_t probe = 0; probe < b.size(); ++probe) {
        const size_t ib = (start + probe) % b.size();
        const size_t la = a[ia].size(), lb = b[ib].size();
        if ((la > lb ? la - lb : lb - la) <= 1) {
            std::swap(a[ia], b[ib]);
            return;
        }
    }
}

// Every letter becomes a CJK codepoint: flips the majority script while
// keeping the codepoint count.
std::string to_other_script(const std::string& text) {
    std::string out;
    for (unsigned char ch : text) {
        if ((ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || (ch >= '0' && ch <= '9')) {
            const char32_t cp = 0x4E00 + ch;
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(ch));
        }
    }
    return out;
}

std::string dump_pair_item(const std::string& query, const std::string& positive,
                           const std::string* negative) {
    ordered_json item;
    item["query"] = query;
    item["positive"] = positive;
    if (negative) item["negative"] = *negative;
    return item.dump();
}

DegradationMode pick_mode(const std::set<DegradationMode>& modes, uint64_t index) {
    std::vector<DegradationMode> v(modes.begin(), modes.end());
    return v[index % v.size()];
}

} // namespace

StubLlmClient::StubLlmClient(double violation_rate) : violation_rate_(violation_rate) {
    if (violation_rate < 0.0 || violation_rate > 1.0)
        throw Error(ErrorCode::InvalidArgument, "violation rate outside [0, 1]");
}

std::vector<std::string> StubLlmClient::complete(const PromptSpec& prompt, uint64_t seed) {
    SplitMix rng(derive_seed(seed ^ fnv1a64(prompt.user_text), "stub"));
    SplitMix vrng(derive_seed(seed ^ fnv1a64(prompt.user_text), "stub-violations"));

    std::vector<std::string> items;
    for (size_t i = 0; i < prompt.expected_outputs; ++i) {
        const uint64_t shift = rng();
        std::string item;
        switch (prompt.kind) {
            case SynthKind::Paraphrase: {
                if (prompt.pair_mode) {
                    item = dump_pair_item(rotate_text(prompt.source_query, shift),
                                          rotate_text(prompt.source_positive, shift + 1), nullptr);
                } else {
                    item = rotate_text(prompt.source_query, shift);
                }
                break;
            }
            case SynthKind::Augment: {
                std::vector<std::string> q = token_list(rotate_text(prompt.source_query, shift));
                std::vector<std::string> p =
                    token_list(rotate_text(prompt.source_positive, shift + 1));
                cross_pollinate(q, p, rng);
                const std::string new_query = join_tokens(q);
                const std::string new_positive = join_tokens(p);
                const std::string negative = degrade_positive(
                    new_positive, pick_mode(hard_negative_constraints().negative_degradation_modes, i),
                    shift + 2);
                item = dump_pair_item(new_query, new_positive, &negative);
                break;
            }
            case SynthKind::HardNegative: {
                const DegradationMode mode =
                    pick_mode(prompt.constraints.negative_degradation_modes, i);
                item = degrade_positive(prompt.source_positive, mode, shift);
                break;
            }
        }

        if (violation_rate_ > 0.0 && uniform01(vrng) < violation_rate_) {
            const uint64_t which = uniform_below(vrng, 3);
            InjectedViolation log;
            log.source_query = prompt.source_query;
            log.output_index = i;
            if (which == 0) {
                log.kind = "length";
                if (prompt.pair_mode) {
                    ordered_json obj = ordered_json::parse(item);
                    for (auto& [key, value] : obj.items()) {
                        const std::string s = value.get<std::string>();
                        value = s + " " + s;
                    }
                    item = obj.dump();
                } else {
                    item = item + " " + item;
                }
            } else if (which == 1) {
                log.kind = "script";
                if (prompt.pair_mode) {
                    ordered_json obj = ordered_json::parse(item);
                    for (auto& [key, value] : obj.items())
                        value = to_other_script(value.get<std::string>());
                    item = obj.dump();
                } else {
                    item = to_other_script(item);
                }
            } else {
                log.kind = "verbatim";
                if (prompt.pair_mode) {
                    item = dump_pair_item(prompt.source_query, prompt.source_positive,
                                          prompt.kind == SynthKind::Augment ? &prompt.source_positive
                                                                            : nullptr);
                } else {
                    item = prompt.kind == SynthKind::HardNegative ? prompt.source_positive
                                                                  : prompt.source_query;
                }
            }
            injected_.push_back(std::move(log));
        }
        items.push_back(std::move(item));
    }
    return items;
}

std::unique_ptr<LlmClient> make_client(const LlmClientConfig& cfg) {
    if (cfg.offline_stub) return std::make_unique<StubLlmClient>(cfg.stub_violation_rate);
    return std::make_unique<HttpLlmClient>(cfg);
}

// --- validation ----------------------------------------------------------------

ValidationReport validate_synthesis(const std::string& original, const std::string& generated,
                                    const ConstraintSet& constraints) {
    if (original.empty() || generated.empty())
        throw Error(ErrorCode::EmptyText, "validation needs non-empty texts");
    ValidationReport report;
    const double orig_len = static_cast<double>(count_codepoints(original));
    const double gen_len = static_cast<double>(count_codepoints(generated));
    report.length_ratio = gen_len / orig_len;
    const double d = constraints.max_length_deviation;
    if (report.length_ratio < 1.0 - d || report.length_ratio > 1.0 + d)
        report.rejection_reasons.push_back("length");
    if (constraints.keep_language) {
        report.language_match = majority_script(original) == majority_script(generated);
        if (!report.language_match) report.rejection_reasons.push_back("language");
    }
    report.identical_to_source = generated == original;
    if (report.identical_to_source) report.rejection_reasons.push_back("identical");
    report.passed = report.rejection_reasons.empty();
    return report;
}

// --- generation ops ------------------------------------------------------------

namespace {

struct PairItem {
    std::string query;
    std::string positive;
    std::string negative;
    bool has_negative = false;
};

std::optional<PairItem> parse_pair_item(const std::string& item) {
    ordered_json obj = ordered_json::parse(item, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) return std::nullopt;
    PairItem out;
    if (!obj.contains("query") || !obj.contains("positive")) return std::nullopt;
    if (!obj["query"].is_string() || !obj["positive"].is_string()) return std::nullopt;
    out.query = obj["query"].get<std::string>();
    out.positive = obj["positive"].get<std::string>();
    if (obj.contains("negative") && obj["negative"].is_string()) {
        out.negative = obj["negative"].get<std::string>();
        out.has_negative = true;
    }
    return out;
}

std::vector<std::string> complete_or_warn(LlmClient& client, const PromptSpec& prompt,
                                          uint64_t seed, Warnings* warnings) {
    try {
        return client.complete(prompt, seed);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ApiError) throw;
        if (warnings) warnings->add(std::string("generation failed: ") + e.what());
        return {};
    }
}

} // namespace

std::vector<TrainingSample> paraphrase(const TrainingSample& sample, LlmClient& client,
                                       const ConstraintSet& constraints, size_t n_variants,
                                       uint64_t seed, Warnings* warnings) {
    sample.validate();
    const PromptSpec prompt = build_prompt(SynthKind::Paraphrase, sample, constraints, n_variants);
    std::vector<TrainingSample> out;
    for (const std::string& item : complete_or_warn(client, prompt, seed, warnings)) {
        auto parsed = parse_pair_item(item);
        if (!parsed) {
            if (warnings) warnings->add("paraphrase item is not a query/positive object; dropped");
            continue;
        }
        const ValidationReport rq = validate_synthesis(sample.query, parsed->query, constraints);
        const ValidationReport rp =
            validate_synthesis(sample.positive, parsed->positive, constraints);
        if (!rq.passed || !rp.passed) {
            if (warnings) {
                std::string why;
                for (const auto& r : rq.rejection_reasons) why += " query:" + r;
                for (const auto& r : rp.rejection_reasons) why += " positive:" + r;
                warnings->add("paraphrase variant rejected:" + why);
            }
            continue;
        }
        TrainingSample v = sample;
        v.query = parsed->query;
        v.positive = parsed->positive;
        v.negatives.clear();
        v.provenance = Provenance::Paraphrased;
        v.validate();
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<std::string> paraphrase_texts(const std::string& text, LlmClient& client,
                                          const ConstraintSet& constraints, size_t n_variants,
                                          uint64_t seed, Warnings* warnings) {
    if (trim(text).empty()) throw Error(ErrorCode::EmptyText, "nothing to paraphrase");
    TrainingSample carrier;
    carrier.query = text;
    carrier.task = TaskKind::Retrieval;
    constraints.validate(SynthKind::Paraphrase);

    PromptSpec prompt;
    prompt.kind = SynthKind::Paraphrase;
    prompt.constraints = constraints;
    prompt.expected_outputs = n_variants;
    prompt.source_query = text;
    prompt.pair_mode = false;
    prompt.system_text = std::string("You generate training data for a text embedding model. ") +
                         "Rewrite the source while preserving its meaning.";
    prompt.user_text = "Source query:\n" + text + "\nConstraints:\n";
    for (const auto& clause : constraint_clauses(constraints))
        prompt.user_text += "- " + clause + "\n";
    prompt.user_text +=
        "Produce " + std::to_string(n_variants) + " items, one per line, each a plain text line.";

    std::vector<std::string> out;
    for (const std::string& item : complete_or_warn(client, prompt, seed, warnings)) {
        const ValidationReport r = validate_synthesis(text, item, constraints);
        if (!r.passed) {
            if (warnings) {
                std::string why;
                for (const auto& reason : r.rejection_reasons) why += " " + reason;
                warnings->add("rewrite rejected:" + why);
            }
            continue;
        }
        out.push_back(item);
    }
    return out;
}

std::vector<TrainingSample> augment(const TrainingSample& sample, LlmClient& client,
                                    const ConstraintSet& constraints, size_t n_new, uint64_t seed,
                                    Warnings* warnings) {
    sample.validate();
    if (sample.task != TaskKind::Retrieval)
        throw Error(ErrorCode::PolicyViolation,
                    "augmentation applies to retrieval data only");
    const PromptSpec prompt = build_prompt(SynthKind::Augment, sample, constraints, n_new);
    std::vector<TrainingSample> out;
    for (const std::string& item : complete_or_warn(client, prompt, seed, warnings)) {
        auto parsed = parse_pair_item(item);
        if (!parsed || parsed->query == sample.query) {
            if (warnings) warnings->add("augment item malformed or not topic-shifted; dropped");
            continue;
        }
        const ValidationReport rq = validate_synthesis(sample.query, parsed->query, constraints);
        const ValidationReport rp =
            validate_synthesis(sample.positive, parsed->positive, constraints);
        bool neg_ok = true;
        if (parsed->has_negative) {
            neg_ok = !parsed->negative.empty() && parsed->negative != parsed->positive &&
                     validate_synthesis(parsed->positive, parsed->negative, constraints).passed;
        }
        if (!rq.passed || !rp.passed || !neg_ok) {
            if (warnings) warnings->add("augment variant rejected by constraint checks");
            continue;
        }
        TrainingSample v = sample;
        v.query = parsed->query;
        v.positive = parsed->positive;
        v.negatives.clear();
        if (parsed->has_negative) v.negatives.push_back(parsed->negative);
        v.provenance = Provenance::Augmented;
        v.validate();
        out.push_back(std::move(v));
    }
    return out;
}

std::vector<std::string> gen_hard_negatives(const TrainingSample& sample, LlmClient& client,
                                            const ConstraintSet& constraints, size_t k,
                                            uint64_t seed, Warnings* warnings) {
    sample.validate();
    if (sample.task != TaskKind::Retrieval)
        throw Error(ErrorCode::PolicyViolation,
                    "hard-negative synthesis applies to retrieval data only");
    if (k == 0) return {};
    const PromptSpec prompt = build_prompt(SynthKind::HardNegative, sample, constraints, k);
    std::vector<std::string> out;
    for (const std::string& item : complete_or_warn(client, prompt, seed, warnings)) {
        if (item == sample.positive) {
            if (warnings)
                warnings->add(std::string("degenerate negative equals the positive; dropped (") +
                              error_code_name(ErrorCode::DegenerateOutput) + ")");
            continue;
        }
        const ValidationReport r = validate_synthesis(sample.positive, item, constraints);
        if (!r.passed) {
            if (warnings) {
                std::string why;
                for (const auto& reason : r.rejection_reasons) why += " " + reason;
                warnings->add("synthetic negative rejected:" + why);
            }
            continue;
        }
        out.push_back(item);
    }
    return out;
}

// --- per-task policy -----------------------------------------------------------

std::vector<TrainingSample> apply_retrieval_policy(const std::vector<TrainingSample>& originals,
                                                   const std::vector<TrainingSample>& accepted) {
    std::vector<TrainingSample> out = originals;
    for (const auto& s : accepted) {
        if (s.provenance == Provenance::Original)
            throw Error(ErrorCode::InvalidArgument,
                        "synthetic sample is missing its provenance mark");
        out.push_back(s);
    }
    return out;
}

std::vector<ScoredPair> apply_nli_policy(const std::vector<ScoredPair>& pairs,
                                         const std::vector<Rewrite>& rewrites,
                                         double duplication_prob, uint64_t seed) {
    if (duplication_prob < 0.0 || duplication_prob > 1.0)
        throw Error(ErrorCode::InvalidArgument, "duplication probability outside [0, 1]");
    std::vector<ScoredPair> out = pairs;
    SplitMix rng(derive_seed(seed, "nli-policy"));
    for (const auto& rw : rewrites) {
        for (const auto& pair : pairs) {
            const bool in_a = pair.text_a == rw.original;
            const bool in_b = pair.text_b == rw.original;
            if (!in_a && !in_b) continue;
            if (uniform01(rng) >= duplication_prob) continue;
            ScoredPair dup = pair;
            if (in_a) dup.text_a = rw.rewritten;
            if (in_b) dup.text_b = rw.rewritten;
            out.push_back(std::move(dup));
        }
    }
    return out;
}

ClsDatasetView apply_cls_policy(const ClsDatasetView& view, const std::vector<Rewrite>& rewrites,
                                Warnings* warnings) {
    ClsDatasetView out = view;
    for (const auto& rw : rewrites) {
        const std::string* label = nullptr;
        for (const auto& [text, lab] : view.entries) {
            if (text == rw.original) {
                label = &lab;
                break;
            }
        }
        if (!label) {
            if (warnings) warnings->add("rewrite source not found in the CLS view; dropped");
            continue;
        }
        out.add(rw.rewritten, *label);
    }
    return out;
}

bool synthesis_eligible(size_t dataset_size, size_t trigger_max) {
    return dataset_size < trigger_max;
}

} // namespace embforge
