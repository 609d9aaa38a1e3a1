#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embforge/corpus.hpp"
#include "embforge/errors.hpp"
#include "embforge/transform.hpp"

// LLM-driven paraphrasing, augmentation, and hard-negative generation, with
// mechanical constraint validation and per-task application policy.

namespace embforge {

enum class SynthKind { Paraphrase, Augment, HardNegative };

enum class DegradationMode { SemanticDeviation, IrrelevantInfo, SameTopicDifferentAspect };

const char* synth_kind_name(SynthKind k);
SynthKind parse_synth_kind(const std::string& s);

struct ConstraintSet {
    bool keep_core_semantics = false;
    bool allow_structural_variation = false;
    double max_length_deviation = 0.15;
    bool keep_language = true;
    bool stay_in_field = false;
    bool require_topic_shift = false; // Augment only
    bool pos_necessary_and_sufficient = false;
    std::set<DegradationMode> negative_degradation_modes; // HardNegative only
    bool imitate_structure = false;

    void validate(SynthKind kind) const; // throws ConstraintKindMismatch
};

ConstraintSet paraphrase_constraints();
ConstraintSet augment_constraints();
ConstraintSet hard_negative_constraints();

struct PromptSpec {
    SynthKind kind = SynthKind::Paraphrase;
    std::string system_text;
    std::string user_text;
    ConstraintSet constraints;
    size_t expected_outputs = 1;

    // Structured copies of what user_text embeds, so offline clients need not
    // re-parse prose.
    std::string source_query;
    std::string source_positive;
    bool pair_mode = false; // items are {"query","positive"[,"negative"]} JSON
};

PromptSpec build_prompt(SynthKind kind, const TrainingSample& sample,
                        const ConstraintSet& constraints, size_t expected_outputs);

struct LlmClientConfig {
    std::string base_url;
    std::string model_name;
    std::string api_key_env_var = "EMBFORGE_API_KEY";
    size_t max_parallel_requests = 4;
    size_t retry_limit = 3;
    double timeout_seconds = 30.0;
    bool offline_stub = true;
    double sampling_temperature = 0.7;
    double stub_violation_rate = 0.0;
};

class LlmClient {
  public:
    virtual ~LlmClient() = default;
    // Returns expected_outputs generated items. Paraphrase/Augment items are
    // one-line JSON objects; HardNegative items are plain text.
    virtual std::vector<std::string> complete(const PromptSpec& prompt, uint64_t seed) = 0;
};

struct InjectedViolation {
    std::string source_query;
    size_t output_index = 0;
    std::string kind; // "length" | "script" | "verbatim"
};

// Offline deterministic generator. Outputs are token-level rewrites of the
// source that satisfy the constraint checks; with violation_rate > 0 a seeded
// fraction of outputs is deliberately broken and logged, giving tests ground
// truth for what the validator must reject.
class StubLlmClient : public LlmClient {
  public:
    explicit StubLlmClient(double violation_rate = 0.0);
    std::vector<std::string> complete(const PromptSpec& prompt, uint64_t seed) override;
    const std::vector<InjectedViolation>& injected_violations() const { return injected_; }
    void clear_log() { injected_.clear(); }

  private:
    double violation_rate_;
    std::vector<InjectedViolation> injected_;
};

// chat-completions-style JSON POST client; reads the bearer token from the
// env var named in the config. Defined in synthesis_http.cpp.
class HttpLlmClient : public LlmClient {
  public:
    explicit HttpLlmClient(LlmClientConfig cfg);
    std::vector<std::string> complete(const PromptSpec& prompt, uint64_t seed) override;

  private:
    LlmClientConfig cfg_;
};

std::unique_ptr<LlmClient> make_client(const LlmClientConfig& cfg);

struct ValidationReport {
    bool passed = false;
    double length_ratio = 0.0;
    bool language_match = true;
    bool identical_to_source = false;
    std::vector<std::string> rejection_reasons; // "length" | "language" | "identical"
};

// Mechanical checks: codepoint length ratio within [1-d, 1+d], majority
// Unicode script match (when keep_language), and generated != original.
ValidationReport validate_synthesis(const std::string& original, const std::string& generated,
                                    const ConstraintSet& constraints);

// Rewrite query and positive together; keeps only variants whose two fields
// both validate. Client failures surface as warnings, never aborts.
std::vector<TrainingSample> paraphrase(const TrainingSample& sample, LlmClient& client,
                                       const ConstraintSet& constraints, size_t n_variants,
                                       uint64_t seed, Warnings* warnings = nullptr);

// Single-text paraphrase used by the NLI/CLS policies.
std::vector<std::string> paraphrase_texts(const std::string& text, LlmClient& client,
                                          const ConstraintSet& constraints, size_t n_variants,
                                          uint64_t seed, Warnings* warnings = nullptr);

// New (query, positive, negative) samples on shifted topics. Retrieval only.
std::vector<TrainingSample> augment(const TrainingSample& sample, LlmClient& client,
                                    const ConstraintSet& constraints, size_t n_new, uint64_t seed,
                                    Warnings* warnings = nullptr);

// k negatives imitating the positive's structure, each degraded via one of
// the constraint set's modes. Never returns a copy of the positive.
std::vector<std::string> gen_hard_negatives(const TrainingSample& sample, LlmClient& client,
                                            const ConstraintSet& constraints, size_t k,
                                            uint64_t seed, Warnings* warnings = nullptr);

// --- per-task application policy ---------------------------------------------

std::vector<TrainingSample> apply_retrieval_policy(const std::vector<TrainingSample>& originals,
                                                   const std::vector<TrainingSample>& accepted);

struct Rewrite {
    std::string original;
    std::string rewritten;
};

// For each rewrite, existing pairs containing the original sentence are
// duplicated (with probability duplication_prob) with the rewritten sentence
// substituted in.
std::vector<ScoredPair> apply_nli_policy(const std::vector<ScoredPair>& pairs,
                                         const std::vector<Rewrite>& rewrites,
                                         double duplication_prob, uint64_t seed);

// Rewritten texts re-enter the view under their original labels.
ClsDatasetView apply_cls_policy(const ClsDatasetView& view, const std::vector<Rewrite>& rewrites,
                                Warnings* warnings = nullptr);

// Paraphrase/Augment eligibility: small datasets only.
bool synthesis_eligible(size_t dataset_size, size_t trigger_max = 60000);

} // namespace embforge
