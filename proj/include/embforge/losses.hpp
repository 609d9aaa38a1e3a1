#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "embforge/errors.hpp"

namespace embforge {

using Vec = std::vector<double>;

// Embedded vectors for one sampled batch from one dataset. All vectors are
// unit-norm (within 1e-6), so cosine similarity below is plain dot product.
struct EmbeddedBatch {
    std::vector<Vec> queries;                 // n x d
    std::vector<Vec> positives;               // n x d
    std::vector<std::vector<Vec>> negatives;  // n x m x d
    std::vector<std::string> class_labels;    // CLS: size n, label of query == label of positive
    std::vector<std::vector<std::string>> neg_class_labels; // CLS: n x m
    std::string dataset_name;

    size_t size() const { return queries.size(); }
    size_t negatives_per_instance() const { return negatives.empty() ? 0 : negatives[0].size(); }
    bool has_labels() const { return !class_labels.empty(); }

    // Shape + unit-norm checks. expect_labels selects the CLS contract.
    void validate(bool expect_labels) const;
};

// Aligned (similarity, ordinal score) lists for the Cosent kernel.
struct ScoredPairBatch {
    Vec sims;
    std::vector<int> scores;

    void validate() const;
};

struct LossConfig {
    double temperature = 0.02;
    bool include_query_query = true;   // third denominator term of the retrieval loss
    // When true the negative sum ranges over every negative in the batch
    // (in-batch sharing); when false only over the instance's own negatives.
    bool share_batch_negatives = true;
};

struct LossOutput {
    double value = 0.0;
    std::vector<Vec> grad_queries;
    std::vector<Vec> grad_positives;
    std::vector<std::vector<Vec>> grad_negatives;
    Vec grad_sims; // Cosent only
};

// Retrieval InfoNCE with in-batch negatives and the query-query term.
LossOutput retrieval_loss(const EmbeddedBatch& batch, const LossConfig& cfg);

// Cosent ranking loss over ordered pairs of entries whose ground-truth scores
// strictly order them.
LossOutput cosent_loss(const ScoredPairBatch& pairs, const LossConfig& cfg);

// Masked CLS InfoNCE: in-batch terms whose class matches the query's class
// are excluded from the partition function entirely, so they contribute
// neither value nor gradient.
LossOutput cls_loss(const EmbeddedBatch& batch, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Similarity-level core, exposed so tests can perturb sims directly (mask
// exactness) and so the vector-level kernels share one code path.
// ---------------------------------------------------------------------------

// Pooled similarity table for one batch: pooled negative index p corresponds
// to instance p / m, slot p % m.
struct SimTable {
    size_t n = 0;
    size_t m = 0;
    Vec pos;                   // n: sim(q_i, d_i+)
    std::vector<Vec> neg;      // n x (n*m): sim(q_i, pooled negative p)
    std::vector<Vec> qq;       // n x n: sim(q_i, q_j)
};

// Active-term masks, same shapes as SimTable::neg / SimTable::qq. A masked
// (false) term is skipped, not multiplied by zero.
struct TermMask {
    std::vector<std::vector<uint8_t>> neg;
    std::vector<std::vector<uint8_t>> qq;
};

struct SimLossResult {
    double value = 0.0;
    Vec dpos;
    std::vector<Vec> dneg;
    std::vector<Vec> dqq;
};

SimTable compute_sims(const EmbeddedBatch& batch);

// Retrieval mask: all pool terms (or own-instance terms when sharing is off)
// plus the query-query terms when enabled.
TermMask retrieval_mask(size_t n, size_t m, const LossConfig& cfg);

// CLS mask: a term is active iff its class label differs from the query's.
TermMask cls_mask(const EmbeddedBatch& batch);

// -(1/n) sum_i log( e^{pos_i/tau} / Z_i ) with Z_i over the active terms,
// evaluated with per-row log-sum-exp. Gradients are w.r.t. the sims.
SimLossResult infonce_from_sims(const SimTable& sims, const TermMask& mask, double tau);

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

enum class LossKind { Retrieval, Cosent, Cls };

LossKind parse_loss_kind(const std::string& s);

struct GradCheckReport {
    double max_rel_error = 0.0;
};

// Central finite differences on every embedding coordinate (retrieval / CLS)
// or on every sim (Cosent) against the analytic gradients. Relative error
// uses denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(LossKind kind, const EmbeddedBatch& batch, const LossConfig& cfg,
                           double epsilon);
GradCheckReport grad_check(const ScoredPairBatch& pairs, const LossConfig& cfg, double epsilon);

} // namespace embforge
