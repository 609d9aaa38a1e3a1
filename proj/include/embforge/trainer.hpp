#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embforge/corpus.hpp"
#include "embforge/errors.hpp"
#include "embforge/losses.hpp"
#include "embforge/sampler.hpp"

// Desk-scale two-stage training: a hashed bag-of-tokens embedder with mean
// pooling and L2 normalization, gradient descent on the loss kernels, and
// retrieval evaluation on held-out fixtures.

namespace embforge {

struct ToyEmbedderParams {
    size_t vocab = 1 << 16; // hashed feature rows
    size_t dim = 64;
    uint64_t hash_seed = 0;
    std::vector<double> weights; // vocab x dim, row-major

    static ToyEmbedderParams init(size_t vocab, size_t dim, uint64_t seed);
    double* row(size_t r) { return weights.data() + r * dim; }
    const double* row(size_t r) const { return weights.data() + r * dim; }
};

// Token feature rows for a text: FNV token hashes folded into [0, vocab).
std::vector<uint32_t> feature_rows(const std::string& text, const ToyEmbedderParams& params);

// Mean-pool the feature rows and L2-normalize. Throws EmptyText when the
// text has no tokens.
Vec embed(const std::string& text, const ToyEmbedderParams& params);

struct TrainConfig {
    size_t stage1_steps = 3200;
    size_t stage2_steps = 800;
    double lr1 = 1e-2;
    double lr2 = -1.0; // < 0: default to (2/3) * lr1
    size_t warmup_steps = 30;
    bool stage2_fresh_warmup = true;
    double tau = 0.02;
    double eta = 0.72;
    double alpha = 0.5;
    size_t batch_infonce = 256;
    size_t batch_cosent = 768;
    RatioUnit ratio_unit = RatioUnit::Batches;
    size_t max_negatives = 4;
    double weight_decay = 0.01;
    bool include_query_query = true;
    bool share_batch_negatives = true;
    size_t query_max_chars = 256;
    size_t passage_max_chars = 1536;
    size_t vocab = 1 << 16;
    size_t dim = 64;
    uint64_t seed = 0;

    void validate() const;
    double stage2_lr() const { return lr2 > 0.0 ? lr2 : lr1 * (2.0 / 3.0); }
};

struct EvalItem {
    std::string query;
    std::string instruction;
    std::string positive;
    std::vector<std::string> distractors;

    void validate() const; // needs >= 5 distractors
};

std::vector<EvalItem> read_eval_items(const std::string& path);
void write_eval_items(const std::string& path, const std::vector<EvalItem>& items);

struct RecallReport {
    double recall_at_1 = 0.0;
    double recall_at_5 = 0.0;
};

RecallReport evaluate_recall(const ToyEmbedderParams& params, const std::vector<EvalItem>& items);

struct TrainReport {
    std::vector<double> stage1_losses;
    std::vector<double> stage2_losses;
    std::vector<std::string> stage2_tasks; // loss dispatched per stage-2 step
    double recall1_after_stage1 = -1.0;
    double recall5_after_stage1 = -1.0;
    double recall_at_1 = -1.0;
    double recall_at_5 = -1.0;
    double wall_seconds = 0.0;
};

void write_report(const std::string& path, const TrainReport& report);

// Step-level driver. Loads every dataset up front (samples or pairs by loss
// kind), prepares token rows once per record, and exposes both the full
// two-stage run and single-batch stepping for the invariant checks.
class Trainer {
  public:
    Trainer(TrainConfig cfg, std::vector<DatasetMeta> datasets);

    TrainReport run(const std::vector<EvalItem>& eval_items);

    // Draw a batch from the given stage's plan (advances sampler state).
    BatchSpec draw(PlanStage stage);
    // Loss of a batch at the current parameters, no update.
    double eval_batch_loss(const BatchSpec& spec);
    // One gradient step on the batch; returns the pre-step loss.
    double train_one(const BatchSpec& spec, double lr);

    ToyEmbedderParams& params();
    const TrainConfig& config() const { return cfg_; }

  private:
    struct PreparedSample {
        std::vector<uint32_t> query_rows;
        std::vector<uint32_t> positive_rows;
        std::vector<std::vector<uint32_t>> negative_rows;
        std::string label;
        std::vector<std::string> neg_labels;
    };
    struct PreparedPair {
        std::vector<uint32_t> a_rows;
        std::vector<uint32_t> b_rows;
        int score = 0;
    };
    struct LoadedDataset {
        DatasetMeta meta;
        bool is_cls = false;
        std::vector<PreparedSample> samples;
        std::vector<PreparedPair> pairs;
    };

    void flush_decay();
    void touch_row(uint32_t r);
    Vec embed_rows(const std::vector<uint32_t>& rows, double* norm_out);
    double step_batch(const BatchSpec& spec, double lr, bool apply_update);

    TrainConfig cfg_;
    ToyEmbedderParams params_;
    std::vector<LoadedDataset> data_;
    SamplingPlan plan1_, plan2_;
    bool plan2_valid_ = false;
    SamplerState state_;
    double cum_log_decay_ = 0.0;
    std::vector<double> row_log_decay_;
};

struct TrainOutcome {
    ToyEmbedderParams params;
    TrainReport report;
};

TrainOutcome train(const TrainConfig& cfg, const std::vector<DatasetMeta>& datasets,
                   const std::vector<EvalItem>& eval_items);

void save_model(const std::string& path, const ToyEmbedderParams& params);
ToyEmbedderParams load_model(const std::string& path);

} // namespace embforge
