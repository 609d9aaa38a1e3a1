#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "embforge/errors.hpp"

// Dataset-grouped batch scheduling: size-scaled sampling weights, the
// two-stage retrieval ratio, single-dataset batches, resumable offsets.

namespace embforge {

enum class BatchLoss { InfoNCE, Cosent };
enum class PlanStage { One, Two };

// How plan ratios are interpreted when drawing: per batch (each draw counts
// 1) or per sample (draws reweighted by batch size so the sample fraction
// matches the ratios despite unequal batch sizes).
enum class RatioUnit { Batches, Samples };

const char* batch_loss_name(BatchLoss k);
BatchLoss parse_batch_loss(const std::string& s);

struct DatasetMeta {
    std::string name;
    size_t size = 0; // record count
    bool is_retrieval = false;
    BatchLoss loss_kind = BatchLoss::InfoNCE;
    std::string path;

    void validate() const;
};

struct PlanEntry {
    std::string name;
    size_t size = 0;
    bool is_retrieval = false;
    BatchLoss loss_kind = BatchLoss::InfoNCE;
    std::string path;
    double ratio = 0.0; // probability of this dataset per draw
};

struct SamplingPlan {
    PlanStage stage = PlanStage::One;
    double alpha = 0.5;
    double eta = 0.72; // stage two only
    double s_ret = 0.0;
    double s_non_ret = 0.0;
    std::vector<PlanEntry> entries;

    void validate() const;
};

struct SamplerState {
    uint64_t rng_state = 0;
    uint64_t batch_counter = 0;
    std::map<std::string, uint64_t> offsets; // dataset name -> next record index

    static SamplerState fresh(const SamplingPlan& plan, uint64_t seed);
};

struct BatchSpec {
    std::string dataset_name;
    size_t dataset_index = 0; // into plan.entries
    BatchLoss loss_kind = BatchLoss::InfoNCE;
    std::vector<size_t> indices;
};

struct BatchSizes {
    size_t infonce = 256;
    size_t cosent = 768;
    RatioUnit unit = RatioUnit::Batches;
};

// p_i = l_i^alpha / sum_j l_j^alpha.
std::vector<double> compute_weights(const std::vector<size_t>& sizes, double alpha);

// Stage 1: weights over retrieval datasets only; everything else gets
// probability exactly 0.
SamplingPlan compute_stage1_plan(const std::vector<DatasetMeta>& datasets, double alpha);

// Stage 2: retrieval side shares eta, non-retrieval side shares 1 - eta,
// each side normalized by its own sum of l_i^alpha.
SamplingPlan compute_two_stage_plan(const std::vector<DatasetMeta>& datasets, double alpha,
                                    double eta);

// Draw one dataset by plan ratio, emit its next B sequential record indices
// (wrapping at end of file), advance offset / RNG / counter.
BatchSpec next_batch(const SamplingPlan& plan, SamplerState& state, const BatchSizes& sizes);

std::string save_state(const SamplerState& state);
SamplerState restore_state(const std::string& bytes);

// datasets.json / plan.json
std::vector<DatasetMeta> read_dataset_manifest(const std::string& path);
void write_dataset_manifest(const std::string& path, const std::vector<DatasetMeta>& datasets);
SamplingPlan read_plan(const std::string& path);
void write_plan(const std::string& path, const SamplingPlan& plan);

} // namespace embforge
