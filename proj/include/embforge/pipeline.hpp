#pragma once
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "embforge/corpus.hpp"
#include "embforge/mining.hpp"
#include "embforge/synthesis.hpp"
#include "embforge/trainer.hpp"
#include "embforge/transform.hpp"

namespace embforge {

// One raw source dataset as named in pipeline.json. The task routes it
// through the stages: retrieval data is synthesized/mined/filtered, NLI pairs
// and CLS sets get their own augmentation policies.
struct DatasetConfig {
    std::string name;
    RecordKind kind = RecordKind::TitleBody;
    std::string path; // relative to the config file's directory
    TaskKind task = TaskKind::Retrieval;
    std::optional<double> binarize_threshold; // STS only
};

struct PipelineConfig {
    uint64_t seed = 0;
    std::string base_dir = "."; // directory all relative paths resolve against
    std::string work_dir = "work";
    bool stub = true; // offline synthesis; HTTP client only when explicitly disabled
    double synth_fraction = 0.3;
    size_t synthesis_trigger_max = 60000;
    std::string instructions_path;
    std::string eval_path;
    std::vector<DatasetConfig> datasets;
    TransformConfig transform;
    MiningConfig mining;
    LlmClientConfig llm;
    double nli_duplication_prob = 0.5;
    TrainConfig train;

    static PipelineConfig load(const std::string& path);
    void validate() const;
};

extern const std::vector<std::string> kStageNames; // transform..eval in run order

struct StageOutcome {
    std::string stage;
    bool skipped = false;
};

struct PipelineReport {
    std::vector<StageOutcome> stages;
    int exit_code = 0;
    std::string failed_stage;
    std::string error;
};

// Runs all stages in order under base_dir/work_dir. Each stage records
// input/config/output hashes in work/manifest.json and is skipped when they
// match and its outputs still exist. Human-readable progress goes to `human`,
// line-delimited JSON events to `events` (either may be null). Errors stop
// the run at the failing stage; completed artifacts stay on disk.
PipelineReport run_pipeline(const PipelineConfig& cfg, std::ostream* human = nullptr,
                            std::ostream* events = nullptr);

// Parses a standalone train.json (any subset of TrainConfig keys over the
// defaults). Shared by the train subcommand and PipelineConfig::load.
TrainConfig parse_train_config(const std::string& json_text);

} // namespace embforge
