#pragma once
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "embforge/errors.hpp"

namespace embforge {

// ---------------------------------------------------------------------------
// Canonical data model shared by every stage. Values are immutable once
// constructed and validated; workers may share them freely.
// ---------------------------------------------------------------------------

enum class RecordKind { TitleBody, ClaimEvidence, QuestionAnswer, StsPair, EntailmentTriple, LabeledText };
enum class TaskKind { Retrieval, NLI, CLS };
enum class Provenance { Original, Paraphrased, Augmented, SynthNegative };

const char* record_kind_name(RecordKind k);
const char* task_kind_name(TaskKind t);
const char* provenance_name(Provenance p);
RecordKind parse_record_kind(const std::string& s);
TaskKind parse_task_kind(const std::string& s);
Provenance parse_provenance(const std::string& s);

// An untyped source record: one line of raw input plus the dataset it came
// from. Payload keys depend on kind (title/body, claim/evidence/evidence_label,
// question/answer, sentence_a/sentence_b/label, text/label).
struct RawRecord {
    std::string dataset_name;
    RecordKind kind = RecordKind::TitleBody;
    std::map<std::string, std::string> payload;

    const std::string& field(const std::string& key) const; // throws EmptyField if absent/blank
    bool has(const std::string& key) const;
    void validate() const;
};

// The canonical training quadruple plus task metadata. The unit written to
// samples.jsonl.
struct TrainingSample {
    std::string query;
    std::string positive;
    std::vector<std::string> negatives;
    std::string instruction; // may be empty before attachment
    TaskKind task = TaskKind::Retrieval;
    std::optional<std::string> class_label; // CLS only
    std::string dataset_name;
    Provenance provenance = Provenance::Original;

    void validate() const;
};

// (text_a, text_b, ordinal score) for Cosent-trained data.
struct ScoredPair {
    std::string text_a;
    std::string text_b;
    int score = 0; // 0/1 for STS-derived, 0/1/2 for entailment-derived
    std::string dataset_name;

    void validate() const;
};

// dataset_name -> instruction template. Lookup of an unregistered name is a
// defined absent value, never an empty string posing as an instruction.
class InstructionRegistry {
public:
    InstructionRegistry() = default;

    void set(const std::string& dataset_name, const std::string& instruction);
    std::optional<std::string> lookup(const std::string& dataset_name) const;
    size_t size() const { return entries_.size(); }

    static InstructionRegistry load(const std::string& path); // instructions.json
    void save(const std::string& path) const;
    std::string to_json_string() const;
    static InstructionRegistry from_json_string(const std::string& json);

private:
    std::map<std::string, std::string> entries_;
};

// If the sample already carries an instruction it is retained; otherwise the
// registry entry for its dataset is attached. Absence is recorded as a
// warning, never a failure.
TrainingSample attach_instruction(const TrainingSample& sample, const InstructionRegistry& registry,
                                  Warnings* warnings = nullptr);

// ---------------------------------------------------------------------------
// JSON Lines serialization: one record per line, UTF-8, no BOM.
// ---------------------------------------------------------------------------

std::string to_json_line(const TrainingSample& sample);
std::string to_json_line(const ScoredPair& pair);
std::string to_json_line(const RawRecord& record);

TrainingSample sample_from_json(const std::string& line);
ScoredPair pair_from_json(const std::string& line);
RawRecord raw_record_from_json(const std::string& line);

std::vector<TrainingSample> read_samples(const std::string& path);
std::vector<ScoredPair> read_pairs(const std::string& path);
std::vector<RawRecord> read_raw_records(const std::string& path);

void write_samples(const std::string& path, const std::vector<TrainingSample>& samples);
void write_pairs(const std::string& path, const std::vector<ScoredPair>& pairs);
void write_raw_records(const std::string& path, const std::vector<RawRecord>& records);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::vector<std::string> read_lines(const std::string& path);

} // namespace embforge
