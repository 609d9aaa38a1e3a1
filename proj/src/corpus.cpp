#include "embforge/corpus.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "embforge/text.hpp"

using ordered_json = nlohmann::ordered_json;

namespace embforge {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyField: return "EmptyField";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::MissingThreshold: return "MissingThreshold";
        case ErrorCode::MultiTurn: return "MultiTurn";
        case ErrorCode::InsufficientLabels: return "InsufficientLabels";
        case ErrorCode::ConstraintKindMismatch: return "ConstraintKindMismatch";
        case ErrorCode::PolicyViolation: return "PolicyViolation";
        case ErrorCode::ApiError: return "ApiError";
        case ErrorCode::DegenerateOutput: return "DegenerateOutput";
        case ErrorCode::CorpusTooSmall: return "CorpusTooSmall";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::MissingLabels: return "MissingLabels";
        case ErrorCode::EmptyList: return "EmptyList";
        case ErrorCode::MissingSide: return "MissingSide";
        case ErrorCode::CorruptState: return "CorruptState";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "UnknownError";
}

const char* record_kind_name(RecordKind k) {
    switch (k) {
        case RecordKind::TitleBody: return "title_body";
        case RecordKind::ClaimEvidence: return "claim_evidence";
        case RecordKind::QuestionAnswer: return "qa";
        case RecordKind::StsPair: return "sts";
        case RecordKind::EntailmentTriple: return "entailment";
        case RecordKind::LabeledText: return "labeled";
    }
    return "?";
}

const char* task_kind_name(TaskKind t) {
    switch (t) {
        case TaskKind::Retrieval: return "retrieval";
        case TaskKind::NLI: return "nli";
        case TaskKind::CLS: return "cls";
    }
    return "?";
}

const char* provenance_name(Provenance p) {
    switch (p) {
        case Provenance::Original: return "original";
        case Provenance::Paraphrased: return "paraphrased";
        case Provenance::Augmented: return "augmented";
        case Provenance::SynthNegative: return "synth_negative";
    }
    return "?";
}

RecordKind parse_record_kind(const std::string& s) {
    if (s == "title_body") return RecordKind::TitleBody;
    if (s == "claim_evidence") return RecordKind::ClaimEvidence;
    if (s == "qa") return RecordKind::QuestionAnswer;
    if (s == "sts") return RecordKind::StsPair;
    if (s == "entailment") return RecordKind::EntailmentTriple;
    if (s == "labeled") return RecordKind::LabeledText;
    throw Error(ErrorCode::ParseError, "unknown record kind '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "retrieval") return TaskKind::Retrieval;
    if (s == "nli") return TaskKind::NLI;
    if (s == "cls") return TaskKind::CLS;
    throw Error(ErrorCode::ParseError, "unknown task kind '" + s + "'");
}

Provenance parse_provenance(const std::string& s) {
    if (s == "original") return Provenance::Original;
    if (s == "paraphrased") return Provenance::Paraphrased;
    if (s == "augmented") return Provenance::Augmented;
    if (s == "synth_negative") return Provenance::SynthNegative;
    throw Error(ErrorCode::ParseError, "unknown provenance '" + s + "'");
}

// --- RawRecord --------------------------------------------------------------

namespace {

const std::vector<std::string>& required_keys(RecordKind kind) {
    static const std::vector<std::string> title_body = {"title", "body"};
    static const std::vector<std::string> claim_evidence = {"claim", "evidence", "evidence_label"};
    static const std::vector<std::string> qa = {"question", "answer"};
    static const std::vector<std::string> sts = {"sentence_a", "sentence_b", "label"};
    static const std::vector<std::string> entailment = {"sentence_a", "sentence_b", "label"};
    static const std::vector<std::string> labeled = {"text", "label"};
    switch (kind) {
        case RecordKind::TitleBody: return title_body;
        case RecordKind::ClaimEvidence: return claim_evidence;
        case RecordKind::QuestionAnswer: return qa;
        case RecordKind::StsPair: return sts;
        case RecordKind::EntailmentTriple: return entailment;
        case RecordKind::LabeledText: return labeled;
    }
    return title_body;
}

} // namespace

const std::string& RawRecord::field(const std::string& key) const {
    auto it = payload.find(key);
    if (it == payload.end() || trim(it->second).empty())
        throw Error(ErrorCode::EmptyField, "record is missing '" + key + "'");
    return it->second;
}

bool RawRecord::has(const std::string& key) const {
    auto it = payload.find(key);
    return it != payload.end() && !trim(it->second).empty();
}

void RawRecord::validate() const {
    if (trim(dataset_name).empty())
        throw Error(ErrorCode::EmptyField, "record has empty dataset_name");
    for (const auto& key : required_keys(kind)) field(key);
}

// --- TrainingSample / ScoredPair ---------------------------------------------

void TrainingSample::validate() const {
    if (trim(query).empty()) throw Error(ErrorCode::EmptyField, "sample has empty query");
    if (trim(positive).empty()) throw Error(ErrorCode::EmptyField, "sample has empty positive");
    if (trim(dataset_name).empty()) throw Error(ErrorCode::EmptyField, "sample has empty dataset_name");
    if (task == TaskKind::CLS && !class_label.has_value())
        throw Error(ErrorCode::MissingLabels, "CLS sample lacks class_label");
    if (task != TaskKind::CLS && class_label.has_value())
        throw Error(ErrorCode::InvalidArgument, "non-CLS sample carries class_label");
    for (const auto& neg : negatives)
        if (neg == positive)
            throw Error(ErrorCode::InvalidArgument, "negative equals the positive");
}

void ScoredPair::validate() const {
    if (trim(text_a).empty() || trim(text_b).empty())
        throw Error(ErrorCode::EmptyField, "pair has empty text");
    if (trim(dataset_name).empty()) throw Error(ErrorCode::EmptyField, "pair has empty dataset_name");
    if (score < 0 || score > 2)
        throw Error(ErrorCode::InvalidArgument, "score out of ordinal range");
}

// --- InstructionRegistry -----------------------------------------------------

void InstructionRegistry::set(const std::string& dataset_name, const std::string& instruction) {
    if (trim(instruction).empty())
        throw Error(ErrorCode::EmptyField, "empty instruction for '" + dataset_name + "'");
    entries_[dataset_name] = instruction;
}

std::optional<std::string> InstructionRegistry::lookup(const std::string& dataset_name) const {
    auto it = entries_.find(dataset_name);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

std::string InstructionRegistry::to_json_string() const {
    ordered_json j = ordered_json::object();
    for (const auto& [name, instr] : entries_) j[name] = instr;
    return j.dump(2);
}

InstructionRegistry InstructionRegistry::from_json_string(const std::string& json) {
    InstructionRegistry reg;
    ordered_json j;
    try {
        j = ordered_json::parse(json);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("instructions.json: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "instructions.json must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) reg.set(it.key(), it.value().get<std::string>());
    return reg;
}

InstructionRegistry InstructionRegistry::load(const std::string& path) {
    return from_json_string(read_text_file(path));
}

void InstructionRegistry::save(const std::string& path) const {
    write_text_file(path, to_json_string() + "\n");
}

TrainingSample attach_instruction(const TrainingSample& sample, const InstructionRegistry& registry,
                                  Warnings* warnings) {
    if (!sample.instruction.empty()) return sample; // retain original contents
    TrainingSample out = sample;
    if (auto instr = registry.lookup(sample.dataset_name)) {
        out.instruction = *instr;
    } else if (warnings) {
        warnings->add("no instruction registered for dataset '" + sample.dataset_name + "'");
    }
    return out;
}

// --- JSONL -------------------------------------------------------------------

std::string to_json_line(const TrainingSample& sample) {
    ordered_json j;
    j["dataset"] = sample.dataset_name;
    j["task"] = task_kind_name(sample.task);
    j["query"] = sample.query;
    j["pos"] = sample.positive;
    j["negs"] = sample.negatives;
    j["instruction"] = sample.instruction;
    if (sample.class_label) j["class_label"] = *sample.class_label;
    j["provenance"] = provenance_name(sample.provenance);
    return j.dump();
}

std::string to_json_line(const ScoredPair& pair) {
    ordered_json j;
    j["dataset"] = pair.dataset_name;
    j["text_a"] = pair.text_a;
    j["text_b"] = pair.text_b;
    j["score"] = pair.score;
    return j.dump();
}

std::string to_json_line(const RawRecord& record) {
    ordered_json j;
    j["dataset"] = record.dataset_name;
    j["kind"] = record_kind_name(record.kind);
    for (const auto& [key, value] : record.payload) j[key] = value;
    return j.dump();
}

namespace {

ordered_json parse_line(const std::string& line, const char* what) {
    try {
        return ordered_json::parse(line);
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ParseError, std::string(what) + ": " + e.what());
    }
}

} // namespace

TrainingSample sample_from_json(const std::string& line) {
    ordered_json j = parse_line(line, "sample");
    TrainingSample s;
    s.dataset_name = j.at("dataset").get<std::string>();
    s.task = parse_task_kind(j.at("task").get<std::string>());
    s.query = j.at("query").get<std::string>();
    s.positive = j.at("pos").get<std::string>();
    if (j.contains("negs")) s.negatives = j.at("negs").get<std::vector<std::string>>();
    if (j.contains("instruction")) s.instruction = j.at("instruction").get<std::string>();
    if (j.contains("class_label") && !j.at("class_label").is_null())
        s.class_label = j.at("class_label").get<std::string>();
    if (j.contains("provenance")) s.provenance = parse_provenance(j.at("provenance").get<std::string>());
    s.validate();
    return s;
}

ScoredPair pair_from_json(const std::string& line) {
    ordered_json j = parse_line(line, "pair");
    ScoredPair p;
    p.dataset_name = j.at("dataset").get<std::string>();
    p.text_a = j.at("text_a").get<std::string>();
    p.text_b = j.at("text_b").get<std::string>();
    p.score = j.at("score").get<int>();
    p.validate();
    return p;
}

RawRecord raw_record_from_json(const std::string& line) {
    ordered_json j = parse_line(line, "raw record");
    RawRecord r;
    r.dataset_name = j.at("dataset").get<std::string>();
    r.kind = parse_record_kind(j.at("kind").get<std::string>());
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "dataset" || it.key() == "kind") continue;
        if (it.value().is_string()) r.payload[it.key()] = it.value().get<std::string>();
        else r.payload[it.key()] = it.value().dump();
    }
    return r;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    out << content;
    if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<TrainingSample> read_samples(const std::string& path) {
    std::vector<TrainingSample> out;
    for (const auto& line : read_lines(path)) out.push_back(sample_from_json(line));
    return out;
}

std::vector<ScoredPair> read_pairs(const std::string& path) {
    std::vector<ScoredPair> out;
    for (const auto& line : read_lines(path)) out.push_back(pair_from_json(line));
    return out;
}

std::vector<RawRecord> read_raw_records(const std::string& path) {
    std::vector<RawRecord> out;
    for (const auto& line : read_lines(path)) out.push_back(raw_record_from_json(line));
    return out;
}

namespace {

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
    for (const auto& item : items) out << to_json_line(item) << '\n';
    if (!out) throw Error(ErrorCode::IoError, "short write to '" + path + "'");
}

} // namespace

void write_samples(const std::string& path, const std::vector<TrainingSample>& samples) {
    write_jsonl(path, samples);
}

void write_pairs(const std::string& path, const std::vector<ScoredPair>& pairs) {
    write_jsonl(path, pairs);
}

void write_raw_records(const std::string& path, const std::vector<RawRecord>& records) {
    write_jsonl(path, records);
}

} // namespace embforge
