#include "embforge/sampler.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "embforge/corpus.hpp"
#include "embforge/text.hpp"

namespace embforge {

using ordered_json = nlohmann::ordered_json;

const char* batch_loss_name(BatchLoss k) {
    return k == BatchLoss::InfoNCE ? "infonce" : "cosent";
}

BatchLoss parse_batch_loss(const std::string& s) {
    if (s == "infonce") return BatchLoss::InfoNCE;
    if (s == "cosent") return BatchLoss::Cosent;
    throw Error(ErrorCode::ParseError, "unknown loss '" + s + "'");
}

void DatasetMeta::validate() const {
    if (trim(name).empty()) throw Error(ErrorCode::EmptyField, "dataset has empty name");
    if (size == 0) throw Error(ErrorCode::InvalidArgument, "dataset '" + name + "' has size 0");
    if (is_retrieval && loss_kind != BatchLoss::InfoNCE)
        throw Error(ErrorCode::InvalidArgument,
                    "retrieval dataset '" + name + "' must use the infonce loss");
}

void SamplingPlan::validate() const {
    if (entries.empty()) throw Error(ErrorCode::EmptyList, "plan has no datasets");
    double ret = 0.0, non_ret = 0.0;
    for (const auto& e : entries) {
        if (e.ratio < 0.0) throw Error(ErrorCode::InvalidArgument, "negative plan ratio");
        (e.is_retrieval ? ret : non_ret) += e.ratio;
    }
    if (stage == PlanStage::One) {
        if (std::abs(ret - 1.0) > 1e-12 || non_ret != 0.0)
            throw Error(ErrorCode::InvalidArgument, "stage-1 ratios must be retrieval-only");
    } else {
        if (std::abs(ret - eta) > 1e-12 || std::abs(non_ret - (1.0 - eta)) > 1e-12)
            throw Error(ErrorCode::InvalidArgument, "stage-2 ratios do not split at eta");
    }
}

std::vector<double> compute_weights(const std::vector<size_t>& sizes, double alpha) {
    if (sizes.empty()) throw Error(ErrorCode::EmptyList, "no dataset sizes");
    if (alpha < 0.0) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
    double total = 0.0;
    std::vector<double> scaled(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0) throw Error(ErrorCode::InvalidArgument, "dataset size 0");
        scaled[i] = std::pow(static_cast<double>(sizes[i]), alpha);
        total += scaled[i];
    }
    for (double& w : scaled) w /= total;
    return scaled;
}

namespace {

PlanEntry entry_from_meta(const DatasetMeta& m) {
    PlanEntry e;
    e.name = m.name;
    e.size = m.size;
    e.is_retrieval = m.is_retrieval;
    e.loss_kind = m.loss_kind;
    e.path = m.path;
    return e;
}

double scaled_side_sum(const std::vector<DatasetMeta>& datasets, double alpha, bool retrieval) {
    double s = 0.0;
    for (const auto& d : datasets)
        if (d.is_retrieval == retrieval) s += std::pow(static_cast<double>(d.size), alpha);
    return s;
}

} // namespace

SamplingPlan compute_stage1_plan(const std::vector<DatasetMeta>& datasets, double alpha) {
    if (datasets.empty()) throw Error(ErrorCode::EmptyList, "no datasets");
    if (alpha < 0.0) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
    for (const auto& d : datasets) d.validate();

    SamplingPlan plan;
    plan.stage = PlanStage::One;
    plan.alpha = alpha;
    plan.eta = 1.0;
    plan.s_ret = scaled_side_sum(datasets, alpha, true);
    plan.s_non_ret = scaled_side_sum(datasets, alpha, false);
    if (plan.s_ret == 0.0)
        throw Error(ErrorCode::MissingSide, "stage 1 needs at least one retrieval dataset");

    for (const auto& d : datasets) {
        PlanEntry e = entry_from_meta(d);
        e.ratio = d.is_retrieval ? std::pow(static_cast<double>(d.size), alpha) / plan.s_ret : 0.0;
        plan.entries.push_back(std::move(e));
    }
    plan.validate();
    return plan;
}

SamplingPlan compute_two_stage_plan(const std::vector<DatasetMeta>& datasets, double alpha,
                                    double eta) {
    if (datasets.empty()) throw Error(ErrorCode::EmptyList, "no datasets");
    if (alpha < 0.0) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorCode::InvalidArgument, "eta must be in (0,1)");
    for (const auto& d : datasets) d.validate();

    SamplingPlan plan;
    plan.stage = PlanStage::Two;
    plan.alpha = alpha;
    plan.eta = eta;
    plan.s_ret = scaled_side_sum(datasets, alpha, true);
    plan.s_non_ret = scaled_side_sum(datasets, alpha, false);
    if (plan.s_ret == 0.0 || plan.s_non_ret == 0.0)
        throw Error(ErrorCode::MissingSide,
                    "stage 2 needs both retrieval and non-retrieval datasets");

    for (const auto& d : datasets) {
        PlanEntry e = entry_from_meta(d);
        const double scaled = std::pow(static_cast<double>(d.size), alpha);
        e.ratio = d.is_retrieval ? eta * scaled / plan.s_ret : (1.0 - eta) * scaled / plan.s_non_ret;
        plan.entries.push_back(std::move(e));
    }
    plan.validate();
    return plan;
}

SamplerState SamplerState::fresh(const SamplingPlan& plan, uint64_t seed) {
    SamplerState st;
    st.rng_state = derive_seed(seed, "sampler");
    for (const auto& e : plan.entries) st.offsets[e.name] = 0;
    return st;
}

BatchSpec next_batch(const SamplingPlan& plan, SamplerState& state, const BatchSizes& sizes) {
    plan.validate();
    if (sizes.infonce == 0 || sizes.cosent == 0)
        throw Error(ErrorCode::InvalidArgument, "batch sizes must be positive");

    std::vector<double> weights(plan.entries.size());
    double total = 0.0;
    for (size_t i = 0; i < plan.entries.size(); ++i) {
        const auto& e = plan.entries[i];
        const size_t b = e.loss_kind == BatchLoss::InfoNCE ? sizes.infonce : sizes.cosent;
        weights[i] = sizes.unit == RatioUnit::Batches ? e.ratio
                                                      : e.ratio / static_cast<double>(b);
        total += weights[i];
    }

    SplitMix rng(state.rng_state);
    const double u = uniform01(rng) * total;
    state.rng_state = rng.state;

    size_t pick = plan.entries.size() - 1;
    double cum = 0.0;
    for (size_t i = 0; i < plan.entries.size(); ++i) {
        cum += weights[i];
        if (u < cum) {
            pick = i;
            break;
        }
    }
    // Never land on a zero-probability entry through fp rounding at the tail.
    while (weights[pick] == 0.0 && pick > 0) --pick;

    const PlanEntry& chosen = plan.entries[pick];
    const size_t batch =
        chosen.loss_kind == BatchLoss::InfoNCE ? sizes.infonce : sizes.cosent;

    BatchSpec spec;
    spec.dataset_name = chosen.name;
    spec.dataset_index = pick;
    spec.loss_kind = chosen.loss_kind;
    uint64_t& offset = state.offsets[chosen.name];
    offset %= chosen.size;
    spec.indices.reserve(batch);
    for (size_t k = 0; k < batch; ++k)
        spec.indices.push_back((offset + k) % chosen.size);
    offset = (offset + batch) % chosen.size;
    state.batch_counter += 1;
    return spec;
}

// --- state serialization -----------------------------------------------------

namespace {

constexpr char kStateMagic[8] = {'E', 'F', 'S', 'M', '0', '0', '0', '1'};

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t take_u64(const std::string& in, size_t& pos) {
    if (pos + 8 > in.size()) throw Error(ErrorCode::CorruptState, "sampler state is truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

} // namespace

std::string save_state(const SamplerState& state) {
    std::string out(kStateMagic, sizeof(kStateMagic));
    put_u64(out, state.rng_state);
    put_u64(out, state.batch_counter);
    put_u64(out, state.offsets.size());
    for (const auto& [name, offset] : state.offsets) {
        put_u64(out, name.size());
        out += name;
        put_u64(out, offset);
    }
    return out;
}

SamplerState restore_state(const std::string& bytes) {
    if (bytes.size() < sizeof(kStateMagic) ||
        bytes.compare(0, sizeof(kStateMagic), kStateMagic, sizeof(kStateMagic)) != 0)
        throw Error(ErrorCode::CorruptState, "sampler state has a bad header");
    size_t pos = sizeof(kStateMagic);
    SamplerState st;
    st.rng_state = take_u64(bytes, pos);
    st.batch_counter = take_u64(bytes, pos);
    const uint64_t count = take_u64(bytes, pos);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t len = take_u64(bytes, pos);
        if (len > bytes.size() - pos)
            throw Error(ErrorCode::CorruptState, "sampler state is truncated");
        std::string name = bytes.substr(pos, len);
        pos += len;
        st.offsets[name] = take_u64(bytes, pos);
    }
    if (pos != bytes.size())
        throw Error(ErrorCode::CorruptState, "sampler state has trailing bytes");
    return st;
}

// --- manifest / plan files ----------------------------------------------------

std::vector<DatasetMeta> read_dataset_manifest(const std::string& path) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad datasets manifest: ") + e.what());
    }
    if (!doc.is_array()) throw Error(ErrorCode::ParseError, "datasets manifest must be an array");
    std::vector<DatasetMeta> out;
    for (const auto& item : doc) {
        try {
            DatasetMeta m;
            m.name = item.at("name").get<std::string>();
            m.size = item.at("size").get<size_t>();
            m.is_retrieval = item.at("is_retrieval").get<bool>();
            m.loss_kind = parse_batch_loss(item.at("loss").get<std::string>());
            m.path = item.at("path").get<std::string>();
            m.validate();
            out.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, std::string("bad dataset entry: ") + e.what());
        }
    }
    return out;
}

void write_dataset_manifest(const std::string& path, const std::vector<DatasetMeta>& datasets) {
    ordered_json doc = ordered_json::array();
    for (const auto& d : datasets) {
        ordered_json item;
        item["name"] = d.name;
        item["size"] = d.size;
        item["is_retrieval"] = d.is_retrieval;
        item["loss"] = batch_loss_name(d.loss_kind);
        item["path"] = d.path;
        doc.push_back(std::move(item));
    }
    write_text_file(path, doc.dump(2) + "\n");
}

SamplingPlan read_plan(const std::string& path) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad plan file: ") + e.what());
    }
    SamplingPlan plan;
    try {
        const int stage = doc.at("stage").get<int>();
        if (stage != 1 && stage != 2) throw Error(ErrorCode::ParseError, "plan stage must be 1 or 2");
        plan.stage = stage == 1 ? PlanStage::One : PlanStage::Two;
        plan.alpha = doc.at("alpha").get<double>();
        plan.eta = doc.at("eta").get<double>();
        plan.s_ret = doc.at("s_ret").get<double>();
        plan.s_non_ret = doc.at("s_non_ret").get<double>();
        for (const auto& item : doc.at("datasets")) {
            PlanEntry e;
            e.name = item.at("name").get<std::string>();
            e.size = item.at("size").get<size_t>();
            e.is_retrieval = item.at("is_retrieval").get<bool>();
            e.loss_kind = parse_batch_loss(item.at("loss").get<std::string>());
            e.path = item.at("path").get<std::string>();
            e.ratio = item.at("ratio").get<double>();
            plan.entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("bad plan file: ") + e.what());
    }
    plan.validate();
    return plan;
}

void write_plan(const std::string& path, const SamplingPlan& plan) {
    ordered_json doc;
    doc["stage"] = plan.stage == PlanStage::One ? 1 : 2;
    doc["alpha"] = plan.alpha;
    doc["eta"] = plan.eta;
    doc["s_ret"] = plan.s_ret;
    doc["s_non_ret"] = plan.s_non_ret;
    ordered_json arr = ordered_json::array();
    for (const auto& e : plan.entries) {
        ordered_json item;
        item["name"] = e.name;
        item["size"] = e.size;
        item["is_retrieval"] = e.is_retrieval;
        item["loss"] = batch_loss_name(e.loss_kind);
        item["path"] = e.path;
        item["ratio"] = e.ratio;
        arr.push_back(std::move(item));
    }
    doc["datasets"] = std::move(arr);
    write_text_file(path, doc.dump(2) + "\n");
}

} // namespace embforge
