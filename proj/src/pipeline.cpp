#include "embforge/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>

#include <json.hpp>

#include "embforge/text.hpp"

namespace embforge {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

const std::vector<std::string> kStageNames = {"transform", "synthesize", "mine", "dedup",
                                              "filter",    "plan",       "train", "eval"};

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

template <typename T>
T jget(const ordered_json& doc, const std::string& key, T fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::ParseError, "config key '" + key + "' has the wrong type");
    }
}

TaskKind default_task(RecordKind k) {
    switch (k) {
        case RecordKind::StsPair:
        case RecordKind::EntailmentTriple: return TaskKind::NLI;
        case RecordKind::LabeledText: return TaskKind::CLS;
        default: return TaskKind::Retrieval;
    }
}

void apply_train_json(const ordered_json& t, TrainConfig& tc) {
    tc.stage1_steps = jget<uint64_t>(t, "stage1_steps", tc.stage1_steps);
    tc.stage2_steps = jget<uint64_t>(t, "stage2_steps", tc.stage2_steps);
    tc.lr1 = jget<double>(t, "lr1", tc.lr1);
    tc.lr2 = jget<double>(t, "lr2", tc.lr2);
    tc.warmup_steps = jget<uint64_t>(t, "warmup_steps", tc.warmup_steps);
    tc.stage2_fresh_warmup = jget<bool>(t, "stage2_fresh_warmup", tc.stage2_fresh_warmup);
    tc.tau = jget<double>(t, "tau", tc.tau);
    tc.eta = jget<double>(t, "eta", tc.eta);
    tc.alpha = jget<double>(t, "alpha", tc.alpha);
    tc.batch_infonce = jget<uint64_t>(t, "batch_infonce", tc.batch_infonce);
    tc.batch_cosent = jget<uint64_t>(t, "batch_cosent", tc.batch_cosent);
    const std::string unit = jget<std::string>(
        t, "ratio_unit", tc.ratio_unit == RatioUnit::Samples ? "samples" : "batches");
    if (unit == "samples")
        tc.ratio_unit = RatioUnit::Samples;
    else if (unit == "batches")
        tc.ratio_unit = RatioUnit::Batches;
    else
        throw Error(ErrorCode::InvalidArgument, "ratio_unit must be 'batches' or 'samples'");
    tc.max_negatives = jget<uint64_t>(t, "max_negatives", tc.max_negatives);
    tc.weight_decay = jget<double>(t, "weight_decay", tc.weight_decay);
    tc.include_query_query = jget<bool>(t, "include_query_query", tc.include_query_query);
    tc.share_batch_negatives = jget<bool>(t, "share_batch_negatives", tc.share_batch_negatives);
    tc.query_max_chars = jget<uint64_t>(t, "query_max_chars", tc.query_max_chars);
    tc.passage_max_chars = jget<uint64_t>(t, "passage_max_chars", tc.passage_max_chars);
    tc.vocab = jget<uint64_t>(t, "vocab", tc.vocab);
    tc.dim = jget<uint64_t>(t, "dim", tc.dim);
    tc.seed = jget<uint64_t>(t, "seed", tc.seed);
}

struct Ctx {
    const PipelineConfig& cfg;
    fs::path base;
    ordered_json manifest;
    std::ostream* human = nullptr;
    std::ostream* events = nullptr;

    std::string abs(const std::string& rel) const { return (base / rel).string(); }
    std::string stage_file(const std::string& stage, const std::string& name) const {
        return cfg.work_dir + "/" + stage + "/" + name;
    }
};

void emit(Ctx& c, ordered_json ev) {
    if (c.events) *c.events << ev.dump() << "\n";
}

void say(Ctx& c, const std::string& line) {
    if (c.human) *c.human << line << "\n";
}

std::string hash_files(const Ctx& c, const std::vector<std::string>& rel_paths) {
    uint64_t h = fnv1a64("");
    for (const auto& rp : rel_paths) {
        h = fnv1a64(rp, h);
        h = fnv1a64(read_text_file(c.abs(rp)), h);
    }
    return hex64(h);
}

std::string hash_config(const ordered_json& doc) { return hex64(fnv1a64(doc.dump())); }

// --- combined stage stream -------------------------------------------------------

struct StageData {
    std::vector<TrainingSample> samples;
    std::vector<ScoredPair> pairs;
};

void write_stage_file(const Ctx& c, const std::string& rel, const StageData& d) {
    fs::create_directories(fs::path(c.abs(rel)).parent_path());
    std::string out;
    for (const auto& s : d.samples) {
        out += to_json_line(s);
        out.push_back('\n');
    }
    for (const auto& p : d.pairs) {
        out += to_json_line(p);
        out.push_back('\n');
    }
    write_text_file(c.abs(rel), out);
}

StageData read_stage_file(const Ctx& c, const std::string& rel) {
    StageData d;
    for (const auto& line : read_lines(c.abs(rel))) {
        ordered_json doc = ordered_json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw Error(ErrorCode::ParseError, "bad line in " + rel);
        if (doc.contains("text_a"))
            d.pairs.push_back(pair_from_json(line));
        else
            d.samples.push_back(sample_from_json(line));
    }
    return d;
}

std::vector<TrainingSample> bucket_samples(const StageData& d, const std::string& name) {
    std::vector<TrainingSample> out;
    for (const auto& s : d.samples)
        if (s.dataset_name == name) out.push_back(s);
    return out;
}

std::vector<ScoredPair> bucket_pairs(const StageData& d, const std::string& name) {
    std::vector<ScoredPair> out;
    for (const auto& p : d.pairs)
        if (p.dataset_name == name) out.push_back(p);
    return out;
}

class EmbedScorer : public Scorer {
  public:
    EmbedScorer(size_t vocab, size_t dim, uint64_t seed)
        : params_(ToyEmbedderParams::init(vocab, dim, seed)) {}

    double score(const std::string& a, const std::string& b) const override {
        const Vec ea = embed(a, params_);
        const Vec eb = embed(b, params_);
        double s = 0.0;
        for (size_t k = 0; k < ea.size(); ++k) s += ea[k] * eb[k];
        return s;
    }

  private:
    ToyEmbedderParams params_;
};

EmbedScorer make_scorer(const Ctx& c) {
    return EmbedScorer(c.cfg.train.vocab, c.cfg.train.dim, derive_seed(c.cfg.seed, "miner"));
}

// --- stages ----------------------------------------------------------------------

void stage_transform(Ctx& c) {
    const InstructionRegistry reg = InstructionRegistry::load(c.abs(c.cfg.instructions_path));
    StageData out;
    Warnings warn;
    for (const auto& ds : c.cfg.datasets) {
        auto records = read_raw_records(c.abs(ds.path));
        for (auto& r : records) {
            r.dataset_name = ds.name;
            r.kind = ds.kind;
        }
        TransformConfig tc = c.cfg.transform;
        tc.seed = derive_seed(c.cfg.seed, "transform:" + ds.name);
        tc.binarize_threshold = ds.binarize_threshold;
        TransformResult res = transform_records(records, ds.kind, tc);
        for (const auto& s : res.samples) out.samples.push_back(attach_instruction(s, reg, &warn));
        out.pairs.insert(out.pairs.end(), res.pairs.begin(), res.pairs.end());
        emit(c, {{"event", "dataset_transformed"},
                 {"stage", "transform"},
                 {"dataset", ds.name},
                 {"records", records.size()},
                 {"samples", res.samples.size()},
                 {"pairs", res.pairs.size()},
                 {"warnings", res.warnings.count()}});
    }
    write_stage_file(c, c.stage_file("transform", "out.jsonl"), out);
    say(c, "transform: " + std::to_string(out.samples.size()) + " samples, " +
               std::to_string(out.pairs.size()) + " pairs");
}

ordered_json audit_line(const std::string& dataset, const std::string& kind,
                        const std::string& source, const std::string& output) {
    return {{"dataset", dataset}, {"kind", kind}, {"source", source}, {"output", output}};
}

void stage_synthesize(Ctx& c) {
    const StageData in = read_stage_file(c, c.stage_file("transform", "out.jsonl"));
    LlmClientConfig lcfg = c.cfg.llm;
    if (c.cfg.stub) lcfg.offline_stub = true;
    auto client = make_client(lcfg);
    const InstructionRegistry reg = InstructionRegistry::load(c.abs(c.cfg.instructions_path));

    StageData out;
    std::string audit;
    Warnings warn;
    auto log_audit = [&](ordered_json doc) {
        audit += doc.dump();
        audit.push_back('\n');
    };

    for (const auto& ds : c.cfg.datasets) {
        if (ds.task == TaskKind::Retrieval) {
            auto bucket = bucket_samples(in, ds.name);
            if (!synthesis_eligible(bucket.size(), c.cfg.synthesis_trigger_max)) {
                emit(c, {{"event", "synthesis_skipped"},
                         {"stage", "synthesize"},
                         {"dataset", ds.name},
                         {"size", bucket.size()}});
                out.samples.insert(out.samples.end(), bucket.begin(), bucket.end());
                continue;
            }
            std::vector<TrainingSample> accepted;
            size_t synth_neg_samples = 0;
            for (size_t i = 0; i < bucket.size(); ++i) {
                const TrainingSample& s = bucket[i];
                const std::string tag = ds.name + ":" + std::to_string(i);
                for (auto& ps : paraphrase(s, *client, paraphrase_constraints(), 1,
                                           derive_seed(c.cfg.seed, "para:" + tag), &warn)) {
                    log_audit(audit_line(ds.name, "paraphrase", s.query, ps.query));
                    log_audit(audit_line(ds.name, "paraphrase", s.positive, ps.positive));
                    accepted.push_back(std::move(ps));
                }
                for (auto& as : augment(s, *client, augment_constraints(), 1,
                                        derive_seed(c.cfg.seed, "aug:" + tag), &warn)) {
                    log_audit(audit_line(ds.name, "augment", s.query, as.query));
                    log_audit(audit_line(ds.name, "augment", s.positive, as.positive));
                    for (const auto& neg : as.negatives)
                        log_audit(audit_line(ds.name, "augment", as.positive, neg));
                    accepted.push_back(std::move(as));
                }
                if (assigned_to_synth(s.query, c.cfg.synth_fraction)) {
                    auto negs = gen_hard_negatives(s, *client, hard_negative_constraints(),
                                                   c.cfg.mining.negatives_per_query,
                                                   derive_seed(c.cfg.seed, "hneg:" + tag), &warn);
                    if (!negs.empty()) {
                        for (const auto& n : negs)
                            log_audit(audit_line(ds.name, "hardneg", s.positive, n));
                        bucket[i].negatives = negs;
                        ++synth_neg_samples;
                    }
                }
            }
            auto merged = apply_retrieval_policy(bucket, accepted);
            emit(c, {{"event", "dataset_synthesized"},
                     {"stage", "synthesize"},
                     {"dataset", ds.name},
                     {"originals", bucket.size()},
                     {"accepted", accepted.size()},
                     {"synth_negative_samples", synth_neg_samples},
                     {"warnings", warn.count()}});
            out.samples.insert(out.samples.end(), merged.begin(), merged.end());
        } else if (ds.task == TaskKind::NLI) {
            auto pairs = bucket_pairs(in, ds.name);
            if (!synthesis_eligible(pairs.size(), c.cfg.synthesis_trigger_max)) {
                emit(c, {{"event", "synthesis_skipped"},
                         {"stage", "synthesize"},
                         {"dataset", ds.name},
                         {"size", pairs.size()}});
                out.pairs.insert(out.pairs.end(), pairs.begin(), pairs.end());
                continue;
            }
            std::vector<std::string> texts;
            for (const auto& p : pairs) {
                if (std::find(texts.begin(), texts.end(), p.text_a) == texts.end())
                    texts.push_back(p.text_a);
                if (std::find(texts.begin(), texts.end(), p.text_b) == texts.end())
                    texts.push_back(p.text_b);
            }
            std::vector<Rewrite> rewrites;
            for (size_t t = 0; t < texts.size(); ++t) {
                if (!assigned_to_synth(texts[t], c.cfg.synth_fraction)) continue;
                auto outs = paraphrase_texts(
                    texts[t], *client, paraphrase_constraints(), 1,
                    derive_seed(c.cfg.seed, "nli:" + ds.name + ":" + std::to_string(t)), &warn);
                if (outs.empty()) continue;
                log_audit(audit_line(ds.name, "paraphrase", texts[t], outs[0]));
                rewrites.push_back({texts[t], outs[0]});
            }
            auto extended = apply_nli_policy(pairs, rewrites, c.cfg.nli_duplication_prob,
                                             derive_seed(c.cfg.seed, "nlidup:" + ds.name));
            emit(c, {{"event", "dataset_synthesized"},
                     {"stage", "synthesize"},
                     {"dataset", ds.name},
                     {"originals", pairs.size()},
                     {"rewrites", rewrites.size()},
                     {"pairs_out", extended.size()}});
            out.pairs.insert(out.pairs.end(), extended.begin(), extended.end());
        } else {
            auto bucket = bucket_samples(in, ds.name);
            if (!synthesis_eligible(bucket.size(), c.cfg.synthesis_trigger_max)) {
                emit(c, {{"event", "synthesis_skipped"},
                         {"stage", "synthesize"},
                         {"dataset", ds.name},
                         {"size", bucket.size()}});
                out.samples.insert(out.samples.end(), bucket.begin(), bucket.end());
                continue;
            }
            auto records = read_raw_records(c.abs(ds.path));
            for (auto& r : records) {
                r.dataset_name = ds.name;
                r.kind = ds.kind;
            }
            const ClsDatasetView view = view_from_records(records);
            std::vector<Rewrite> rewrites;
            for (size_t e = 0; e < view.entries.size(); ++e) {
                const std::string& text = view.entries[e].first;
                if (!assigned_to_synth(text, c.cfg.synth_fraction)) continue;
                auto outs = paraphrase_texts(
                    text, *client, paraphrase_constraints(), 1,
                    derive_seed(c.cfg.seed, "clsrw:" + ds.name + ":" + std::to_string(e)), &warn);
                if (outs.empty()) continue;
                log_audit(audit_line(ds.name, "paraphrase", text, outs[0]));
                rewrites.push_back({text, outs[0]});
            }
            const ClsDatasetView extended = apply_cls_policy(view, rewrites, &warn);
            auto resampled =
                transform_cls(extended, c.cfg.transform.negatives_per_sample,
                              derive_seed(c.cfg.seed, "cls-resample:" + ds.name), ds.name);
            for (auto& s : resampled) out.samples.push_back(attach_instruction(s, reg, &warn));
            emit(c, {{"event", "dataset_synthesized"},
                     {"stage", "synthesize"},
                     {"dataset", ds.name},
                     {"originals", bucket.size()},
                     {"rewrites", rewrites.size()},
                     {"samples_out", resampled.size()}});
        }
    }
    write_stage_file(c, c.stage_file("synthesize", "out.jsonl"), out);
    fs::create_directories(fs::path(c.abs(c.stage_file("synthesize", "audit.jsonl"))).parent_path());
    write_text_file(c.abs(c.stage_file("synthesize", "audit.jsonl")), audit);
    say(c, "synthesize: " + std::to_string(out.samples.size()) + " samples, " +
               std::to_string(out.pairs.size()) + " pairs");
}

void stage_mine(Ctx& c) {
    const StageData in = read_stage_file(c, c.stage_file("synthesize", "out.jsonl"));
    const EmbedScorer scorer = make_scorer(c);
    StageData out;
    out.pairs = in.pairs;
    size_t mined = 0;
    for (const auto& ds : c.cfg.datasets) {
        auto bucket = bucket_samples(in, ds.name);
        if (ds.task == TaskKind::Retrieval) {
            const auto pool = positives_pool(bucket);
            const uint64_t seed = derive_seed(c.cfg.seed, "mine:" + ds.name);
            for (auto& s : bucket) {
                const bool had = !s.negatives.empty();
                s = mine_hard_negatives(s, pool, scorer, c.cfg.mining, seed);
                if (!had && !s.negatives.empty()) ++mined;
            }
        }
        out.samples.insert(out.samples.end(), bucket.begin(), bucket.end());
    }
    write_stage_file(c, c.stage_file("mine", "out.jsonl"), out);
    emit(c, {{"event", "mined"}, {"stage", "mine"}, {"samples_mined", mined}});
    say(c, "mine: filled negatives for " + std::to_string(mined) + " samples");
}

void stage_dedup(Ctx& c) {
    const StageData in = read_stage_file(c, c.stage_file("mine", "out.jsonl"));
    StageData out;
    out.pairs = in.pairs;
    out.samples = dedup(in.samples);
    write_stage_file(c, c.stage_file("dedup", "out.jsonl"), out);
    const size_t dropped = in.samples.size() - out.samples.size();
    emit(c, {{"event", "deduped"}, {"stage", "dedup"}, {"dropped", dropped}});
    say(c, "dedup: dropped " + std::to_string(dropped) + " duplicate samples");
}

void stage_filter(Ctx& c) {
    const StageData in = read_stage_file(c, c.stage_file("dedup", "out.jsonl"));
    const EmbedScorer scorer = make_scorer(c);
    StageData out;
    out.pairs = in.pairs;
    const FilterResult res = quality_filter(in.samples, scorer, c.cfg.mining.filter_threshold);
    out.samples = res.kept;
    write_stage_file(c, c.stage_file("filter", "out.jsonl"), out);
    emit(c, {{"event", "filtered"}, {"stage", "filter"}, {"dropped", res.dropped_count}});
    say(c, "filter: dropped " + std::to_string(res.dropped_count) + " low-quality samples");
}

void stage_plan(Ctx& c) {
    const StageData in = read_stage_file(c, c.stage_file("filter", "out.jsonl"));
    std::vector<DatasetMeta> metas;
    for (const auto& ds : c.cfg.datasets) {
        DatasetMeta meta;
        meta.name = ds.name;
        meta.is_retrieval = ds.task == TaskKind::Retrieval;
        meta.loss_kind = ds.task == TaskKind::NLI ? BatchLoss::Cosent : BatchLoss::InfoNCE;
        meta.path = c.stage_file("plan", ds.name + ".jsonl");
        if (ds.task == TaskKind::NLI) {
            const auto bucket = bucket_pairs(in, ds.name);
            meta.size = bucket.size();
            fs::create_directories(fs::path(c.abs(meta.path)).parent_path());
            write_pairs(c.abs(meta.path), bucket);
        } else {
            const auto bucket = bucket_samples(in, ds.name);
            meta.size = bucket.size();
            fs::create_directories(fs::path(c.abs(meta.path)).parent_path());
            write_samples(c.abs(meta.path), bucket);
        }
        if (meta.size == 0)
            throw Error(ErrorCode::EmptyList, "dataset '" + ds.name + "' is empty after filtering");
        metas.push_back(std::move(meta));
    }
    write_dataset_manifest(c.abs(c.stage_file("plan", "datasets.json")), metas);
    const SamplingPlan plan1 = compute_stage1_plan(metas, c.cfg.train.alpha);
    write_plan(c.abs(c.stage_file("plan", "plan1.json")), plan1);
    const SamplingPlan plan2 = compute_two_stage_plan(metas, c.cfg.train.alpha, c.cfg.train.eta);
    write_plan(c.abs(c.stage_file("plan", "plan2.json")), plan2);
    emit(c, {{"event", "planned"}, {"stage", "plan"}, {"datasets", metas.size()}});
    say(c, "plan: " + std::to_string(metas.size()) + " datasets");
}

void stage_train(Ctx& c) {
    auto metas = read_dataset_manifest(c.abs(c.stage_file("plan", "datasets.json")));
    for (auto& m : metas) m.path = c.abs(m.path);
    const auto eval_items = read_eval_items(c.abs(c.cfg.eval_path));
    const TrainOutcome outcome = train(c.cfg.train, metas, eval_items);
    fs::create_directories(fs::path(c.abs(c.stage_file("train", "model.bin"))).parent_path());
    save_model(c.abs(c.stage_file("train", "model.bin")), outcome.params);
    write_report(c.abs(c.stage_file("train", "report.json")), outcome.report);
    emit(c, {{"event", "trained"},
             {"stage", "train"},
             {"stage1_steps", outcome.report.stage1_losses.size()},
             {"stage2_steps", outcome.report.stage2_losses.size()},
             {"recall_at_1", outcome.report.recall_at_1},
             {"wall_seconds", outcome.report.wall_seconds}});
    char buf[128];
    std::snprintf(buf, sizeof(buf), "train: recall@1 %.3f recall@5 %.3f after %zu+%zu steps",
                  outcome.report.recall_at_1, outcome.report.recall_at_5,
                  outcome.report.stage1_losses.size(), outcome.report.stage2_losses.size());
    say(c, buf);
}

void stage_eval(Ctx& c) {
    const ToyEmbedderParams params = load_model(c.abs(c.stage_file("train", "model.bin")));
    const auto items = read_eval_items(c.abs(c.cfg.eval_path));
    const RecallReport rep = evaluate_recall(params, items);
    ordered_json doc;
    doc["items"] = items.size();
    doc["recall_at_1"] = rep.recall_at_1;
    doc["recall_at_5"] = rep.recall_at_5;
    fs::create_directories(fs::path(c.abs(c.stage_file("eval", "report.json"))).parent_path());
    write_text_file(c.abs(c.stage_file("eval", "report.json")), doc.dump(2) + "\n");
    emit(c, {{"event", "evaluated"},
             {"stage", "eval"},
             {"recall_at_1", rep.recall_at_1},
             {"recall_at_5", rep.recall_at_5}});
    char buf[96];
    std::snprintf(buf, sizeof(buf), "eval: recall@1 %.3f recall@5 %.3f over %zu items",
                  rep.recall_at_1, rep.recall_at_5, items.size());
    say(c, buf);
}

// --- stage wiring ------------------------------------------------------------------

ordered_json datasets_config_json(const PipelineConfig& cfg) {
    ordered_json arr = ordered_json::array();
    for (const auto& ds : cfg.datasets) {
        ordered_json d{{"name", ds.name},
                       {"kind", record_kind_name(ds.kind)},
                       {"path", ds.path},
                       {"task", task_kind_name(ds.task)}};
        if (ds.binarize_threshold) d["binarize_threshold"] = *ds.binarize_threshold;
        arr.push_back(d);
    }
    return arr;
}

ordered_json train_config_json(const TrainConfig& t) {
    return {{"stage1_steps", t.stage1_steps},
            {"stage2_steps", t.stage2_steps},
            {"lr1", t.lr1},
            {"lr2", t.lr2},
            {"warmup_steps", t.warmup_steps},
            {"stage2_fresh_warmup", t.stage2_fresh_warmup},
            {"tau", t.tau},
            {"eta", t.eta},
            {"alpha", t.alpha},
            {"batch_infonce", t.batch_infonce},
            {"batch_cosent", t.batch_cosent},
            {"ratio_unit", t.ratio_unit == RatioUnit::Samples ? "samples" : "batches"},
            {"max_negatives", t.max_negatives},
            {"weight_decay", t.weight_decay},
            {"include_query_query", t.include_query_query},
            {"share_batch_negatives", t.share_batch_negatives},
            {"query_max_chars", t.query_max_chars},
            {"passage_max_chars", t.passage_max_chars},
            {"vocab", t.vocab},
            {"dim", t.dim},
            {"seed", t.seed}};
}

struct StageDef {
    std::string name;
    std::function<std::vector<std::string>(Ctx&)> inputs;  // relative paths to hash
    std::function<ordered_json(Ctx&)> config;               // stage-relevant config
    std::function<std::vector<std::string>(Ctx&)> outputs;  // relative paths produced
    std::function<void(Ctx&)> run;
};

std::vector<StageDef> stage_defs() {
    std::vector<StageDef> defs;
    defs.push_back(
        {"transform",
         [](Ctx& c) {
             std::vector<std::string> in{c.cfg.instructions_path};
             for (const auto& ds : c.cfg.datasets) in.push_back(ds.path);
             return in;
         },
         [](Ctx& c) {
             return ordered_json{{"datasets", datasets_config_json(c.cfg)},
                                 {"max_chars", c.cfg.transform.max_chars},
                                 {"negatives_per_sample", c.cfg.transform.negatives_per_sample},
                                 {"seed", c.cfg.seed}};
         },
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("transform", "out.jsonl")}; },
         stage_transform});
    defs.push_back(
        {"synthesize",
         [](Ctx& c) {
             std::vector<std::string> in{c.stage_file("transform", "out.jsonl"),
                                         c.cfg.instructions_path};
             for (const auto& ds : c.cfg.datasets)
                 if (ds.task == TaskKind::CLS) in.push_back(ds.path);
             return in;
         },
         [](Ctx& c) {
             return ordered_json{{"stub", c.cfg.stub},
                                 {"offline_stub", c.cfg.llm.offline_stub},
                                 {"base_url", c.cfg.llm.base_url},
                                 {"model_name", c.cfg.llm.model_name},
                                 {"stub_violation_rate", c.cfg.llm.stub_violation_rate},
                                 {"synth_fraction", c.cfg.synth_fraction},
                                 {"trigger_max", c.cfg.synthesis_trigger_max},
                                 {"nli_duplication_prob", c.cfg.nli_duplication_prob},
                                 {"negatives_per_query", c.cfg.mining.negatives_per_query},
                                 {"negatives_per_sample", c.cfg.transform.negatives_per_sample},
                                 {"seed", c.cfg.seed}};
         },
         [](Ctx& c) {
             return std::vector<std::string>{c.stage_file("synthesize", "out.jsonl"),
                                             c.stage_file("synthesize", "audit.jsonl")};
         },
         stage_synthesize});
    defs.push_back(
        {"mine",
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("synthesize", "out.jsonl")}; },
         [](Ctx& c) {
             return ordered_json{{"rank_lo", c.cfg.mining.rank_lo},
                                 {"rank_hi", c.cfg.mining.rank_hi},
                                 {"negatives_per_query", c.cfg.mining.negatives_per_query},
                                 {"vocab", c.cfg.train.vocab},
                                 {"dim", c.cfg.train.dim},
                                 {"seed", c.cfg.seed}};
         },
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("mine", "out.jsonl")}; },
         stage_mine});
    defs.push_back(
        {"dedup",
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("mine", "out.jsonl")}; },
         [](Ctx&) { return ordered_json::object(); },
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("dedup", "out.jsonl")}; },
         stage_dedup});
    defs.push_back(
        {"filter",
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("dedup", "out.jsonl")}; },
         [](Ctx& c) {
             return ordered_json{{"filter_threshold", c.cfg.mining.filter_threshold},
                                 {"vocab", c.cfg.train.vocab},
                                 {"dim", c.cfg.train.dim},
                                 {"seed", c.cfg.seed}};
         },
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("filter", "out.jsonl")}; },
         stage_filter});
    defs.push_back(
        {"plan",
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("filter", "out.jsonl")}; },
         [](Ctx& c) {
             return ordered_json{{"alpha", c.cfg.train.alpha}, {"eta", c.cfg.train.eta}};
         },
         [](Ctx& c) {
             std::vector<std::string> outs{c.stage_file("plan", "datasets.json"),
                                           c.stage_file("plan", "plan1.json"),
                                           c.stage_file("plan", "plan2.json")};
             for (const auto& ds : c.cfg.datasets)
                 outs.push_back(c.stage_file("plan", ds.name + ".jsonl"));
             return outs;
         },
         stage_plan});
    defs.push_back(
        {"train",
         [](Ctx& c) {
             std::vector<std::string> in{c.stage_file("plan", "datasets.json"), c.cfg.eval_path};
             for (const auto& ds : c.cfg.datasets)
                 in.push_back(c.stage_file("plan", ds.name + ".jsonl"));
             return in;
         },
         [](Ctx& c) { return train_config_json(c.cfg.train); },
         [](Ctx& c) {
             return std::vector<std::string>{c.stage_file("train", "model.bin"),
                                             c.stage_file("train", "report.json")};
         },
         stage_train});
    defs.push_back(
        {"eval",
         [](Ctx& c) {
             return std::vector<std::string>{c.stage_file("train", "model.bin"), c.cfg.eval_path};
         },
         [](Ctx&) { return ordered_json::object(); },
         [](Ctx& c) { return std::vector<std::string>{c.stage_file("eval", "report.json")}; },
         stage_eval});
    return defs;
}

} // namespace

TrainConfig parse_train_config(const std::string& json_text) {
    ordered_json doc = ordered_json::parse(json_text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorCode::ParseError, "train config is not a JSON object");
    TrainConfig tc;
    apply_train_json(doc, tc);
    tc.validate();
    return tc;
}

// --- config loading ----------------------------------------------------------------

PipelineConfig PipelineConfig::load(const std::string& path) {
    const std::string text = read_text_file(path);
    ordered_json doc = ordered_json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorCode::ParseError, "pipeline config is not a JSON object: " + path);

    PipelineConfig cfg;
    const fs::path parent = fs::path(path).parent_path();
    cfg.base_dir = parent.empty() ? "." : parent.string();
    cfg.seed = jget<uint64_t>(doc, "seed", 0);
    cfg.work_dir = jget<std::string>(doc, "work_dir", "work");
    cfg.stub = jget<bool>(doc, "stub", true);
    cfg.synth_fraction = jget<double>(doc, "synth_fraction", 0.3);
    cfg.synthesis_trigger_max = jget<uint64_t>(doc, "synthesis_trigger_max", 60000);
    cfg.instructions_path = jget<std::string>(doc, "instructions_path", "");
    cfg.eval_path = jget<std::string>(doc, "eval_path", "");
    cfg.nli_duplication_prob = jget<double>(doc, "nli_duplication_prob", 0.5);

    if (!doc.contains("datasets") || !doc["datasets"].is_array() || doc["datasets"].empty())
        throw Error(ErrorCode::InvalidArgument, "pipeline config needs a datasets array");
    for (const auto& d : doc["datasets"]) {
        DatasetConfig ds;
        ds.name = jget<std::string>(d, "name", "");
        ds.kind = parse_record_kind(jget<std::string>(d, "kind", ""));
        ds.path = jget<std::string>(d, "path", "");
        ds.task = d.contains("task") ? parse_task_kind(d["task"].get<std::string>())
                                     : default_task(ds.kind);
        if (d.contains("binarize_threshold"))
            ds.binarize_threshold = d["binarize_threshold"].get<double>();
        cfg.datasets.push_back(std::move(ds));
    }

    if (doc.contains("transform")) {
        const auto& t = doc["transform"];
        cfg.transform.max_chars = jget<uint64_t>(t, "max_chars", cfg.transform.max_chars);
        cfg.transform.negatives_per_sample =
            jget<uint64_t>(t, "negatives_per_sample", cfg.transform.negatives_per_sample);
    }
    if (doc.contains("mining")) {
        const auto& m = doc["mining"];
        cfg.mining.rank_lo = jget<uint64_t>(m, "rank_lo", cfg.mining.rank_lo);
        cfg.mining.rank_hi = jget<uint64_t>(m, "rank_hi", cfg.mining.rank_hi);
        cfg.mining.negatives_per_query =
            jget<uint64_t>(m, "negatives_per_query", cfg.mining.negatives_per_query);
        cfg.mining.filter_threshold =
            jget<double>(m, "filter_threshold", cfg.mining.filter_threshold);
    }
    if (doc.contains("llm")) {
        const auto& l = doc["llm"];
        cfg.llm.base_url = jget<std::string>(l, "base_url", cfg.llm.base_url);
        cfg.llm.model_name = jget<std::string>(l, "model_name", cfg.llm.model_name);
        cfg.llm.api_key_env_var = jget<std::string>(l, "api_key_env_var", cfg.llm.api_key_env_var);
        cfg.llm.max_parallel_requests =
            jget<uint64_t>(l, "max_parallel_requests", cfg.llm.max_parallel_requests);
        cfg.llm.retry_limit = jget<uint64_t>(l, "retry_limit", cfg.llm.retry_limit);
        cfg.llm.timeout_seconds = jget<double>(l, "timeout_seconds", cfg.llm.timeout_seconds);
        cfg.llm.offline_stub = jget<bool>(l, "offline_stub", cfg.llm.offline_stub);
        cfg.llm.sampling_temperature =
            jget<double>(l, "sampling_temperature", cfg.llm.sampling_temperature);
        cfg.llm.stub_violation_rate =
            jget<double>(l, "stub_violation_rate", cfg.llm.stub_violation_rate);
    }
    if (doc.contains("train")) apply_train_json(doc["train"], cfg.train);
    cfg.train.seed = doc.contains("train") && doc["train"].contains("seed")
                         ? doc["train"]["seed"].get<uint64_t>()
                         : cfg.seed;

    cfg.validate();
    return cfg;
}

void PipelineConfig::validate() const {
    if (datasets.empty()) throw Error(ErrorCode::EmptyList, "no datasets configured");
    std::vector<std::string> names;
    for (const auto& ds : datasets) {
        if (ds.name.empty() || ds.path.empty())
            throw Error(ErrorCode::InvalidArgument, "dataset needs a name and a path");
        if (std::find(names.begin(), names.end(), ds.name) != names.end())
            throw Error(ErrorCode::InvalidArgument, "duplicate dataset name: " + ds.name);
        names.push_back(ds.name);
        if (default_task(ds.kind) != ds.task)
            throw Error(ErrorCode::InvalidArgument,
                        "dataset '" + ds.name + "' task does not match its record kind");
    }
    if (instructions_path.empty())
        throw Error(ErrorCode::InvalidArgument, "instructions_path is required");
    if (eval_path.empty()) throw Error(ErrorCode::InvalidArgument, "eval_path is required");
    if (!(synth_fraction >= 0.0 && synth_fraction <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "synth_fraction outside [0,1]");
    if (!(nli_duplication_prob >= 0.0 && nli_duplication_prob <= 1.0))
        throw Error(ErrorCode::InvalidArgument, "nli_duplication_prob outside [0,1]");
    if (work_dir.empty()) throw Error(ErrorCode::InvalidArgument, "work_dir is required");
    mining.validate();
    train.validate();
}

// --- runner --------------------------------------------------------------------------

PipelineReport run_pipeline(const PipelineConfig& cfg, std::ostream* human,
                            std::ostream* events) {
    PipelineReport report;
    Ctx c{cfg, fs::path(cfg.base_dir), ordered_json{{"stages", ordered_json::object()}}, human,
          events};
    const std::string manifest_rel = cfg.work_dir + "/manifest.json";

    if (fs::exists(c.abs(manifest_rel))) {
        ordered_json loaded = ordered_json::parse(read_text_file(c.abs(manifest_rel)), nullptr,
                                                  false);
        if (!loaded.is_discarded() && loaded.is_object() && loaded.contains("stages"))
            c.manifest = std::move(loaded);
    }

    for (const auto& def : stage_defs()) {
        try {
            const std::string input_hash = hash_files(c, def.inputs(c));
            const std::string config_hash = hash_config(def.config(c));
            const auto outputs = def.outputs(c);

            bool fresh = true;
            const auto& stages = c.manifest["stages"];
            if (stages.contains(def.name)) {
                const auto& entry = stages[def.name];
                fresh = entry.value("input_hash", "") != input_hash ||
                        entry.value("config_hash", "") != config_hash;
                if (!fresh)
                    for (const auto& out : outputs)
                        if (!fs::exists(c.abs(out))) fresh = true;
            }
            if (!fresh) {
                emit(c, {{"event", "stage_skip"}, {"stage", def.name}});
                say(c, def.name + ": up to date");
                report.stages.push_back({def.name, true});
                continue;
            }

            emit(c, {{"event", "stage_start"}, {"stage", def.name}});
            def.run(c);
            const std::string output_hash = hash_files(c, outputs);
            c.manifest["stages"][def.name] = {{"input_hash", input_hash},
                                              {"config_hash", config_hash},
                                              {"output_hash", output_hash},
                                              {"outputs", outputs}};
            fs::create_directories(fs::path(c.abs(manifest_rel)).parent_path());
            write_text_file(c.abs(manifest_rel), c.manifest.dump(2) + "\n");
            emit(c, {{"event", "stage_done"}, {"stage", def.name}, {"output_hash", output_hash}});
            report.stages.push_back({def.name, false});
        } catch (const std::exception& e) {
            emit(c, {{"event", "stage_error"}, {"stage", def.name}, {"error", e.what()}});
            say(c, "FAILED at stage " + def.name + ": " + e.what());
            report.exit_code = 1;
            report.failed_stage = def.name;
            report.error = e.what();
            return report;
        }
    }
    return report;
}

} // namespace embforge
