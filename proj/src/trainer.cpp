#include "embforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include <json.hpp>

#include "embforge/text.hpp"

namespace embforge {

using ordered_json = nlohmann::ordered_json;

ToyEmbedderParams ToyEmbedderParams::init(size_t vocab, size_t dim, uint64_t seed) {
    if (dim < 2) throw Error(ErrorCode::InvalidArgument, "embedding dim must be >= 2");
    if (vocab == 0) throw Error(ErrorCode::InvalidArgument, "vocab must be positive");
    ToyEmbedderParams p;
    p.vocab = vocab;
    p.dim = dim;
    p.hash_seed = seed;
    p.weights.resize(vocab * dim);
    SplitMix rng(derive_seed(seed, "toy-init"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    for (double& w : p.weights) w = (uniform01(rng) - 0.5) * scale;
    return p;
}

std::vector<uint32_t> feature_rows(const std::string& text, const ToyEmbedderParams& params) {
    std::vector<uint32_t> rows;
    for (auto token : tokenize(text)) {
        uint64_t s = fnv1a64(token) ^ params.hash_seed;
        rows.push_back(static_cast<uint32_t>(splitmix64(s) % params.vocab));
    }
    if (rows.empty()) throw Error(ErrorCode::EmptyText, "text has no tokens to embed");
    return rows;
}

namespace {

Vec embed_from_rows(const std::vector<uint32_t>& rows, const ToyEmbedderParams& params,
                    double* norm_out) {
    Vec m(params.dim, 0.0);
    for (uint32_t r : rows) {
        const double* w = params.row(r);
        for (size_t k = 0; k < params.dim; ++k) m[k] += w[k];
    }
    const double inv_t = 1.0 / static_cast<double>(rows.size());
    double n2 = 0.0;
    for (double& x : m) {
        x *= inv_t;
        n2 += x * x;
    }
    const double norm = std::sqrt(n2);
    if (norm < 1e-300)
        throw Error(ErrorCode::InvalidArgument, "degenerate zero-norm embedding");
    for (double& x : m) x /= norm;
    if (norm_out) *norm_out = norm;
    return m;
}

// d(loss)/d(mean vector) for a normalized embedding e with pre-normalization
// norm ||m||, given the upstream gradient g on e; the per-row contribution
// divides by the token count.
Vec normalize_backprop(const Vec& g, const Vec& e, double norm, size_t token_count) {
    double ge = 0.0;
    for (size_t k = 0; k < g.size(); ++k) ge += g[k] * e[k];
    Vec v(g.size());
    const double scale = 1.0 / (norm * static_cast<double>(token_count));
    for (size_t k = 0; k < g.size(); ++k) v[k] = (g[k] - ge * e[k]) * scale;
    return v;
}

std::string prepend_instruction(const std::string& instruction, const std::string& query) {
    if (instruction.empty()) return query;
    return instruction + " " + query;
}

} // namespace

Vec embed(const std::string& text, const ToyEmbedderParams& params) {
    return embed_from_rows(feature_rows(text, params), params, nullptr);
}

void TrainConfig::validate() const {
    if (lr1 <= 0.0) throw Error(ErrorCode::InvalidArgument, "lr1 must be positive");
    if (tau <= 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    if (!(eta > 0.0 && eta < 1.0)) throw Error(ErrorCode::InvalidArgument, "eta outside (0,1)");
    if (alpha < 0.0) throw Error(ErrorCode::InvalidArgument, "alpha must be >= 0");
    if (batch_infonce == 0 || batch_cosent == 0)
        throw Error(ErrorCode::InvalidArgument, "batch sizes must be positive");
    if (weight_decay < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight decay");
    if (dim < 2) throw Error(ErrorCode::InvalidArgument, "dim must be >= 2");
    if (vocab == 0) throw Error(ErrorCode::InvalidArgument, "vocab must be positive");
    if (query_max_chars == 0 || passage_max_chars == 0)
        throw Error(ErrorCode::InvalidArgument, "truncation lengths must be positive");
}

void EvalItem::validate() const {
    if (trim(query).empty() || trim(positive).empty())
        throw Error(ErrorCode::EmptyField, "eval item needs query and positive");
    if (distractors.size() < 5)
        throw Error(ErrorCode::InvalidArgument, "eval item needs at least 5 distractors");
}

std::vector<EvalItem> read_eval_items(const std::string& path) {
    std::vector<EvalItem> items;
    for (const std::string& line : read_lines(path)) {
        ordered_json doc = ordered_json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw Error(ErrorCode::ParseError, "bad eval item line");
        EvalItem item;
        try {
            item.query = doc.at("query").get<std::string>();
            item.positive = doc.at("positive").get<std::string>();
            if (doc.contains("instruction")) item.instruction = doc["instruction"].get<std::string>();
            for (const auto& d : doc.at("distractors")) item.distractors.push_back(d.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ParseError, std::string("bad eval item: ") + e.what());
        }
        item.validate();
        items.push_back(std::move(item));
    }
    return items;
}

void write_eval_items(const std::string& path, const std::vector<EvalItem>& items) {
    std::string out;
    for (const auto& item : items) {
        ordered_json doc;
        doc["query"] = item.query;
        doc["instruction"] = item.instruction;
        doc["positive"] = item.positive;
        doc["distractors"] = item.distractors;
        out += doc.dump();
        out.push_back('\n');
    }
    write_text_file(path, out);
}

RecallReport evaluate_recall(const ToyEmbedderParams& params, const std::vector<EvalItem>& items) {
    RecallReport rep;
    if (items.empty()) return rep;
    size_t hit1 = 0, hit5 = 0;
    for (const auto& item : items) {
        item.validate();
        const Vec q = embed(
            prepend_instruction(item.instruction, truncate_codepoints(item.query, 256)), params);
        const Vec pos = embed(truncate_codepoints(item.positive, 1536), params);
        double sim_pos = 0.0;
        for (size_t k = 0; k < q.size(); ++k) sim_pos += q[k] * pos[k];
        size_t rank = 1;
        for (const auto& d : item.distractors) {
            const Vec dv = embed(truncate_codepoints(d, 1536), params);
            double s = 0.0;
            for (size_t k = 0; k < q.size(); ++k) s += q[k] * dv[k];
            if (s > sim_pos) ++rank;
        }
        if (rank <= 1) ++hit1;
        if (rank <= 5) ++hit5;
    }
    rep.recall_at_1 = static_cast<double>(hit1) / static_cast<double>(items.size());
    rep.recall_at_5 = static_cast<double>(hit5) / static_cast<double>(items.size());
    return rep;
}

void write_report(const std::string& path, const TrainReport& report) {
    ordered_json doc;
    doc["stage1_steps"] = report.stage1_losses.size();
    doc["stage2_steps"] = report.stage2_losses.size();
    doc["stage1_losses"] = report.stage1_losses;
    doc["stage2_losses"] = report.stage2_losses;
    doc["stage2_tasks"] = report.stage2_tasks;
    doc["recall1_after_stage1"] = report.recall1_after_stage1;
    doc["recall5_after_stage1"] = report.recall5_after_stage1;
    doc["recall_at_1"] = report.recall_at_1;
    doc["recall_at_5"] = report.recall_at_5;
    doc["wall_seconds"] = report.wall_seconds;
    write_text_file(path, doc.dump(2) + "\n");
}

// --- Trainer -------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::vector<DatasetMeta> datasets) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (datasets.empty()) throw Error(ErrorCode::EmptyList, "no datasets to train on");
    params_ = ToyEmbedderParams::init(cfg_.vocab, cfg_.dim, derive_seed(cfg_.seed, "embedder"));
    row_log_decay_.assign(cfg_.vocab, 0.0);

    for (const auto& meta : datasets) {
        meta.validate();
        LoadedDataset ds;
        ds.meta = meta;
        if (meta.loss_kind == BatchLoss::Cosent) {
            const auto pairs = read_pairs(meta.path);
            if (pairs.size() != meta.size)
                throw Error(ErrorCode::InvalidArgument,
                            "manifest size mismatch for '" + meta.name + "'");
            for (const auto& pr : pairs) {
                PreparedPair pp;
                pp.a_rows = feature_rows(truncate_codepoints(pr.text_a, cfg_.query_max_chars), params_);
                pp.b_rows = feature_rows(truncate_codepoints(pr.text_b, cfg_.query_max_chars), params_);
                pp.score = pr.score;
                ds.pairs.push_back(std::move(pp));
            }
        } else {
            const auto samples = read_samples(meta.path);
            if (samples.size() != meta.size)
                throw Error(ErrorCode::InvalidArgument,
                            "manifest size mismatch for '" + meta.name + "'");
            size_t cls_count = 0;
            std::map<std::string, std::string> label_of;
            for (const auto& s : samples) {
                if (s.task == TaskKind::CLS) {
                    ++cls_count;
                    if (!s.class_label)
                        throw Error(ErrorCode::MissingLabels,
                                    "CLS sample in '" + meta.name + "' lacks a class label");
                    label_of.emplace(s.query, *s.class_label);
                    label_of.emplace(s.positive, *s.class_label);
                }
            }
            if (cls_count != 0 && cls_count != samples.size())
                throw Error(ErrorCode::InvalidArgument,
                            "dataset '" + meta.name + "' mixes CLS and non-CLS samples");
            ds.is_cls = cls_count != 0;
            for (const auto& s : samples) {
                PreparedSample ps;
                ps.query_rows = feature_rows(
                    prepend_instruction(s.instruction,
                                        truncate_codepoints(s.query, cfg_.query_max_chars)),
                    params_);
                ps.positive_rows =
                    feature_rows(truncate_codepoints(s.positive, cfg_.passage_max_chars), params_);
                for (const auto& neg : s.negatives) {
                    ps.negative_rows.push_back(
                        feature_rows(truncate_codepoints(neg, cfg_.passage_max_chars), params_));
                    if (ds.is_cls) {
                        auto it = label_of.find(neg);
                        // Unknown labels can never collide with an instance
                        // class, so the empty sentinel keeps the term active.
                        ps.neg_labels.push_back(it == label_of.end() ? std::string() : it->second);
                    }
                }
                if (ds.is_cls) ps.label = *s.class_label;
                ds.samples.push_back(std::move(ps));
            }
        }
        data_.push_back(std::move(ds));
    }

    plan1_ = compute_stage1_plan(datasets, cfg_.alpha);
    if (cfg_.stage2_steps > 0) {
        plan2_ = compute_two_stage_plan(datasets, cfg_.alpha, cfg_.eta);
        plan2_valid_ = true;
    }
    state_ = SamplerState::fresh(plan1_, cfg_.seed);
}

ToyEmbedderParams& Trainer::params() { return params_; }

void Trainer::touch_row(uint32_t r) {
    if (row_log_decay_[r] == cum_log_decay_) return;
    const double factor = std::exp(cum_log_decay_ - row_log_decay_[r]);
    double* w = params_.row(r);
    for (size_t k = 0; k < params_.dim; ++k) w[k] *= factor;
    row_log_decay_[r] = cum_log_decay_;
}

void Trainer::flush_decay() {
    for (uint32_t r = 0; r < params_.vocab; ++r) touch_row(r);
}

Vec Trainer::embed_rows(const std::vector<uint32_t>& rows, double* norm_out) {
    for (uint32_t r : rows) touch_row(r);
    return embed_from_rows(rows, params_, norm_out);
}

BatchSpec Trainer::draw(PlanStage stage) {
    if (stage == PlanStage::Two && !plan2_valid_) {
        std::vector<DatasetMeta> metas;
        for (const auto& ds : data_) metas.push_back(ds.meta);
        plan2_ = compute_two_stage_plan(metas, cfg_.alpha, cfg_.eta);
        plan2_valid_ = true;
    }
    BatchSizes sizes;
    sizes.infonce = cfg_.batch_infonce;
    sizes.cosent = cfg_.batch_cosent;
    sizes.unit = cfg_.ratio_unit;
    return next_batch(stage == PlanStage::One ? plan1_ : plan2_, state_, sizes);
}

double Trainer::step_batch(const BatchSpec& spec, double lr, bool apply_update) {
    LoadedDataset& ds = data_.at(spec.dataset_index);
    LossConfig lcfg;
    lcfg.temperature = cfg_.tau;
    lcfg.include_query_query = cfg_.include_query_query;
    lcfg.share_batch_negatives = cfg_.share_batch_negatives;

    // Sparse row gradients, ordered so the update sweep is deterministic.
    std::map<uint32_t, Vec> row_grads;
    auto accumulate = [&](const std::vector<uint32_t>& rows, const Vec& g, const Vec& e,
                          double norm) {
        const Vec v = normalize_backprop(g, e, norm, rows.size());
        for (uint32_t r : rows) {
            auto [it, fresh] = row_grads.try_emplace(r, Vec(params_.dim, 0.0));
            Vec& acc = it->second;
            for (size_t k = 0; k < params_.dim; ++k) acc[k] += v[k];
        }
    };

    double loss_value = 0.0;

    if (ds.meta.loss_kind == BatchLoss::Cosent) {
        const size_t n = spec.indices.size();
        ScoredPairBatch batch;
        batch.sims.resize(n);
        batch.scores.resize(n);
        std::vector<Vec> ea(n), eb(n);
        std::vector<double> na(n), nb(n);
        for (size_t i = 0; i < n; ++i) {
            const PreparedPair& pp = ds.pairs.at(spec.indices[i]);
            ea[i] = embed_rows(pp.a_rows, &na[i]);
            eb[i] = embed_rows(pp.b_rows, &nb[i]);
            double s = 0.0;
            for (size_t k = 0; k < params_.dim; ++k) s += ea[i][k] * eb[i][k];
            batch.sims[i] = s;
            batch.scores[i] = pp.score;
        }
        const LossOutput out = cosent_loss(batch, lcfg);
        loss_value = out.value;
        if (apply_update) {
            for (size_t i = 0; i < n; ++i) {
                const double g = out.grad_sims[i];
                if (g == 0.0) continue;
                const PreparedPair& pp = ds.pairs.at(spec.indices[i]);
                Vec ga(params_.dim), gb(params_.dim);
                for (size_t k = 0; k < params_.dim; ++k) {
                    ga[k] = g * eb[i][k];
                    gb[k] = g * ea[i][k];
                }
                accumulate(pp.a_rows, ga, ea[i], na[i]);
                accumulate(pp.b_rows, gb, eb[i], nb[i]);
            }
        }
    } else {
        const size_t n = spec.indices.size();
        size_t m = cfg_.max_negatives;
        for (size_t idx : spec.indices)
            m = std::min(m, ds.samples.at(idx).negative_rows.size());

        EmbeddedBatch batch;
        batch.dataset_name = ds.meta.name;
        batch.queries.resize(n);
        batch.positives.resize(n);
        batch.negatives.assign(n, std::vector<Vec>(m));
        std::vector<double> qn(n), pn(n);
        std::vector<std::vector<double>> nn(n, std::vector<double>(m));
        if (ds.is_cls) {
            batch.class_labels.resize(n);
            batch.neg_class_labels.assign(n, std::vector<std::string>(m));
        }
        for (size_t i = 0; i < n; ++i) {
            const PreparedSample& ps = ds.samples.at(spec.indices[i]);
            batch.queries[i] = embed_rows(ps.query_rows, &qn[i]);
            batch.positives[i] = embed_rows(ps.positive_rows, &pn[i]);
            for (size_t s = 0; s < m; ++s)
                batch.negatives[i][s] = embed_rows(ps.negative_rows[s], &nn[i][s]);
            if (ds.is_cls) {
                batch.class_labels[i] = ps.label;
                for (size_t s = 0; s < m; ++s) batch.neg_class_labels[i][s] = ps.neg_labels[s];
            }
        }
        const LossOutput out = ds.is_cls ? cls_loss(batch, lcfg) : retrieval_loss(batch, lcfg);
        loss_value = out.value;
        if (apply_update) {
            for (size_t i = 0; i < n; ++i) {
                const PreparedSample& ps = ds.samples.at(spec.indices[i]);
                accumulate(ps.query_rows, out.grad_queries[i], batch.queries[i], qn[i]);
                accumulate(ps.positive_rows, out.grad_positives[i], batch.positives[i], pn[i]);
                for (size_t s = 0; s < m; ++s)
                    accumulate(ps.negative_rows[s], out.grad_negatives[i][s], batch.negatives[i][s],
                               nn[i][s]);
            }
        }
    }

    if (apply_update) {
        const double decay = 1.0 - lr * cfg_.weight_decay;
        if (decay <= 0.0)
            throw Error(ErrorCode::InvalidArgument, "lr * weight_decay >= 1 collapses the model");
        cum_log_decay_ += std::log1p(-lr * cfg_.weight_decay);
        for (const auto& [r, g] : row_grads) {
            double* w = params_.row(r);
            for (size_t k = 0; k < params_.dim; ++k) w[k] = w[k] * decay - lr * g[k];
            row_log_decay_[r] = cum_log_decay_;
        }
    }
    return loss_value;
}

double Trainer::eval_batch_loss(const BatchSpec& spec) { return step_batch(spec, 0.0, false); }

double Trainer::train_one(const BatchSpec& spec, double lr) { return step_batch(spec, lr, true); }

namespace {

double warmup_lr(double base, size_t step, size_t warmup_steps) {
    if (warmup_steps == 0) return base;
    const double frac = static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
    return base * std::min(1.0, frac);
}

} // namespace

TrainReport Trainer::run(const std::vector<EvalItem>& eval_items) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainReport report;

    for (size_t s = 0; s < cfg_.stage1_steps; ++s) {
        const BatchSpec spec = draw(PlanStage::One);
        report.stage1_losses.push_back(train_one(spec, warmup_lr(cfg_.lr1, s, cfg_.warmup_steps)));
    }
    flush_decay();
    if (!eval_items.empty()) {
        const RecallReport r = evaluate_recall(params_, eval_items);
        report.recall1_after_stage1 = r.recall_at_1;
        report.recall5_after_stage1 = r.recall_at_5;
    }

    const double lr2 = cfg_.stage2_lr();
    for (size_t s = 0; s < cfg_.stage2_steps; ++s) {
        const BatchSpec spec = draw(PlanStage::Two);
        const LoadedDataset& ds = data_.at(spec.dataset_index);
        const double lr =
            cfg_.stage2_fresh_warmup ? warmup_lr(lr2, s, cfg_.warmup_steps) : lr2;
        report.stage2_losses.push_back(train_one(spec, lr));
        report.stage2_tasks.push_back(ds.meta.loss_kind == BatchLoss::Cosent ? "nli"
                                      : ds.is_cls                            ? "cls"
                                                                             : "retrieval");
    }
    flush_decay();
    if (!eval_items.empty()) {
        const RecallReport r = evaluate_recall(params_, eval_items);
        report.recall_at_1 = r.recall_at_1;
        report.recall_at_5 = r.recall_at_5;
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

TrainOutcome train(const TrainConfig& cfg, const std::vector<DatasetMeta>& datasets,
                   const std::vector<EvalItem>& eval_items) {
    Trainer trainer(cfg, datasets);
    TrainOutcome outcome;
    outcome.report = trainer.run(eval_items);
    outcome.params = std::move(trainer.params());
    return outcome;
}

// --- model serialization ---------------------------------------------------------

namespace {

constexpr char kModelMagic[8] = {'E', 'F', 'T', 'O', 'Y', 'E', 'M', '1'};

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t take_u64(const std::string& in, size_t& pos) {
    if (pos + 8 > in.size()) throw Error(ErrorCode::CorruptState, "model file is truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}

uint64_t double_bits(double d) {
    uint64_t u;
    static_assert(sizeof(u) == sizeof(d));
    __builtin_memcpy(&u, &d, sizeof(u));
    return u;
}

double bits_double(uint64_t u) {
    double d;
    __builtin_memcpy(&d, &u, sizeof(d));
    return d;
}

} // namespace

void save_model(const std::string& path, const ToyEmbedderParams& params) {
    std::string out(kModelMagic, sizeof(kModelMagic));
    put_u64(out, params.hash_seed);
    put_u64(out, params.vocab);
    put_u64(out, params.dim);
    out.reserve(out.size() + params.weights.size() * 8);
    for (double w : params.weights) put_u64(out, double_bits(w));
    write_text_file(path, out);
}

ToyEmbedderParams load_model(const std::string& path) {
    const std::string bytes = read_text_file(path);
    if (bytes.size() < sizeof(kModelMagic) ||
        bytes.compare(0, sizeof(kModelMagic), kModelMagic, sizeof(kModelMagic)) != 0)
        throw Error(ErrorCode::CorruptState, "model file has a bad header");
    size_t pos = sizeof(kModelMagic);
    ToyEmbedderParams p;
    p.hash_seed = take_u64(bytes, pos);
    p.vocab = take_u64(bytes, pos);
    p.dim = take_u64(bytes, pos);
    if (p.vocab == 0 || p.dim < 2 || p.vocab > (1ull << 32) || p.dim > (1ull << 20))
        throw Error(ErrorCode::CorruptState, "model file has implausible dimensions");
    const size_t want = p.vocab * p.dim;
    if (bytes.size() != pos + want * 8)
        throw Error(ErrorCode::CorruptState, "model file has the wrong length");
    p.weights.resize(want);
    for (size_t i = 0; i < want; ++i) p.weights[i] = bits_double(take_u64(bytes, pos));
    return p;
}

} // namespace embforge
