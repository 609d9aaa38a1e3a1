#include <cmath>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "embforge/corpus.hpp"
#include "embforge/fixtures.hpp"
#include "embforge/losses.hpp"
#include "embforge/mining.hpp"
#include "embforge/pipeline.hpp"
#include "embforge/sampler.hpp"
#include "embforge/synthesis.hpp"
#include "embforge/text.hpp"
#include "embforge/trainer.hpp"
#include "embforge/transform.hpp"

using namespace embforge;
using ordered_json = nlohmann::ordered_json;

namespace {

// The work/{stage}/out.jsonl stream holds sample lines and pair lines side by
// side; write whatever a command produced in that same shape.
void write_mixed(const std::string& path, const std::vector<TrainingSample>& samples,
                 const std::vector<ScoredPair>& pairs) {
    std::string out;
    for (const auto& s : samples) {
        out += to_json_line(s);
        out.push_back('\n');
    }
    for (const auto& p : pairs) {
        out += to_json_line(p);
        out.push_back('\n');
    }
    write_text_file(path, out);
}

Vec normalized(Vec v) {
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double n = std::sqrt(n2);
    if (n < 1e-300) throw Error(ErrorCode::InvalidArgument, "zero vector in batch file");
    for (double& x : v) x /= n;
    return v;
}

EmbeddedBatch embedded_batch_from_json(const ordered_json& doc) {
    EmbeddedBatch batch;
    batch.dataset_name = doc.value("dataset", std::string("cli"));
    for (const auto& q : doc.at("queries")) batch.queries.push_back(normalized(q.get<Vec>()));
    for (const auto& p : doc.at("positives")) batch.positives.push_back(normalized(p.get<Vec>()));
    if (doc.contains("negatives"))
        for (const auto& row : doc.at("negatives")) {
            std::vector<Vec> negs;
            for (const auto& n : row) negs.push_back(normalized(n.get<Vec>()));
            batch.negatives.push_back(std::move(negs));
        }
    if (doc.contains("class_labels"))
        batch.class_labels = doc.at("class_labels").get<std::vector<std::string>>();
    if (doc.contains("neg_class_labels"))
        batch.neg_class_labels =
            doc.at("neg_class_labels").get<std::vector<std::vector<std::string>>>();
    return batch;
}

class CliEmbedScorer : public Scorer {
  public:
    CliEmbedScorer(size_t vocab, size_t dim, uint64_t seed)
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

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"embforge: contrastive embedding data pipeline"};
    app.require_subcommand(1);

    // transform
    std::string t_kind, t_in, t_out, t_instructions, t_dataset = "cli";
    size_t t_max_chars = 1536, t_negs = 4;
    uint64_t t_seed = 0;
    double t_binarize = -1.0;
    auto* t = app.add_subcommand("transform", "raw records -> training samples or pairs");
    t->add_option("--kind", t_kind, "title_body|claim_evidence|qa|sts|entailment|labeled")
        ->required();
    t->add_option("--in", t_in, "raw records JSONL")->required();
    t->add_option("--out", t_out, "output JSONL")->required();
    t->add_option("--max-chars", t_max_chars, "passage truncation in codepoints");
    t->add_option("--negs", t_negs, "negatives per CLS sample");
    t->add_option("--seed", t_seed, "sampling seed");
    t->add_option("--binarize-threshold", t_binarize, "STS numeric label threshold");
    t->add_option("--dataset", t_dataset, "dataset name stamped on outputs");
    t->add_option("--instructions", t_instructions, "instructions.json to attach");

    // synthesize
    std::string s_mode, s_in, s_out, s_base_url, s_model = "stub";
    size_t s_n = 1;
    uint64_t s_seed = 0;
    bool s_stub = false;
    double s_violation_rate = 0.0;
    auto* sy = app.add_subcommand("synthesize", "LLM-backed sample synthesis");
    sy->add_option("--mode", s_mode, "paraphrase|augment|hardneg")->required();
    sy->add_option("--in", s_in, "samples JSONL")->required();
    sy->add_option("--out", s_out, "output JSONL")->required();
    sy->add_option("--n", s_n, "variants per sample");
    sy->add_flag("--stub", s_stub, "offline deterministic generator");
    sy->add_option("--base-url", s_base_url, "chat-completions endpoint");
    sy->add_option("--model", s_model, "model name");
    sy->add_option("--seed", s_seed, "generation seed");
    sy->add_option("--violation-rate", s_violation_rate, "stub: fraction of broken outputs");

    // mine
    std::string m_in, m_corpus, m_out;
    MiningConfig m_cfg;
    uint64_t m_seed = 0;
    size_t m_vocab = 1 << 16, m_dim = 64;
    auto* mi = app.add_subcommand("mine", "fill empty negative slots from a scored corpus");
    mi->add_option("--in", m_in, "samples JSONL")->required();
    mi->add_option("--corpus", m_corpus, "candidate texts, one per line")->required();
    mi->add_option("--out", m_out, "output JSONL")->required();
    mi->add_option("--rank-lo", m_cfg.rank_lo, "window start, 1-based");
    mi->add_option("--rank-hi", m_cfg.rank_hi, "window end, inclusive");
    mi->add_option("--negs", m_cfg.negatives_per_query, "negatives per query");
    mi->add_option("--seed", m_seed, "scorer + draw seed");
    mi->add_option("--vocab", m_vocab, "scorer vocab");
    mi->add_option("--dim", m_dim, "scorer dim");

    // dedup
    std::string d_in, d_out;
    auto* de = app.add_subcommand("dedup", "drop repeated (query, positive) pairs");
    de->add_option("--in", d_in)->required();
    de->add_option("--out", d_out)->required();

    // filter
    std::string f_in, f_out;
    double f_threshold = 0.3;
    uint64_t f_seed = 0;
    size_t f_vocab = 1 << 16, f_dim = 64;
    auto* fi = app.add_subcommand("filter", "drop samples scoring below threshold");
    fi->add_option("--in", f_in)->required();
    fi->add_option("--out", f_out)->required();
    fi->add_option("--threshold", f_threshold, "minimum query-positive score");
    fi->add_option("--seed", f_seed, "scorer seed");
    fi->add_option("--vocab", f_vocab, "scorer vocab");
    fi->add_option("--dim", f_dim, "scorer dim");

    // plan
    std::string p_manifest, p_out;
    int p_stage = 2;
    double p_alpha = 0.5, p_eta = 0.72;
    auto* pl = app.add_subcommand("plan", "compute sampling ratios from a dataset manifest");
    pl->add_option("--stage", p_stage, "1 or 2")->check(CLI::Range(1, 2));
    pl->add_option("--alpha", p_alpha, "size exponent");
    pl->add_option("--eta", p_eta, "stage-2 retrieval share");
    pl->add_option("--manifest", p_manifest, "datasets.json")->required();
    pl->add_option("--out", p_out, "plan JSON")->required();

    // eval-loss
    std::string l_kind, l_batch;
    double l_tau = 0.02;
    bool l_gradcheck = false;
    auto* lo = app.add_subcommand("eval-loss", "evaluate a loss kernel on a JSON batch");
    lo->add_option("--kind", l_kind, "retrieval|cosent|cls")->required();
    lo->add_option("--batch", l_batch, "batch JSON of raw vectors")->required();
    lo->add_option("--tau", l_tau, "temperature");
    lo->add_flag("--gradcheck", l_gradcheck, "also run finite-difference check");

    // train
    std::string tr_manifest, tr_config, tr_report, tr_checkpoint, tr_eval;
    auto* tr = app.add_subcommand("train", "two-stage training run");
    tr->add_option("--manifest", tr_manifest, "datasets.json")->required();
    tr->add_option("--config", tr_config, "train.json");
    tr->add_option("--report", tr_report, "report output")->required();
    tr->add_option("--checkpoint", tr_checkpoint, "model output")->required();
    tr->add_option("--eval", tr_eval, "eval items JSONL for recall");

    // run
    std::string r_config;
    bool r_stub = false;
    auto* ru = app.add_subcommand("run", "full pipeline from a config file");
    ru->add_option("--config", r_config, "pipeline.json")->required();
    ru->add_flag("--stub", r_stub, "force offline synthesis");

    // gen-fixtures
    FixtureConfig fx;
    auto* gf = app.add_subcommand("gen-fixtures", "write the synthetic benchmark corpus");
    gf->add_option("--out", fx.out_dir, "output directory")->required();
    gf->add_option("--seed", fx.seed);
    gf->add_option("--topics", fx.topics);
    gf->add_option("--qa", fx.qa_records);
    gf->add_option("--titles", fx.title_records);
    gf->add_option("--claims", fx.claims);
    gf->add_option("--sts", fx.sts_records);
    gf->add_option("--cls", fx.cls_records);
    gf->add_option("--eval-items", fx.eval_items);

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) {
            auto records = read_raw_records(t_in);
            const RecordKind kind = parse_record_kind(t_kind);
            for (auto& r : records) {
                if (!t_dataset.empty()) r.dataset_name = t_dataset;
                r.kind = kind;
            }
            TransformConfig tc;
            tc.max_chars = t_max_chars;
            tc.negatives_per_sample = t_negs;
            tc.seed = t_seed;
            if (t_binarize >= 0.0) tc.binarize_threshold = t_binarize;
            TransformResult res = transform_records(records, kind, tc);
            if (!t_instructions.empty()) {
                const auto reg = InstructionRegistry::load(t_instructions);
                for (auto& s : res.samples) s = attach_instruction(s, reg);
            }
            write_mixed(t_out, res.samples, res.pairs);
            std::cout << "wrote " << res.samples.size() << " samples, " << res.pairs.size()
                      << " pairs (" << res.warnings.count() << " warnings)\n";
        } else if (sy->parsed()) {
            LlmClientConfig lcfg;
            lcfg.offline_stub = s_stub || s_base_url.empty();
            lcfg.base_url = s_base_url;
            lcfg.model_name = s_model;
            lcfg.stub_violation_rate = s_violation_rate;
            auto client = make_client(lcfg);
            auto samples = read_samples(s_in);
            Warnings warn;
            std::vector<TrainingSample> accepted;
            for (size_t i = 0; i < samples.size(); ++i) {
                const uint64_t seed = derive_seed(s_seed, "cli-synth:" + std::to_string(i));
                if (s_mode == "paraphrase") {
                    for (auto& v : paraphrase(samples[i], *client, paraphrase_constraints(), s_n,
                                              seed, &warn))
                        accepted.push_back(std::move(v));
                } else if (s_mode == "augment") {
                    for (auto& v : augment(samples[i], *client, augment_constraints(), s_n, seed,
                                           &warn))
                        accepted.push_back(std::move(v));
                } else if (s_mode == "hardneg") {
                    if (samples[i].negatives.empty()) {
                        auto negs = gen_hard_negatives(samples[i], *client,
                                                       hard_negative_constraints(), s_n, seed,
                                                       &warn);
                        if (!negs.empty()) samples[i].negatives = std::move(negs);
                    }
                } else {
                    throw Error(ErrorCode::InvalidArgument, "unknown mode: " + s_mode);
                }
            }
            const auto merged = s_mode == "hardneg"
                                    ? samples
                                    : apply_retrieval_policy(samples, accepted);
            write_mixed(s_out, merged, {});
            std::cout << "wrote " << merged.size() << " samples (" << warn.count()
                      << " warnings)\n";
        } else if (mi->parsed()) {
            m_cfg.validate();
            auto samples = read_samples(m_in);
            const auto corpus = read_lines(m_corpus);
            const CliEmbedScorer scorer(m_vocab, m_dim, derive_seed(m_seed, "miner"));
            size_t mined = 0;
            for (auto& s : samples) {
                const bool had = !s.negatives.empty();
                s = mine_hard_negatives(s, corpus, scorer, m_cfg, derive_seed(m_seed, "mine"));
                if (!had && !s.negatives.empty()) ++mined;
            }
            write_mixed(m_out, samples, {});
            std::cout << "mined negatives for " << mined << " of " << samples.size()
                      << " samples\n";
        } else if (de->parsed()) {
            const auto samples = read_samples(d_in);
            const auto kept = dedup(samples);
            write_mixed(d_out, kept, {});
            std::cout << "kept " << kept.size() << " of " << samples.size() << " samples\n";
        } else if (fi->parsed()) {
            const auto samples = read_samples(f_in);
            const CliEmbedScorer scorer(f_vocab, f_dim, derive_seed(f_seed, "miner"));
            const FilterResult res = quality_filter(samples, scorer, f_threshold);
            write_mixed(f_out, res.kept, {});
            std::cout << "kept " << res.kept.size() << ", dropped " << res.dropped_count << "\n";
        } else if (pl->parsed()) {
            const auto metas = read_dataset_manifest(p_manifest);
            const SamplingPlan plan = p_stage == 1 ? compute_stage1_plan(metas, p_alpha)
                                                   : compute_two_stage_plan(metas, p_alpha, p_eta);
            write_plan(p_out, plan);
            std::cout << "wrote stage-" << p_stage << " plan over " << plan.entries.size()
                      << " datasets\n";
        } else if (lo->parsed()) {
            const LossKind kind = parse_loss_kind(l_kind);
            ordered_json doc = ordered_json::parse(read_text_file(l_batch), nullptr, false);
            if (doc.is_discarded() || !doc.is_object())
                throw Error(ErrorCode::ParseError, "batch file is not a JSON object");
            LossConfig cfg;
            cfg.temperature = l_tau;
            ordered_json out;
            if (kind == LossKind::Cosent) {
                ScoredPairBatch batch;
                batch.sims = doc.at("sims").get<Vec>();
                batch.scores = doc.at("scores").get<std::vector<int>>();
                out["value"] = cosent_loss(batch, cfg).value;
                if (l_gradcheck) out["max_rel_error"] = grad_check(batch, cfg, 1e-5).max_rel_error;
            } else {
                const EmbeddedBatch batch = embedded_batch_from_json(doc);
                out["value"] = (kind == LossKind::Retrieval ? retrieval_loss(batch, cfg)
                                                            : cls_loss(batch, cfg))
                                   .value;
                if (l_gradcheck)
                    out["max_rel_error"] = grad_check(kind, batch, cfg, 1e-5).max_rel_error;
            }
            std::cout << out.dump() << "\n";
        } else if (tr->parsed()) {
            const auto metas = read_dataset_manifest(tr_manifest);
            TrainConfig cfg;
            if (!tr_config.empty()) cfg = parse_train_config(read_text_file(tr_config));
            std::vector<EvalItem> eval_items;
            if (!tr_eval.empty()) eval_items = read_eval_items(tr_eval);
            const TrainOutcome outcome = train(cfg, metas, eval_items);
            save_model(tr_checkpoint, outcome.params);
            write_report(tr_report, outcome.report);
            std::cout << "trained " << outcome.report.stage1_losses.size() << "+"
                      << outcome.report.stage2_losses.size() << " steps, recall@1 "
                      << outcome.report.recall_at_1 << "\n";
        } else if (ru->parsed()) {
            PipelineConfig cfg = PipelineConfig::load(r_config);
            if (r_stub) {
                cfg.stub = true;
                cfg.llm.offline_stub = true;
            }
            const PipelineReport rep = run_pipeline(cfg, &std::cout, &std::cerr);
            return rep.exit_code;
        } else if (gf->parsed()) {
            const FixtureResult res = generate_fixtures(fx);
            std::cout << "wrote " << res.files.size() << " files under " << fx.out_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
