#include "embforge/fixtures.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "embforge/corpus.hpp"
#include "embforge/text.hpp"

namespace embforge {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string b26(size_t v, size_t width) {
    std::string s(width, 'a');
    for (size_t i = width; i-- > 0;) {
        s[i] = static_cast<char>('a' + v % 26);
        v /= 26;
    }
    return s;
}

// 7-char lowercase token, unique per (prefix, group, idx).
std::string make_token(char prefix, size_t group, size_t idx) {
    std::string t(1, prefix);
    t += b26(group, 2);
    t += b26(idx, 2);
    t += b26((group * 31 + idx * 7) % 676, 2);
    return t;
}

struct Vocab {
    std::vector<std::vector<std::string>> qwords; // per topic
    std::vector<std::vector<std::string>> dwords;
    std::vector<std::vector<std::string>> pwords;
    std::vector<std::vector<std::string>> cwords; // per class
    std::vector<std::string> filler;
};

Vocab build_vocab(const FixtureConfig& cfg) {
    Vocab v;
    v.qwords.resize(cfg.topics);
    v.dwords.resize(cfg.topics);
    v.pwords.resize(cfg.topics);
    for (size_t t = 0; t < cfg.topics; ++t) {
        for (size_t i = 0; i < 10; ++i) v.qwords[t].push_back(make_token('q', t, i));
        for (size_t i = 0; i < 14; ++i) v.dwords[t].push_back(make_token('d', t, i));
        for (size_t i = 0; i < 8; ++i) v.pwords[t].push_back(make_token('p', t, i));
    }
    v.cwords.resize(cfg.classes);
    for (size_t c = 0; c < cfg.classes; ++c)
        for (size_t i = 0; i < 8; ++i) v.cwords[c].push_back(make_token('c', c, i));
    for (size_t i = 0; i < 30; ++i) v.filler.push_back(make_token('f', 0, i));
    return v;
}

std::vector<std::string> sample_k(SplitMix& rng, const std::vector<std::string>& pool, size_t k) {
    std::vector<size_t> idx(pool.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (k > idx.size()) k = idx.size();
    std::vector<std::string> out;
    for (size_t i = 0; i < k; ++i) {
        const size_t j = i + uniform_below(rng, idx.size() - i);
        std::swap(idx[i], idx[j]);
        out.push_back(pool[idx[i]]);
    }
    return out;
}

std::string join(const std::vector<std::string>& tokens) {
    std::string s;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) s.push_back(' ');
        s += tokens[i];
    }
    return s;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Query: topic query-words plus filler. Its positive reuses the first two
// query tokens as anchors inside a document-word body.
struct QueryDoc {
    std::string query;
    std::string doc;
};

QueryDoc make_query_doc(SplitMix& rng, const Vocab& v, size_t topic, size_t query_len,
                        size_t doc_len) {
    QueryDoc qd;
    auto q = sample_k(rng, v.qwords[topic], query_len);
    std::vector<std::string> anchors(q.begin(), q.begin() + 2);
    auto qf = sample_k(rng, v.filler, 1);
    qd.query = join(concat(q, qf));

    auto d = sample_k(rng, v.dwords[topic], doc_len);
    auto df = sample_k(rng, v.filler, 2);
    auto body = concat(anchors, concat(d, df));
    // One rotation keeps the anchors off a fixed position.
    const size_t shift = uniform_below(rng, body.size());
    std::rotate(body.begin(), body.begin() + shift, body.end());
    qd.doc = join(body);
    return qd;
}

std::string plain_doc(SplitMix& rng, const Vocab& v, size_t topic, size_t doc_len) {
    auto d = sample_k(rng, v.dwords[topic], doc_len);
    auto df = sample_k(rng, v.filler, 2);
    return join(concat(d, df));
}

void write_records(std::vector<std::string>& files, const std::string& path,
                   const std::vector<RawRecord>& records) {
    write_raw_records(path, records);
    files.push_back(path);
}

} // namespace

FixtureResult generate_fixtures(const FixtureConfig& cfg) {
    if (cfg.topics < 2 || cfg.classes < 2 || cfg.topics < cfg.classes)
        throw Error(ErrorCode::InvalidArgument, "need at least 2 classes and topics >= classes");
    if (cfg.distractors_per_item + 1 > cfg.topics)
        throw Error(ErrorCode::InvalidArgument, "not enough topics for distinct distractor topics");
    const Vocab v = build_vocab(cfg);
    const fs::path root(cfg.out_dir);
    fs::create_directories(root / "raw");

    FixtureResult result;

    {
        std::vector<RawRecord> recs;
        for (size_t r = 0; r < cfg.qa_records; ++r) {
            SplitMix rng(derive_seed(cfg.seed, "fx:medqa:" + std::to_string(r)));
            const size_t topic = r % cfg.topics;
            const QueryDoc qd = make_query_doc(rng, v, topic, 4 + uniform_below(rng, 3),
                                               8 + uniform_below(rng, 5));
            RawRecord rec;
            rec.dataset_name = "medqa";
            rec.kind = RecordKind::QuestionAnswer;
            rec.payload["question"] = qd.query;
            rec.payload["answer"] = qd.doc;
            recs.push_back(std::move(rec));
        }
        write_records(result.files, (root / "raw" / "medqa.jsonl").string(), recs);
    }

    {
        std::vector<RawRecord> recs;
        for (size_t r = 0; r < cfg.title_records; ++r) {
            SplitMix rng(derive_seed(cfg.seed, "fx:webtitles:" + std::to_string(r)));
            const size_t topic = r % cfg.topics;
            const QueryDoc qd = make_query_doc(rng, v, topic, 3 + uniform_below(rng, 3),
                                               10 + uniform_below(rng, 5));
            RawRecord rec;
            rec.dataset_name = "webtitles";
            rec.kind = RecordKind::TitleBody;
            rec.payload["title"] = qd.query;
            rec.payload["body"] = qd.doc;
            recs.push_back(std::move(rec));
        }
        write_records(result.files, (root / "raw" / "webtitles.jsonl").string(), recs);
    }

    {
        std::vector<RawRecord> recs;
        for (size_t r = 0; r < cfg.claims; ++r) {
            SplitMix rng(derive_seed(cfg.seed, "fx:factcheck:" + std::to_string(r)));
            const size_t topic = r % cfg.topics;
            const QueryDoc qd = make_query_doc(rng, v, topic, 4 + uniform_below(rng, 2),
                                               8 + uniform_below(rng, 3));
            RawRecord sup;
            sup.dataset_name = "factcheck";
            sup.kind = RecordKind::ClaimEvidence;
            sup.payload["claim"] = qd.query;
            sup.payload["evidence"] = qd.doc;
            sup.payload["evidence_label"] = "Supports";
            recs.push_back(std::move(sup));
            for (size_t k = 0; k < 2; ++k) {
                const size_t other = (topic + 1 + uniform_below(rng, cfg.topics - 1)) % cfg.topics;
                RawRecord ref;
                ref.dataset_name = "factcheck";
                ref.kind = RecordKind::ClaimEvidence;
                ref.payload["claim"] = qd.query;
                ref.payload["evidence"] = plain_doc(rng, v, other, 8 + uniform_below(rng, 3));
                ref.payload["evidence_label"] = "Refutes";
                recs.push_back(std::move(ref));
            }
        }
        write_records(result.files, (root / "raw" / "factcheck.jsonl").string(), recs);
    }

    {
        std::vector<RawRecord> recs;
        for (size_t r = 0; r < cfg.sts_records; ++r) {
            SplitMix rng(derive_seed(cfg.seed, "fx:stspairs:" + std::to_string(r)));
            const size_t topic = r % cfg.topics;
            auto a = sample_k(rng, v.pwords[topic], 5 + uniform_below(rng, 2));
            const bool related = (r % 2) == 0;
            std::vector<std::string> b;
            double score;
            if (related) {
                b = a;
                auto repl = sample_k(rng, v.pwords[topic], 2);
                for (size_t k = 0; k < 2 && k < b.size(); ++k) b[b.size() - 1 - k] = repl[k];
                score = 0.70 + uniform01(rng) * 0.25;
            } else {
                const size_t other = (topic + 1 + uniform_below(rng, cfg.topics - 1)) % cfg.topics;
                b = sample_k(rng, v.pwords[other], 5 + uniform_below(rng, 2));
                score = 0.05 + uniform01(rng) * 0.25;
            }
            auto af = sample_k(rng, v.filler, 1);
            auto bf = sample_k(rng, v.filler, 1);
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.2f", score);
            RawRecord rec;
            rec.dataset_name = "stspairs";
            rec.kind = RecordKind::StsPair;
            rec.payload["sentence_a"] = join(concat(a, af));
            rec.payload["sentence_b"] = join(concat(b, bf));
            rec.payload["label"] = buf;
            recs.push_back(std::move(rec));
        }
        write_records(result.files, (root / "raw" / "stspairs.jsonl").string(), recs);
    }

    {
        std::vector<RawRecord> recs;
        for (size_t r = 0; r < cfg.cls_records; ++r) {
            SplitMix rng(derive_seed(cfg.seed, "fx:topicnews:" + std::to_string(r)));
            const size_t topic = r % cfg.topics;
            const size_t cls = topic % cfg.classes;
            auto c = sample_k(rng, v.cwords[cls], 5);
            auto d = sample_k(rng, v.dwords[topic], 4);
            auto f = sample_k(rng, v.filler, 1);
            RawRecord rec;
            rec.dataset_name = "topicnews";
            rec.kind = RecordKind::LabeledText;
            rec.payload["text"] = join(concat(c, concat(d, f)));
            rec.payload["label"] = "cat" + b26(cls, 1);
            recs.push_back(std::move(rec));
        }
        write_records(result.files, (root / "raw" / "topicnews.jsonl").string(), recs);
    }

    {
        InstructionRegistry reg;
        reg.set("medqa", "Given a medical question, retrieve user replies that best answer the question");
        reg.set("webtitles", "Given a title, retrieve the passage it introduces");
        reg.set("factcheck", "Given a claim, retrieve evidence that supports or refutes it");
        reg.set("stspairs", "Retrieve semantically similar text");
        reg.set("topicnews", "Classify the topic of the given news text");
        const std::string path = (root / "instructions.json").string();
        reg.save(path);
        result.files.push_back(path);
    }

    {
        std::string out;
        for (size_t i = 0; i < cfg.eval_items; ++i) {
            SplitMix rng(derive_seed(cfg.seed, "fx:eval:" + std::to_string(i)));
            const size_t topic = i % cfg.topics;
            const QueryDoc qd = make_query_doc(rng, v, topic, 4 + uniform_below(rng, 3),
                                               9 + uniform_below(rng, 4));
            ordered_json doc;
            doc["query"] = qd.query;
            doc["instruction"] = "Given a question, retrieve the passage that answers it";
            doc["positive"] = qd.doc;
            ordered_json ds = ordered_json::array();
            for (size_t j = 0; j < cfg.distractors_per_item; ++j) {
                const size_t other = (topic + 1 + j) % cfg.topics;
                ds.push_back(plain_doc(rng, v, other, 9 + uniform_below(rng, 4)));
            }
            doc["distractors"] = ds;
            out += doc.dump();
            out.push_back('\n');
        }
        const std::string path = (root / "eval.jsonl").string();
        write_text_file(path, out);
        result.files.push_back(path);
    }

    {
        ordered_json pc;
        pc["seed"] = cfg.seed;
        pc["work_dir"] = "work";
        pc["stub"] = true;
        pc["synth_fraction"] = 0.3;
        pc["synthesis_trigger_max"] = 60000;
        pc["instructions_path"] = "instructions.json";
        pc["eval_path"] = "eval.jsonl";
        ordered_json datasets = ordered_json::array();
        auto add = [&](const char* name, const char* kind, const char* task) {
            ordered_json d;
            d["name"] = name;
            d["kind"] = kind;
            d["path"] = std::string("raw/") + name + ".jsonl";
            d["task"] = task;
            if (std::string(kind) == "sts") d["binarize_threshold"] = 0.5;
            datasets.push_back(d);
        };
        add("medqa", "qa", "retrieval");
        add("webtitles", "title_body", "retrieval");
        add("factcheck", "claim_evidence", "retrieval");
        add("stspairs", "sts", "nli");
        add("topicnews", "labeled", "cls");
        pc["datasets"] = datasets;
        pc["transform"] = {{"max_chars", 1536}, {"negatives_per_sample", 4}};
        pc["mining"] = {{"rank_lo", 10}, {"rank_hi", 30}, {"negatives_per_query", 4},
                        {"filter_threshold", 0.15}};
        pc["llm"] = {{"offline_stub", true}, {"stub_violation_rate", 0.0},
                     {"base_url", ""}, {"model_name", "stub"}};
        pc["nli_duplication_prob"] = 0.5;
        pc["train"] = ordered_json::object();
        const std::string path = (root / "pipeline.json").string();
        write_text_file(path, pc.dump(2) + "\n");
        result.files.push_back(path);
        result.pipeline_config = path;
    }

    return result;
}

} // namespace embforge
