#include <doctest.h>

#include <set>

#include "embforge/errors.hpp"
#include "embforge/transform.hpp"

using namespace embforge;

namespace {

RawRecord rec(RecordKind kind, std::map<std::string, std::string> payload,
              std::string dataset = "ds") {
    RawRecord r;
    r.dataset_name = std::move(dataset);
    r.kind = kind;
    r.payload = std::move(payload);
    return r;
}

} // namespace

TEST_CASE("title body maps title to query and truncates the body") {
    TrainingSample s = transform_title_body(rec(RecordKind::TitleBody, {{"title", "T"}, {"body", "B"}}), 10);
    CHECK(s.query == "T");
    CHECK(s.positive == "B");
    CHECK(s.task == TaskKind::Retrieval);
    CHECK(s.negatives.empty());

    const std::string body(2000, 'x');
    TrainingSample cut = transform_title_body(rec(RecordKind::TitleBody, {{"title", "T"}, {"body", body}}), 1536);
    CHECK(cut.positive.size() == 1536);
    CHECK(cut.positive == body.substr(0, 1536));

    CHECK_THROWS_AS(transform_title_body(rec(RecordKind::TitleBody, {{"title", ""}, {"body", "B"}}), 10),
                    Error);
}

TEST_CASE("claim evidence routes supports to positive and refutes to negatives") {
    TrainingSample sup = transform_claim_evidence(
        rec(RecordKind::ClaimEvidence, {{"claim", "C"}, {"evidence", "E"}, {"evidence_label", "Supports"}}));
    CHECK(sup.query == "C");
    CHECK(sup.positive == "E");
    CHECK(sup.negatives.empty());

    TrainingSample ref = transform_claim_evidence(
        rec(RecordKind::ClaimEvidence, {{"claim", "C"}, {"evidence", "E2"}, {"evidence_label", "refutes"}}));
    CHECK(ref.positive.empty());
    REQUIRE(ref.negatives.size() == 1);
    CHECK(ref.negatives[0] == "E2");

    CHECK_THROWS_AS(transform_claim_evidence(rec(RecordKind::ClaimEvidence,
                                                 {{"claim", "C"}, {"evidence", "E"}, {"evidence_label", "Maybe"}})),
                    Error);
}

TEST_CASE("claims merge by exact claim string") {
    std::vector<RawRecord> records{
        rec(RecordKind::ClaimEvidence, {{"claim", "C"}, {"evidence", "E"}, {"evidence_label", "Supports"}}),
        rec(RecordKind::ClaimEvidence, {{"claim", "C"}, {"evidence", "E2"}, {"evidence_label", "Refutes"}}),
        rec(RecordKind::ClaimEvidence, {{"claim", "D"}, {"evidence", "E3"}, {"evidence_label", "Refutes"}}),
    };
    Warnings w;
    auto merged = merge_claim_evidence(records, &w);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].query == "C");
    CHECK(merged[0].positive == "E");
    CHECK(merged[0].negatives == std::vector<std::string>{"E2"});
    CHECK(w.count() == 1); // claim D has no positive and is dropped
}

TEST_CASE("qa transform maps question and answer directly") {
    TrainingSample s = transform_qa(
        rec(RecordKind::QuestionAnswer, {{"question", "Why is the sky blue?"}, {"answer", "Rayleigh scattering"}}));
    CHECK(s.query == "Why is the sky blue?");
    CHECK(s.positive == "Rayleigh scattering");
    CHECK(s.task == TaskKind::Retrieval);
    CHECK(s.provenance == Provenance::Original);

    CHECK_THROWS_AS(transform_qa(rec(RecordKind::QuestionAnswer, {{"question", "Q"}, {"answer", ""}})), Error);

    try {
        transform_qa(rec(RecordKind::QuestionAnswer,
                         {{"question", "Q"}, {"answer", "A"}, {"turns", "3"}}));
        FAIL("multi-turn record must be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MultiTurn);
    }
}

TEST_CASE("sts emits both directions with binary or thresholded scores") {
    auto yes = transform_sts(rec(RecordKind::StsPair, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "yes"}}));
    REQUIRE(yes.size() == 2);
    CHECK(yes[0].text_a == "a");
    CHECK(yes[0].text_b == "b");
    CHECK(yes[0].score == 1);
    CHECK(yes[1].text_a == "b");
    CHECK(yes[1].text_b == "a");
    CHECK(yes[1].score == 1);

    auto no = transform_sts(rec(RecordKind::StsPair, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "FALSE"}}));
    CHECK(no[0].score == 0);
    CHECK(no[1].score == 0);

    auto num = transform_sts(rec(RecordKind::StsPair, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "4.8"}}),
                             2.5);
    CHECK(num[0].score == 1);
    auto low = transform_sts(rec(RecordKind::StsPair, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "1.2"}}),
                             2.5);
    CHECK(low[0].score == 0);

    try {
        transform_sts(rec(RecordKind::StsPair, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "4.8"}}));
        FAIL("numeric label without threshold must be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingThreshold);
    }
    CHECK_THROWS_AS(transform_sts(rec(RecordKind::StsPair,
                                      {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "maybe"}})),
                    Error);
}

TEST_CASE("entailment maps the three labels to 2 1 0 and doubles") {
    auto ent = transform_entailment(
        rec(RecordKind::EntailmentTriple, {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "entailment"}}));
    REQUIRE(ent.size() == 2);
    CHECK(ent[0].score == 2);
    CHECK(ent[1].text_a == "b");

    CHECK(transform_entailment(rec(RecordKind::EntailmentTriple,
                                   {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "neutral"}}))[0]
              .score == 1);
    CHECK(transform_entailment(rec(RecordKind::EntailmentTriple,
                                   {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "Contradiction"}}))[0]
              .score == 0);
    CHECK_THROWS_AS(transform_entailment(rec(RecordKind::EntailmentTriple,
                                             {{"sentence_a", "a"}, {"sentence_b", "b"}, {"label", "maybe"}})),
                    Error);
}

TEST_CASE("pair-producing transforms output exactly twice the input count") {
    std::vector<RawRecord> sts, ent;
    for (int i = 0; i < 37; ++i) {
        sts.push_back(rec(RecordKind::StsPair, {{"sentence_a", "a" + std::to_string(i)},
                                                {"sentence_b", "b" + std::to_string(i)},
                                                {"label", i % 2 ? "yes" : "no"}}));
        ent.push_back(rec(RecordKind::EntailmentTriple, {{"sentence_a", "a" + std::to_string(i)},
                                                         {"sentence_b", "b" + std::to_string(i)},
                                                         {"label", "neutral"}}));
    }
    TransformConfig cfg;
    CHECK(transform_records(sts, RecordKind::StsPair, cfg).pairs.size() == 2 * sts.size());
    CHECK(transform_records(ent, RecordKind::EntailmentTriple, cfg).pairs.size() == 2 * ent.size());
}

TEST_CASE("cls transform on a three entry view emits the only legal outputs") {
    ClsDatasetView view;
    view.add("t1", "A");
    view.add("t2", "A");
    view.add("t3", "B");
    auto samples = transform_cls(view, 1, 7, "ds");
    REQUIRE(samples.size() == 2); // t3's label is a singleton: no same-label positive
    for (const auto& s : samples) {
        CHECK(s.task == TaskKind::CLS);
        REQUIRE(s.class_label.has_value());
        CHECK(*s.class_label == "A");
        CHECK(s.negatives == std::vector<std::string>{"t3"});
        if (s.query == "t1") CHECK(s.positive == "t2");
        if (s.query == "t2") CHECK(s.positive == "t1");
    }
    CHECK(samples[0].query != samples[1].query);

    auto again = transform_cls(view, 1, 7, "ds");
    REQUIRE(again.size() == samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        CHECK(again[i].query == samples[i].query);
        CHECK(again[i].positive == samples[i].positive);
        CHECK(again[i].negatives == samples[i].negatives);
    }

    ClsDatasetView mono;
    mono.add("t1", "A");
    mono.add("t2", "A");
    CHECK_THROWS_AS(transform_cls(mono, 1, 7, "ds"), Error);
}

TEST_CASE("cls samples always satisfy the label constraints") {
    ClsDatasetView view;
    std::map<std::string, std::string> label_of;
    for (int i = 0; i < 60; ++i) {
        const std::string text = "text" + std::to_string(i);
        const std::string label = "L" + std::to_string(i % 5);
        view.add(text, label);
        label_of[text] = label;
    }
    auto samples = transform_cls(view, 3, 11, "ds");
    CHECK(samples.size() == 60);
    for (const auto& s : samples) {
        CHECK(label_of.at(s.positive) == *s.class_label);
        CHECK(s.positive != s.query);
        CHECK(s.negatives.size() == 3);
        std::set<std::string> distinct(s.negatives.begin(), s.negatives.end());
        CHECK(distinct.size() == s.negatives.size());
        for (const auto& n : s.negatives) CHECK(label_of.at(n) != *s.class_label);
    }
}

TEST_CASE("record dispatch binarizes sts only when configured") {
    TransformConfig cfg;
    cfg.binarize_threshold = 0.5;
    std::vector<RawRecord> recs{
        rec(RecordKind::StsPair, {{"sentence_a", "x"}, {"sentence_b", "y"}, {"label", "0.81"}})};
    auto out = transform_records(recs, RecordKind::StsPair, cfg);
    REQUIRE(out.pairs.size() == 2);
    CHECK(out.pairs[0].score == 1);
}
