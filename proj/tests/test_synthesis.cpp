#include <doctest.h>

#include <set>

#include "embforge/synthesis.hpp"

using namespace embforge;

namespace {

TrainingSample retrieval_sample() {
    TrainingSample s;
    s.query = "what is the best credit card for someone with no credit history";
    s.positive = "secured cards and student cards are the usual starting points because "
                 "issuers accept applicants without an established file";
    s.dataset_name = "finqa";
    s.task = TaskKind::Retrieval;
    return s;
}

} // namespace

TEST_CASE("prompts render one clause per active constraint") {
    TrainingSample s = retrieval_sample();
    PromptSpec para = build_prompt(SynthKind::Paraphrase, s, paraphrase_constraints(), 1);
    CHECK(para.user_text.find(s.query) != std::string::npos);
    CHECK(para.user_text.find("core semantics") != std::string::npos);
    CHECK(para.user_text.find("15%") != std::string::npos);

    PromptSpec aug = build_prompt(SynthKind::Augment, s, augment_constraints(), 1);
    CHECK(aug.user_text.find("pure rewriting") != std::string::npos);

    PromptSpec hneg = build_prompt(SynthKind::HardNegative, s, hard_negative_constraints(), 2);
    CHECK(hneg.expected_outputs == 2);
    CHECK(!hneg.constraints.negative_degradation_modes.empty());
}

TEST_CASE("constraint sets reject flags that do not fit the kind") {
    ConstraintSet bare = hard_negative_constraints();
    bare.negative_degradation_modes.clear();
    CHECK_THROWS_AS(bare.validate(SynthKind::HardNegative), Error);

    ConstraintSet shifted = paraphrase_constraints();
    shifted.require_topic_shift = true;
    CHECK_THROWS_AS(shifted.validate(SynthKind::Paraphrase), Error);

    CHECK_NOTHROW(augment_constraints().validate(SynthKind::Augment));
}

TEST_CASE("validator applies the length band script match and identity checks") {
    ConstraintSet cs = paraphrase_constraints();

    ValidationReport inside = validate_synthesis(std::string(100, 'a'), std::string(110, 'b'), cs);
    CHECK(inside.passed);
    CHECK(inside.length_ratio == doctest::Approx(1.10));

    ValidationReport outside = validate_synthesis(std::string(100, 'a'), std::string(130, 'b'), cs);
    CHECK(!outside.passed);
    REQUIRE(outside.rejection_reasons.size() == 1);
    CHECK(outside.rejection_reasons[0] == "length");

    ValidationReport wrong_script =
        validate_synthesis("plain latin text here", "\xe4\xb8\xad\xe6\x96\x87\xe6\x96\x87\xe6\x9c\xac\xe5"
                                                    "\x86\x85\xe5\xae\xb9\xe6\xb5\x8b\xe8\xaf\x95\xe6\x96"
                                                    "\x87\xe6\x9c\xac\xe6\xae\xb5\xe8\x90\xbd\xe5\x95\x8a",
                           cs);
    CHECK(!wrong_script.passed);
    CHECK(std::count(wrong_script.rejection_reasons.begin(), wrong_script.rejection_reasons.end(),
                     "language") == 1);

    ValidationReport same = validate_synthesis("identical text", "identical text", cs);
    CHECK(!same.passed);
    CHECK(same.identical_to_source);
}

TEST_CASE("stub paraphrase rewrites both fields deterministically") {
    TrainingSample s = retrieval_sample();
    StubLlmClient client;
    Warnings w;
    auto a = paraphrase(s, client, paraphrase_constraints(), 3, 42, &w);
    auto b = paraphrase(s, client, paraphrase_constraints(), 3, 42, &w);
    REQUIRE(a.size() == 3);
    REQUIRE(b.size() == 3);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].query == b[i].query);
        CHECK(a[i].positive == b[i].positive);
        CHECK(a[i].query != s.query);
        CHECK(a[i].positive != s.positive);
        CHECK(a[i].provenance == Provenance::Paraphrased);
        CHECK_NOTHROW(a[i].validate());
        CHECK(validate_synthesis(s.query, a[i].query, paraphrase_constraints()).passed);
        CHECK(validate_synthesis(s.positive, a[i].positive, paraphrase_constraints()).passed);
    }
}

TEST_CASE("injected violations are dropped and clean outputs kept") {
    TrainingSample s = retrieval_sample();
    StubLlmClient dirty(1.0);
    Warnings w;
    auto out = paraphrase(s, dirty, paraphrase_constraints(), 4, 9, &w);
    CHECK(out.empty());
    CHECK(dirty.injected_violations().size() == 4);
    CHECK(w.count() == 4);

    StubLlmClient clean(0.0);
    Warnings w2;
    auto kept = paraphrase(s, clean, paraphrase_constraints(), 4, 9, &w2);
    CHECK(kept.size() == 4);
    CHECK(clean.injected_violations().empty());
    CHECK(w2.empty());
}

TEST_CASE("augmentation is retrieval only and yields full fresh samples") {
    TrainingSample s = retrieval_sample();
    StubLlmClient client;
    auto out = augment(s, client, augment_constraints(), 2, 5);
    REQUIRE(out.size() == 2);
    for (const auto& a : out) {
        CHECK(a.query != s.query);
        CHECK(a.provenance == Provenance::Augmented);
        REQUIRE(a.negatives.size() == 1);
        CHECK(a.negatives[0] != a.positive);
        CHECK_NOTHROW(a.validate());
    }

    TrainingSample nli = s;
    nli.task = TaskKind::NLI;
    try {
        augment(nli, client, augment_constraints(), 1, 5);
        FAIL("augmenting a non-retrieval sample must be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::PolicyViolation);
    }
}

TEST_CASE("hard negative generation never returns the positive") {
    TrainingSample s = retrieval_sample();
    StubLlmClient client;
    CHECK(gen_hard_negatives(s, client, hard_negative_constraints(), 0, 3).empty());
    auto negs = gen_hard_negatives(s, client, hard_negative_constraints(), 4, 3);
    REQUIRE(negs.size() == 4);
    for (const auto& n : negs) CHECK(n != s.positive);

    StubLlmClient verbatim(1.0); // some injected violations copy the positive verbatim
    Warnings w;
    auto rejected = gen_hard_negatives(s, verbatim, hard_negative_constraints(), 6, 3, &w);
    CHECK(rejected.size() < 6);
    CHECK(!w.empty());
}

TEST_CASE("retrieval policy appends accepted samples to the originals") {
    std::vector<TrainingSample> originals(10, retrieval_sample());
    std::vector<TrainingSample> accepted(5, retrieval_sample());
    for (auto& a : accepted) a.provenance = Provenance::Paraphrased;
    auto merged = apply_retrieval_policy(originals, accepted);
    CHECK(merged.size() == 15);
    for (size_t i = 0; i < 10; ++i) CHECK(merged[i].provenance == Provenance::Original);
    for (size_t i = 10; i < 15; ++i) CHECK(merged[i].provenance == Provenance::Paraphrased);
}

TEST_CASE("nli policy duplicates pairs containing a rewritten sentence") {
    ScoredPair p;
    p.text_a = "s1";
    p.text_b = "s2";
    p.score = 1;
    p.dataset_name = "nli";
    std::vector<Rewrite> rewrites{{"s1", "s1 rewritten"}};

    auto all = apply_nli_policy({p}, rewrites, 1.0, 3);
    REQUIRE(all.size() == 2);
    CHECK(all[0].text_a == "s1");
    CHECK(all[1].text_a == "s1 rewritten");
    CHECK(all[1].text_b == "s2");
    CHECK(all[1].score == 1);

    auto none = apply_nli_policy({p}, rewrites, 0.0, 3);
    CHECK(none.size() == 1);

    auto rep = apply_nli_policy({p}, rewrites, 0.5, 3);
    CHECK(apply_nli_policy({p}, rewrites, 0.5, 3).size() == rep.size());
}

TEST_CASE("cls policy re-enters rewrites under their original labels") {
    ClsDatasetView view;
    view.add("text one", "A");
    view.add("text two", "B");
    Warnings w;
    auto grown = apply_cls_policy(view, {{"text one", "text one prime"}, {"ghost", "ghost prime"}}, &w);
    CHECK(grown.entries.size() == 3);
    CHECK(grown.entries[2].first == "text one prime");
    CHECK(grown.entries[2].second == "A");
    CHECK(w.count() == 1); // the ghost source is not in the view
}

TEST_CASE("synthesis eligibility is a strict size threshold") {
    CHECK(synthesis_eligible(0));
    CHECK(synthesis_eligible(59999));
    CHECK(!synthesis_eligible(60000));
    CHECK(!synthesis_eligible(60001));
    CHECK(synthesis_eligible(100, 101));
    CHECK(!synthesis_eligible(101, 101));
}
