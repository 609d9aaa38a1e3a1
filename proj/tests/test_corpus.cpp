#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "embforge/corpus.hpp"
#include "embforge/text.hpp"

using namespace embforge;

namespace {

TrainingSample full_sample() {
    TrainingSample s;
    s.query = "why is the sky blue";
    s.positive = "rayleigh scattering of sunlight";
    s.negatives = {"mie scattering", "ozone absorption"};
    s.instruction = "Given a question, retrieve the passage that answers it";
    s.task = TaskKind::Retrieval;
    s.dataset_name = "physics";
    s.provenance = Provenance::Paraphrased;
    return s;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_CASE("training sample json round trip is identity") {
    TrainingSample s = full_sample();
    TrainingSample back = sample_from_json(to_json_line(s));
    CHECK(back.query == s.query);
    CHECK(back.positive == s.positive);
    CHECK(back.negatives == s.negatives);
    CHECK(back.instruction == s.instruction);
    CHECK(back.task == s.task);
    CHECK(back.dataset_name == s.dataset_name);
    CHECK(back.provenance == s.provenance);
    CHECK(!back.class_label.has_value());

    s.task = TaskKind::CLS;
    s.class_label = "cata";
    s.negatives.clear();
    back = sample_from_json(to_json_line(s));
    REQUIRE(back.class_label.has_value());
    CHECK(*back.class_label == "cata");
    CHECK(to_json_line(back) == to_json_line(s));
}

TEST_CASE("scored pair json round trip is identity") {
    ScoredPair p;
    p.text_a = "a premise";
    p.text_b = "a hypothesis";
    p.score = 2;
    p.dataset_name = "nli";
    ScoredPair back = pair_from_json(to_json_line(p));
    CHECK(back.text_a == p.text_a);
    CHECK(back.text_b == p.text_b);
    CHECK(back.score == p.score);
    CHECK(back.dataset_name == p.dataset_name);
    CHECK(to_json_line(back) == to_json_line(p));
}

TEST_CASE("sample validation rejects malformed records") {
    TrainingSample s = full_sample();
    CHECK_NOTHROW(s.validate());

    TrainingSample blank = s;
    blank.query = "  ";
    CHECK_THROWS_AS(blank.validate(), Error);

    TrainingSample no_label = s;
    no_label.task = TaskKind::CLS;
    CHECK_THROWS_AS(no_label.validate(), Error);

    TrainingSample stray_label = s;
    stray_label.class_label = "x";
    CHECK_THROWS_AS(stray_label.validate(), Error);

    TrainingSample self_neg = s;
    self_neg.negatives.push_back(s.positive);
    CHECK_THROWS_AS(self_neg.validate(), Error);
}

TEST_CASE("pair validation enforces ordinal range") {
    ScoredPair p;
    p.text_a = "a";
    p.text_b = "b";
    p.dataset_name = "d";
    for (int score : {0, 1, 2}) {
        p.score = score;
        CHECK_NOTHROW(p.validate());
    }
    p.score = 3;
    CHECK_THROWS_AS(p.validate(), Error);
    p.score = -1;
    CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("attach_instruction retains, attaches, or warns") {
    InstructionRegistry reg;
    reg.set("medqa", "Given a medical question, retrieve user replies that best answer the question");

    TrainingSample s = full_sample();
    s.dataset_name = "medqa";
    s.instruction = "";
    Warnings w;
    TrainingSample attached = attach_instruction(s, reg, &w);
    CHECK(attached.instruction ==
          "Given a medical question, retrieve user replies that best answer the question");
    CHECK(w.empty());

    TrainingSample keep = s;
    keep.instruction = "existing";
    CHECK(attach_instruction(keep, reg, &w).instruction == "existing");
    CHECK(w.empty());

    TrainingSample unknown = s;
    unknown.dataset_name = "unknownx";
    TrainingSample missed = attach_instruction(unknown, reg, &w);
    CHECK(missed.instruction.empty());
    CHECK(w.count() == 1);

    TrainingSample twice = attach_instruction(attached, reg, nullptr);
    CHECK(twice.instruction == attached.instruction);
}

TEST_CASE("instruction registry json round trip and absent lookup") {
    InstructionRegistry reg;
    reg.set("alpha", "do alpha things");
    reg.set("beta", "do beta things");
    InstructionRegistry back = InstructionRegistry::from_json_string(reg.to_json_string());
    CHECK(back.size() == 2);
    CHECK(back.lookup("alpha").value() == "do alpha things");
    CHECK(!back.lookup("gamma").has_value());
}

TEST_CASE("samples file round trip preserves bytes") {
    const std::string path = temp_path("embforge_corpus_rt.jsonl");
    std::vector<TrainingSample> samples{full_sample(), full_sample()};
    samples[1].query = "second query";
    write_samples(path, samples);
    const std::string once = read_text_file(path);
    write_samples(path, read_samples(path));
    CHECK(read_text_file(path) == once);
    std::remove(path.c_str());
}

TEST_CASE("enum names parse back to themselves") {
    for (TaskKind t : {TaskKind::Retrieval, TaskKind::NLI, TaskKind::CLS})
        CHECK(parse_task_kind(task_kind_name(t)) == t);
    for (Provenance p : {Provenance::Original, Provenance::Paraphrased, Provenance::Augmented,
                         Provenance::SynthNegative})
        CHECK(parse_provenance(provenance_name(p)) == p);
    for (RecordKind k : {RecordKind::TitleBody, RecordKind::ClaimEvidence, RecordKind::QuestionAnswer,
                         RecordKind::StsPair, RecordKind::EntailmentTriple, RecordKind::LabeledText})
        CHECK(parse_record_kind(record_kind_name(k)) == k);
    CHECK_THROWS_AS(parse_task_kind("bogus"), Error);
}

TEST_CASE("fnv1a64 matches the reference test vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("derive_seed separates streams by tag") {
    CHECK(derive_seed(7, "stage-a") == derive_seed(7, "stage-a"));
    CHECK(derive_seed(7, "stage-a") != derive_seed(7, "stage-b"));
    CHECK(derive_seed(7, "stage-a") != derive_seed(8, "stage-a"));
}

TEST_CASE("uniform draws stay in range and are deterministic") {
    SplitMix a(derive_seed(3, "draws"));
    SplitMix b(derive_seed(3, "draws"));
    for (int i = 0; i < 1000; ++i) {
        const uint64_t x = uniform_below(a, 17);
        CHECK(x < 17);
        CHECK(x == uniform_below(b, 17));
        const double u = uniform01(a);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        uniform01(b);
    }
    SplitMix c(1);
    CHECK(uniform_below(c, 1) == 0);
}

TEST_CASE("codepoint truncation cuts at codepoint boundaries") {
    CHECK(truncate_codepoints("hello", 3) == "hel");
    CHECK(truncate_codepoints("hello", 10) == "hello");
    CHECK(truncate_codepoints("h\xc3\xa9llo", 2) == "h\xc3\xa9");
    CHECK(count_codepoints("h\xc3\xa9llo") == 5);
    CHECK(truncate_codepoints("", 4) == "");
}

TEST_CASE("tokenizer splits on whitespace and punctuation") {
    auto toks = tokenize("Why, is the sky-blue?");
    REQUIRE(toks.size() == 5);
    CHECK(toks[0] == "Why");
    CHECK(toks[3] == "sky");
    CHECK(toks[4] == "blue");
    CHECK(tokenize("  \t ").empty());
}

TEST_CASE("majority script tells latin from han") {
    CHECK(majority_script("plain latin text") == ScriptClass::Latin);
    CHECK(majority_script("\xe4\xb8\xad\xe6\x96\x87\xe6\x96\x87\xe6\x9c\xac") == ScriptClass::Han);
    CHECK(majority_script("12345 !!") != ScriptClass::Latin);
}
