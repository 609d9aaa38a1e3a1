#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "embforge/sampler.hpp"

using namespace embforge;

namespace {

DatasetMeta meta(std::string name, size_t size, bool retrieval,
                 BatchLoss loss = BatchLoss::InfoNCE) {
    DatasetMeta m;
    m.name = std::move(name);
    m.size = size;
    m.is_retrieval = retrieval;
    m.loss_kind = loss;
    m.path = "unused/" + m.name + ".jsonl";
    return m;
}

} // namespace

TEST_CASE("size scaled weights normalize and damp as specified") {
    auto equal = compute_weights({100, 100}, 0.5);
    CHECK(equal[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(equal[1] == doctest::Approx(0.5).epsilon(1e-15));

    auto damped = compute_weights({100, 900}, 0.5);
    CHECK(damped[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(damped[1] == doctest::Approx(0.75).epsilon(1e-15));

    auto flat = compute_weights({100, 900}, 0.0);
    CHECK(flat[0] == doctest::Approx(0.5).epsilon(1e-15));

    auto linear = compute_weights({100, 900}, 1.0);
    CHECK(linear[1] == doctest::Approx(0.9).epsilon(1e-15));

    CHECK_THROWS_AS(compute_weights({}, 0.5), Error);
}

TEST_CASE("stage one plans cover retrieval only") {
    std::vector<DatasetMeta> ds{meta("r1", 100, true), meta("n1", 400, false, BatchLoss::Cosent),
                                meta("r2", 900, true)};
    SamplingPlan plan = compute_stage1_plan(ds, 0.5);
    REQUIRE(plan.entries.size() == 3);
    double total = 0.0;
    for (const auto& e : plan.entries) {
        if (!e.is_retrieval) CHECK(e.ratio == 0.0);
        total += e.ratio;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(plan.entries[0].ratio == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(plan.entries[2].ratio == doctest::Approx(0.75).epsilon(1e-12));

    CHECK_THROWS_AS(compute_stage1_plan({meta("n1", 10, false, BatchLoss::Cosent)}, 0.5), Error);
}

TEST_CASE("stage two plans split the probability mass at eta") {
    std::vector<DatasetMeta> pair{meta("r", 100, true), meta("n", 100, false, BatchLoss::Cosent)};
    SamplingPlan plan = compute_two_stage_plan(pair, 1.0, 0.72);
    CHECK(plan.entries[0].ratio == doctest::Approx(0.72).epsilon(1e-12));
    CHECK(plan.entries[1].ratio == doctest::Approx(0.28).epsilon(1e-12));

    std::vector<DatasetMeta> three{meta("r1", 500, true), meta("r2", 500, true),
                                   meta("n", 200, false, BatchLoss::Cosent)};
    SamplingPlan split = compute_two_stage_plan(three, 0.5, 0.72);
    CHECK(split.entries[0].ratio == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(split.entries[1].ratio == doctest::Approx(0.36).epsilon(1e-12));
    CHECK(split.entries[2].ratio == doctest::Approx(0.28).epsilon(1e-12));

    double total = 0.0, ret = 0.0;
    for (const auto& e : split.entries) {
        total += e.ratio;
        if (e.is_retrieval) ret += e.ratio;
    }
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(std::abs(ret - 0.72) <= 1e-12);

    try {
        compute_two_stage_plan({meta("r1", 10, true), meta("r2", 10, true)}, 0.5, 0.72);
        FAIL("a plan without a non-retrieval side must be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingSide);
    }
}

TEST_CASE("plan ratios are invariant under uniform size scaling") {
    std::vector<DatasetMeta> ds{meta("r1", 120, true), meta("r2", 480, true),
                                meta("n", 300, false, BatchLoss::Cosent)};
    std::vector<DatasetMeta> scaled{meta("r1", 120 * 7, true), meta("r2", 480 * 7, true),
                                    meta("n", 300 * 7, false, BatchLoss::Cosent)};
    SamplingPlan a = compute_two_stage_plan(ds, 0.5, 0.72);
    SamplingPlan b = compute_two_stage_plan(scaled, 0.5, 0.72);
    for (size_t i = 0; i < a.entries.size(); ++i)
        CHECK(a.entries[i].ratio == doctest::Approx(b.entries[i].ratio).epsilon(1e-12));
}

TEST_CASE("batches read sequentially and wrap at end of file") {
    SamplingPlan plan = compute_stage1_plan({meta("only", 10, true)}, 0.5);
    SamplerState state = SamplerState::fresh(plan, 3);
    state.offsets["only"] = 8;
    BatchSizes sizes;
    sizes.infonce = 4;
    BatchSpec spec = next_batch(plan, state, sizes);
    CHECK(spec.dataset_name == "only");
    CHECK(spec.indices == std::vector<size_t>{8, 9, 0, 1});
    CHECK(state.offsets["only"] == 2);

    // One full cycle visits every record exactly twice over 20 draws.
    std::map<size_t, size_t> seen;
    for (size_t idx : spec.indices) seen[idx] += 1;
    for (int i = 0; i < 4; ++i) {
        BatchSpec more = next_batch(plan, state, sizes);
        CHECK(more.dataset_name == "only");
        for (size_t idx : more.indices) seen[idx] += 1;
    }
    REQUIRE(seen.size() == 10);
    for (const auto& [idx, count] : seen) CHECK(count == 2);
}

TEST_CASE("every batch comes from a single dataset and honors zero ratios") {
    std::vector<DatasetMeta> ds{meta("r1", 50, true), meta("n1", 50, false, BatchLoss::Cosent),
                                meta("r2", 70, true)};
    SamplingPlan plan = compute_stage1_plan(ds, 0.5);
    SamplerState state = SamplerState::fresh(plan, 11);
    BatchSizes sizes;
    sizes.infonce = 8;
    sizes.cosent = 12;
    for (int i = 0; i < 2000; ++i) {
        BatchSpec spec = next_batch(plan, state, sizes);
        CHECK(spec.dataset_name != "n1"); // stage 1 never draws non-retrieval data
        CHECK(spec.loss_kind == BatchLoss::InfoNCE);
        CHECK(spec.indices.size() == 8);
    }
}

TEST_CASE("realized frequencies track the plan ratios") {
    std::vector<DatasetMeta> ds{meta("r", 300, true), meta("n", 300, false, BatchLoss::Cosent)};
    SamplingPlan plan = compute_two_stage_plan(ds, 0.5, 0.72);
    SamplerState state = SamplerState::fresh(plan, 5);
    BatchSizes sizes;
    sizes.infonce = 4;
    sizes.cosent = 4;
    size_t retrieval = 0;
    const size_t draws = 40000;
    for (size_t i = 0; i < draws; ++i)
        retrieval += next_batch(plan, state, sizes).dataset_name == "r" ? 1 : 0;
    CHECK(double(retrieval) / double(draws) == doctest::Approx(0.72).epsilon(0.02));
}

TEST_CASE("sample-unit ratios reweight draws by batch size") {
    std::vector<DatasetMeta> ds{meta("r", 300, true), meta("n", 300, false, BatchLoss::Cosent)};
    SamplingPlan plan = compute_two_stage_plan(ds, 0.5, 0.72);
    SamplerState state = SamplerState::fresh(plan, 9);
    BatchSizes sizes;
    sizes.infonce = 256;
    sizes.cosent = 768;
    sizes.unit = RatioUnit::Samples;
    size_t ret_samples = 0, total_samples = 0;
    for (size_t i = 0; i < 30000; ++i) {
        BatchSpec spec = next_batch(plan, state, sizes);
        total_samples += spec.indices.size();
        if (spec.dataset_name == "r") ret_samples += spec.indices.size();
    }
    CHECK(double(ret_samples) / double(total_samples) == doctest::Approx(0.72).epsilon(0.02));
}

TEST_CASE("saved state resumes the exact batch sequence") {
    std::vector<DatasetMeta> ds{meta("r1", 37, true), meta("r2", 53, true),
                                meta("n", 29, false, BatchLoss::Cosent)};
    SamplingPlan plan = compute_two_stage_plan(ds, 0.5, 0.72);
    SamplerState state = SamplerState::fresh(plan, 21);
    CHECK(state.rng_state != 0);
    for (const auto& [name, off] : state.offsets) CHECK(off == 0);

    BatchSizes sizes;
    sizes.infonce = 6;
    sizes.cosent = 10;
    for (int i = 0; i < 100; ++i) next_batch(plan, state, sizes);

    const std::string bytes = save_state(state);
    SamplerState restored = restore_state(bytes);
    CHECK(restored.rng_state == state.rng_state);
    CHECK(restored.batch_counter == state.batch_counter);
    CHECK(restored.offsets == state.offsets);

    for (int i = 0; i < 50; ++i) {
        BatchSpec a = next_batch(plan, state, sizes);
        BatchSpec b = next_batch(plan, restored, sizes);
        CHECK(a.dataset_name == b.dataset_name);
        CHECK(a.indices == b.indices);
    }

    CHECK_THROWS_AS(restore_state(bytes.substr(0, bytes.size() / 2)), Error);
    CHECK_THROWS_AS(restore_state("not a state blob"), Error);
}

TEST_CASE("long-run dataset frequencies pass a uniformity chi-square test") {
    // Five equal retrieval datasets give a uniform plan; the statistic is
    // compared against the 0.001 critical value for four degrees of freedom.
    std::vector<DatasetMeta> ds;
    for (int i = 0; i < 5; ++i) ds.push_back(meta("r" + std::to_string(i), 200, true));
    SamplingPlan plan = compute_stage1_plan(ds, 0.5);
    SamplerState state = SamplerState::fresh(plan, 13);
    BatchSizes sizes;
    sizes.infonce = 2;

    std::map<std::string, double> counts;
    const size_t draws = 100000;
    for (size_t i = 0; i < draws; ++i) counts[next_batch(plan, state, sizes).dataset_name] += 1.0;
    const double expected = double(draws) / 5.0;
    double chi2 = 0.0;
    for (const auto& [name, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 18.46682695290317);
}

TEST_CASE("dataset manifest and plan files round trip") {
    namespace fs = std::filesystem;
    const std::string mdir = (fs::temp_directory_path() / "embforge_sampler_rt").string();
    fs::create_directories(mdir);
    std::vector<DatasetMeta> ds{meta("r1", 120, true), meta("n1", 300, false, BatchLoss::Cosent)};
    write_dataset_manifest(mdir + "/datasets.json", ds);
    auto back = read_dataset_manifest(mdir + "/datasets.json");
    REQUIRE(back.size() == 2);
    CHECK(back[0].name == "r1");
    CHECK(back[0].size == 120);
    CHECK(back[0].is_retrieval);
    CHECK(back[1].loss_kind == BatchLoss::Cosent);

    SamplingPlan plan = compute_two_stage_plan(ds, 0.5, 0.72);
    write_plan(mdir + "/plan.json", plan);
    SamplingPlan rplan = read_plan(mdir + "/plan.json");
    CHECK(rplan.stage == plan.stage);
    CHECK(rplan.eta == doctest::Approx(plan.eta).epsilon(1e-15));
    REQUIRE(rplan.entries.size() == plan.entries.size());
    for (size_t i = 0; i < plan.entries.size(); ++i)
        CHECK(rplan.entries[i].ratio == doctest::Approx(plan.entries[i].ratio).epsilon(1e-15));
    fs::remove_all(mdir);
}
