#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "embforge/losses.hpp"
#include "embforge/text.hpp"

using namespace embforge;

namespace {

// High-precision references for the scalar fixtures, frozen to full double
// precision: log(1 + e^{-0.3}) and log(1 + e^{-0.6}).
constexpr double kLog1pExpNeg03 = 0.5543552444685271;
constexpr double kLog1pExpNeg06 = 0.4374879504858856;

Vec unit2(double x, double y) { return Vec{x, y}; }

Vec random_unit(SplitMix& rng, size_t d) {
    Vec v(d);
    double norm = 0.0;
    for (auto& x : v) {
        x = uniform01(rng) - 0.5;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) return random_unit(rng, d);
    for (auto& x : v) x /= norm;
    return v;
}

// Unit vectors clustered around one direction, so all pairwise sims are close
// and the softmax keeps every term comparable even at small temperatures.
Vec clustered_unit(SplitMix& rng, const Vec& center, double spread) {
    Vec v = center;
    double norm = 0.0;
    for (auto& x : v) {
        x += spread * (uniform01(rng) - 0.5);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

EmbeddedBatch random_batch(uint64_t seed, size_t n, size_t m, size_t d, bool labels,
                           bool clustered = false) {
    SplitMix rng(derive_seed(seed, "loss-batch"));
    const Vec center = random_unit(rng, d);
    auto draw = [&] { return clustered ? clustered_unit(rng, center, 0.05) : random_unit(rng, d); };
    EmbeddedBatch b;
    b.dataset_name = "fixture";
    for (size_t i = 0; i < n; ++i) {
        b.queries.push_back(draw());
        b.positives.push_back(draw());
        b.negatives.emplace_back();
        for (size_t j = 0; j < m; ++j) b.negatives.back().push_back(draw());
    }
    if (labels) {
        for (size_t i = 0; i < n; ++i) {
            b.class_labels.push_back("c" + std::to_string(i % 3));
            std::vector<std::string> negs;
            for (size_t j = 0; j < m; ++j) negs.push_back("c" + std::to_string((i + j + 1) % 4));
            b.neg_class_labels.push_back(negs);
        }
    }
    return b;
}

} // namespace

TEST_CASE("retrieval loss with no negative terms is exactly zero") {
    EmbeddedBatch b;
    b.queries = {unit2(1.0, 0.0)};
    b.positives = {unit2(0.6, 0.8)};
    b.negatives = {{}};
    LossConfig cfg;
    cfg.temperature = 0.02;
    LossOutput out = retrieval_loss(b, cfg);
    CHECK(out.value == 0.0);
    for (double g : out.grad_queries[0]) CHECK(g == 0.0);
}

TEST_CASE("retrieval loss matches the scalar reference at unit temperature") {
    EmbeddedBatch b;
    b.queries = {unit2(1.0, 0.0)};
    b.positives = {unit2(0.8, 0.6)};            // sim 0.8
    b.negatives = {{unit2(0.5, std::sqrt(0.75))}}; // sim 0.5
    LossConfig cfg;
    cfg.temperature = 1.0;
    LossOutput out = retrieval_loss(b, cfg);
    CHECK(out.value == doctest::Approx(kLog1pExpNeg03).epsilon(1e-9));
}

TEST_CASE("equal similarities reduce to a uniform softmax") {
    // Every embedding is the same unit vector, so every similarity is 1 and
    // each instance sees 1 positive against K equally weighted negatives:
    // value = log(1 + K).
    const Vec e = unit2(0.6, 0.8);
    LossConfig cfg;
    cfg.temperature = 0.02;

    EmbeddedBatch b;
    for (size_t i = 0; i < 2; ++i) {
        b.queries.push_back(e);
        b.positives.push_back(e);
        b.negatives.push_back({e});
    }
    // K = 2 pooled negatives + 1 other query.
    CHECK(retrieval_loss(b, cfg).value == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    EmbeddedBatch b3;
    for (size_t i = 0; i < 3; ++i) {
        b3.queries.push_back(e);
        b3.positives.push_back(e);
        b3.negatives.push_back({e, e});
    }
    // K = 6 pooled negatives + 2 other queries.
    CHECK(retrieval_loss(b3, cfg).value == doctest::Approx(std::log(9.0)).epsilon(1e-12));

    LossConfig own_only = cfg;
    own_only.share_batch_negatives = false;
    own_only.include_query_query = false;
    // K = the instance's own 2 negatives.
    CHECK(retrieval_loss(b3, own_only).value == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("cosent loss on ordered pairs matches the scalar reference") {
    LossConfig cfg;
    cfg.temperature = 1.0;

    ScoredPairBatch flat;
    flat.sims = {0.9, 0.2, -0.4};
    flat.scores = {1, 1, 1};
    LossOutput zero = cosent_loss(flat, cfg);
    CHECK(zero.value == 0.0);
    for (double g : zero.grad_sims) CHECK(g == 0.0);

    ScoredPairBatch two;
    two.sims = {0.9, 0.3};
    two.scores = {1, 0};
    CHECK(cosent_loss(two, cfg).value == doctest::Approx(kLog1pExpNeg06).epsilon(1e-9));

    ScoredPairBatch three;
    three.sims = {0.8, 0.5, 0.1};
    three.scores = {2, 1, 0};
    // Exactly the pairs 2>1, 2>0, 1>0 contribute one exponent term each.
    const double expected =
        std::log(1.0 + std::exp(0.5 - 0.8) + std::exp(0.1 - 0.8) + std::exp(0.1 - 0.5));
    CHECK(cosent_loss(three, cfg).value == doctest::Approx(expected).epsilon(1e-12));

    ScoredPairBatch empty;
    CHECK(cosent_loss(empty, cfg).value == 0.0);
}

TEST_CASE("cosent terms weaken as the correctly ordered gap grows") {
    LossConfig cfg;
    cfg.temperature = 0.05;
    ScoredPairBatch narrow, wide, inverted;
    narrow.sims = {0.55, 0.5};
    narrow.scores = {1, 0};
    wide.sims = {0.9, 0.1};
    wide.scores = {1, 0};
    inverted.sims = {0.1, 0.9};
    inverted.scores = {1, 0};
    CHECK(cosent_loss(wide, cfg).value < cosent_loss(narrow, cfg).value);
    CHECK(cosent_loss(narrow, cfg).value < cosent_loss(inverted, cfg).value);
}

TEST_CASE("a fully masked cls batch has zero loss and zero gradients") {
    EmbeddedBatch b = random_batch(11, 3, 2, 8, false);
    for (size_t i = 0; i < 3; ++i) {
        b.class_labels.push_back("same");
        b.neg_class_labels.push_back({"same", "same"});
    }
    LossConfig cfg;
    cfg.temperature = 0.02;
    LossOutput out = cls_loss(b, cfg);
    CHECK(out.value == 0.0);
    for (const auto& g : out.grad_queries)
        for (double x : g) CHECK(x == 0.0);
    for (const auto& inst : out.grad_negatives)
        for (const auto& g : inst)
            for (double x : g) CHECK(x == 0.0);
}

TEST_CASE("with all labels distinct cls equals retrieval on the same batch") {
    EmbeddedBatch b = random_batch(13, 4, 2, 8, false);
    EmbeddedBatch labeled = b;
    for (size_t i = 0; i < 4; ++i) {
        labeled.class_labels.push_back("q" + std::to_string(i));
        labeled.neg_class_labels.push_back({"n" + std::to_string(2 * i), "n" + std::to_string(2 * i + 1)});
    }
    LossConfig cfg;
    cfg.temperature = 0.05;
    const double masked = cls_loss(labeled, cfg).value;
    const double plain = retrieval_loss(b, cfg).value;
    CHECK(masked == doctest::Approx(plain).epsilon(1e-14));
}

TEST_CASE("masked similarity terms are skipped bit for bit") {
    EmbeddedBatch b = random_batch(17, 3, 2, 8, true);
    SimTable sims = compute_sims(b);
    TermMask mask = cls_mask(b);

    bool found_masked = false, found_active = false;
    const SimLossResult base = infonce_from_sims(sims, mask, 0.02);
    for (size_t i = 0; i < 3 && !(found_masked && found_active); ++i) {
        for (size_t p = 0; p < sims.neg[i].size(); ++p) {
            SimTable bumped = sims;
            bumped.neg[i][p] += 0.1;
            const SimLossResult r = infonce_from_sims(bumped, mask, 0.02);
            if (!mask.neg[i][p]) {
                CHECK(r.value == base.value); // bit-identical: the term never enters
                found_masked = true;
            } else {
                CHECK(r.value != base.value);
                found_active = true;
            }
        }
    }
    CHECK(found_masked);
    CHECK(found_active);
}

TEST_CASE("losses are invariant under instance permutation") {
    EmbeddedBatch b = random_batch(19, 4, 2, 8, true);
    EmbeddedBatch rotated;
    rotated.dataset_name = b.dataset_name;
    for (size_t k = 0; k < 4; ++k) {
        const size_t i = (k + 1) % 4;
        rotated.queries.push_back(b.queries[i]);
        rotated.positives.push_back(b.positives[i]);
        rotated.negatives.push_back(b.negatives[i]);
        rotated.class_labels.push_back(b.class_labels[i]);
        rotated.neg_class_labels.push_back(b.neg_class_labels[i]);
    }
    LossConfig cfg;
    cfg.temperature = 0.05;
    CHECK(cls_loss(rotated, cfg).value == doctest::Approx(cls_loss(b, cfg).value).epsilon(1e-12));

    EmbeddedBatch plain = b, plain_rot = rotated;
    plain.class_labels.clear();
    plain.neg_class_labels.clear();
    plain_rot.class_labels.clear();
    plain_rot.neg_class_labels.clear();
    CHECK(retrieval_loss(plain_rot, cfg).value ==
          doctest::Approx(retrieval_loss(plain, cfg).value).epsilon(1e-12));

    ScoredPairBatch pairs, shuffled;
    pairs.sims = {0.8, 0.5, 0.1, -0.2};
    pairs.scores = {2, 1, 0, 1};
    shuffled.sims = {0.1, 0.8, -0.2, 0.5};
    shuffled.scores = {0, 2, 1, 1};
    CHECK(cosent_loss(shuffled, cfg).value ==
          doctest::Approx(cosent_loss(pairs, cfg).value).epsilon(1e-12));
}

TEST_CASE("loss moves the right way when similarities move") {
    SimTable sims;
    sims.n = 2;
    sims.m = 1;
    sims.pos = {0.6, 0.4};
    sims.neg = {{0.3, 0.1}, {0.2, 0.5}};
    sims.qq = {{0.0, 0.2}, {0.2, 0.0}};
    LossConfig cfg;
    cfg.temperature = 0.5;
    TermMask mask = retrieval_mask(2, 1, cfg);
    const double base = infonce_from_sims(sims, mask, cfg.temperature).value;

    SimTable better = sims;
    better.pos[0] += 0.05;
    CHECK(infonce_from_sims(better, mask, cfg.temperature).value < base);

    SimTable worse = sims;
    worse.neg[0][1] += 0.05;
    CHECK(infonce_from_sims(worse, mask, cfg.temperature).value > base);
}

TEST_CASE("extreme similarities at small temperature stay finite") {
    EmbeddedBatch b;
    b.queries = {unit2(1.0, 0.0), unit2(-1.0, 0.0)};
    b.positives = {unit2(1.0, 0.0), unit2(-1.0, 0.0)};
    b.negatives = {{unit2(-1.0, 0.0)}, {unit2(1.0, 0.0)}};
    LossConfig cfg;
    cfg.temperature = 0.02;
    LossOutput out = retrieval_loss(b, cfg);
    CHECK(std::isfinite(out.value));
    CHECK(out.value >= 0.0);
    for (const auto& g : out.grad_queries)
        for (double x : g) CHECK(std::isfinite(x));
}

TEST_CASE("analytic gradients match finite differences on random batches") {
    LossConfig cfg;
    cfg.temperature = 1.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        EmbeddedBatch plain = random_batch(seed, 3, 2, 8, false);
        CHECK(grad_check(LossKind::Retrieval, plain, cfg, 1e-5).max_rel_error < 1e-5);

        EmbeddedBatch labeled = random_batch(seed, 3, 2, 8, true);
        CHECK(grad_check(LossKind::Cls, labeled, cfg, 1e-5).max_rel_error < 1e-5);

        SplitMix rng(derive_seed(seed, "cosent-fd"));
        ScoredPairBatch pairs;
        for (int i = 0; i < 6; ++i) {
            pairs.sims.push_back(uniform01(rng) * 1.8 - 0.9);
            pairs.scores.push_back(int(uniform_below(rng, 3)));
        }
        CHECK(grad_check(pairs, cfg, 1e-5).max_rel_error < 1e-5);

        // At the working temperature the sims must sit within a few tau of
        // each other, otherwise the dominated terms' true gradients fall
        // below what central differences can resolve.
        ScoredPairBatch close;
        for (int i = 0; i < 6; ++i) {
            close.sims.push_back(0.5 + (uniform01(rng) - 0.5) * 0.04);
            close.scores.push_back(int(uniform_below(rng, 3)));
        }
        LossConfig cold = cfg;
        cold.temperature = 0.02;
        CHECK(grad_check(close, cold, 1e-5).max_rel_error < 1e-4);
    }
}

TEST_CASE("gradients survive the working temperature on clustered batches") {
    LossConfig cfg;
    cfg.temperature = 0.02;
    for (uint64_t seed = 100; seed < 105; ++seed) {
        EmbeddedBatch plain = random_batch(seed, 3, 2, 8, false, true);
        CHECK(grad_check(LossKind::Retrieval, plain, cfg, 1e-5).max_rel_error < 1e-4);
        EmbeddedBatch labeled = random_batch(seed, 3, 2, 8, true, true);
        CHECK(grad_check(LossKind::Cls, labeled, cfg, 1e-5).max_rel_error < 1e-4);
    }
}

TEST_CASE("a fully masked batch grad checks at zero") {
    EmbeddedBatch b = random_batch(23, 2, 1, 6, false);
    b.class_labels = {"same", "same"};
    b.neg_class_labels = {{"same"}, {"same"}};
    LossConfig cfg;
    cfg.temperature = 0.02;
    CHECK(grad_check(LossKind::Cls, b, cfg, 1e-5).max_rel_error < 1e-9);
}

TEST_CASE("batch and config validation reject broken inputs") {
    LossConfig cfg;
    EmbeddedBatch empty;
    CHECK_THROWS_AS(retrieval_loss(empty, cfg), Error);

    EmbeddedBatch labeled = random_batch(29, 2, 1, 4, true);
    CHECK_THROWS_AS(retrieval_loss(labeled, cfg), Error);

    EmbeddedBatch plain = random_batch(29, 2, 1, 4, false);
    try {
        cls_loss(plain, cfg);
        FAIL("cls loss without labels must be rejected");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingLabels);
    }

    EmbeddedBatch denormal = plain;
    denormal.queries[0][0] *= 2.0;
    CHECK_THROWS_AS(retrieval_loss(denormal, cfg), Error);

    LossConfig bad;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(retrieval_loss(plain, bad), Error);

    ScoredPairBatch ragged;
    ragged.sims = {0.5};
    CHECK_THROWS_AS(cosent_loss(ragged, cfg), Error);
}
