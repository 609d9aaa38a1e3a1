#include "embforge/losses.hpp"

#include <algorithm>
#include <cmath>

namespace embforge {

namespace {

double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

void axpy(double a, const Vec& x, Vec& y) {
    for (size_t k = 0; k < x.size(); ++k) y[k] += a * x[k];
}

void check_unit_norm(const Vec& v, const char* what) {
    double n2 = dot(v, v);
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
        throw Error(ErrorCode::InvalidArgument, std::string(what) + " is not unit-norm");
}

} // namespace

void EmbeddedBatch::validate(bool expect_labels) const {
    const size_t n = queries.size();
    if (n == 0) throw Error(ErrorCode::EmptyBatch, "batch has no instances");
    if (positives.size() != n || negatives.size() != n)
        throw Error(ErrorCode::InvalidArgument, "batch arrays have mismatched lengths");
    const size_t d = queries[0].size();
    const size_t m = negatives[0].size();
    for (size_t i = 0; i < n; ++i) {
        if (queries[i].size() != d || positives[i].size() != d || negatives[i].size() != m)
            throw Error(ErrorCode::InvalidArgument, "batch has ragged shapes");
        check_unit_norm(queries[i], "query");
        check_unit_norm(positives[i], "positive");
        for (const auto& neg : negatives[i]) {
            if (neg.size() != d) throw Error(ErrorCode::InvalidArgument, "batch has ragged shapes");
            check_unit_norm(neg, "negative");
        }
    }
    if (expect_labels) {
        if (class_labels.size() != n || neg_class_labels.size() != n)
            throw Error(ErrorCode::MissingLabels, "CLS batch lacks class label arrays");
        for (const auto& row : neg_class_labels)
            if (row.size() != m) throw Error(ErrorCode::MissingLabels, "neg_class_labels has wrong shape");
    } else {
        if (!class_labels.empty() || !neg_class_labels.empty())
            throw Error(ErrorCode::InvalidArgument, "retrieval batch carries class labels");
    }
}

void ScoredPairBatch::validate() const {
    if (sims.size() != scores.size())
        throw Error(ErrorCode::InvalidArgument, "sims and scores have different lengths");
    for (double s : sims)
        if (s < -1.0 - 1e-9 || s > 1.0 + 1e-9)
            throw Error(ErrorCode::InvalidArgument, "similarity outside [-1, 1]");
}

SimTable compute_sims(const EmbeddedBatch& batch) {
    const size_t n = batch.size();
    const size_t m = batch.negatives_per_instance();
    SimTable t;
    t.n = n;
    t.m = m;
    t.pos.resize(n);
    t.neg.assign(n, Vec(n * m, 0.0));
    t.qq.assign(n, Vec(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        t.pos[i] = dot(batch.queries[i], batch.positives[i]);
        for (size_t o = 0; o < n; ++o)
            for (size_t s = 0; s < m; ++s)
                t.neg[i][o * m + s] = dot(batch.queries[i], batch.negatives[o][s]);
        for (size_t j = 0; j < n; ++j)
            if (j != i) t.qq[i][j] = dot(batch.queries[i], batch.queries[j]);
    }
    return t;
}

TermMask retrieval_mask(size_t n, size_t m, const LossConfig& cfg) {
    TermMask mask;
    mask.neg.assign(n, std::vector<uint8_t>(n * m, 0));
    mask.qq.assign(n, std::vector<uint8_t>(n, 0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t p = 0; p < n * m; ++p) {
            const size_t owner = m == 0 ? 0 : p / m;
            mask.neg[i][p] = cfg.share_batch_negatives || owner == i;
        }
        if (cfg.include_query_query)
            for (size_t j = 0; j < n; ++j) mask.qq[i][j] = (j != i);
    }
    return mask;
}

TermMask cls_mask(const EmbeddedBatch& batch) {
    const size_t n = batch.size();
    const size_t m = batch.negatives_per_instance();
    TermMask mask;
    mask.neg.assign(n, std::vector<uint8_t>(n * m, 0));
    mask.qq.assign(n, std::vector<uint8_t>(n, 0));
    for (size_t i = 0; i < n; ++i) {
        const std::string& ci = batch.class_labels[i];
        for (size_t o = 0; o < n; ++o)
            for (size_t s = 0; s < m; ++s)
                mask.neg[i][o * m + s] = (batch.neg_class_labels[o][s] != ci);
        for (size_t j = 0; j < n; ++j)
            if (j != i) mask.qq[i][j] = (batch.class_labels[j] != ci);
    }
    return mask;
}

SimLossResult infonce_from_sims(const SimTable& sims, const TermMask& mask, double tau) {
    if (tau <= 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    const size_t n = sims.n;
    const size_t pool = n * sims.m;
    SimLossResult r;
    r.dpos.assign(n, 0.0);
    r.dneg.assign(n, Vec(pool, 0.0));
    r.dqq.assign(n, Vec(n, 0.0));
    const double inv_n = 1.0 / static_cast<double>(n);

    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double x_pos = sims.pos[i] / tau;
        double mx = x_pos;
        for (size_t p = 0; p < pool; ++p)
            if (mask.neg[i][p]) mx = std::max(mx, sims.neg[i][p] / tau);
        for (size_t j = 0; j < n; ++j)
            if (mask.qq[i][j]) mx = std::max(mx, sims.qq[i][j] / tau);

        double denom = std::exp(x_pos - mx);
        for (size_t p = 0; p < pool; ++p)
            if (mask.neg[i][p]) denom += std::exp(sims.neg[i][p] / tau - mx);
        for (size_t j = 0; j < n; ++j)
            if (mask.qq[i][j]) denom += std::exp(sims.qq[i][j] / tau - mx);

        total += -x_pos + mx + std::log(denom);

        const double scale = inv_n / tau;
        r.dpos[i] = (std::exp(x_pos - mx) / denom - 1.0) * scale;
        for (size_t p = 0; p < pool; ++p)
            if (mask.neg[i][p]) r.dneg[i][p] = std::exp(sims.neg[i][p] / tau - mx) / denom * scale;
        for (size_t j = 0; j < n; ++j)
            if (mask.qq[i][j]) r.dqq[i][j] = std::exp(sims.qq[i][j] / tau - mx) / denom * scale;
    }
    r.value = total * inv_n;
    return r;
}

namespace {

// Chain the sim-level gradients back onto the raw embedding vectors.
LossOutput backprop_sims(const EmbeddedBatch& batch, const SimLossResult& sim_grads,
                         const TermMask& mask) {
    const size_t n = batch.size();
    const size_t m = batch.negatives_per_instance();
    const size_t d = batch.queries[0].size();
    LossOutput out;
    out.value = sim_grads.value;
    out.grad_queries.assign(n, Vec(d, 0.0));
    out.grad_positives.assign(n, Vec(d, 0.0));
    out.grad_negatives.assign(n, std::vector<Vec>(m, Vec(d, 0.0)));
    for (size_t i = 0; i < n; ++i) {
        axpy(sim_grads.dpos[i], batch.positives[i], out.grad_queries[i]);
        axpy(sim_grads.dpos[i], batch.queries[i], out.grad_positives[i]);
        for (size_t p = 0; p < n * m; ++p) {
            if (!mask.neg[i][p]) continue;
            const size_t owner = p / m, slot = p % m;
            const double g = sim_grads.dneg[i][p];
            axpy(g, batch.negatives[owner][slot], out.grad_queries[i]);
            axpy(g, batch.queries[i], out.grad_negatives[owner][slot]);
        }
        for (size_t j = 0; j < n; ++j) {
            if (!mask.qq[i][j]) continue;
            const double g = sim_grads.dqq[i][j];
            axpy(g, batch.queries[j], out.grad_queries[i]);
            axpy(g, batch.queries[i], out.grad_queries[j]);
        }
    }
    return out;
}

LossOutput infonce_on_batch(const EmbeddedBatch& batch, const TermMask& mask, double tau) {
    SimTable sims = compute_sims(batch);
    SimLossResult r = infonce_from_sims(sims, mask, tau);
    return backprop_sims(batch, r, mask);
}

// Value-only evaluation without the unit-norm check; the finite-difference
// probe perturbs raw coordinates, which leaves norms slightly off 1.
double infonce_value_unchecked(const EmbeddedBatch& batch, const TermMask& mask, double tau) {
    SimTable sims = compute_sims(batch);
    const size_t n = sims.n;
    const size_t pool = n * sims.m;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double x_pos = sims.pos[i] / tau;
        double mx = x_pos;
        for (size_t p = 0; p < pool; ++p)
            if (mask.neg[i][p]) mx = std::max(mx, sims.neg[i][p] / tau);
        for (size_t j = 0; j < n; ++j)
            if (mask.qq[i][j]) mx = std::max(mx, sims.qq[i][j] / tau);
        double denom = std::exp(x_pos - mx);
        for (size_t p = 0; p < pool; ++p)
            if (mask.neg[i][p]) denom += std::exp(sims.neg[i][p] / tau - mx);
        for (size_t j = 0; j < n; ++j)
            if (mask.qq[i][j]) denom += std::exp(sims.qq[i][j] / tau - mx);
        total += -x_pos + mx + std::log(denom);
    }
    return total / static_cast<double>(n);
}

} // namespace

LossOutput retrieval_loss(const EmbeddedBatch& batch, const LossConfig& cfg) {
    batch.validate(false);
    return infonce_on_batch(batch, retrieval_mask(batch.size(), batch.negatives_per_instance(), cfg),
                            cfg.temperature);
}

LossOutput cls_loss(const EmbeddedBatch& batch, const LossConfig& cfg) {
    batch.validate(true);
    return infonce_on_batch(batch, cls_mask(batch), cfg.temperature);
}

namespace {

// Shared Cosent evaluation; gradients are filled only when out != nullptr.
double cosent_eval(const ScoredPairBatch& pairs, double tau, Vec* grad_sims) {
    const size_t n = pairs.sims.size();

    // log(1 + sum exp(x_t)) via log-sum-exp over {0} u {x_t}.
    double mx = 0.0;
    for (size_t w = 0; w < n; ++w)
        for (size_t l = 0; l < n; ++l)
            if (pairs.scores[w] > pairs.scores[l])
                mx = std::max(mx, (pairs.sims[l] - pairs.sims[w]) / tau);

    double denom = std::exp(-mx); // the constant 1 term
    for (size_t w = 0; w < n; ++w)
        for (size_t l = 0; l < n; ++l)
            if (pairs.scores[w] > pairs.scores[l])
                denom += std::exp((pairs.sims[l] - pairs.sims[w]) / tau - mx);

    if (grad_sims) {
        grad_sims->assign(n, 0.0);
        for (size_t w = 0; w < n; ++w) {
            for (size_t l = 0; l < n; ++l) {
                if (pairs.scores[w] <= pairs.scores[l]) continue;
                const double weight = std::exp((pairs.sims[l] - pairs.sims[w]) / tau - mx) / denom / tau;
                (*grad_sims)[l] += weight;
                (*grad_sims)[w] -= weight;
            }
        }
    }
    return mx + std::log(denom);
}

} // namespace

LossOutput cosent_loss(const ScoredPairBatch& pairs, const LossConfig& cfg) {
    pairs.validate();
    if (cfg.temperature <= 0.0) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    LossOutput out;
    out.value = cosent_eval(pairs, cfg.temperature, &out.grad_sims);
    return out;
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "retrieval") return LossKind::Retrieval;
    if (s == "cosent") return LossKind::Cosent;
    if (s == "cls") return LossKind::Cls;
    throw Error(ErrorCode::ParseError, "unknown loss kind '" + s + "'");
}

namespace {

double rel_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

} // namespace

GradCheckReport grad_check(LossKind kind, const EmbeddedBatch& batch, const LossConfig& cfg,
                           double epsilon) {
    if (kind == LossKind::Cosent)
        throw Error(ErrorCode::InvalidArgument, "cosent grad_check takes a ScoredPairBatch");
    if (epsilon <= 0.0 || epsilon > 1e-3)
        throw Error(ErrorCode::InvalidArgument, "epsilon outside (0, 1e-3]");

    batch.validate(kind == LossKind::Cls);
    const TermMask mask = kind == LossKind::Cls
                              ? cls_mask(batch)
                              : retrieval_mask(batch.size(), batch.negatives_per_instance(), cfg);
    const LossOutput analytic = infonce_on_batch(batch, mask, cfg.temperature);

    GradCheckReport report;
    EmbeddedBatch probe = batch;
    auto check_array = [&](std::vector<Vec>& arr, const std::vector<Vec>& grads) {
        for (size_t i = 0; i < arr.size(); ++i) {
            for (size_t k = 0; k < arr[i].size(); ++k) {
                const double saved = arr[i][k];
                arr[i][k] = saved + epsilon;
                const double up = infonce_value_unchecked(probe, mask, cfg.temperature);
                arr[i][k] = saved - epsilon;
                const double down = infonce_value_unchecked(probe, mask, cfg.temperature);
                arr[i][k] = saved;
                const double numeric = (up - down) / (2.0 * epsilon);
                report.max_rel_error = std::max(report.max_rel_error, rel_error(grads[i][k], numeric));
            }
        }
    };
    check_array(probe.queries, analytic.grad_queries);
    check_array(probe.positives, analytic.grad_positives);
    for (size_t i = 0; i < probe.negatives.size(); ++i)
        check_array(probe.negatives[i], analytic.grad_negatives[i]);
    return report;
}

GradCheckReport grad_check(const ScoredPairBatch& pairs, const LossConfig& cfg, double epsilon) {
    if (epsilon <= 0.0 || epsilon > 1e-3)
        throw Error(ErrorCode::InvalidArgument, "epsilon outside (0, 1e-3]");
    const LossOutput analytic = cosent_loss(pairs, cfg);
    GradCheckReport report;
    ScoredPairBatch probe = pairs;
    // Probes bypass validation: a nudge can push a boundary sim just past |1|.
    for (size_t k = 0; k < probe.sims.size(); ++k) {
        const double saved = probe.sims[k];
        probe.sims[k] = saved + epsilon;
        const double up = cosent_eval(probe, cfg.temperature, nullptr);
        probe.sims[k] = saved - epsilon;
        const double down = cosent_eval(probe, cfg.temperature, nullptr);
        probe.sims[k] = saved;
        const double numeric = (up - down) / (2.0 * epsilon);
        report.max_rel_error = std::max(report.max_rel_error, rel_error(analytic.grad_sims[k], numeric));
    }
    return report;
}

} // namespace embforge
