#include <doctest.h>

#include <cmath>
#include <sstream>

#include "editflow/rate_model.hpp"
#include "test_util.hpp"

using namespace editflow;
using testing::seq;

namespace {

const Vocab kAb{2, 0};

// Gradient check against central finite differences for an arbitrary smooth
// scalar of the prediction.
double scalar_of(const ModelParams& params, const Sequence& x, double t,
                 const PredictContext& ctx, const PredictionCotangent& cot) {
    const RatePrediction p = predict(params, x, t, ctx);
    double acc = 0.0;
    for (int i = 0; i < p.n; ++i) {
        acc += cot.lam_ins[static_cast<size_t>(i)] * p.lam_ins[static_cast<size_t>(i)];
        acc += cot.lam_del[static_cast<size_t>(i)] * p.lam_del[static_cast<size_t>(i)];
        acc += cot.lam_sub[static_cast<size_t>(i)] * p.lam_sub[static_cast<size_t>(i)];
        for (int a = 0; a < p.m; ++a) {
            acc += cot.q_ins[static_cast<size_t>(i) * p.m + a] * p.q_ins_at(i, a);
            acc += cot.q_sub[static_cast<size_t>(i) * p.m + a] * p.q_sub_at(i, a);
        }
    }
    return acc;
}

void check_grad_against_fd(const ModelParams& params, const Sequence& x, double t,
                           const PredictContext& ctx, Rng& rng) {
    const RatePrediction p = predict(params, x, t, ctx);
    PredictionCotangent cot = PredictionCotangent::zeros(p.n, p.m);
    for (double& v : cot.lam_ins) v = rng.normal();
    for (double& v : cot.lam_del) v = rng.normal();
    for (double& v : cot.lam_sub) v = rng.normal();
    for (double& v : cot.q_ins) v = rng.normal();
    for (double& v : cot.q_sub) v = rng.normal();

    std::vector<double> grad(params.theta.size(), 0.0);
    std::vector<std::pair<int64_t, double>> entries;
    accumulate_predict_grad(params, x, t, ctx, cot, 1.0, entries);
    for (const auto& [idx, val] : entries) grad[static_cast<size_t>(idx)] += val;

    const double h = 1e-5;
    for (size_t i = 0; i < params.theta.size(); ++i) {
        // Probe every coordinate the analytic gradient claims, plus a sparse
        // sample of the rest to catch missing entries.
        if (grad[i] == 0.0 && i % 37 != 0) continue;
        ModelParams pp = params;
        pp.theta[i] += h;
        ModelParams pm = params;
        pm.theta[i] -= h;
        const double fd = (scalar_of(pp, x, t, ctx, cot) - scalar_of(pm, x, t, ctx, cot)) / (2 * h);
        const double rel =
            std::abs(fd - grad[i]) / std::max({1e-6, std::abs(fd), std::abs(grad[i])});
        REQUIRE(rel < 1e-4);
    }
}

}  // namespace

TEST_CASE("predictions are valid rate tables") {
    Rng rng(1);
    ModelParams tab = testing::randomize(make_tabular_params(kAb, 4, 4, 5), rng);
    ModelParams feat = testing::randomize(make_featurized_params(kAb, 2, 16), rng);
    const Sequence x = seq(kAb, {1, 0, 1});

    for (const ModelParams& params : {tab, feat}) {
        const RatePrediction p = predict(params, x, 0.37, {});
        CHECK(p.n == x.size());
        // slot 0 never deletes or substitutes
        CHECK(p.lam_del[0] == 0.0);
        CHECK(p.lam_sub[0] == 0.0);
        double lam_total = 0.0;
        for (int i = 0; i < p.n; ++i) {
            CHECK(p.lam_ins[static_cast<size_t>(i)] >= 0.0);
            CHECK(p.lam_del[static_cast<size_t>(i)] >= 0.0);
            CHECK(p.lam_sub[static_cast<size_t>(i)] >= 0.0);
            lam_total += p.lam_ins[static_cast<size_t>(i)] + p.lam_del[static_cast<size_t>(i)] +
                         p.lam_sub[static_cast<size_t>(i)];
            double row = 0.0;
            for (int a = 0; a < p.m; ++a) row += p.q_ins_at(i, a);
            CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
            if (i >= 1) {
                row = 0.0;
                for (int a = 0; a < p.m; ++a) row += p.q_sub_at(i, a);
                CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
                CHECK(p.q_sub_at(i, x[i]) == 0.0);  // no self-substitution mass
            }
        }
        CHECK(p.exit_rate() == doctest::Approx(lam_total).epsilon(1e-12));

        // deterministic: repeated calls agree bit for bit
        const RatePrediction q = predict(params, x, 0.37, {});
        CHECK(p.lam_ins == q.lam_ins);
        CHECK(p.q_ins == q.q_ins);
        CHECK(p.q_sub == q.q_sub);
    }
}

TEST_CASE("driving rate logits to the clamp floor silences the model") {
    ModelParams tab = make_tabular_params(kAb, 2, 2, 3);
    for (double& v : tab.theta) v = -100.0;  // clamped to -30
    const RatePrediction p = predict(tab, seq(kAb, {1}), 0.2, {});
    CHECK(p.exit_rate() < 1e-10);
}

TEST_CASE("rate_of_edit dispatches on the edit kind") {
    Rng rng(2);
    const ModelParams tab = testing::randomize(make_tabular_params(kAb, 3, 4, 4), rng);
    const Sequence x = seq(kAb, {1, 0});
    const RatePrediction p = predict(tab, x, 0.61, {});

    CHECK(rate_of_edit(p, {EditKind::Delete, 1, -1}) == p.lam_del[1]);
    CHECK(rate_of_edit(p, {EditKind::Insert, 0, 1}) ==
          doctest::Approx(p.lam_ins[0] * p.q_ins_at(0, 1)));
    CHECK(rate_of_edit(p, {EditKind::Substitute, 2, 1}) ==
          doctest::Approx(p.lam_sub[2] * p.q_sub_at(2, 1)));
    // zero distribution mass means zero rate
    CHECK(rate_of_edit(p, {EditKind::Substitute, 2, x[2]}) == 0.0);
    CHECK_THROWS_AS(rate_of_edit(p, {EditKind::Delete, 0, -1}), std::out_of_range);
    CHECK_THROWS_AS(rate_of_edit(p, {EditKind::Insert, 5, 0}), std::out_of_range);
}

TEST_CASE("summing rate_of_edit over all neighbors gives the exit rate") {
    Rng rng(3);
    const ModelParams tab = testing::randomize(make_tabular_params(kAb, 4, 3, 5), rng);
    const ModelParams feat = testing::randomize(make_featurized_params(kAb, 2, 8), rng);
    for (const ModelParams& params : {tab, feat}) {
        for (const Sequence& x :
             {seq(kAb, {1}), seq(kAb, {0, 1}), seq(kAb, {1, 1, 0, 1})}) {
            const RatePrediction p = predict(params, x, 0.44, {});
            double total = 0.0;
            for (const auto& [op, result] : enumerate_edits(x, kAb, params.n_max))
                total += rate_of_edit(p, op);
            CHECK(total == doctest::Approx(p.exit_rate()).epsilon(1e-9));
        }
    }
}

TEST_CASE("tabular lookups outside the table fail loudly") {
    const ModelParams tab = make_tabular_params(kAb, 2, 2, 8);
    CHECK_THROWS_AS(predict(tab, seq(kAb, {1, 1, 1}), 0.5, {}), std::out_of_range);
    CHECK_NOTHROW(predict(tab, seq(kAb, {1, 1}), 0.5, {}));
}

TEST_CASE("gradient of the exit rate with respect to a rate logit is the rate") {
    Rng rng(4);
    const ModelParams tab = testing::randomize(make_tabular_params(kAb, 3, 2, 4), rng);
    const Sequence x = seq(kAb, {1, 0});
    const RatePrediction p = predict(tab, x, 0.3, {});
    PredictionCotangent cot = PredictionCotangent::zeros(p.n, p.m);
    std::fill(cot.lam_ins.begin(), cot.lam_ins.end(), 1.0);
    std::fill(cot.lam_del.begin(), cot.lam_del.end(), 1.0);
    std::fill(cot.lam_sub.begin(), cot.lam_sub.end(), 1.0);
    std::vector<std::pair<int64_t, double>> entries;
    accumulate_predict_grad(tab, x, 0.3, {}, cot, 1.0, entries);
    double grad_total = 0.0;
    for (const auto& [idx, val] : entries) grad_total += val;
    CHECK(grad_total == doctest::Approx(p.exit_rate()).epsilon(1e-12));
}

TEST_CASE("analytic prediction gradients match finite differences") {
    Rng rng(5);
    const Sequence x = seq(kAb, {1, 0, 1});
    for (int trial = 0; trial < 3; ++trial) {
        ModelParams tab = testing::randomize(make_tabular_params(kAb, 4, 3, 5), rng);
        check_grad_against_fd(tab, x, 0.27 + 0.2 * trial, {}, rng);
        ModelParams feat = testing::randomize(make_featurized_params(kAb, 2, 8), rng);
        check_grad_against_fd(feat, x, 0.27 + 0.2 * trial, {}, rng);
    }
    SUBCASE("zero cotangent gives zero gradient") {
        ModelParams tab = testing::randomize(make_tabular_params(kAb, 2, 2, 3), rng);
        std::vector<std::pair<int64_t, double>> entries;
        accumulate_predict_grad(tab, seq(kAb, {1}), 0.4, {},
                                PredictionCotangent::zeros(2, 2), 1.0, entries);
        for (const auto& [idx, val] : entries) CHECK(val == 0.0);
    }
}

TEST_CASE("conditioning prefix masks edits and feeds the featurized flag") {
    Rng rng(6);
    const Vocab v{3, 0};
    const ModelParams feat = testing::randomize(make_featurized_params(v, 2, 16), rng);
    const Sequence x = make_sequence(v, std::vector<TokenId>{1, 2, 1, 2});

    const PredictContext cond{2, true};
    const RatePrediction p = predict(feat, x, 0.5, cond);
    CHECK(p.lam_ins[0] == 0.0);
    CHECK(p.lam_ins[1] == 0.0);
    CHECK(p.lam_ins[2] > 0.0);  // inserting after the prompt is allowed
    CHECK(p.lam_del[1] == 0.0);
    CHECK(p.lam_del[2] == 0.0);
    CHECK(p.lam_del[3] > 0.0);
    CHECK(p.lam_sub[2] == 0.0);
    CHECK(p.lam_sub[3] > 0.0);

    // The conditional and unconditional views differ only through the flag.
    const RatePrediction unc = predict(feat, x, 0.5, {2, false});
    CHECK(unc.lam_ins[0] == 0.0);  // prompt protection stays
    bool any_diff = false;
    for (int i = 0; i < p.n; ++i)
        if (p.lam_ins[static_cast<size_t>(i)] != unc.lam_ins[static_cast<size_t>(i)])
            any_diff = true;
    CHECK(any_diff);

    // Gradients respect the mask.
    check_grad_against_fd(feat, x, 0.5, cond, rng);
}

TEST_CASE("single-token vocabularies disable substitutions") {
    const Vocab v1{1, 0};
    ModelParams tab = make_tabular_params(v1, 3, 2, 4);
    Rng rng(7);
    tab = testing::randomize(std::move(tab), rng);
    const RatePrediction p = predict(tab, make_sequence(v1, std::vector<TokenId>{0, 0}), 0.5, {});
    for (double v : p.lam_sub) CHECK(v == 0.0);
    double row = 0.0;
    for (int a = 0; a < p.m; ++a) row += p.q_sub_at(1, a);
    CHECK(row == doctest::Approx(1.0));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    Rng rng(8);
    const ModelParams params = testing::randomize(make_featurized_params(kAb, 2, 32), rng);
    std::stringstream ss;
    save_checkpoint(params, ss);
    const ModelParams loaded = load_checkpoint(ss);
    CHECK(loaded.kind == params.kind);
    CHECK(loaded.vocab.size == params.vocab.size);
    CHECK(loaded.vocab.bos == params.vocab.bos);
    CHECK(loaded.n_max == params.n_max);
    REQUIRE(loaded.theta.size() == params.theta.size());
    for (size_t i = 0; i < params.theta.size(); ++i) REQUIRE(loaded.theta[i] == params.theta[i]);

    std::stringstream again;
    save_checkpoint(loaded, again);
    CHECK(again.str() == ss.str());

    SUBCASE("corrupted blobs are rejected") {
        std::stringstream bad("editflow-checkpoint v2\n");
        CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
    }
}

TEST_CASE("time buckets partition [0,1] and agree with their representatives") {
    for (int buckets : {1, 4, 16, 32}) {
        int prev = 0;
        for (int i = 0; i <= 10'000; ++i) {
            const int b = time_bucket(i / 10'000.0, buckets);
            CHECK(b >= prev);
            CHECK(b < buckets);
            prev = b;
        }
        for (int b = 0; b < buckets; ++b)
            CHECK(time_bucket(bucket_representative_t(b, buckets), buckets) == b);
    }
}
