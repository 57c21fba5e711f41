#include <doctest.h>

#include <cmath>

#include "editflow/oracle.hpp"
#include "editflow/sampler.hpp"
#include "editflow/stats.hpp"
#include "test_util.hpp"

using namespace editflow;
using testing::seq;

namespace {

const Vocab kAb{2, 0};

RatePrediction zero_prediction(const Sequence& x, int m) {
    RatePrediction p;
    p.n = x.size();
    p.m = m;
    p.lam_ins.assign(static_cast<size_t>(p.n), 0.0);
    p.lam_del.assign(static_cast<size_t>(p.n), 0.0);
    p.lam_sub.assign(static_cast<size_t>(p.n), 0.0);
    p.q_ins.assign(static_cast<size_t>(p.n) * m, 1.0 / m);
    p.q_sub.assign(static_cast<size_t>(p.n) * m, 0.0);
    for (int i = 1; i < p.n; ++i)
        for (int a = 0; a < m; ++a)
            p.q_sub[static_cast<size_t>(i) * m + a] = a == x[i] ? 0.0 : 1.0 / (m - 1);
    return p;
}

}  // namespace

TEST_CASE("euler_step") {
    Rng rng(1);
    const Sequence x = seq(kAb, {1, 0});

    SUBCASE("zero rates never fire") {
        for (int i = 0; i < 20; ++i) {
            const EulerStepResult r = euler_step(zero_prediction(x, 2), x, 0.1, kAb, 8, rng);
            CHECK(r.x == x);
            CHECK(r.edits.empty());
        }
    }
    SUBCASE("a saturated insert probability fires exactly once") {
        RatePrediction p = zero_prediction(x, 2);
        p.lam_ins[1] = 10.0;  // h * lambda = 1
        p.q_ins[1 * 2 + 1] = 1.0;
        p.q_ins[1 * 2 + 0] = 0.0;
        const EulerStepResult r = euler_step(p, x, 0.1, kAb, 8, rng);
        REQUIRE(r.edits.size() == 1);
        CHECK(r.edits[0] == EditOp{EditKind::Insert, 1, 1});
        CHECK(r.x == seq(kAb, {1, 1, 0}));
    }
    SUBCASE("the removal group splits by the delete fraction") {
        RatePrediction p = zero_prediction(x, 2);
        p.lam_del[1] = 1.0;
        p.lam_sub[1] = 3.0;
        int dels = 0, subs = 0;
        Rng r2(2);
        const int n = 100'000;
        for (int i = 0; i < n; ++i) {
            const EulerStepResult r = euler_step(p, x, 0.05, kAb, 8, r2);
            for (const EditOp& op : r.edits) {
                if (op.kind == EditKind::Delete) ++dels;
                if (op.kind == EditKind::Substitute) ++subs;
            }
        }
        const double frac = static_cast<double>(dels) / (dels + subs);
        const double sigma = std::sqrt(0.25 * 0.75 / (dels + subs));
        CHECK(std::abs(frac - 0.25) < 3 * sigma);
    }
    SUBCASE("excess insertions are dropped rightmost-first") {
        RatePrediction p = zero_prediction(x, 2);
        p.lam_ins[0] = 1e9;
        p.lam_ins[1] = 1e9;
        p.lam_ins[2] = 1e9;
        const EulerStepResult r = euler_step(p, x, 1.0, kAb, 4, rng);
        CHECK(r.x.size() == 4);
        CHECK(r.dropped_insertions == 2);
        REQUIRE(r.edits.size() == 1);
        CHECK(r.edits[0].pos == 0);  // the leftmost insert survives
    }
}

TEST_CASE("simulate") {
    SUBCASE("a silent model walks in place and the trace replays") {
        const RateFn silent = [](const Sequence& x, double) { return zero_prediction(x, 2); };
        SamplerConfig sc;
        sc.steps = 16;
        Rng rng(3);
        const GenerationTrace trace = simulate(silent, nullptr, bos_only(kAb), sc, kAb, rng);
        REQUIRE(trace.records.size() == 17);
        double prev_t = -1.0;
        Sequence cur = trace.records[0].x;
        for (const auto& rec : trace.records) {
            CHECK(rec.t > prev_t);
            prev_t = rec.t;
            CHECK(rec.x == bos_only(kAb));
            cur = replay_record(cur, rec, kAb, sc.max_len);
            CHECK(cur == rec.x);
        }
        CHECK(trace.total_edits() == 0);
    }
    SUBCASE("an insert-only model never shrinks the sequence") {
        const RateFn insert_only = [](const Sequence& x, double) {
            RatePrediction p = zero_prediction(x, 2);
            std::fill(p.lam_ins.begin(), p.lam_ins.end(), 2.0);
            return p;
        };
        SamplerConfig sc;
        sc.steps = 64;
        sc.max_len = 32;
        Rng rng(4);
        const GenerationTrace trace = simulate(insert_only, nullptr, bos_only(kAb), sc, kAb, rng);
        int prev = 1;
        for (const auto& rec : trace.records) {
            CHECK(rec.x.size() >= prev);
            prev = rec.x.size();
        }
        CHECK(prev > 1);
    }
    SUBCASE("the corrector demands a reverse model") {
        const RateFn silent = [](const Sequence& x, double) { return zero_prediction(x, 2); };
        SamplerConfig sc;
        sc.corrector = {1.0, 0.0, 0.0};
        Rng rng(5);
        CHECK_THROWS_AS(simulate(silent, nullptr, bos_only(kAb), sc, kAb, rng),
                        std::invalid_argument);
    }
    SUBCASE("same seed, same trace") {
        const RateFn noisy = [](const Sequence& x, double) {
            RatePrediction p = zero_prediction(x, 2);
            std::fill(p.lam_ins.begin(), p.lam_ins.end(), 1.0);
            for (size_t i = 1; i < p.lam_del.size(); ++i) p.lam_del[i] = 0.7;
            return p;
        };
        SamplerConfig sc;
        sc.steps = 50;
        Rng r1(6), r2(6);
        const GenerationTrace a = simulate(noisy, nullptr, bos_only(kAb), sc, kAb, r1);
        const GenerationTrace b = simulate(noisy, nullptr, bos_only(kAb), sc, kAb, r2);
        REQUIRE(a.records.size() == b.records.size());
        for (size_t i = 0; i < a.records.size(); ++i) {
            CHECK(a.records[i].x == b.records[i].x);
            CHECK(format_trace_record(a.records[i]) == format_trace_record(b.records[i]));
        }
    }
}

TEST_CASE("gillespie simulation") {
    SUBCASE("zero rates produce no events") {
        const RateFn silent = [](const Sequence& x, double) { return zero_prediction(x, 2); };
        Rng rng(7);
        const GenerationTrace t = gillespie_simulate(silent, bos_only(kAb), {}, kAb, rng);
        CHECK(t.records.size() == 1);
    }
    SUBCASE("holding time of a constant-rate transition averages 1/r") {
        const double r = 2.5;
        const RateFn one_shot = [r](const Sequence& x, double) {
            RatePrediction p = zero_prediction(x, 2);
            if (x.size() == 1) {
                p.lam_ins[0] = r;
                p.q_ins[0] = 1.0;
                p.q_ins[1] = 0.0;
            }
            return p;
        };
        Rng rng(8);
        GillespieConfig gc;
        gc.t_end = 100.0;  // effectively unbounded for rate 2.5
        gc.slice_width = 100.0;
        double total = 0.0;
        const int n = 100'000;
        for (int i = 0; i < n; ++i) {
            const GenerationTrace t = gillespie_simulate(one_shot, bos_only(kAb), gc, kAb, rng);
            REQUIRE(t.records.size() == 2);
            total += t.records[1].t;
        }
        const double mean = total / n;
        const double sigma = (1.0 / r) / std::sqrt(static_cast<double>(n));
        CHECK(std::abs(mean - 1.0 / r) < 3 * sigma);
    }
    SUBCASE("event-driven and euler simulation agree on a seven-state toy") {
        const EnumeratedSpace space = build_space(kAb, 2);
        const Scheduler sched = cubic_scheduler();
        const Coupling coupling = product_coupling(uniform_length_atoms(kAb, 1),
                                                   uniform_length_atoms(kAb, 2),
                                                   CouplingMode::Optimal, kAb);
        const int steps = 2000;
        const auto table = precompute_step_predictions(space, coupling, sched, steps);
        const RateFn euler_rates = [&](const Sequence& x, double t) {
            const int k = std::min(steps - 1, static_cast<int>(std::llround(t * steps)));
            return table[static_cast<size_t>(k)][static_cast<size_t>(space.index_of(x))];
        };
        // Continuous-time rates for the event-driven run, frozen per slice.
        const RateFn fine_rates = [&](const Sequence& x, double t) {
            const EnumeratedMarginal m = enumerate_marginal(space, coupling, sched, t);
            const size_t s = static_cast<size_t>(space.index_of(x));
            return prediction_from_rate_row(
                space, {m.rate.data() + s * static_cast<size_t>(space.size()),
                        static_cast<size_t>(space.size())},
                static_cast<int>(s));
        };
        const double t_end = 1.0 - 1e-3;
        const int n = 30'000;
        std::vector<int64_t> euler_counts(static_cast<size_t>(space.size()), 0);
        std::vector<int64_t> event_counts(static_cast<size_t>(space.size()), 0);
        std::vector<int> efin(n), gfin(n);
        const auto p0 = enumerate_pt(space, coupling, sched, 0.0);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) {
            Rng rng = Rng::fork(99, static_cast<uint64_t>(i));
            const Sequence x0 = space.states[static_cast<size_t>(rng.categorical(p0))];
            SamplerConfig sc;
            sc.steps = steps;
            sc.max_len = space.n_max;
            const GenerationTrace a = simulate(euler_rates, nullptr, x0, sc, kAb, rng);
            efin[static_cast<size_t>(i)] = space.index_of(a.final_x());
            GillespieConfig gc;
            gc.t_end = t_end;
            gc.slice_width = 5e-3;
            gc.max_len = space.n_max;
            const GenerationTrace b = gillespie_simulate(fine_rates, x0, gc, kAb, rng);
            gfin[static_cast<size_t>(i)] = space.index_of(b.final_x());
        }
        for (int i = 0; i < n; ++i) {
            ++euler_counts[static_cast<size_t>(efin[static_cast<size_t>(i)])];
            ++event_counts[static_cast<size_t>(gfin[static_cast<size_t>(i)])];
        }
        const double tv =
            tv_distance(normalize_counts(euler_counts), normalize_counts(event_counts));
        CHECK(tv < 0.02);
    }
}

TEST_CASE("guidance identities") {
    Rng rng(9);
    const EnumeratedSpace space = build_space(kAb, 3);
    const Scheduler sched = cubic_scheduler();
    // arbitrary valid predictions from the enumeration machinery
    const Coupling c1 = point_coupling(seq(kAb, {0}), seq(kAb, {1, 0}), CouplingMode::Optimal, kAb);
    const Coupling c2 =
        point_coupling(seq(kAb, {1}), seq(kAb, {0, 0, 1}), CouplingMode::WorstCase, kAb);
    const auto m1 = enumerate_marginal(space, c1, sched, 0.4);
    const auto m2 = enumerate_marginal(space, c2, sched, 0.6);
    const int idx = space.index_of(seq(kAb, {0}));
    const size_t S = static_cast<size_t>(space.size());
    RatePrediction cond =
        prediction_from_rate_row(space, {m1.rate.data() + static_cast<size_t>(idx) * S, S}, idx);
    RatePrediction uncond =
        prediction_from_rate_row(space, {m2.rate.data() + static_cast<size_t>(idx) * S, S}, idx);
    // keep everything strictly positive so the exponent algebra is exercised
    for (auto* p : {&cond, &uncond}) {
        for (double& v : p->lam_ins) v += 0.25;
        for (size_t i = 1; i < p->lam_del.size(); ++i) p->lam_del[i] += 0.5;
        for (size_t i = 1; i < p->lam_sub.size(); ++i) p->lam_sub[i] += 0.3;
    }

    SUBCASE("w = 1 recovers the conditional prediction for weighted and fixed") {
        for (CfgVariant v : {CfgVariant::Weighted, CfgVariant::Fixed}) {
            const RatePrediction g = apply_cfg(cond, uncond, 1.0, v);
            CHECK(g.lam_ins == cond.lam_ins);
            CHECK(g.lam_del == cond.lam_del);
            CHECK(g.lam_sub == cond.lam_sub);
            CHECK(g.q_ins == cond.q_ins);
            CHECK(g.q_sub == cond.q_sub);
        }
    }
    SUBCASE("w = 0 under weighted recovers the unconditional prediction") {
        const RatePrediction g = apply_cfg(cond, uncond, 0.0, CfgVariant::Weighted);
        CHECK(g.lam_del == uncond.lam_del);
        CHECK(g.q_ins == uncond.q_ins);
    }
    SUBCASE("w = 0 under naive keeps the conditional rates with unconditional mixtures") {
        const RatePrediction g = apply_cfg(cond, uncond, 0.0, CfgVariant::Naive);
        CHECK(g.lam_ins == cond.lam_ins);
        CHECK(g.lam_del == cond.lam_del);
        CHECK(g.lam_sub == cond.lam_sub);
        CHECK(g.q_ins == uncond.q_ins);
    }
    SUBCASE("fixed rates ignore w entirely") {
        for (double w : {0.0, 0.3, 1.0, 2.0, 5.0}) {
            const RatePrediction g = apply_cfg(cond, uncond, w, CfgVariant::Fixed);
            CHECK(g.lam_ins == cond.lam_ins);
            CHECK(g.lam_del == cond.lam_del);
            CHECK(g.lam_sub == cond.lam_sub);
        }
    }
    SUBCASE("naive rates follow the sharpened power formula") {
        const double w = 0.5;
        const RatePrediction g = apply_cfg(cond, uncond, w, CfgVariant::Naive);
        for (size_t i = 1; i < g.lam_del.size(); ++i) {
            const double expected =
                std::pow(cond.lam_del[i], 1.0 + w) * std::pow(uncond.lam_del[i], -w);
            CHECK(g.lam_del[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("weighted rates carry the mixture mass factor") {
        const double w = 0.7;
        const RatePrediction g = apply_cfg(cond, uncond, w, CfgVariant::Weighted);
        for (size_t i = 0; i < g.lam_ins.size(); ++i) {
            double mass = 0.0;
            for (int a = 0; a < cond.m; ++a)
                mass += std::pow(uncond.q_ins[i * cond.m + a], 1.0 - w) *
                        std::pow(cond.q_ins[i * cond.m + a], w);
            const double expected = std::pow(uncond.lam_ins[i], 1.0 - w) *
                                    std::pow(cond.lam_ins[i], w) * mass;
            CHECK(g.lam_ins[i] == doctest::Approx(expected).epsilon(1e-12));
        }
        // deletions carry no mixture factor
        for (size_t i = 1; i < g.lam_del.size(); ++i) {
            const double expected =
                std::pow(uncond.lam_del[i], 1.0 - w) * std::pow(cond.lam_del[i], w);
            CHECK(g.lam_del[i] == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    SUBCASE("shape mismatches are rejected") {
        RatePrediction other = cond;
        other.n += 1;
        CHECK_THROWS_AS(apply_cfg(cond, other, 0.5, CfgVariant::Fixed), std::invalid_argument);
    }
    (void)rng;
}

TEST_CASE("sharpening") {
    std::vector<double> row{0.1, 0.4, 0.2, 0.3};

    SUBCASE("disabled knobs are the identity") {
        auto copy = row;
        sharpen_row(copy, 1.0, 1.0, 0);
        CHECK(copy == row);
    }
    SUBCASE("top-k = 1 is a point mass on the argmax") {
        auto copy = row;
        sharpen_row(copy, 1.0, 1.0, 1);
        CHECK(copy == std::vector<double>{0.0, 1.0, 0.0, 0.0});
    }
    SUBCASE("temperature near zero approaches the argmax") {
        auto copy = row;
        sharpen_row(copy, 1e-3, 1.0, 0);
        CHECK(copy[1] >= 0.999);
    }
    SUBCASE("top-p keeps the smallest prefix crossing the threshold") {
        auto copy = row;
        sharpen_row(copy, 1.0, 0.5, 0);
        // 0.4 alone is below 0.5, so 0.3 joins; renormalized
        CHECK(copy[1] == doctest::Approx(0.4 / 0.7));
        CHECK(copy[3] == doctest::Approx(0.3 / 0.7));
        CHECK(copy[0] == 0.0);
        CHECK(copy[2] == 0.0);
    }
    SUBCASE("rows stay normalized") {
        Rng rng(10);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> r(6);
            double total = 0.0;
            for (double& v : r) {
                v = rng.uniform();
                total += v;
            }
            for (double& v : r) v /= total;
            sharpen_row(r, 0.5 + rng.uniform(), 0.3 + 0.7 * rng.uniform(),
                        static_cast<int>(rng.uniform_int(7)));
            double s = 0.0;
            for (double v : r) s += v;
            CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("trace records round-trip through the text format") {
    GenerationTrace::Record rec;
    rec.step = 7;
    rec.t = 0.4375;
    rec.phases = {{{EditKind::Insert, 0, 1}, {EditKind::Delete, 2, -1}},
                  {{EditKind::Substitute, 1, 0}}};
    rec.x = seq(kAb, {0, 1});

    const std::string line = format_trace_record(rec);
    CHECK(line == "7\t0.4375\tins:0:1;del:2|sub:1:0\t0 0 1");
    const GenerationTrace::Record parsed = parse_trace_record(line);
    CHECK(parsed.step == rec.step);
    CHECK(parsed.t == rec.t);
    CHECK(parsed.phases == rec.phases);
    CHECK(parsed.x == rec.x);

    SUBCASE("empty steps collapse to a dash") {
        GenerationTrace::Record quiet;
        quiet.step = 1;
        quiet.t = 0.125;
        quiet.phases = {{}};
        quiet.x = bos_only(kAb);
        const std::string q = format_trace_record(quiet);
        CHECK(q == "1\t0.125\t-\t0");
        CHECK(format_trace_record(parse_trace_record(q)) == q);
    }
    SUBCASE("random records survive format/parse/format") {
        Rng rng(11);
        for (int trial = 0; trial < 100; ++trial) {
            GenerationTrace::Record r;
            r.step = static_cast<int>(rng.uniform_int(1000));
            r.t = rng.uniform();
            const int phases = static_cast<int>(rng.uniform_int(3));
            for (int ph = 0; ph < phases; ++ph) {
                std::vector<EditOp> ops;
                const int count = static_cast<int>(rng.uniform_int(4));
                for (int k = 0; k < count; ++k) {
                    const int kind2 = static_cast<int>(rng.uniform_int(3));
                    ops.push_back({static_cast<EditKind>(kind2),
                                   static_cast<int32_t>(rng.uniform_int(9)),
                                   kind2 == 1 ? -1 : static_cast<TokenId>(rng.uniform_int(2))});
                }
                r.phases.push_back(std::move(ops));
            }
            std::vector<TokenId> tail(static_cast<size_t>(rng.uniform_int(5)));
            for (auto& tk : tail) tk = static_cast<TokenId>(rng.uniform_int(2));
            r.x = make_sequence(kAb, tail);
            const std::string line = format_trace_record(r);
            CHECK(format_trace_record(parse_trace_record(line)) == line);
        }
    }
}

TEST_CASE("corrector steps run the overshoot-and-return schedule") {
    // Exact rates on a small space; reverse via flux inversion at each time.
    const EnumeratedSpace space = build_space(kAb, 2);
    const Scheduler sched = cubic_scheduler();
    const Coupling coupling = product_coupling(uniform_length_atoms(kAb, 1),
                                               uniform_length_atoms(kAb, 2),
                                               CouplingMode::Optimal, kAb);
    const RateFn forward = [&](const Sequence& x, double t) {
        const EnumeratedMarginal m = enumerate_marginal(space, coupling, sched, std::min(t, 0.999));
        const size_t s = static_cast<size_t>(space.index_of(x));
        return prediction_from_rate_row(space,
                                        {m.rate.data() + s * static_cast<size_t>(space.size()),
                                         static_cast<size_t>(space.size())},
                                        static_cast<int>(s));
    };
    const RateFn reverse = [&](const Sequence& x, double t) {
        const EnumeratedMarginal m = enumerate_marginal(space, coupling, sched, std::min(t, 0.999));
        const auto rev = reverse_rate_matrix(m);
        const size_t s = static_cast<size_t>(space.index_of(x));
        return prediction_from_rate_row(space,
                                        {rev.data() + s * static_cast<size_t>(space.size()),
                                         static_cast<size_t>(space.size())},
                                        static_cast<int>(s));
    };
    SamplerConfig sc;
    sc.steps = 50;
    sc.max_len = space.n_max;
    sc.corrector = {2.0, 0.5, 0.5};
    Rng rng(12);
    const GenerationTrace trace =
        simulate(forward, &reverse, space.states[1], sc, kAb, rng);
    CHECK(trace.records.size() == 51);
    bool saw_two_phases = false;
    Sequence cur = trace.records[0].x;
    for (const auto& rec : trace.records) {
        if (rec.phases.size() == 2) saw_two_phases = true;
        cur = replay_record(cur, rec, kAb, sc.max_len);
        REQUIRE(cur == rec.x);
    }
    CHECK(saw_two_phases);
}
