#include <doctest.h>

#include <cmath>

#include "editflow/oracle.hpp"
#include "editflow/paths.hpp"
#include "editflow/scheduler.hpp"
#include "editflow/stats.hpp"
#include "test_util.hpp"

using namespace editflow;
using testing::seq;

TEST_CASE("schedulers satisfy the boundary and inverse identities") {
    for (const Scheduler& sched : {linear_scheduler(), cubic_scheduler()}) {
        CHECK(sched.kappa(0.0) == 0.0);
        CHECK(sched.kappa(1.0) == 1.0);
        double prev = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double t = i / 1000.0;
            const double k = sched.kappa(t);
            CHECK(k >= prev);
            prev = k;
            CHECK(std::abs(sched.kappa_inv(k) - t) <= 1e-12);
        }
    }
    const Scheduler cubic = cubic_scheduler();
    CHECK(cubic.kappa(0.5) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(cubic.kappa_inv(0.125) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(cubic.kappa_dot(0.5) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK_THROWS_AS(cubic.kappa(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(cubic.kappa(1.1), std::invalid_argument);
    CHECK_THROWS_AS(cubic.kappa_inv(2.0), std::invalid_argument);
}

namespace {
const Vocab kAb{2, 0};
}

TEST_CASE("sample_zt interpolates between the pair sides") {
    const Scheduler sched = cubic_scheduler();
    Rng rng(1);
    const AlignedPair pair =
        align_worst_case(seq(kAb, {0, 1}), seq(kAb, {1, 1, 0}), kAb);

    const PathSample at0 = sample_zt(pair, 0.0, sched, kAb, rng);
    CHECK(at0.zt == pair.z0);
    CHECK(at0.xt == rm_blanks(pair.z0, kAb));
    const PathSample at1 = sample_zt(pair, 1.0, sched, kAb, rng);
    CHECK(at1.zt == pair.z1);
    CHECK(std::isinf(at1.weights[0]));

    // Cell-to-position map lists the non-blank cells in order.
    const PathSample mid = sample_zt(pair, 0.5, sched, kAb, rng);
    int pos = 0;
    for (int i = 0; i < mid.cells(); ++i) {
        if (mid.zt[static_cast<size_t>(i)] == kBlank) {
            CHECK(mid.cell_to_xpos[static_cast<size_t>(i)] == -1);
        } else {
            CHECK(mid.cell_to_xpos[static_cast<size_t>(i)] == pos);
            CHECK(mid.xt[pos] == mid.zt[static_cast<size_t>(i)]);
            ++pos;
        }
    }
    CHECK(pos == mid.xt.size());
}

TEST_CASE("per-cell flip frequency matches kappa") {
    const Scheduler sched = cubic_scheduler();
    Rng rng(2);
    AlignedPair pair;
    pair.z0 = {0, 0};
    pair.z1 = {0, 1};

    // cubic at t=0.5: flip probability 0.125
    const int n = 100'000;
    int flips = 0;
    for (int i = 0; i < n; ++i) {
        const PathSample s = sample_zt(pair, 0.5, sched, kAb, rng);
        if (s.zt[1] == 1) ++flips;
    }
    const double freq = static_cast<double>(flips) / n;
    const double sigma = std::sqrt(0.125 * 0.875 / n);
    CHECK(std::abs(freq - 0.125) < 3 * sigma);
}

TEST_CASE("fraction of switched cells tracks kappa over a long pair") {
    const Scheduler sched = cubic_scheduler();
    Rng rng(3);
    const int cells = 10'000;
    AlignedPair pair;
    pair.z0.assign(static_cast<size_t>(cells) + 1, 0);
    pair.z1.assign(static_cast<size_t>(cells) + 1, 1);
    pair.z0[0] = pair.z1[0] = kAb.bos;
    for (double t : {0.3, 0.6, 0.9}) {
        const PathSample s = sample_zt(pair, t, sched, kAb, rng);
        int switched = 0;
        for (int i = 1; i <= cells; ++i)
            if (s.zt[static_cast<size_t>(i)] == 1) ++switched;
        CHECK(std::abs(static_cast<double>(switched) / cells - sched.kappa(t)) < 0.02);
    }
}

TEST_CASE("conditional_rate lists one entry per pending cell") {
    const Scheduler sched = cubic_scheduler();
    const Vocab letters{26, 0};
    const Sequence kitten = encode_tail("KITTEN", letters);
    const Sequence smitten = encode_tail("SMITTEN", letters);
    const AlignedPair pair = align_optimal(kitten, smitten, letters);

    SUBCASE("no disagreement, no entries") {
        CHECK(conditional_rate(pair.z1, pair.z1, sched, 0.5).empty());
    }
    SUBCASE("single pending cell carries kappa_dot/(1-kappa)") {
        AlignedSeq zt = pair.z1;
        zt[1] = pair.z0[1];
        const auto entries = conditional_rate(zt, pair.z1, sched, 0.5);
        REQUIRE(entries.size() == 1);
        CHECK(entries[0].rate == doctest::Approx(0.75 / 0.875).epsilon(1e-12));
    }
    SUBCASE("optimal pair at z0 has one substitution and one insertion") {
        Rng rng(4);
        const PathSample s = sample_zt(pair, 0.0, sched, letters, rng);
        const auto entries = conditional_rate(s.zt, s.z1, sched, 0.25);
        REQUIRE(entries.size() == 2);
        int subs = 0, inss = 0;
        for (const CellRate& e : entries) {
            const EditOp op = edit_for_cell(s.zt, s.cell_to_xpos, e.cell, e.target);
            if (op.kind == EditKind::Substitute) ++subs;
            if (op.kind == EditKind::Insert) ++inss;
        }
        CHECK(subs == 1);
        CHECK(inss == 1);
    }
    SUBCASE("t = 1 is rejected") {
        CHECK_THROWS_AS(conditional_rate(pair.z0, pair.z1, sched, 1.0), std::invalid_argument);
    }
}

TEST_CASE("pending cells always map to legal edits, exhaustively") {
    // All pairs with tails up to length 3 over two letters, all coupling
    // modes, all reachable z_t configurations.
    const Scheduler sched = cubic_scheduler();
    const auto states = testing::all_sequences(kAb, 3);
    Rng rng(6);
    for (const Sequence& x0 : states) {
        for (const Sequence& x1 : states) {
            std::vector<AlignedPair> pairs{align_optimal(x0, x1, kAb),
                                           align_pad_right(x0, x1, kAb),
                                           align_worst_case(x0, x1, kAb)};
            pairs.push_back(align_uniform_x0(x1, {1, 1}, kAb, rng));
            for (const AlignedPair& pair : pairs) {
                std::vector<int> free_cells;
                for (int i = 0; i < pair.cells(); ++i)
                    if (pair.z0[static_cast<size_t>(i)] != pair.z1[static_cast<size_t>(i)])
                        free_cells.push_back(i);
                for (uint32_t mask = 0; mask < (1u << free_cells.size()); ++mask) {
                    AlignedSeq zt = pair.z0;
                    for (size_t c = 0; c < free_cells.size(); ++c)
                        if (mask & (1u << c))
                            zt[static_cast<size_t>(free_cells[c])] =
                                pair.z1[static_cast<size_t>(free_cells[c])];
                    const Sequence xt = rm_blanks(zt, kAb);
                    std::vector<int32_t> cell_to_xpos(zt.size(), -1);
                    int pos = 0;
                    for (size_t i = 0; i < zt.size(); ++i)
                        if (zt[i] != kBlank) cell_to_xpos[i] = pos++;
                    for (const CellRate& e : conditional_rate(zt, pair.z1, sched, 0.5)) {
                        const EditOp op = edit_for_cell(zt, cell_to_xpos, e.cell, e.target);
                        AlignedSeq flipped = zt;
                        flipped[static_cast<size_t>(e.cell)] = e.target;
                        REQUIRE(apply_edit(xt, op, kAb, 64) == rm_blanks(flipped, kAb));
                    }
                }
            }
        }
    }
}

TEST_CASE("switch times drawn by the inverse method follow kappa") {
    const Scheduler sched = cubic_scheduler();
    Rng rng(7);
    std::vector<double> samples;
    samples.reserve(100'000);
    for (int i = 0; i < 100'000; ++i) samples.push_back(sched.kappa_inv(rng.uniform()));
    const double ks = ks_statistic(std::move(samples), [&](double t) { return sched.kappa(t); });
    CHECK(ks < 0.01);
}

TEST_CASE("propagation state") {
    const Scheduler sched = cubic_scheduler();

    SUBCASE("zero propagation reduces to independent switches") {
        Rng rng(8);
        for (int trial = 0; trial < 50; ++trial) {
            const PropagationState prop = sample_propagation(6, 0.6, sched, 0.0, rng);
            for (int j = 0; j < prop.n; ++j)
                CHECK(static_cast<bool>(prop.m[static_cast<size_t>(j)]) ==
                      (prop.switch_times[static_cast<size_t>(j)] <= 0.6));
        }
    }
    SUBCASE("everything is recruited at t = 1") {
        Rng rng(9);
        const PropagationState prop = sample_propagation(8, 1.0, sched, 2.0, rng);
        for (int j = 0; j < prop.n; ++j) CHECK(prop.m[static_cast<size_t>(j)] == 1);
    }
    SUBCASE("effective weights add lambda_prop per recruiting source") {
        PropagationState prop;
        prop.n = 3;
        prop.t = 0.5;
        prop.lambda_prop = 2.0;
        prop.switch_times = {0.2, 0.9, 0.9};  // only the first source is active
        prop.left_count = {0, 0, 0};
        prop.right_count = {1, 0, 0};  // source 0 covers cells 0 and 1
        prop.m = {1, 1, 0};
        const auto w = effective_weights(prop, sched, 0.5);
        const double indep = sched.weight(0.5);
        // cell 0: neighbor 1 covered by source 0; cell 1: neighbor 0 covered;
        // cell 2: neighbor 1 covered. One recruiting source each.
        CHECK(w[0] == doctest::Approx(indep + 2.0));
        CHECK(w[1] == doctest::Approx(indep + 2.0));
        CHECK(w[2] == doctest::Approx(indep + 2.0));
    }
    SUBCASE("no active sources leaves the independent rate everywhere") {
        PropagationState prop;
        prop.n = 4;
        prop.t = 0.3;
        prop.lambda_prop = 5.0;
        prop.switch_times = {0.9, 0.9, 0.9, 0.9};
        prop.left_count.assign(4, 0);
        prop.right_count.assign(4, 0);
        prop.m.assign(4, 0);
        const auto w = effective_weights(prop, sched, 0.3);
        for (double v : w) CHECK(v == doctest::Approx(sched.weight(0.3)));
    }
    SUBCASE("two adjacent active sources double the neighbor bonus") {
        PropagationState prop;
        prop.n = 3;
        prop.t = 0.5;
        prop.lambda_prop = 1.5;
        prop.switch_times = {0.1, 0.1, 0.9};
        prop.left_count = {0, 0, 0};
        prop.right_count = {0, 0, 0};
        prop.m = {1, 1, 0};
        const auto w = effective_weights(prop, sched, 0.5);
        // cell 1 has active neighbors on both sides? only cells 0 and 1 are
        // active sources; cell 1's neighbors are cells 0 (covered by source 0)
        // and 2 (covered by nobody) -> one source; cell 2's neighbor 1 is
        // covered by source 1 -> one source; cell 0's neighbor 1 by source 1.
        const double indep = sched.weight(0.5);
        CHECK(w[0] == doctest::Approx(indep + 1.5));
        CHECK(w[1] == doctest::Approx(indep + 1.5));
        CHECK(w[2] == doctest::Approx(indep + 1.5));
    }
}

TEST_CASE("localized path sample uses the propagation mask and weights") {
    const Scheduler sched = cubic_scheduler();
    Rng rng(10);
    const AlignedPair pair = align_worst_case(seq(kAb, {0, 1, 0}), seq(kAb, {1, 1}), kAb);
    const PathSample s = sample_zt_localized(pair, 0.45, sched, 3.0, kAb, rng);
    CHECK(s.xt == rm_blanks(s.zt, kAb));
    const double indep = sched.weight(0.45);
    for (double w : s.weights) CHECK(w >= indep - 1e-12);

    Rng rng2(11);
    const PathSample s0 = sample_zt_localized(pair, 0.45, sched, 0.0, kAb, rng2);
    for (double w : s0.weights) CHECK(w == doctest::Approx(indep));
}
