#include <cmath>
#include <cstdio>

#include "editflow/oracle.hpp"
#include "editflow/stats.hpp"

// Named verifier suites behind the `verify` command. Fixtures are fixed here;
// the parametric checkers they drive live in oracle.cpp.

namespace editflow {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

}  // namespace

VerifyReport verify_kfe_suite() {
    VerifyReport rep;

    // Two states, constant rate r in both directions, started at (1, 0):
    // p_t(state 1) = (1 - exp(-2 r t)) / 2.
    {
        const double r = 1.7;
        auto rate_at = [&](double, std::vector<double>& m) {
            m[0] = -r;
            m[1] = r;
            m[2] = r;
            m[3] = -r;
        };
        double max_err = 0.0;
        const auto observer = [&](double t, const std::vector<double>& p) {
            const double expected = (1.0 - std::exp(-2.0 * r * t)) / 2.0;
            max_err = std::max(max_err, std::abs(p[1] - expected));
        };
        integrate_kfe(rate_at, {1.0, 0.0}, 0.0, 1.0, 1e-3, observer);
        rep.max_residual = std::max(rep.max_residual, max_err);
        rep.check(max_err < 1e-9,
                  "two-state chain matches the closed form (max err " + fmt(max_err) + ")");
    }

    // Zero rates leave the distribution untouched.
    {
        auto rate_at = [](double, std::vector<double>& m) { std::fill(m.begin(), m.end(), 0.0); };
        const std::vector<double> p = integrate_kfe(rate_at, {0.25, 0.5, 0.25}, 0.0, 1.0, 1e-2);
        const bool ok = p[0] == 0.25 && p[1] == 0.5 && p[2] == 0.25;
        rep.check(ok, "zero rates keep p_t constant");
    }

    // A single-edit conditional path lands on its target.
    {
        const Vocab vocab{2, 0};
        const EnumeratedSpace space = build_space(vocab, 2);
        const Sequence x0 = make_sequence(vocab, std::vector<TokenId>{1});
        const Sequence x1 = make_sequence(vocab, std::vector<TokenId>{1, 0});
        const Coupling coupling = point_coupling(x0, x1, CouplingMode::Optimal, vocab);
        const Scheduler sched = cubic_scheduler();

        auto rate_at = [&](double t, std::vector<double>& m) {
            m = enumerate_marginal(space, coupling, sched, t).rate;
        };
        std::vector<double> p0(static_cast<size_t>(space.size()), 0.0);
        p0[static_cast<size_t>(space.index_of(x0))] = 1.0;
        const double t_end = 1.0 - 3e-4;
        const std::vector<double> p = integrate_kfe(rate_at, p0, 0.0, t_end, 1e-5);
        std::vector<double> target(p.size(), 0.0);
        target[static_cast<size_t>(space.index_of(x1))] = 1.0;
        const double tv = tv_distance(p, target);
        rep.max_residual = std::max(rep.max_residual, tv);
        rep.check(tv < 1e-3, "conditional path reaches its endpoint (tv " + fmt(tv) + ")");
    }

    return rep;
}

VerifyReport verify_theorem1_suite() {
    const Vocab vocab{2, 0};
    const Scheduler sched = cubic_scheduler();
    const std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    const Sequence x0 = make_sequence(vocab, std::vector<TokenId>{0});
    const Sequence x1 = make_sequence(vocab, std::vector<TokenId>{1, 0});

    VerifyReport rep;
    auto run = [&](const Coupling& coupling, const std::string& name) {
        // States reachable along the path never exceed the pair cell count.
        const EnumeratedSpace space = build_space(vocab, coupling.max_cells() - 1);
        VerifyReport sub = verify_theorem1(space, coupling, sched, grid);
        rep.pass = rep.pass && sub.pass;
        rep.max_residual = std::max(rep.max_residual, sub.max_residual);
        rep.note(name + ": max residual " + fmt(sub.max_residual) + " over " +
                 std::to_string(space.size()) + " states");
        for (auto& l : sub.lines)
            if (l.rfind("[FAIL]", 0) == 0) rep.lines.push_back(l);
    };

    for (CouplingMode mode : {CouplingMode::Optimal, CouplingMode::WorstCase}) {
        run(point_coupling(x0, x1, mode, vocab), std::string("point coupling, ") + to_string(mode));
    }
    run(product_coupling(uniform_length_atoms(vocab, 1), uniform_length_atoms(vocab, 2),
                         CouplingMode::Optimal, vocab),
        "uniform product coupling, optimal");
    rep.check(rep.pass, "forward-equation residual below 1e-08 on every coupling");
    return rep;
}

VerifyReport verify_propagation_suite(uint64_t seed, int samples, double tv_tol, double ks_tol) {
    VerifyReport rep;
    const int n = 8;
    const Scheduler sched = cubic_scheduler();
    // One-sided estimator noise scales as 1/sqrt(samples); 0.012 is sized
    // for 10^6 draws.
    const double exact_tol = 0.012 * std::sqrt(1e6 / samples);

    for (double lambda_prop : {1.0, 4.0}) {
        for (double t : {0.3, 0.7}) {
            std::vector<int64_t> two_step(1u << n, 0);
            std::vector<int64_t> event_sim(1u << n, 0);
            std::vector<double> switch_samples;
            switch_samples.reserve(static_cast<size_t>(samples));

            const int64_t count = samples;
            std::vector<uint32_t> a(static_cast<size_t>(samples)), b(static_cast<size_t>(samples));
            std::vector<double> tstar(static_cast<size_t>(samples));
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < count; ++i) {
                Rng rng = Rng::fork(seed, static_cast<uint64_t>(i) * 2);
                const PropagationState prop = sample_propagation(n, t, sched, lambda_prop, rng);
                uint32_t key = 0;
                for (int j = 0; j < n; ++j)
                    if (prop.m[static_cast<size_t>(j)]) key |= 1u << j;
                a[static_cast<size_t>(i)] = key;
                tstar[static_cast<size_t>(i)] = prop.switch_times[0];

                Rng rng2 = Rng::fork(seed, static_cast<uint64_t>(i) * 2 + 1);
                const auto mask = propagation_mask_by_events(n, t, sched, lambda_prop, rng2);
                key = 0;
                for (int j = 0; j < n; ++j)
                    if (mask[static_cast<size_t>(j)]) key |= 1u << j;
                b[static_cast<size_t>(i)] = key;
            }
            for (int64_t i = 0; i < count; ++i) {
                ++two_step[a[static_cast<size_t>(i)]];
                ++event_sim[b[static_cast<size_t>(i)]];
                switch_samples.push_back(tstar[static_cast<size_t>(i)]);
            }

            const auto pa = normalize_counts(two_step);
            const auto pb = normalize_counts(event_sim);
            const double tv = tv_distance(pa, pb);
            rep.max_residual = std::max(rep.max_residual, tv);
            rep.check(tv < tv_tol, "lambda_prop=" + fmt(lambda_prop) + " t=" + fmt(t) +
                                       ": mask distribution tv " + fmt(tv) + " < " + fmt(tv_tol));

            const auto exact = exact_propagation_mask_distribution(n, t, sched, lambda_prop);
            const double tv_exact = tv_distance(pa, exact);
            const double tv_exact_events = tv_distance(pb, exact);
            rep.check(tv_exact < exact_tol, "lambda_prop=" + fmt(lambda_prop) + " t=" + fmt(t) +
                                            ": two-step sampler vs exact law tv " + fmt(tv_exact) +
                                            " < " + fmt(exact_tol));
            rep.check(tv_exact_events < exact_tol,
                      "lambda_prop=" + fmt(lambda_prop) + " t=" + fmt(t) +
                          ": event simulation vs exact law tv " + fmt(tv_exact_events) +
                          " < " + fmt(exact_tol));

            const double ks =
                ks_statistic(std::move(switch_samples), [&](double v) { return sched.kappa(v); });
            rep.check(ks < ks_tol, "lambda_prop=" + fmt(lambda_prop) + " t=" + fmt(t) +
                                       ": switch-time KS " + fmt(ks) + " < " + fmt(ks_tol));
        }
    }
    return rep;
}

VerifyReport verify_corrector_suite(uint64_t seed, int samples) {
    const Vocab vocab{2, 0};
    const EnumeratedSpace space = build_space(vocab, 2);
    const Scheduler sched = cubic_scheduler();
    const Coupling coupling = product_coupling(uniform_length_atoms(vocab, 1),
                                               uniform_length_atoms(vocab, 2),
                                               CouplingMode::Optimal, vocab);
    return verify_corrector(space, coupling, sched, 0.5, 0.01, samples, seed);
}

namespace {

RatePrediction random_prediction(int n, int m, const Sequence& x, Rng& rng) {
    RatePrediction p;
    p.n = n;
    p.m = m;
    p.lam_ins.resize(static_cast<size_t>(n));
    p.lam_del.assign(static_cast<size_t>(n), 0.0);
    p.lam_sub.assign(static_cast<size_t>(n), 0.0);
    p.q_ins.assign(static_cast<size_t>(n) * m, 0.0);
    p.q_sub.assign(static_cast<size_t>(n) * m, 0.0);
    for (int i = 0; i < n; ++i) {
        p.lam_ins[static_cast<size_t>(i)] = std::exp(rng.normal());
        if (i >= 1) {
            p.lam_del[static_cast<size_t>(i)] = std::exp(rng.normal());
            p.lam_sub[static_cast<size_t>(i)] = std::exp(rng.normal());
        }
        double total = 0.0;
        for (int a = 0; a < m; ++a) {
            const double v = std::exp(rng.normal());
            p.q_ins[static_cast<size_t>(i) * m + a] = v;
            total += v;
        }
        for (int a = 0; a < m; ++a) p.q_ins[static_cast<size_t>(i) * m + a] /= total;
        if (i >= 1) {
            total = 0.0;
            for (int a = 0; a < m; ++a) {
                if (a == x[i]) continue;
                const double v = std::exp(rng.normal());
                p.q_sub[static_cast<size_t>(i) * m + a] = v;
                total += v;
            }
            for (int a = 0; a < m; ++a) p.q_sub[static_cast<size_t>(i) * m + a] /= total;
        }
    }
    return p;
}

bool same_prediction(const RatePrediction& a, const RatePrediction& b) {
    return a.lam_ins == b.lam_ins && a.lam_del == b.lam_del && a.lam_sub == b.lam_sub &&
           a.q_ins == b.q_ins && a.q_sub == b.q_sub;
}

}  // namespace

VerifyReport verify_cfg_identities(uint64_t seed) {
    VerifyReport rep;
    const Vocab vocab{5, 0};
    Rng rng(seed);
    const Sequence x = make_sequence(vocab, std::vector<TokenId>{2, 4, 1});
    const int n = x.size();

    for (int trial = 0; trial < 16; ++trial) {
        const RatePrediction cond = random_prediction(n, vocab.size, x, rng);
        const RatePrediction uncond = random_prediction(n, vocab.size, x, rng);

        const bool weighted_w1 =
            same_prediction(apply_cfg(cond, uncond, 1.0, CfgVariant::Weighted), cond);
        const bool fixed_w1 = same_prediction(apply_cfg(cond, uncond, 1.0, CfgVariant::Fixed), cond);
        if (trial == 0) {
            rep.check(weighted_w1, "weighted guidance at w=1 returns the conditional prediction");
            rep.check(fixed_w1, "fixed guidance at w=1 returns the conditional prediction");
        } else if (!(weighted_w1 && fixed_w1)) {
            rep.check(false, "w=1 identity failed on a random trial");
        }

        const RatePrediction naive0 = apply_cfg(cond, uncond, 0.0, CfgVariant::Naive);
        const bool naive_w0 = naive0.lam_ins == cond.lam_ins && naive0.lam_del == cond.lam_del &&
                              naive0.lam_sub == cond.lam_sub;
        if (trial == 0) rep.check(naive_w0, "naive guidance at w=0 keeps the conditional rates");
        else if (!naive_w0) rep.check(false, "naive w=0 identity failed on a random trial");

        const RatePrediction fx_a = apply_cfg(cond, uncond, 0.0, CfgVariant::Fixed);
        const RatePrediction fx_b = apply_cfg(cond, uncond, 0.7, CfgVariant::Fixed);
        const RatePrediction fx_c = apply_cfg(cond, uncond, 2.5, CfgVariant::Fixed);
        const bool fixed_indep = fx_a.lam_ins == fx_b.lam_ins && fx_b.lam_ins == fx_c.lam_ins &&
                                 fx_a.lam_del == fx_b.lam_del && fx_b.lam_del == fx_c.lam_del &&
                                 fx_a.lam_sub == fx_b.lam_sub && fx_b.lam_sub == fx_c.lam_sub;
        if (trial == 0) rep.check(fixed_indep, "fixed guidance rates do not depend on w");
        else if (!fixed_indep) rep.check(false, "fixed-rate independence failed on a random trial");

        const RatePrediction naive1 = apply_cfg(cond, uncond, 1.0, CfgVariant::Naive);
        const bool naive_w1_q = naive1.q_ins == cond.q_ins && naive1.q_sub == cond.q_sub;
        if (trial == 0)
            rep.check(naive_w1_q, "naive guidance at w=1 mixes token distributions to conditional");
        else if (!naive_w1_q) rep.check(false, "naive w=1 q identity failed on a random trial");
    }

    return rep;
}

}  // namespace editflow
