#pragma once

// Brute-force ground truth on enumerable state spaces.
//
// Everything here is built by exhaustive enumeration and numerical quadrature
// only — none of it shares rate-evaluation code with the model, training, or
// sampler paths it audits. Spaces are capped at 2000 states.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "editflow/alignment.hpp"
#include "editflow/paths.hpp"
#include "editflow/rate_model.hpp"
#include "editflow/sampler.hpp"
#include "editflow/scheduler.hpp"
#include "editflow/sequence.hpp"

namespace editflow {

struct EnumeratedSpace {
    static constexpr int64_t kMaxStates = 2000;

    Vocab vocab;
    int max_tail = 0;
    int n_max = 1;  // max_tail + 1
    std::vector<Sequence> states;
    std::vector<std::vector<std::pair<EditOp, int>>> neighbors;

    int size() const { return static_cast<int>(states.size()); }
    int index_of(const Sequence& x) const;  // throws std::out_of_range off-space
};

EnumeratedSpace build_space(const Vocab& vocab, int max_tail);

// A finite coupling over aligned pairs; weights sum to 1.
struct CouplingAtom {
    AlignedPair pair;
    double weight = 0.0;
};

struct Coupling {
    std::vector<CouplingAtom> atoms;
    int max_cells() const;
};

struct WeightedSequence {
    Sequence x;
    double weight = 0.0;
};

Coupling point_coupling(const Sequence& x0, const Sequence& x1, CouplingMode mode,
                        const Vocab& vocab);
// Independent coupling of two finite marginals, aligned per `mode`.
Coupling product_coupling(std::span<const WeightedSequence> source,
                          std::span<const WeightedSequence> target, CouplingMode mode,
                          const Vocab& vocab);
// Exhaustive enumeration of the randomized uniform-x0 construction: every
// distinct cell ordering and every x0 token assignment, equally weighted.
Coupling uniform_x0_coupling(std::span<const WeightedSequence> target, const UniformX0Config& cfg,
                             const Vocab& vocab);

// All length-`tail_len` sequences, each with the given total probability
// split evenly.
std::vector<WeightedSequence> uniform_length_atoms(const Vocab& vocab, int tail_len);

// Exact time-t marginals and marginal transition rates of the coupled path.
// rate is |S| x |S| row-major indexed [from][to] with diagonal = -row sum.
struct EnumeratedMarginal {
    std::vector<double> p;
    std::vector<double> rate;
};

EnumeratedMarginal enumerate_marginal(const EnumeratedSpace& space, const Coupling& coupling,
                                      const Scheduler& sched, double t);
std::vector<double> enumerate_pt(const EnumeratedSpace& space, const Coupling& coupling,
                                 const Scheduler& sched, double t);

// Reverse-time rates via flux balance: rev[y][x] * p[y] = rate[x][y] * p[x].
std::vector<double> reverse_rate_matrix(const EnumeratedMarginal& m);

// Splits a state-level rate row across the edit operations realizing each
// transition and packs the result as a RatePrediction for the from-state.
RatePrediction prediction_from_rate_row(const EnumeratedSpace& space, std::span<const double> row,
                                        int from_idx);

// Per-step prediction tables for simulating the exact marginal rates:
// result[k][s] holds the prediction for state s at t = k / steps.
std::vector<std::vector<RatePrediction>> precompute_step_predictions(
    const EnumeratedSpace& space, const Coupling& coupling, const Scheduler& sched, int steps);

// Fourth-order fixed-step integration of dp/dt(x) = sum_y rate[y][x] p(y).
// `rate_at` fills a |S|^2 row-major [from][to] matrix for a given time.
// Throws when the distribution drifts from normalization or nonnegativity.
std::vector<double> integrate_kfe(
    const std::function<void(double, std::vector<double>&)>& rate_at, std::vector<double> p0,
    double t0, double t1, double step,
    const std::function<void(double, const std::vector<double>&)>& observer = {});

struct VerifyReport {
    bool pass = true;
    double max_residual = 0.0;
    std::vector<std::string> lines;

    void note(const std::string& line) { lines.push_back(line); }
    void check(bool ok, const std::string& line);
    std::string summary() const;
};

// Max-norm residual of the Kolmogorov forward equation for the enumerated
// marginal rate against the enumerated p_t, with d/dt taken by a five-point
// stencil at spacing 1e-5; also checks the rate conditions.
VerifyReport verify_theorem1(const EnumeratedSpace& space, const Coupling& coupling,
                             const Scheduler& sched, std::span<const double> t_grid,
                             double tol = 1e-8);

// Checks the two auxiliary-rate constructions: the deterministic lift of a
// blank-stripped cell chain, and the time-independent observation rate on an
// abstract three-state instance.
VerifyReport verify_rate_lemmas(double tol = 1e-8);

// Flux identity and reverse-equation residuals plus a composite
// forward-then-reverse step applied to exact samples from p_t.
VerifyReport verify_corrector(const EnumeratedSpace& space, const Coupling& coupling,
                              const Scheduler& sched, double t, double h, int num_samples,
                              uint64_t seed, double tv_tol = 0.02, double flux_tol = 1e-12);

// Unit-cost edit distance between the tails of two sequences.
int edit_distance(const Sequence& x0, const Sequence& x1);

// Named suites behind the `verify` command; fixtures are built in.
VerifyReport verify_kfe_suite();
VerifyReport verify_theorem1_suite();
// Two-sided empirical comparison needs ~10^6 samples per side before the
// estimator noise over the 2^8 mask patterns drops safely under the 0.02
// tolerance; the suite also checks each sampler against the exact law.
VerifyReport verify_propagation_suite(uint64_t seed, int samples = 1'000'000, double tv_tol = 0.02,
                                      double ks_tol = 0.01);
VerifyReport verify_corrector_suite(uint64_t seed, int samples = 100'000);
VerifyReport verify_cfg_identities(uint64_t seed);

// Exact event-driven draw of the propagation mask at time t: inhomogeneous
// diagonal switches simulated by thinning, neighbor recruitment by
// exponential clocks. Ground truth for sample_propagation.
std::vector<uint8_t> propagation_mask_by_events(int n, double t, const Scheduler& sched,
                                                double lambda_prop, Rng& rng);

// Exact law of the propagation mask at time t, indexed by bit pattern
// (bit j = cell j recruited). Rows are independent, each covering a random
// interval; P(mask = S) follows from P(mask subset of T) by inclusion-
// exclusion, with the interval law integrated by Simpson quadrature over the
// switch-time distribution. Practical for n up to ~12.
std::vector<double> exact_propagation_mask_distribution(int n, double t, const Scheduler& sched,
                                                        double lambda_prop,
                                                        int quad_points = 4096);

}  // namespace editflow
