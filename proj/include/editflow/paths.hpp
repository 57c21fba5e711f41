#pragma once

// Probability-path sampling over aligned sequences.
//
// The factorized mixture path flips each cell of z0 to its z1 value
// independently with probability kappa(t). The localized variant replaces the
// independent per-cell switches with a propagation process: once a cell has
// switched, it recruits its neighbors at a constant rate, which clusters the
// pending edits spatially.

#include <cstdint>
#include <vector>

#include "editflow/alignment.hpp"
#include "editflow/rng.hpp"
#include "editflow/scheduler.hpp"
#include "editflow/sequence.hpp"

namespace editflow {

// One draw from the conditional path at time t.
struct PathSample {
    double t = 0.0;
    AlignedSeq z0, z1, zt;
    Sequence xt;                        // rm_blanks(zt)
    std::vector<double> weights;        // per-cell loss weight; +inf when kappa(t) == 1
    std::vector<int32_t> cell_to_xpos;  // cell index -> position in xt, -1 for blank cells

    // Conditioning view used when this sample is scored by a rate model.
    int cond_tokens = 0;
    bool cond_visible = true;

    // Importance factor against the uniform time law; multiplies the whole
    // per-sample loss when t was drawn from a reweighted density.
    double importance = 1.0;

    int cells() const { return static_cast<int>(zt.size()); }
};

PathSample sample_zt(const AlignedPair& pair, double t, const Scheduler& sched, const Vocab& vocab,
                     Rng& rng);

struct CellRate {
    int cell;        // aligned cell index with zt[cell] != z1[cell]
    TokenId target;  // z1 value at that cell
    double rate;
};

// One entry per cell still disagreeing with z1; each corresponds to exactly
// one edit operation on xt. Requires t < 1.
std::vector<CellRate> conditional_rate(const AlignedSeq& zt, const AlignedSeq& z1,
                                       const Scheduler& sched, double t);

// The edit on xt realized by setting cell `cell` of zt to `target`.
// A blank-to-token cell becomes an insert anchored at the nearest non-blank
// cell to its left (the BOS cell guarantees one exists); a token-to-blank cell
// a delete; a token-to-token cell a substitution.
EditOp edit_for_cell(const AlignedSeq& zt, const std::vector<int32_t>& cell_to_xpos, int cell,
                     TokenId target);

// State of the propagation process at one time t: per-cell switch times for
// the diagonal sources, the number of neighbors each active source has
// recruited on either side, and the resulting column-OR mask.
struct PropagationState {
    int n = 0;
    double t = 0.0;
    double lambda_prop = 0.0;
    std::vector<double> switch_times;  // t*_i drawn by the inverse method
    std::vector<int32_t> left_count, right_count;
    std::vector<uint8_t> m;  // m[j] = OR over sources i of covers(i, j)

    bool active(int i) const { return switch_times[static_cast<size_t>(i)] <= t; }
    // Whether source row i covers column j.
    bool covers(int i, int j) const {
        if (!active(i) || j < 0 || j >= n) return false;
        if (j == i) return true;
        if (j < i) return i - j <= left_count[static_cast<size_t>(i)];
        return j - i <= right_count[static_cast<size_t>(i)];
    }
};

PropagationState sample_propagation(int n, double t, const Scheduler& sched, double lambda_prop,
                                    Rng& rng);

// Per-cell effective rate: the independent rate plus lambda_prop for every
// source whose coverage touches a neighboring cell. Requires t < 1.
std::vector<double> effective_weights(const PropagationState& prop, const Scheduler& sched,
                                      double t);

// Path sample driven by the propagation mask; weights are the effective rates.
PathSample sample_zt_localized(const AlignedPair& pair, double t, const Scheduler& sched,
                               double lambda_prop, const Vocab& vocab, Rng& rng);

}  // namespace editflow
