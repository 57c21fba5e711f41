#include "editflow/paths.hpp"

#include <limits>
#include <stdexcept>

namespace editflow {

namespace {

void finalize_sample(PathSample& s, const Vocab& vocab) {
    s.xt = rm_blanks(s.zt, vocab);
    s.cell_to_xpos.assign(s.zt.size(), -1);
    int pos = 0;
    for (size_t i = 0; i < s.zt.size(); ++i) {
        if (s.zt[i] != kBlank) s.cell_to_xpos[i] = pos++;
    }
}

}  // namespace

PathSample sample_zt(const AlignedPair& pair, double t, const Scheduler& sched, const Vocab& vocab,
                     Rng& rng) {
    if (pair.z0.size() != pair.z1.size())
        throw std::invalid_argument("sample_zt: pair sides differ in length");
    const double k = sched.kappa(t);
    PathSample s;
    s.t = t;
    s.z0 = pair.z0;
    s.z1 = pair.z1;
    s.zt.resize(pair.z0.size());
    for (size_t i = 0; i < s.zt.size(); ++i) {
        s.zt[i] = rng.uniform() < k ? pair.z1[i] : pair.z0[i];
    }
    const double w = k < 1.0 ? sched.kappa_dot(t) / (1.0 - k)
                             : std::numeric_limits<double>::infinity();
    s.weights.assign(s.zt.size(), w);
    finalize_sample(s, vocab);
    return s;
}

std::vector<CellRate> conditional_rate(const AlignedSeq& zt, const AlignedSeq& z1,
                                       const Scheduler& sched, double t) {
    if (zt.size() != z1.size())
        throw std::invalid_argument("conditional_rate: length mismatch");
    if (!(t < 1.0)) throw std::invalid_argument("conditional_rate: requires t < 1");
    const double rate = sched.weight(t);
    std::vector<CellRate> out;
    for (size_t i = 0; i < zt.size(); ++i) {
        if (zt[i] != z1[i]) out.push_back({static_cast<int>(i), z1[i], rate});
    }
    return out;
}

EditOp edit_for_cell(const AlignedSeq& zt, const std::vector<int32_t>& cell_to_xpos, int cell,
                     TokenId target) {
    const size_t ci = static_cast<size_t>(cell);
    if (ci >= zt.size()) throw std::out_of_range("edit_for_cell: cell out of range");
    const TokenId cur = zt[ci];
    if (cur == kBlank && target == kBlank)
        throw std::invalid_argument("edit_for_cell: blank-to-blank cell is not an edit");
    if (cur == kBlank) {
        // Anchor at the x-position of the nearest non-blank cell to the left.
        for (int j = cell - 1; j >= 0; --j) {
            if (cell_to_xpos[static_cast<size_t>(j)] >= 0)
                return {EditKind::Insert, cell_to_xpos[static_cast<size_t>(j)], target};
        }
        throw std::invalid_argument("edit_for_cell: no non-blank cell left of insert");
    }
    const int32_t pos = cell_to_xpos[ci];
    if (pos < 0) throw std::invalid_argument("edit_for_cell: stale cell_to_xpos");
    if (target == kBlank) return {EditKind::Delete, pos, -1};
    return {EditKind::Substitute, pos, target};
}

PropagationState sample_propagation(int n, double t, const Scheduler& sched, double lambda_prop,
                                    Rng& rng) {
    if (n < 1) throw std::invalid_argument("sample_propagation: n must be >= 1");
    if (lambda_prop < 0.0)
        throw std::invalid_argument("sample_propagation: lambda_prop must be >= 0");
    PropagationState prop;
    prop.n = n;
    prop.t = t;
    prop.lambda_prop = lambda_prop;
    prop.switch_times.resize(static_cast<size_t>(n));
    prop.left_count.assign(static_cast<size_t>(n), 0);
    prop.right_count.assign(static_cast<size_t>(n), 0);
    prop.m.assign(static_cast<size_t>(n), 0);

    for (int i = 0; i < n; ++i) {
        prop.switch_times[static_cast<size_t>(i)] = sched.kappa_inv(rng.uniform());
    }
    for (int i = 0; i < n; ++i) {
        if (!prop.active(i)) continue;
        const double dt = t - prop.switch_times[static_cast<size_t>(i)];
        prop.left_count[static_cast<size_t>(i)] = rng.poisson(lambda_prop * dt);
        prop.right_count[static_cast<size_t>(i)] = rng.poisson(lambda_prop * dt);
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            if (prop.covers(i, j)) {
                prop.m[static_cast<size_t>(j)] = 1;
                break;
            }
        }
    }
    return prop;
}

std::vector<double> effective_weights(const PropagationState& prop, const Scheduler& sched,
                                      double t) {
    if (!(t < 1.0)) throw std::invalid_argument("effective_weights: requires t < 1");
    const double indep = sched.weight(t);
    std::vector<double> w(static_cast<size_t>(prop.n), indep);
    for (int cell = 0; cell < prop.n; ++cell) {
        int recruiting_sources = 0;
        for (int src = 0; src < prop.n; ++src) {
            if (prop.covers(src, cell - 1) || prop.covers(src, cell + 1)) ++recruiting_sources;
        }
        w[static_cast<size_t>(cell)] += recruiting_sources * prop.lambda_prop;
    }
    return w;
}

PathSample sample_zt_localized(const AlignedPair& pair, double t, const Scheduler& sched,
                               double lambda_prop, const Vocab& vocab, Rng& rng) {
    if (pair.z0.size() != pair.z1.size())
        throw std::invalid_argument("sample_zt_localized: pair sides differ in length");
    PropagationState prop =
        sample_propagation(static_cast<int>(pair.z0.size()), t, sched, lambda_prop, rng);
    PathSample s;
    s.t = t;
    s.z0 = pair.z0;
    s.z1 = pair.z1;
    s.zt.resize(pair.z0.size());
    for (size_t i = 0; i < s.zt.size(); ++i) {
        s.zt[i] = prop.m[i] ? pair.z1[i] : pair.z0[i];
    }
    s.weights = effective_weights(prop, sched, t);
    finalize_sample(s, vocab);
    return s;
}

}  // namespace editflow
