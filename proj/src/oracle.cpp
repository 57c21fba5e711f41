#include "editflow/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace editflow {

namespace {

int64_t ipow(int64_t base, int exp) {
    int64_t v = 1;
    for (int i = 0; i < exp; ++i) v *= base;
    return v;
}

}  // namespace

int EnumeratedSpace::index_of(const Sequence& x) const {
    const int tail = x.size() - 1;
    if (tail < 0 || tail > max_tail) throw std::out_of_range("index_of: length outside space");
    int64_t idx = 0;
    for (int k = 0; k < tail; ++k) idx += ipow(vocab.size, k);
    int64_t rank = 0;
    for (int i = 1; i < x.size(); ++i) {
        if (!vocab.valid_token(x[i])) throw std::out_of_range("index_of: token outside space");
        rank = rank * vocab.size + x[i];
    }
    return static_cast<int>(idx + rank);
}

EnumeratedSpace build_space(const Vocab& vocab, int max_tail) {
    vocab.validate();
    int64_t total = 0;
    for (int k = 0; k <= max_tail; ++k) total += ipow(vocab.size, k);
    if (total > EnumeratedSpace::kMaxStates)
        throw std::invalid_argument("build_space: more than " +
                                    std::to_string(EnumeratedSpace::kMaxStates) + " states");

    EnumeratedSpace space;
    space.vocab = vocab;
    space.max_tail = max_tail;
    space.n_max = max_tail + 1;
    space.states.reserve(static_cast<size_t>(total));
    for (int k = 0; k <= max_tail; ++k) {
        const int64_t count = ipow(vocab.size, k);
        std::vector<TokenId> tail(static_cast<size_t>(k), 0);
        for (int64_t r = 0; r < count; ++r) {
            int64_t v = r;
            for (int i = k - 1; i >= 0; --i) {
                tail[static_cast<size_t>(i)] = static_cast<TokenId>(v % vocab.size);
                v /= vocab.size;
            }
            space.states.push_back(make_sequence(vocab, tail));
        }
    }
    space.neighbors.resize(space.states.size());
    for (size_t s = 0; s < space.states.size(); ++s) {
        for (auto& [op, result] : enumerate_edits(space.states[s], vocab, space.n_max)) {
            space.neighbors[s].emplace_back(op, space.index_of(result));
        }
    }
    return space;
}

int Coupling::max_cells() const {
    int n = 0;
    for (const CouplingAtom& a : atoms) n = std::max(n, a.pair.cells());
    return n;
}

namespace {

AlignedPair align_by_mode(const Sequence& x0, const Sequence& x1, CouplingMode mode,
                          const Vocab& vocab) {
    switch (mode) {
        case CouplingMode::Optimal: return align_optimal(x0, x1, vocab);
        case CouplingMode::PadRight: return align_pad_right(x0, x1, vocab);
        case CouplingMode::WorstCase: return align_worst_case(x0, x1, vocab);
        case CouplingMode::UniformX0:
            throw std::invalid_argument("align_by_mode: uniform_x0 needs its own constructor");
    }
    throw std::invalid_argument("align_by_mode: unknown mode");
}

void check_weights(const Coupling& c) {
    double total = 0.0;
    for (const CouplingAtom& a : c.atoms) total += a.weight;
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("coupling: weights sum to " + std::to_string(total));
}

}  // namespace

Coupling point_coupling(const Sequence& x0, const Sequence& x1, CouplingMode mode,
                        const Vocab& vocab) {
    Coupling c;
    c.atoms.push_back({align_by_mode(x0, x1, mode, vocab), 1.0});
    return c;
}

Coupling product_coupling(std::span<const WeightedSequence> source,
                          std::span<const WeightedSequence> target, CouplingMode mode,
                          const Vocab& vocab) {
    Coupling c;
    for (const WeightedSequence& s : source) {
        for (const WeightedSequence& t : target) {
            c.atoms.push_back({align_by_mode(s.x, t.x, mode, vocab), s.weight * t.weight});
        }
    }
    check_weights(c);
    return c;
}

Coupling uniform_x0_coupling(std::span<const WeightedSequence> target, const UniformX0Config& cfg,
                             const Vocab& vocab) {
    constexpr int64_t kMaxAtoms = 2'000'000;
    Coupling c;
    for (const WeightedSequence& tgt : target) {
        const int len = tgt.x.size() - 1;
        const int n_sub = std::min(len, cfg.num_substitute);
        const int n_del = cfg.num_delete + cfg.num_substitute - n_sub;
        const int draws = n_del + n_sub;

        enum : uint8_t { Ins, Del, Sub };
        std::vector<uint8_t> labels;
        labels.insert(labels.end(), static_cast<size_t>(len - n_sub), Ins);
        labels.insert(labels.end(), static_cast<size_t>(n_del), Del);
        labels.insert(labels.end(), static_cast<size_t>(n_sub), Sub);
        std::sort(labels.begin(), labels.end());

        // Count distinct orderings first so each atom carries its exact weight.
        int64_t orderings = 0;
        {
            std::vector<uint8_t> probe = labels;
            do {
                ++orderings;
            } while (std::next_permutation(probe.begin(), probe.end()));
        }
        const int64_t assignments = ipow(vocab.size, draws);
        if (static_cast<int64_t>(c.atoms.size()) + orderings * assignments > kMaxAtoms)
            throw std::invalid_argument("uniform_x0_coupling: atom budget exhausted");
        const double atom_weight =
            tgt.weight / (static_cast<double>(orderings) * static_cast<double>(assignments));

        std::vector<TokenId> x0_toks(static_cast<size_t>(draws), 0);
        do {
            for (int64_t asg = 0; asg < assignments; ++asg) {
                int64_t v = asg;
                for (int i = draws - 1; i >= 0; --i) {
                    x0_toks[static_cast<size_t>(i)] = static_cast<TokenId>(v % vocab.size);
                    v /= vocab.size;
                }
                AlignedPair pair;
                pair.provenance = CouplingMode::UniformX0;
                pair.z0.push_back(vocab.bos);
                pair.z1.push_back(vocab.bos);
                size_t xi = 0;
                int ti = 0;
                for (uint8_t label : labels) {
                    switch (label) {
                        case Ins:
                            pair.z0.push_back(kBlank);
                            pair.z1.push_back(tgt.x[++ti]);
                            break;
                        case Del:
                            pair.z0.push_back(x0_toks[xi++]);
                            pair.z1.push_back(kBlank);
                            break;
                        case Sub:
                            pair.z0.push_back(x0_toks[xi++]);
                            pair.z1.push_back(tgt.x[++ti]);
                            break;
                    }
                }
                c.atoms.push_back({std::move(pair), atom_weight});
            }
        } while (std::next_permutation(labels.begin(), labels.end()));
    }
    check_weights(c);
    return c;
}

std::vector<WeightedSequence> uniform_length_atoms(const Vocab& vocab, int tail_len) {
    const int64_t count = ipow(vocab.size, tail_len);
    std::vector<WeightedSequence> out;
    out.reserve(static_cast<size_t>(count));
    std::vector<TokenId> tail(static_cast<size_t>(tail_len), 0);
    for (int64_t r = 0; r < count; ++r) {
        int64_t v = r;
        for (int i = tail_len - 1; i >= 0; --i) {
            tail[static_cast<size_t>(i)] = static_cast<TokenId>(v % vocab.size);
            v /= vocab.size;
        }
        out.push_back({make_sequence(vocab, tail), 1.0 / static_cast<double>(count)});
    }
    return out;
}

namespace {

constexpr int kMaxFreeCells = 24;

std::vector<int> disagreeing_cells(const AlignedPair& pair) {
    std::vector<int> cells;
    for (int i = 0; i < pair.cells(); ++i)
        if (pair.z0[static_cast<size_t>(i)] != pair.z1[static_cast<size_t>(i)]) cells.push_back(i);
    if (static_cast<int>(cells.size()) > kMaxFreeCells)
        throw std::invalid_argument("enumerate_marginal: too many disagreeing cells");
    return cells;
}

template <typename PerState, typename PerFlip>
void scan_coupling(const EnumeratedSpace& space, const Coupling& coupling, double kappa,
                   PerState&& per_state, PerFlip&& per_flip, bool with_flips) {
    AlignedSeq zt;
    for (const CouplingAtom& atom : coupling.atoms) {
        const std::vector<int> cells = disagreeing_cells(atom.pair);
        const uint32_t masks = 1u << cells.size();
        for (uint32_t mask = 0; mask < masks; ++mask) {
            zt = atom.pair.z0;
            double prob = atom.weight;
            for (size_t c = 0; c < cells.size(); ++c) {
                if (mask & (1u << c)) {
                    zt[static_cast<size_t>(cells[c])] =
                        atom.pair.z1[static_cast<size_t>(cells[c])];
                    prob *= kappa;
                } else {
                    prob *= 1.0 - kappa;
                }
            }
            if (prob == 0.0) continue;
            const int from = space.index_of(rm_blanks(zt, space.vocab));
            per_state(from, prob);
            if (!with_flips) continue;
            for (size_t c = 0; c < cells.size(); ++c) {
                if (mask & (1u << c)) continue;
                const int cell = cells[c];
                const TokenId saved = zt[static_cast<size_t>(cell)];
                zt[static_cast<size_t>(cell)] = atom.pair.z1[static_cast<size_t>(cell)];
                const int to = space.index_of(rm_blanks(zt, space.vocab));
                zt[static_cast<size_t>(cell)] = saved;
                per_flip(from, to, prob);
            }
        }
    }
}

}  // namespace

EnumeratedMarginal enumerate_marginal(const EnumeratedSpace& space, const Coupling& coupling,
                                      const Scheduler& sched, double t) {
    const size_t S = static_cast<size_t>(space.size());
    EnumeratedMarginal out;
    out.p.assign(S, 0.0);
    out.rate.assign(S * S, 0.0);
    const double w = sched.weight(t);
    scan_coupling(
        space, coupling, sched.kappa(t),
        [&](int from, double prob) { out.p[static_cast<size_t>(from)] += prob; },
        [&](int from, int to, double prob) {
            out.rate[static_cast<size_t>(from) * S + static_cast<size_t>(to)] += prob * w;
        },
        true);
    for (size_t from = 0; from < S; ++from) {
        double row_sum = 0.0;
        for (size_t to = 0; to < S; ++to) {
            if (to == from) continue;
            double& r = out.rate[from * S + to];
            r = out.p[from] > 0.0 ? r / out.p[from] : 0.0;
            row_sum += r;
        }
        out.rate[from * S + from] = -row_sum;
    }
    return out;
}

std::vector<double> enumerate_pt(const EnumeratedSpace& space, const Coupling& coupling,
                                 const Scheduler& sched, double t) {
    std::vector<double> p(static_cast<size_t>(space.size()), 0.0);
    scan_coupling(
        space, coupling, sched.kappa(t),
        [&](int from, double prob) { p[static_cast<size_t>(from)] += prob; }, [](int, int, double) {},
        false);
    return p;
}

std::vector<double> reverse_rate_matrix(const EnumeratedMarginal& m) {
    const size_t S = m.p.size();
    std::vector<double> rev(S * S, 0.0);
    for (size_t from = 0; from < S; ++from) {
        if (!(m.p[from] > 0.0)) continue;
        double row_sum = 0.0;
        for (size_t to = 0; to < S; ++to) {
            if (to == from) continue;
            const double flux = m.rate[to * S + from] * m.p[to];  // forward flux to -> from
            rev[from * S + to] = flux / m.p[from];
            row_sum += rev[from * S + to];
        }
        rev[from * S + from] = -row_sum;
    }
    return rev;
}

RatePrediction prediction_from_rate_row(const EnumeratedSpace& space, std::span<const double> row,
                                        int from_idx) {
    const Sequence& x = space.states[static_cast<size_t>(from_idx)];
    const int n = x.size();
    const int m = space.vocab.size;
    RatePrediction pred;
    pred.n = n;
    pred.m = m;
    pred.lam_ins.assign(static_cast<size_t>(n), 0.0);
    pred.lam_del.assign(static_cast<size_t>(n), 0.0);
    pred.lam_sub.assign(static_cast<size_t>(n), 0.0);
    pred.q_ins.assign(static_cast<size_t>(n) * m, 0.0);
    pred.q_sub.assign(static_cast<size_t>(n) * m, 0.0);

    const auto& nbrs = space.neighbors[static_cast<size_t>(from_idx)];
    std::map<int, int> multiplicity;
    for (const auto& [op, to] : nbrs) ++multiplicity[to];

    for (const auto& [op, to] : nbrs) {
        const double r = row[static_cast<size_t>(to)] / multiplicity[to];
        if (r <= 0.0) continue;
        const size_t p = static_cast<size_t>(op.pos);
        switch (op.kind) {
            case EditKind::Insert:
                pred.lam_ins[p] += r;
                pred.q_ins[p * m + op.token] += r;
                break;
            case EditKind::Delete:
                pred.lam_del[p] += r;
                break;
            case EditKind::Substitute:
                pred.lam_sub[p] += r;
                pred.q_sub[p * m + op.token] += r;
                break;
        }
    }
    for (int p = 0; p < n; ++p) {
        const size_t sp = static_cast<size_t>(p);
        if (pred.lam_ins[sp] > 0.0) {
            for (int a = 0; a < m; ++a) pred.q_ins[sp * m + a] /= pred.lam_ins[sp];
        } else {
            for (int a = 0; a < m; ++a) pred.q_ins[sp * m + a] = 1.0 / m;
        }
        if (p >= 1) {
            if (pred.lam_sub[sp] > 0.0) {
                for (int a = 0; a < m; ++a) pred.q_sub[sp * m + a] /= pred.lam_sub[sp];
            } else if (m > 1) {
                for (int a = 0; a < m; ++a)
                    pred.q_sub[sp * m + a] = a == x[p] ? 0.0 : 1.0 / (m - 1);
            } else {
                pred.q_sub[sp * m + x[p]] = 1.0;
            }
        }
    }
    return pred;
}

std::vector<std::vector<RatePrediction>> precompute_step_predictions(
    const EnumeratedSpace& space, const Coupling& coupling, const Scheduler& sched, int steps) {
    const size_t S = static_cast<size_t>(space.size());
    std::vector<std::vector<RatePrediction>> table(static_cast<size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) / steps;
        const EnumeratedMarginal m = enumerate_marginal(space, coupling, sched, t);
        auto& row = table[static_cast<size_t>(k)];
        row.reserve(S);
        for (size_t s = 0; s < S; ++s) {
            row.push_back(prediction_from_rate_row(
                space, {m.rate.data() + s * S, S}, static_cast<int>(s)));
        }
    }
    return table;
}

std::vector<double> integrate_kfe(
    const std::function<void(double, std::vector<double>&)>& rate_at, std::vector<double> p0,
    double t0, double t1, double step,
    const std::function<void(double, const std::vector<double>&)>& observer) {
    if (!(step > 0.0)) throw std::invalid_argument("integrate_kfe: step must be > 0");
    const size_t S = p0.size();
    std::vector<double> rate(S * S, 0.0);
    std::vector<double> k1(S), k2(S), k3(S), k4(S), tmp(S);

    auto deriv = [&](double t, const std::vector<double>& p, std::vector<double>& out) {
        rate_at(t, rate);
        for (size_t x = 0; x < S; ++x) {
            double acc = 0.0;
            for (size_t y = 0; y < S; ++y) acc += rate[y * S + x] * p[y];
            out[x] = acc;
        }
    };

    double t = t0;
    std::vector<double> p = std::move(p0);
    while (t < t1 - 1e-15) {
        const double h = std::min(step, t1 - t);
        deriv(t, p, k1);
        for (size_t i = 0; i < S; ++i) tmp[i] = p[i] + 0.5 * h * k1[i];
        deriv(t + 0.5 * h, tmp, k2);
        for (size_t i = 0; i < S; ++i) tmp[i] = p[i] + 0.5 * h * k2[i];
        deriv(t + 0.5 * h, tmp, k3);
        for (size_t i = 0; i < S; ++i) tmp[i] = p[i] + h * k3[i];
        deriv(t + h, tmp, k4);
        for (size_t i = 0; i < S; ++i)
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        t += h;

        double total = 0.0;
        double min_p = 0.0;
        for (double v : p) {
            total += v;
            min_p = std::min(min_p, v);
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::runtime_error("integrate_kfe: normalization drifted to " +
                                     std::to_string(total));
        if (min_p < -1e-9)
            throw std::runtime_error("integrate_kfe: negativity beyond tolerance, step too large");
        if (observer) observer(t, p);
    }
    return p;
}

void VerifyReport::check(bool ok, const std::string& line) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "[pass] " : "[FAIL] ") + line);
}

std::string VerifyReport::summary() const {
    std::ostringstream os;
    for (const std::string& l : lines) os << l << "\n";
    os << (pass ? "ALL CHECKS PASSED" : "CHECKS FAILED") << "\n";
    return os.str();
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// Five-point central difference of the enumerated p_t.
std::vector<double> numeric_dpdt(const EnumeratedSpace& space, const Coupling& coupling,
                                 const Scheduler& sched, double t, double dt) {
    const std::vector<double> pm2 = enumerate_pt(space, coupling, sched, t - 2 * dt);
    const std::vector<double> pm1 = enumerate_pt(space, coupling, sched, t - dt);
    const std::vector<double> pp1 = enumerate_pt(space, coupling, sched, t + dt);
    const std::vector<double> pp2 = enumerate_pt(space, coupling, sched, t + 2 * dt);
    std::vector<double> d(pm1.size());
    for (size_t i = 0; i < d.size(); ++i)
        d[i] = (pm2[i] - 8.0 * pm1[i] + 8.0 * pp1[i] - pp2[i]) / (12.0 * dt);
    return d;
}

}  // namespace

VerifyReport verify_theorem1(const EnumeratedSpace& space, const Coupling& coupling,
                             const Scheduler& sched, std::span<const double> t_grid, double tol) {
    constexpr double kDt = 1e-5;
    VerifyReport rep;
    const size_t S = static_cast<size_t>(space.size());
    for (double t : t_grid) {
        const EnumeratedMarginal m = enumerate_marginal(space, coupling, sched, t);

        double min_offdiag = 0.0;
        double max_rowsum = 0.0;
        for (size_t from = 0; from < S; ++from) {
            double row_sum = 0.0;
            for (size_t to = 0; to < S; ++to) {
                row_sum += m.rate[from * S + to];
                if (to != from) min_offdiag = std::min(min_offdiag, m.rate[from * S + to]);
            }
            max_rowsum = std::max(max_rowsum, std::abs(row_sum));
        }
        rep.check(min_offdiag >= 0.0, "t=" + fmt(t) + " off-diagonal rates nonnegative");
        rep.check(max_rowsum <= 1e-9, "t=" + fmt(t) + " rate rows sum to zero (max " +
                                          fmt(max_rowsum) + ")");

        const std::vector<double> dpdt = numeric_dpdt(space, coupling, sched, t, kDt);
        double max_res = 0.0;
        for (size_t x = 0; x < S; ++x) {
            double flow = 0.0;
            for (size_t y = 0; y < S; ++y) flow += m.rate[y * S + x] * m.p[y];
            max_res = std::max(max_res, std::abs(dpdt[x] - flow));
        }
        rep.max_residual = std::max(rep.max_residual, max_res);
        rep.check(max_res < tol,
                  "t=" + fmt(t) + " forward-equation residual " + fmt(max_res) + " < " + fmt(tol));
    }
    return rep;
}

VerifyReport verify_rate_lemmas(double tol) {
    VerifyReport rep;

    // Part 1: deterministic lift of a blank-stripped cell chain, single-token
    // vocabulary, one delete cell and one insert cell.
    {
        const Vocab vocab{1, 0};
        const Scheduler sched = cubic_scheduler();
        const AlignedSeq z0{0, 0, kBlank};
        const AlignedSeq z1{0, kBlank, 0};
        const int cells = 2;  // free cells (cell 0 is the shared BOS)
        const int Z = 1 << cells;
        const EnumeratedSpace space = build_space(vocab, 2);
        const int X = space.size();

        auto z_of_mask = [&](uint32_t mask) {
            AlignedSeq z = z0;
            for (int c = 0; c < cells; ++c)
                if (mask & (1u << c)) z[static_cast<size_t>(c + 1)] = z1[static_cast<size_t>(c + 1)];
            return z;
        };
        auto pz = [&](uint32_t mask, double t) {
            const double k = sched.kappa(t);
            double p = 1.0;
            for (int c = 0; c < cells; ++c) p *= (mask & (1u << c)) ? k : 1.0 - k;
            return p;
        };

        for (double t : {0.25, 0.6}) {
            const double w = sched.weight(t);
            // z-space rate: each unset cell flips toward z1 at rate w.
            std::vector<double> uz(static_cast<size_t>(Z) * Z, 0.0);
            for (int zm = 0; zm < Z; ++zm) {
                double row = 0.0;
                for (int c = 0; c < cells; ++c) {
                    if (zm & (1 << c)) continue;
                    uz[static_cast<size_t>(zm) * Z + (zm | (1 << c))] = w;
                    row += w;
                }
                uz[static_cast<size_t>(zm) * Z + zm] = -row;
            }

            // Augmented rate over (x, z), row-major [from][to] with
            // from = (x_t, z_t), to = (x, z): delta_{rm(z)}(x) * uz[z_t -> z].
            const int A = X * Z;
            std::vector<double> ua(static_cast<size_t>(A) * A, 0.0);
            std::vector<int> f(static_cast<size_t>(Z));
            for (int zm = 0; zm < Z; ++zm)
                f[static_cast<size_t>(zm)] = space.index_of(rm_blanks(z_of_mask(zm), vocab));
            for (int xt_ = 0; xt_ < X; ++xt_) {
                for (int zt_ = 0; zt_ < Z; ++zt_) {
                    const int from = xt_ * Z + zt_;
                    for (int z = 0; z < Z; ++z) {
                        const int to = f[static_cast<size_t>(z)] * Z + z;
                        ua[static_cast<size_t>(from) * A + to] =
                            uz[static_cast<size_t>(zt_) * Z + z];
                    }
                }
            }

            double max_rowsum = 0.0;
            for (int i = 0; i < A; ++i) {
                double s = 0.0;
                for (int j = 0; j < A; ++j) s += ua[static_cast<size_t>(i) * A + j];
                max_rowsum = std::max(max_rowsum, std::abs(s));
            }
            rep.check(max_rowsum <= 1e-12,
                      "lift t=" + fmt(t) + " augmented rows sum to zero (max " + fmt(max_rowsum) +
                          ")");

            // Forward-equation residual with a five-point stencil on
            // p(x,z) = 1[x=f(z)] p(z).
            constexpr double kDt = 1e-5;
            double max_res = 0.0;
            for (int x = 0; x < X; ++x) {
                for (int z = 0; z < Z; ++z) {
                    const bool consistent = f[static_cast<size_t>(z)] == x;
                    auto paug = [&](double tt) {
                        return consistent ? pz(static_cast<uint32_t>(z), tt) : 0.0;
                    };
                    const double dpdt = (paug(t - 2 * kDt) - 8 * paug(t - kDt) + 8 * paug(t + kDt) -
                                         paug(t + 2 * kDt)) /
                                        (12 * kDt);
                    double flow = 0.0;
                    for (int zt_ = 0; zt_ < Z; ++zt_) {
                        const int from = f[static_cast<size_t>(zt_)] * Z + zt_;
                        flow += ua[static_cast<size_t>(from) * A + x * Z + z] *
                                pz(static_cast<uint32_t>(zt_), t);
                    }
                    max_res = std::max(max_res, std::abs(dpdt - flow));
                }
            }
            rep.max_residual = std::max(rep.max_residual, max_res);
            rep.check(max_res < tol, "lift t=" + fmt(t) + " augmented forward-equation residual " +
                                         fmt(max_res) + " < " + fmt(tol));
        }

        // Constant observation: when every z maps to the same x, the lifted
        // rate has no x-changing entries out of any supported state.
        {
            const double w = sched.weight(0.5);
            std::vector<double> uz(static_cast<size_t>(Z) * Z, 0.0);
            for (int zm = 0; zm < Z; ++zm) {
                double row = 0.0;
                for (int c = 0; c < cells; ++c) {
                    if (zm & (1 << c)) continue;
                    uz[static_cast<size_t>(zm) * Z + (zm | (1 << c))] = w;
                    row += w;
                }
                uz[static_cast<size_t>(zm) * Z + zm] = -row;
            }
            // Lift with f == x_const everywhere, then scan the matrix.
            const int x_const = 0;
            const int A = X * Z;
            std::vector<double> ua(static_cast<size_t>(A) * A, 0.0);
            for (int xt_ = 0; xt_ < X; ++xt_)
                for (int zt_ = 0; zt_ < Z; ++zt_)
                    for (int z = 0; z < Z; ++z)
                        ua[static_cast<size_t>(xt_ * Z + zt_) * A + (x_const * Z + z)] =
                            uz[static_cast<size_t>(zt_) * Z + z];
            bool no_x_change = true;
            for (int zt_ = 0; zt_ < Z; ++zt_) {
                const int from = x_const * Z + zt_;  // the supported states
                for (int x = 0; x < X; ++x) {
                    if (x == x_const) continue;
                    for (int z = 0; z < Z; ++z)
                        if (ua[static_cast<size_t>(from) * A + (x * Z + z)] != 0.0)
                            no_x_change = false;
                }
            }
            rep.check(no_x_change, "constant observation keeps x fixed");
        }
    }

    // Part 2: time-independent stochastic observation p(x|z) on an abstract
    // three-state chain with a known constant generator.
    {
        const int Z = 3, X = 2;
        const double R[Z][Z] = {{-1.1, 0.7, 0.4}, {0.2, -0.5, 0.3}, {0.6, 0.9, -1.5}};
        const double pxz[X][Z] = {{0.3, 0.8, 0.5}, {0.7, 0.2, 0.5}};

        std::vector<double> p0{1.0, 0.0, 0.0};
        auto rate_at = [&](double, std::vector<double>& m) {
            for (int i = 0; i < Z; ++i)
                for (int j = 0; j < Z; ++j) m[static_cast<size_t>(i) * Z + j] = R[i][j];
        };

        for (double t : {0.3, 0.7}) {
            const std::vector<double> pz =
                integrate_kfe(rate_at, p0, 0.0, t, 1e-4);
            double dpz[Z];
            for (int z = 0; z < Z; ++z) {
                double acc = 0.0;
                for (int y = 0; y < Z; ++y) acc += R[y][z] * pz[static_cast<size_t>(y)];
                dpz[z] = acc;
            }

            const int A = X * Z;
            std::vector<double> ua(static_cast<size_t>(A) * A, 0.0);
            for (int xt = 0; xt < X; ++xt) {
                for (int zt = 0; zt < Z; ++zt) {
                    const int from = xt * Z + zt;
                    for (int x = 0; x < X; ++x) {
                        for (int z = 0; z < Z; ++z) {
                            const int to = x * Z + z;
                            double v = 0.0;
                            if (z != zt) v += pxz[x][z] * R[zt][z];
                            if (x == xt && z == zt) v += R[zt][zt];
                            ua[static_cast<size_t>(from) * A + to] = v;
                        }
                    }
                }
            }

            double max_rowsum = 0.0, min_offdiag = 0.0;
            for (int i = 0; i < A; ++i) {
                double s = 0.0;
                for (int j = 0; j < A; ++j) {
                    s += ua[static_cast<size_t>(i) * A + j];
                    if (i != j) min_offdiag = std::min(min_offdiag, ua[static_cast<size_t>(i) * A + j]);
                }
                max_rowsum = std::max(max_rowsum, std::abs(s));
            }
            rep.check(max_rowsum <= 1e-12, "observation t=" + fmt(t) + " rows sum to zero (max " +
                                               fmt(max_rowsum) + ")");
            rep.check(min_offdiag >= 0.0, "observation t=" + fmt(t) + " off-diagonals nonnegative");

            double max_res = 0.0;
            for (int x = 0; x < X; ++x) {
                for (int z = 0; z < Z; ++z) {
                    const double dpdt = pxz[x][z] * dpz[z];
                    double flow = 0.0;
                    for (int xt = 0; xt < X; ++xt)
                        for (int zt = 0; zt < Z; ++zt)
                            flow += ua[(static_cast<size_t>(xt) * Z + zt) * A + x * Z + z] *
                                    pxz[xt][zt] * pz[static_cast<size_t>(zt)];
                    max_res = std::max(max_res, std::abs(dpdt - flow));
                }
            }
            rep.max_residual = std::max(rep.max_residual, max_res);
            rep.check(max_res < tol, "observation t=" + fmt(t) + " forward-equation residual " +
                                         fmt(max_res) + " < " + fmt(tol));
        }
    }

    return rep;
}

VerifyReport verify_corrector(const EnumeratedSpace& space, const Coupling& coupling,
                              const Scheduler& sched, double t, double h, int num_samples,
                              uint64_t seed, double tv_tol, double flux_tol) {
    VerifyReport rep;
    const size_t S = static_cast<size_t>(space.size());
    const EnumeratedMarginal fwd_t = enumerate_marginal(space, coupling, sched, t);
    const EnumeratedMarginal fwd_th = enumerate_marginal(space, coupling, sched, t + h);
    const std::vector<double> rev_th = reverse_rate_matrix(fwd_th);

    // Flux identity at t+h, checked per ordered state pair.
    double max_flux = 0.0;
    for (size_t y = 0; y < S; ++y) {
        for (size_t x = 0; x < S; ++x) {
            if (x == y) continue;
            const double lhs = rev_th[y * S + x] * fwd_th.p[y];
            const double rhs = fwd_th.rate[x * S + y] * fwd_th.p[x];
            max_flux = std::max(max_flux, std::abs(lhs - rhs));
        }
    }
    rep.check(max_flux <= flux_tol, "flux identity residual " + fmt(max_flux) + " <= " +
                                        fmt(flux_tol));

    // The reverse rate satisfies the forward equation with a minus sign.
    {
        constexpr double kDt = 1e-5;
        const std::vector<double> dpdt = numeric_dpdt(space, coupling, sched, t + h, kDt);
        double max_res = 0.0;
        for (size_t x = 0; x < S; ++x) {
            double flow = 0.0;
            for (size_t y = 0; y < S; ++y) flow += rev_th[y * S + x] * fwd_th.p[y];
            max_res = std::max(max_res, std::abs(flow + dpdt[x]));
        }
        rep.check(max_res < 1e-7, "reverse-equation residual " + fmt(max_res) + " < 1e-07");
    }

    // One composite step: forward h with the rates at t, then one reverse step
    // of size h with the reverse rates at t+h. Samples from p_t stay on p_t.
    std::vector<RatePrediction> fwd_pred(S), rev_pred(S);
    for (size_t s = 0; s < S; ++s) {
        fwd_pred[s] = prediction_from_rate_row(space, {fwd_t.rate.data() + s * S, S},
                                               static_cast<int>(s));
        rev_pred[s] =
            prediction_from_rate_row(space, {rev_th.data() + s * S, S}, static_cast<int>(s));
    }

    std::vector<int64_t> counts(S, 0);
    {
        std::vector<int> finals(static_cast<size_t>(num_samples));
        const int64_t n = num_samples;
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            Rng rng = Rng::fork(seed, static_cast<uint64_t>(i));
            const int start = rng.categorical(fwd_t.p);
            const Sequence& x = space.states[static_cast<size_t>(start)];
            EulerStepResult mid =
                euler_step(fwd_pred[static_cast<size_t>(start)], x, h, space.vocab, space.n_max,
                           rng);
            const int mid_idx = space.index_of(mid.x);
            EulerStepResult back = euler_step(rev_pred[static_cast<size_t>(mid_idx)], mid.x, h,
                                              space.vocab, space.n_max, rng);
            finals[static_cast<size_t>(i)] = space.index_of(back.x);
        }
        for (int f : finals) ++counts[static_cast<size_t>(f)];
    }
    const std::vector<double> empirical = [&] {
        std::vector<double> p(S, 0.0);
        for (size_t s = 0; s < S; ++s)
            p[s] = static_cast<double>(counts[s]) / static_cast<double>(num_samples);
        return p;
    }();
    double tv = 0.0;
    for (size_t s = 0; s < S; ++s) tv += std::abs(empirical[s] - fwd_t.p[s]);
    tv *= 0.5;
    rep.max_residual = std::max(rep.max_residual, tv);
    rep.check(tv < tv_tol, "composite step total variation " + fmt(tv) + " < " + fmt(tv_tol));
    return rep;
}

int edit_distance(const Sequence& x0, const Sequence& x1) {
    const int n0 = x0.size() - 1;
    const int n1 = x1.size() - 1;
    std::vector<int> prev(static_cast<size_t>(n1) + 1), cur(static_cast<size_t>(n1) + 1);
    for (int j = 0; j <= n1; ++j) prev[static_cast<size_t>(j)] = j;
    for (int i = 1; i <= n0; ++i) {
        cur[0] = i;
        for (int j = 1; j <= n1; ++j) {
            const int sub = prev[static_cast<size_t>(j) - 1] + (x0[i] == x1[j] ? 0 : 1);
            cur[static_cast<size_t>(j)] =
                std::min({sub, prev[static_cast<size_t>(j)] + 1, cur[static_cast<size_t>(j) - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[static_cast<size_t>(n1)];
}

std::vector<double> exact_propagation_mask_distribution(int n, double t, const Scheduler& sched,
                                                        double lambda_prop, int quad_points) {
    if (n < 1 || n > 12)
        throw std::invalid_argument("exact_propagation_mask_distribution: n outside [1,12]");
    if (quad_points < 2) throw std::invalid_argument("quad_points must be >= 2");
    if (quad_points % 2 != 0) ++quad_points;

    const uint32_t patterns = 1u << n;
    const double kappa_t = sched.kappa(t);

    auto pois_cdf = [](int k, double mu) {
        double pmf = std::exp(-mu);
        double cdf = pmf;
        for (int j = 1; j <= k; ++j) {
            pmf *= mu / j;
            cdf += pmf;
        }
        return std::min(cdf, 1.0);
    };

    // Runs of set cells immediately left/right of i within pattern T.
    auto run_left = [&](uint32_t T, int i) {
        int d = 0;
        for (int j = i - 1; j >= 0 && (T & (1u << j)); --j) ++d;
        return d;
    };
    auto run_right = [&](uint32_t T, int i) {
        int d = 0;
        for (int j = i + 1; j < n && (T & (1u << j)); ++j) ++d;
        return d;
    };

    // P(row i's coverage is contained in T): inactive rows contribute 1 - kappa;
    // active rows need their interval inside the run of T around i. Integrate
    // over the switch time via u = kappa(s).
    std::vector<double> row_in(static_cast<size_t>(patterns) * n, 0.0);
    for (uint32_t T = 0; T < patterns; ++T) {
        for (int i = 0; i < n; ++i) {
            double value = 1.0 - kappa_t;
            if (T & (1u << i)) {
                const int dl = run_left(T, i);
                const int dr = run_right(T, i);
                auto integrand = [&](double u) {
                    const double s = sched.kappa_inv(u);
                    const double mu = lambda_prop * (t - s);
                    const double cl = dl >= i ? 1.0 : pois_cdf(dl, mu);
                    const double cr = dr >= n - 1 - i ? 1.0 : pois_cdf(dr, mu);
                    return cl * cr;
                };
                const double h = kappa_t / quad_points;
                double acc = integrand(0.0) + integrand(kappa_t);
                for (int k = 1; k < quad_points; ++k)
                    acc += integrand(k * h) * (k % 2 == 1 ? 4.0 : 2.0);
                value += acc * h / 3.0;
            }
            row_in[static_cast<size_t>(T) * n + i] = value;
        }
    }

    std::vector<double> contained(patterns, 0.0);
    for (uint32_t T = 0; T < patterns; ++T) {
        double prod = 1.0;
        for (int i = 0; i < n; ++i) prod *= row_in[static_cast<size_t>(T) * n + i];
        contained[T] = prod;
    }

    std::vector<double> law(patterns, 0.0);
    for (uint32_t S = 0; S < patterns; ++S) {
        const int bits_s = __builtin_popcount(S);
        double acc = 0.0;
        uint32_t T = S;
        while (true) {
            const int sign = ((bits_s - __builtin_popcount(T)) % 2 == 0) ? 1 : -1;
            acc += sign * contained[T];
            if (T == 0) break;
            T = (T - 1) & S;
        }
        law[S] = std::max(acc, 0.0);
    }
    return law;
}

std::vector<uint8_t> propagation_mask_by_events(int n, double t, const Scheduler& sched,
                                                double lambda_prop, Rng& rng) {
    if (n < 1) throw std::invalid_argument("propagation_mask_by_events: n must be >= 1");
    std::vector<uint8_t> mask(static_cast<size_t>(n), 0);
    const double bound = sched.weight(t);  // the switch rate is increasing in time
    for (int i = 0; i < n; ++i) {
        // Thinning for the inhomogeneous diagonal switch.
        double s = 0.0;
        double switch_time = -1.0;
        while (true) {
            s += rng.exponential(bound);
            if (s > t) break;
            if (rng.uniform() < sched.weight(s) / bound) {
                switch_time = s;
                break;
            }
        }
        if (switch_time < 0.0) continue;
        mask[static_cast<size_t>(i)] = 1;

        if (lambda_prop > 0.0) {
            double clock = switch_time;
            for (int j = i - 1; j >= 0; --j) {
                clock += rng.exponential(lambda_prop);
                if (clock > t) break;
                mask[static_cast<size_t>(j)] = 1;
            }
            clock = switch_time;
            for (int j = i + 1; j < n; ++j) {
                clock += rng.exponential(lambda_prop);
                if (clock > t) break;
                mask[static_cast<size_t>(j)] = 1;
            }
        }
    }
    return mask;
}

}  // namespace editflow
