#include "editflow/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace editflow {

const char* to_string(CfgVariant v) {
    switch (v) {
        case CfgVariant::Off: return "off";
        case CfgVariant::Weighted: return "weighted";
        case CfgVariant::Fixed: return "fixed";
        case CfgVariant::Naive: return "naive";
    }
    return "?";
}

CfgVariant cfg_variant_from_string(const std::string& s) {
    if (s == "off") return CfgVariant::Off;
    if (s == "weighted") return CfgVariant::Weighted;
    if (s == "fixed") return CfgVariant::Fixed;
    if (s == "naive") return CfgVariant::Naive;
    throw std::invalid_argument("unknown cfg variant: " + s);
}

void SamplerConfig::validate() const {
    if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
    if (!(temperature > 0.0)) throw std::invalid_argument("SamplerConfig: temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0))
        throw std::invalid_argument("SamplerConfig: top_p must lie in (0,1]");
    if (top_k < 0) throw std::invalid_argument("SamplerConfig: top_k must be >= 0");
    if (!(reverse_temperature > 0.0))
        throw std::invalid_argument("SamplerConfig: reverse_temperature must be > 0");
    if (!(reverse_top_p > 0.0 && reverse_top_p <= 1.0))
        throw std::invalid_argument("SamplerConfig: reverse_top_p must lie in (0,1]");
    if (corrector.c < 0.0)
        throw std::invalid_argument("SamplerConfig: corrector strength must be >= 0");
    if (max_len < 1) throw std::invalid_argument("SamplerConfig: max_len must be >= 1");
}

int64_t GenerationTrace::total_edits() const {
    int64_t n = 0;
    for (const Record& r : records)
        for (const auto& phase : r.phases) n += static_cast<int64_t>(phase.size());
    return n;
}

RateFn model_rate_fn(const ModelParams& params, PredictContext ctx) {
    return [params, ctx](const Sequence& x, double t) { return predict(params, x, t, ctx); };
}

namespace {

int64_t sequence_rank(const Sequence& x, int m) {
    int64_t rank = 0;
    for (int i = 1; i < x.size(); ++i) rank = rank * m + x[i];
    return rank;
}

}  // namespace

RateFn cached_tabular_rate_fn(const ModelParams& params) {
    if (params.kind != ModelKind::Tabular)
        throw std::invalid_argument("cached_tabular_rate_fn: requires a tabular model");
    const int m = params.vocab.size;
    const int buckets = params.t_buckets;

    std::vector<int64_t> state_prefix(static_cast<size_t>(params.max_tail) + 2, 0);
    int64_t pw = 1;
    for (int k = 0; k <= params.max_tail; ++k) {
        state_prefix[static_cast<size_t>(k) + 1] = state_prefix[static_cast<size_t>(k)] + pw;
        pw *= m;
    }
    const int64_t n_states = state_prefix[static_cast<size_t>(params.max_tail) + 1];

    auto table = std::make_shared<std::vector<RatePrediction>>();
    table->reserve(static_cast<size_t>(n_states) * buckets);
    for (int b = 0; b < buckets; ++b) {
        const double t_rep = bucket_representative_t(b, buckets);
        for (int k = 0; k <= params.max_tail; ++k) {
            std::vector<TokenId> tail(static_cast<size_t>(k), 0);
            const int64_t count = static_cast<int64_t>(std::pow(m, k) + 0.5);
            for (int64_t r = 0; r < count; ++r) {
                int64_t v = r;
                for (int i = k - 1; i >= 0; --i) {
                    tail[static_cast<size_t>(i)] = static_cast<TokenId>(v % m);
                    v /= m;
                }
                table->push_back(predict(params, make_sequence(params.vocab, tail), t_rep));
            }
        }
    }

    const int max_tail = params.max_tail;
    return [table, state_prefix, n_states, m, buckets, max_tail](const Sequence& x,
                                                                 double t) -> RatePrediction {
        const int tail = x.size() - 1;
        if (tail > max_tail) throw std::out_of_range("cached rates: state outside table");
        const int b = time_bucket(t, buckets);
        const int64_t idx = static_cast<int64_t>(b) * n_states +
                            state_prefix[static_cast<size_t>(tail)] + sequence_rank(x, m);
        return (*table)[static_cast<size_t>(idx)];
    };
}

// --------------------------------------------------------------------------
// classifier-free guidance
// --------------------------------------------------------------------------

namespace {

constexpr double kLambdaCap = 1e30;
constexpr double kLambdaFloor = 1e-300;

void check_same_shape(const RatePrediction& a, const RatePrediction& b) {
    if (a.n != b.n || a.m != b.m)
        throw std::invalid_argument("apply_cfg: predictions have different shapes");
}

// Geometric mixture of two distribution rows; returns the unnormalized mass
// (the sum before renormalization).
double mix_q_row(const double* qu, const double* qc, int m, double w, double* out) {
    double total = 0.0;
    for (int a = 0; a < m; ++a) {
        out[a] = std::pow(qu[a], 1.0 - w) * std::pow(qc[a], w);
        if (!std::isfinite(out[a])) out[a] = 0.0;
        total += out[a];
    }
    return total;
}

}  // namespace

RatePrediction apply_cfg(const RatePrediction& cond, const RatePrediction& uncond, double w,
                         CfgVariant variant) {
    check_same_shape(cond, uncond);
    if (variant == CfgVariant::Off) return cond;

    RatePrediction out = cond;
    const int n = cond.n;
    const int m = cond.m;

    // Q rows mix identically for every variant; the unnormalized masses feed
    // the weighted variant's lambda.
    std::vector<double> ins_mass(static_cast<size_t>(n), 1.0);
    std::vector<double> sub_mass(static_cast<size_t>(n), 1.0);
    if (w == 1.0) {
        out.q_ins = cond.q_ins;
        out.q_sub = cond.q_sub;
        // mass = sum of the conditional row, which is 1 for a distribution
    } else if (w == 0.0) {
        out.q_ins = uncond.q_ins;
        out.q_sub = uncond.q_sub;
    } else {
        for (int p = 0; p < n; ++p) {
            double* row = out.q_ins.data() + static_cast<size_t>(p) * m;
            const double total = mix_q_row(uncond.q_ins.data() + static_cast<size_t>(p) * m,
                                           cond.q_ins.data() + static_cast<size_t>(p) * m, m, w,
                                           row);
            if (!(total > 0.0)) throw std::runtime_error("apply_cfg: q_ins row vanished");
            for (int a = 0; a < m; ++a) row[a] /= total;
            ins_mass[static_cast<size_t>(p)] = total;
        }
        for (int p = 1; p < n; ++p) {
            double* row = out.q_sub.data() + static_cast<size_t>(p) * m;
            double row_sum_cond = 0.0;
            for (int a = 0; a < m; ++a)
                row_sum_cond += cond.q_sub[static_cast<size_t>(p) * m + a];
            if (row_sum_cond == 0.0) continue;  // substitution disabled at this position
            const double total = mix_q_row(uncond.q_sub.data() + static_cast<size_t>(p) * m,
                                           cond.q_sub.data() + static_cast<size_t>(p) * m, m, w,
                                           row);
            if (!(total > 0.0)) throw std::runtime_error("apply_cfg: q_sub row vanished");
            for (int a = 0; a < m; ++a) row[a] /= total;
            sub_mass[static_cast<size_t>(p)] = total;
        }
    }

    auto geometric = [w](double lu, double lc) {
        if (lc == 0.0 && w > 0.0) return 0.0;
        if (lu == 0.0 && 1.0 - w > 0.0) return 0.0;
        const double v = std::pow(std::max(lu, kLambdaFloor), 1.0 - w) *
                         std::pow(std::max(lc, kLambdaFloor), w);
        return std::min(v, kLambdaCap);
    };

    switch (variant) {
        case CfgVariant::Off:
            break;
        case CfgVariant::Weighted:
            if (w == 1.0) break;  // geometric mean at w=1 is the conditional prediction
            for (int p = 0; p < n; ++p) {
                const size_t sp = static_cast<size_t>(p);
                out.lam_ins[sp] = geometric(uncond.lam_ins[sp], cond.lam_ins[sp]) * ins_mass[sp];
                if (p >= 1) {
                    out.lam_del[sp] = geometric(uncond.lam_del[sp], cond.lam_del[sp]);
                    out.lam_sub[sp] =
                        geometric(uncond.lam_sub[sp], cond.lam_sub[sp]) * sub_mass[sp];
                }
            }
            break;
        case CfgVariant::Fixed:
            // lambda stays the conditional rate for every w.
            break;
        case CfgVariant::Naive: {
            // lambda_c^(1+w) * lambda_u^(-w); at w=0 this is the conditional rate.
            auto naive = [w](double lu, double lc) {
                if (w == 0.0) return lc;
                if (lc == 0.0) return 0.0;
                const double v =
                    std::pow(lc, 1.0 + w) * std::pow(std::max(lu, kLambdaFloor), -w);
                return std::min(v, kLambdaCap);
            };
            for (int p = 0; p < n; ++p) {
                const size_t sp = static_cast<size_t>(p);
                out.lam_ins[sp] = naive(uncond.lam_ins[sp], cond.lam_ins[sp]);
                if (p >= 1) {
                    out.lam_del[sp] = naive(uncond.lam_del[sp], cond.lam_del[sp]);
                    out.lam_sub[sp] = naive(uncond.lam_sub[sp], cond.lam_sub[sp]);
                }
            }
            break;
        }
    }
    return out;
}

RateFn guided_rate_fn(RateFn cond, RateFn uncond, double w, CfgVariant variant) {
    if (variant == CfgVariant::Off) return cond;
    return [cond = std::move(cond), uncond = std::move(uncond), w, variant](const Sequence& x,
                                                                            double t) {
        return apply_cfg(cond(x, t), uncond(x, t), w, variant);
    };
}

// --------------------------------------------------------------------------
// sharpening
// --------------------------------------------------------------------------

void sharpen_row(std::span<double> row, double temperature, double top_p, int top_k) {
    const int m = static_cast<int>(row.size());
    double total = std::accumulate(row.begin(), row.end(), 0.0);
    if (!(total > 0.0)) return;  // disabled/empty row

    if (temperature != 1.0) {
        if (!(temperature > 0.0)) throw std::invalid_argument("sharpen_row: temperature <= 0");
        total = 0.0;
        for (double& v : row) {
            v = std::pow(v, 1.0 / temperature);
            total += v;
        }
        for (double& v : row) v /= total;
    }

    if (top_k > 0 && top_k < m) {
        std::vector<int> order(static_cast<size_t>(m));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)];
        });
        total = 0.0;
        for (int i = top_k; i < m; ++i) row[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0.0;
        for (double v : row) total += v;
        for (double& v : row) v /= total;
    }

    if (top_p < 1.0) {
        std::vector<int> order(static_cast<size_t>(m));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return row[static_cast<size_t>(a)] > row[static_cast<size_t>(b)];
        });
        double cum = 0.0;
        int keep = 0;
        for (; keep < m; ++keep) {
            cum += row[static_cast<size_t>(order[static_cast<size_t>(keep)])];
            if (cum >= top_p) {
                ++keep;
                break;
            }
        }
        total = 0.0;
        for (int i = keep; i < m; ++i) row[static_cast<size_t>(order[static_cast<size_t>(i)])] = 0.0;
        for (double v : row) total += v;
        for (double& v : row) v /= total;
    }
}

RatePrediction sharpen_prediction(RatePrediction pred, double temperature, double top_p,
                                  int top_k) {
    if (temperature == 1.0 && top_p >= 1.0 && top_k == 0) return pred;
    for (int p = 0; p < pred.n; ++p) {
        sharpen_row({pred.q_ins.data() + static_cast<size_t>(p) * pred.m,
                     static_cast<size_t>(pred.m)},
                    temperature, top_p, top_k);
        if (p >= 1)
            sharpen_row({pred.q_sub.data() + static_cast<size_t>(p) * pred.m,
                         static_cast<size_t>(pred.m)},
                        temperature, top_p, top_k);
    }
    return pred;
}

// --------------------------------------------------------------------------
// simulation
// --------------------------------------------------------------------------

namespace {

TokenId draw_from_row(const double* row, int m, Rng& rng) {
    return static_cast<TokenId>(rng.categorical({row, static_cast<size_t>(m)}));
}

}  // namespace

EulerStepResult euler_step(const RatePrediction& pred, const Sequence& x, double h,
                           const Vocab& vocab, int max_len, Rng& rng) {
    const int n = x.size();
    if (pred.n != n) throw std::invalid_argument("euler_step: prediction shape mismatch");
    if (!(h >= 0.0)) throw std::invalid_argument("euler_step: negative step");

    std::vector<EditOp> removals;
    std::vector<EditOp> inserts;
    for (int p = 0; p < n; ++p) {
        const size_t sp = static_cast<size_t>(p);
        if (pred.lam_ins[sp] > 0.0) {
            const double prob = std::min(h * pred.lam_ins[sp], 1.0);
            if (rng.uniform() < prob) {
                const TokenId a = draw_from_row(pred.q_ins.data() + sp * pred.m, pred.m, rng);
                inserts.push_back({EditKind::Insert, p, a});
            }
        }
        if (p >= 1) {
            const double group = pred.lam_del[sp] + pred.lam_sub[sp];
            if (group > 0.0) {
                const double prob = std::min(h * group, 1.0);
                if (rng.uniform() < prob) {
                    if (rng.uniform() < pred.lam_del[sp] / group) {
                        removals.push_back({EditKind::Delete, p, -1});
                    } else {
                        const TokenId a =
                            draw_from_row(pred.q_sub.data() + sp * pred.m, pred.m, rng);
                        removals.push_back({EditKind::Substitute, p, a});
                    }
                }
            }
        }
    }

    int deletions = 0;
    for (const EditOp& op : removals)
        if (op.kind == EditKind::Delete) ++deletions;
    int final_len = n + static_cast<int>(inserts.size()) - deletions;
    EulerStepResult out;
    while (final_len > max_len && !inserts.empty()) {
        inserts.pop_back();  // anchors ascend, so this drops the rightmost insert
        ++out.dropped_insertions;
        --final_len;
    }

    out.edits = std::move(removals);
    out.edits.insert(out.edits.end(), inserts.begin(), inserts.end());
    std::stable_sort(out.edits.begin(), out.edits.end(), [](const EditOp& a, const EditOp& b) {
        if (a.pos != b.pos) return a.pos < b.pos;
        return (a.kind != EditKind::Insert) && (b.kind == EditKind::Insert);
    });
    out.x = apply_simultaneous(x, out.edits, vocab, max_len);
    return out;
}

GenerationTrace simulate(const RateFn& forward, const RateFn* reverse, const Sequence& x0,
                         const SamplerConfig& cfg, const Vocab& vocab, Rng& rng) {
    cfg.validate();
    GenerationTrace trace;
    trace.records.push_back({0, 0.0, {}, x0});
    Sequence x = x0;
    const double h = 1.0 / cfg.steps;

    for (int k = 0; k < cfg.steps; ++k) {
        const double t = k * h;
        double alpha = cfg.corrector.alpha(t);
        if (alpha > 0.0 && reverse == nullptr)
            throw std::invalid_argument("simulate: corrector active but no reverse model");
        // The overshoot may not pass t=1.
        alpha = std::min(alpha, (1.0 - (t + h)) / h);
        if (alpha < 0.0) alpha = 0.0;

        GenerationTrace::Record rec;
        rec.step = k + 1;
        rec.t = (k + 1) * h;

        const RatePrediction pred =
            sharpen_prediction(forward(x, t), cfg.temperature, cfg.top_p, cfg.top_k);
        EulerStepResult fw = euler_step(pred, x, h * (1.0 + alpha), vocab, cfg.max_len, rng);
        trace.dropped_insertions += fw.dropped_insertions;
        x = std::move(fw.x);
        rec.phases.push_back(std::move(fw.edits));

        if (alpha > 0.0) {
            const double t_over = t + h * (1.0 + alpha);
            const RatePrediction rpred =
                sharpen_prediction((*reverse)(x, t_over), cfg.reverse_temperature,
                                   cfg.reverse_top_p, cfg.reverse_top_k);
            EulerStepResult bw = euler_step(rpred, x, h * alpha, vocab, cfg.max_len, rng);
            trace.dropped_insertions += bw.dropped_insertions;
            x = std::move(bw.x);
            rec.phases.push_back(std::move(bw.edits));
        }

        rec.x = x;
        trace.records.push_back(std::move(rec));
    }
    return trace;
}

GenerationTrace gillespie_simulate(const RateFn& rates, const Sequence& x0,
                                   const GillespieConfig& cfg, const Vocab& vocab, Rng& rng) {
    if (!(cfg.slice_width > 0.0))
        throw std::invalid_argument("gillespie_simulate: slice width must be > 0");
    GenerationTrace trace;
    trace.records.push_back({0, 0.0, {}, x0});
    Sequence x = x0;
    double t = 0.0;
    int64_t events = 0;

    while (t < cfg.t_end) {
        const double slice_end = std::min(cfg.t_end, t + cfg.slice_width);
        const RatePrediction pred = rates(x, t);
        const double total = pred.exit_rate();
        if (!(total > 0.0)) {
            t = slice_end;
            continue;
        }
        const double wait = rng.exponential(total);
        if (t + wait >= slice_end) {
            t = slice_end;
            continue;
        }
        t += wait;

        // Walk the per-edit rates to pick the transition.
        double u = rng.uniform() * total;
        EditOp chosen{EditKind::Delete, -1, -1};
        bool found = false;
        for (int p = 0; p < pred.n && !found; ++p) {
            const size_t sp = static_cast<size_t>(p);
            if (pred.lam_ins[sp] > 0.0) {
                if (u < pred.lam_ins[sp]) {
                    for (TokenId a = 0; a < pred.m; ++a) {
                        const double r = pred.lam_ins[sp] * pred.q_ins_at(p, a);
                        if (u < r) {
                            chosen = {EditKind::Insert, p, a};
                            found = true;
                            break;
                        }
                        u -= r;
                    }
                    if (!found) {
                        chosen = {EditKind::Insert, p, static_cast<TokenId>(pred.m - 1)};
                        found = true;
                    }
                    break;
                }
                u -= pred.lam_ins[sp];
            }
        }
        if (!found) {
            for (int p = 1; p < pred.n && !found; ++p) {
                const size_t sp = static_cast<size_t>(p);
                if (u < pred.lam_del[sp]) {
                    chosen = {EditKind::Delete, p, -1};
                    found = true;
                    break;
                }
                u -= pred.lam_del[sp];
            }
        }
        if (!found) {
            for (int p = 1; p < pred.n && !found; ++p) {
                const size_t sp = static_cast<size_t>(p);
                if (pred.lam_sub[sp] <= 0.0) continue;
                if (u < pred.lam_sub[sp]) {
                    for (TokenId a = 0; a < pred.m; ++a) {
                        if (a == x[p]) continue;
                        const double r = pred.lam_sub[sp] * pred.q_sub_at(p, a);
                        if (u < r) {
                            chosen = {EditKind::Substitute, p, a};
                            found = true;
                            break;
                        }
                        u -= r;
                    }
                    if (!found) {
                        // Rounding pushed u past the last entry; take the
                        // heaviest substitution target.
                        TokenId best = x[p] == 0 ? 1 : 0;
                        for (TokenId a = 0; a < pred.m; ++a)
                            if (a != x[p] && pred.q_sub_at(p, a) > pred.q_sub_at(p, best)) best = a;
                        chosen = {EditKind::Substitute, p, best};
                        found = true;
                    }
                    break;
                }
                u -= pred.lam_sub[sp];
            }
        }
        if (!found) continue;  // numerical leftover mass; treat as no event

        if (chosen.kind == EditKind::Insert && x.size() >= cfg.max_len) {
            ++trace.dropped_insertions;
            continue;
        }
        x = apply_edit(x, chosen, vocab, cfg.max_len);
        ++events;
        trace.records.push_back(
            {static_cast<int>(events), t, {std::vector<EditOp>{chosen}}, x});
        if (events > cfg.max_events)
            throw std::runtime_error("gillespie_simulate: event budget exhausted");
    }
    return trace;
}

// --------------------------------------------------------------------------
// trace text format
// --------------------------------------------------------------------------

std::string format_trace_record(const GenerationTrace::Record& rec) {
    std::ostringstream os;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", rec.t);
    os << rec.step << '\t' << buf << '\t';
    bool any = false;
    for (size_t ph = 0; ph < rec.phases.size(); ++ph) {
        if (ph > 0) os << '|';
        for (size_t i = 0; i < rec.phases[ph].size(); ++i) {
            if (i > 0) os << ';';
            os << to_string(rec.phases[ph][i]);
            any = true;
        }
    }
    if (!any && rec.phases.size() <= 1) os << '-';
    os << '\t';
    for (int i = 0; i < rec.x.size(); ++i) {
        if (i > 0) os << ' ';
        os << rec.x[i];
    }
    return os.str();
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        const size_t p = s.find(sep, start);
        if (p == std::string::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, p - start));
        start = p + 1;
    }
}

EditOp parse_edit(const std::string& s) {
    const auto parts = split(s, ':');
    if (parts.size() < 2) throw std::runtime_error("trace: malformed edit: " + s);
    EditOp op;
    if (parts[0] == "ins") op.kind = EditKind::Insert;
    else if (parts[0] == "del") op.kind = EditKind::Delete;
    else if (parts[0] == "sub") op.kind = EditKind::Substitute;
    else throw std::runtime_error("trace: unknown edit kind: " + s);
    op.pos = std::stoi(parts[1]);
    if (op.kind != EditKind::Delete) {
        if (parts.size() != 3) throw std::runtime_error("trace: malformed edit: " + s);
        op.token = std::stoi(parts[2]);
    }
    return op;
}

}  // namespace

GenerationTrace::Record parse_trace_record(const std::string& line) {
    const auto fields = split(line, '\t');
    if (fields.size() != 4) throw std::runtime_error("trace: expected 4 tab-separated fields");
    GenerationTrace::Record rec;
    rec.step = std::stoi(fields[0]);
    rec.t = std::strtod(fields[1].c_str(), nullptr);
    if (fields[2] != "-") {
        for (const std::string& phase : split(fields[2], '|')) {
            std::vector<EditOp> ops;
            if (!phase.empty())
                for (const std::string& e : split(phase, ';')) ops.push_back(parse_edit(e));
            rec.phases.push_back(std::move(ops));
        }
    }
    std::vector<TokenId> toks;
    if (!fields[3].empty()) {
        std::istringstream is(fields[3]);
        TokenId v;
        while (is >> v) toks.push_back(v);
    }
    rec.x = Sequence(std::move(toks));
    return rec;
}

Sequence replay_record(const Sequence& x, const GenerationTrace::Record& rec, const Vocab& vocab,
                       int max_len) {
    Sequence cur = x;
    for (const auto& phase : rec.phases) cur = apply_simultaneous(cur, phase, vocab, max_len);
    return cur;
}

}  // namespace editflow
