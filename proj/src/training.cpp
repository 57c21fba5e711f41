#include "editflow/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace editflow {

void TrainConfig::validate() const {
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
    if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be >= 0");
    if (!(t_delta > 0.0 && t_delta < 1.0))
        throw std::invalid_argument("TrainConfig: t_delta must lie in (0,1)");
    if (cond_drop < 0.0 || cond_drop > 1.0)
        throw std::invalid_argument("TrainConfig: cond_drop must lie in [0,1]");
    if (localized && lambda_prop < 0.0)
        throw std::invalid_argument("TrainConfig: lambda_prop must be >= 0");
}

namespace {

struct SampleContribution {
    double term1 = 0.0;
    double term2 = 0.0;
    int64_t clamps = 0;
    std::vector<std::pair<int64_t, double>> grad_entries;
};

SampleContribution score_sample(const ModelParams& params, const PathSample& s,
                                double inv_batch) {
    if (!(s.t < 1.0)) throw std::invalid_argument("loss_and_grad: sample has t >= 1");
    const PredictContext ctx{s.cond_tokens, s.cond_visible};
    const RatePrediction pred = predict(params, s.xt, s.t, ctx);

    SampleContribution out;
    out.term1 = pred.exit_rate();

    PredictionCotangent cot = PredictionCotangent::zeros(pred.n, pred.m);
    // d(term1)/d(lambda) = 1 for every slot; masked slots drop out in the
    // parameter pullback.
    std::fill(cot.lam_ins.begin(), cot.lam_ins.end(), 1.0);
    std::fill(cot.lam_del.begin(), cot.lam_del.end(), 1.0);
    std::fill(cot.lam_sub.begin(), cot.lam_sub.end(), 1.0);

    for (int cell = 0; cell < s.cells(); ++cell) {
        const size_t ci = static_cast<size_t>(cell);
        if (s.zt[ci] == s.z1[ci]) continue;
        const double w = s.weights[ci];
        if (!std::isfinite(w)) throw std::invalid_argument("loss_and_grad: non-finite weight");
        const EditOp op = edit_for_cell(s.zt, s.cell_to_xpos, cell, s.z1[ci]);
        const double rate = rate_of_edit(pred, op);
        if (rate < kRateClampFloor) {
            ++out.clamps;
            out.term2 += -w * std::log(kRateClampFloor);
            continue;  // the clamped log is constant, no gradient
        }
        out.term2 += -w * std::log(rate);
        const size_t p = static_cast<size_t>(op.pos);
        switch (op.kind) {
            case EditKind::Insert:
                cot.lam_ins[p] += -w / pred.lam_ins[p];
                cot.q_ins[p * pred.m + op.token] += -w / pred.q_ins_at(op.pos, op.token);
                break;
            case EditKind::Delete:
                cot.lam_del[p] += -w / pred.lam_del[p];
                break;
            case EditKind::Substitute:
                cot.lam_sub[p] += -w / pred.lam_sub[p];
                cot.q_sub[p * pred.m + op.token] += -w / pred.q_sub_at(op.pos, op.token);
                break;
        }
    }
    out.term1 *= s.importance;
    out.term2 *= s.importance;
    accumulate_predict_grad(params, s.xt, s.t, ctx, cot, inv_batch * s.importance,
                            out.grad_entries);
    return out;
}

}  // namespace

LossStats loss_and_grad(const ModelParams& params, std::span<const PathSample> batch,
                        std::vector<double>& grad, bool parallel) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    grad.assign(params.theta.size(), 0.0);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    std::vector<SampleContribution> contributions(batch.size());
    const int64_t count = static_cast<int64_t>(batch.size());
#pragma omp parallel for schedule(static) if (parallel)
    for (int64_t i = 0; i < count; ++i) {
        contributions[static_cast<size_t>(i)] =
            score_sample(params, batch[static_cast<size_t>(i)], inv_batch);
    }

    // Sample-order reduction keeps the result independent of thread count.
    LossStats stats;
    for (const SampleContribution& c : contributions) {
        stats.term1 += c.term1 * inv_batch;
        stats.term2 += c.term2 * inv_batch;
        stats.clamp_warnings += c.clamps;
        for (const auto& [idx, val] : c.grad_entries) grad[static_cast<size_t>(idx)] += val;
    }
    stats.loss = stats.term1 + stats.term2;
    return stats;
}

double bregman_divergence(std::span<const double> f, std::span<const double> g) {
    if (f.size() != g.size())
        throw std::invalid_argument("bregman_divergence: support size mismatch");
    double total = 0.0;
    for (size_t i = 0; i < f.size(); ++i) {
        if (f[i] < 0.0 || g[i] < 0.0)
            throw std::invalid_argument("bregman_divergence: negative entry");
        if (f[i] == 0.0) {
            total += g[i];
            continue;
        }
        if (g[i] == 0.0) return std::numeric_limits<double>::infinity();
        total += -f[i] - f[i] * std::log(g[i] / f[i]) + g[i];
    }
    return total;
}

PathSample draw_path_sample(const PairSampler& pairs, const Scheduler& sched,
                            const TrainConfig& cfg, const Vocab& vocab, Rng& rng) {
    CoupledDraw draw = pairs(rng);
    double t = 0.0;
    double importance = 1.0;
    if (cfg.t_log_sampling) {
        // Half the draws are uniform in t, half uniform in -log(1-t); the
        // importance factor corrects back to the uniform time law exactly.
        const double s_max = -std::log(cfg.t_delta);
        if (rng.uniform() < 0.5) {
            t = rng.uniform() * (1.0 - cfg.t_delta);
        } else {
            t = -std::expm1(-rng.uniform() * s_max);
        }
        const double g_unif = 1.0 / (1.0 - cfg.t_delta);
        const double g_log = 1.0 / ((1.0 - t) * s_max);
        importance = g_unif / (0.5 * g_unif + 0.5 * g_log);
    } else {
        t = rng.uniform() * (1.0 - cfg.t_delta);
    }
    const bool drop = draw.cond_tokens > 0 && cfg.cond_drop > 0.0 && rng.uniform() < cfg.cond_drop;
    PathSample s = cfg.localized
                       ? sample_zt_localized(draw.pair, t, sched, cfg.lambda_prop, vocab, rng)
                       : sample_zt(draw.pair, t, sched, vocab, rng);
    s.cond_tokens = drop ? 0 : draw.cond_tokens;
    s.cond_visible = !drop;
    s.importance = importance;
    return s;
}

namespace {

void write_metrics_line(std::ostream& os, const StepMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%lld\n", m.step, m.stats.loss,
                  m.stats.term1, m.stats.term2, m.grad_norm,
                  static_cast<long long>(m.stats.clamp_warnings));
    os << buf;
}

}  // namespace

TrainResult train(ModelParams& params, const PairSampler& pairs, const TrainConfig& cfg,
                  std::ostream* metrics) {
    cfg.validate();
    const Scheduler sched{cfg.scheduler};
    const Vocab vocab = params.vocab;
    const size_t dim = params.theta.size();

    std::vector<double> grad(dim, 0.0);
    std::vector<double> adam_m, adam_v;
    if (cfg.optimizer == OptimizerKind::Adam) {
        adam_m.assign(dim, 0.0);
        adam_v.assign(dim, 0.0);
    }

    if (metrics) *metrics << "step,loss,term1,term2,grad_norm,clamp_warnings\n";

    TrainResult result;
    result.history.reserve(static_cast<size_t>(cfg.steps));
    std::vector<PathSample> batch(static_cast<size_t>(cfg.batch));

    for (int step = 0; step < cfg.steps; ++step) {
        const int64_t batch_count = cfg.batch;
#pragma omp parallel for schedule(static) if (cfg.parallel)
        for (int64_t i = 0; i < batch_count; ++i) {
            Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(step) * batch_count +
                                              static_cast<uint64_t>(i));
            batch[static_cast<size_t>(i)] = draw_path_sample(pairs, sched, cfg, vocab, rng);
        }

        const LossStats stats = loss_and_grad(params, batch, grad, cfg.parallel);
        if (!std::isfinite(stats.loss)) {
            throw std::runtime_error("train: loss diverged at step " + std::to_string(step) +
                                     " (loss=" + std::to_string(stats.loss) +
                                     ", term1=" + std::to_string(stats.term1) +
                                     ", term2=" + std::to_string(stats.term2) + ")");
        }

        double norm_sq = 0.0;
        for (double g : grad) norm_sq += g * g;

        const int64_t dim_count = static_cast<int64_t>(dim);
        if (cfg.optimizer == OptimizerKind::Sgd) {
#pragma omp parallel for schedule(static) if (cfg.parallel)
            for (int64_t i = 0; i < dim_count; ++i)
                params.theta[static_cast<size_t>(i)] -= cfg.lr * grad[static_cast<size_t>(i)];
        } else {
            const double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
            const double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
#pragma omp parallel for schedule(static) if (cfg.parallel)
            for (int64_t i = 0; i < dim_count; ++i) {
                const size_t k = static_cast<size_t>(i);
                adam_m[k] = cfg.beta1 * adam_m[k] + (1.0 - cfg.beta1) * grad[k];
                adam_v[k] = cfg.beta2 * adam_v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
                const double m_hat = adam_m[k] / bc1;
                const double v_hat = adam_v[k] / bc2;
                params.theta[k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
            }
        }

        StepMetrics sm{step, stats, std::sqrt(norm_sq)};
        if (metrics) write_metrics_line(*metrics, sm);
        result.clamp_warnings += stats.clamp_warnings;
        result.history.push_back(std::move(sm));
    }
    return result;
}

TrainResult train_reverse(ModelParams& params, const PairSampler& pairs, const TrainConfig& cfg,
                          std::ostream* metrics) {
    PairSampler swapped = [&pairs](Rng& rng) {
        CoupledDraw d = pairs(rng);
        d.pair = swap_sides(std::move(d.pair));
        return d;
    };
    return train(params, swapped, cfg, metrics);
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "adam") return OptimizerKind::Adam;
    throw std::invalid_argument("unknown optimizer kind: " + s);
}

}  // namespace editflow
