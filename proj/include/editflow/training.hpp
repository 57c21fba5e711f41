#pragma once

// Training loss and optimization loop.
//
// The per-sample loss is the model's total exit rate at x_t minus, for every
// cell of z_t still disagreeing with z1, the cell weight times the log rate
// of the edit that fixes it. Batch loss and gradient are means over samples.
//
// The batch kernel has a serial reference path and an OpenMP path; both
// accumulate per-sample contributions in sample order, so results are
// bit-identical to each other regardless of thread count.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "editflow/alignment.hpp"
#include "editflow/paths.hpp"
#include "editflow/rate_model.hpp"
#include "editflow/rng.hpp"
#include "editflow/scheduler.hpp"

namespace editflow {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    CouplingMode coupling = CouplingMode::WorstCase;
    SchedulerKind scheduler = SchedulerKind::Cubic;
    int batch = 256;
    int steps = 1000;
    double lr = 1e-2;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    bool localized = false;
    double lambda_prop = 0.0;
    double cond_drop = 0.0;
    uint64_t seed = 0;
    double t_delta = 1e-3;  // t is drawn uniformly on [0, 1 - t_delta]
    // Mix uniform draws of t with draws uniform in -log(1-t), corrected by
    // exact importance weights. Same objective, far lower variance on the
    // late-time rates.
    bool t_log_sampling = false;
    bool parallel = true;

    void validate() const;
};

struct LossStats {
    double loss = 0.0;
    double term1 = 0.0;          // mean exit rate
    double term2 = 0.0;          // mean weighted negative log rate of pending edits
    int64_t clamp_warnings = 0;  // edits whose model rate fell below the log clamp
};

// Rates below this floor are clamped before the log; such events are counted
// rather than treated as errors.
inline constexpr double kRateClampFloor = 1e-30;

// Mean loss over the batch; gradient (same length as params.theta) is
// overwritten. Requires every sample to satisfy t < 1 with finite weights.
LossStats loss_and_grad(const ModelParams& params, std::span<const PathSample> batch,
                        std::vector<double>& grad, bool parallel = true);

// Generalized KL between two nonnegative vectors on a shared support:
// sum of (-f - f*log(g/f) + g), with 0*log(0) = 0. Returns +infinity when g
// vanishes somewhere f does not.
double bregman_divergence(std::span<const double> f, std::span<const double> g);

// One coupled pair plus the length of its conditioning prefix (tokens after
// BOS shared by both sides and never edited).
struct CoupledDraw {
    AlignedPair pair;
    int cond_tokens = 0;
};

// Draws one coupled pair; invoked with an independent stream per sample.
using PairSampler = std::function<CoupledDraw(Rng&)>;

// Draws one training sample (pair, t, z_t, weights) from a pair sampler. With
// probability cfg.cond_drop the conditioning view is dropped entirely.
PathSample draw_path_sample(const PairSampler& pairs, const Scheduler& sched,
                            const TrainConfig& cfg, const Vocab& vocab, Rng& rng);

struct StepMetrics {
    int step = 0;
    LossStats stats;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<StepMetrics> history;
    int64_t clamp_warnings = 0;
};

// Metric records are written to `metrics` (when given) as CSV, one line per
// step: step,loss,term1,term2,grad_norm,clamp_warnings.
TrainResult train(ModelParams& params, const PairSampler& pairs, const TrainConfig& cfg,
                  std::ostream* metrics = nullptr);

// Same recipe with the two sides of every coupled pair swapped; the resulting
// model transports the data distribution back to the source and is what the
// corrector sampler steps with in reverse time.
TrainResult train_reverse(ModelParams& params, const PairSampler& pairs, const TrainConfig& cfg,
                          std::ostream* metrics = nullptr);

const char* to_string(OptimizerKind k);
OptimizerKind optimizer_kind_from_string(const std::string& s);

}  // namespace editflow
