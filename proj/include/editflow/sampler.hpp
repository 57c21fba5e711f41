#pragma once

// Forward simulation of the edit CTMC.
//
// euler_step fires edits independently per anchor with first-order
// probabilities h*lambda (clamped to 1) and applies everything that fired at
// once. simulate iterates a fixed step grid and optionally interleaves
// corrector moves: overshoot forward to t + h*(1+alpha) with the forward
// rates, then step back to t + h with a reverse-rate model.
//
// gillespie_simulate is the event-driven reference: exact for rates that are
// constant within each time slice, used as ground truth against euler_step.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "editflow/rate_model.hpp"
#include "editflow/rng.hpp"
#include "editflow/sequence.hpp"

namespace editflow {

enum class CfgVariant { Off, Weighted, Fixed, Naive };

const char* to_string(CfgVariant v);
CfgVariant cfg_variant_from_string(const std::string& s);

// alpha(t) = c * t^a * (1-t)^b; c == 0 disables the corrector.
struct CorrectorSchedule {
    double c = 0.0;
    double a = 0.0;
    double b = 0.0;

    double alpha(double t) const {
        if (c == 0.0) return 0.0;
        return c * std::pow(t, a) * std::pow(1.0 - t, b);
    }
};

struct SamplerConfig {
    int steps = 256;
    double guidance_w = 1.0;
    CfgVariant cfg = CfgVariant::Off;
    double temperature = 1.0;
    double top_p = 1.0;
    int top_k = 0;  // 0 = unset
    CorrectorSchedule corrector;
    uint64_t seed = 0;
    int max_len = 256;

    // Knobs applied to the reverse rates during corrector moves.
    double reverse_guidance_w = 1.0;
    double reverse_temperature = 1.0;
    double reverse_top_p = 1.0;
    int reverse_top_k = 0;

    void validate() const;
};

struct GenerationTrace {
    struct Record {
        int step = 0;
        double t = 0.0;
        // Each phase is a set of simultaneous edits anchored in the sequence
        // it applies to; corrector steps produce two phases.
        std::vector<std::vector<EditOp>> phases;
        Sequence x;
    };
    std::vector<Record> records;
    int64_t dropped_insertions = 0;

    const Sequence& final_x() const { return records.back().x; }
    int64_t total_edits() const;
};

// Rates for a state at a time; prediction shape must match x.
using RateFn = std::function<RatePrediction(const Sequence&, double)>;

RateFn model_rate_fn(const ModelParams& params, PredictContext ctx = {});

// Precomputes predictions for every (state, t-bucket) of a tabular model so
// simulation loops avoid repeated softmax work. Uses the default context.
RateFn cached_tabular_rate_fn(const ModelParams& params);

// Combines conditional and unconditional predictions at guidance weight w.
RatePrediction apply_cfg(const RatePrediction& cond, const RatePrediction& uncond, double w,
                         CfgVariant variant);

RateFn guided_rate_fn(RateFn cond, RateFn uncond, double w, CfgVariant variant);

// Distribution sharpening, applied in the order temperature, top-k, top-p.
// Disabled stages (temperature 1, top_k 0, top_p 1) leave the row untouched.
void sharpen_row(std::span<double> row, double temperature, double top_p, int top_k);
RatePrediction sharpen_prediction(RatePrediction pred, double temperature, double top_p,
                                  int top_k);

struct EulerStepResult {
    Sequence x;
    std::vector<EditOp> edits;
    int dropped_insertions = 0;
};

// One first-order step of size h from the given (already guided/sharpened)
// prediction. Insertions that would push the sequence past max_len are
// dropped rightmost-first and counted.
EulerStepResult euler_step(const RatePrediction& pred, const Sequence& x, double h,
                           const Vocab& vocab, int max_len, Rng& rng);

// Iterates euler_step over cfg.steps uniform steps from t=0 to t=1; `reverse`
// must be non-null whenever the corrector schedule is active.
GenerationTrace simulate(const RateFn& forward, const RateFn* reverse, const Sequence& x0,
                         const SamplerConfig& cfg, const Vocab& vocab, Rng& rng);

struct GillespieConfig {
    double t_end = 1.0;
    double slice_width = 1e-3;  // rates are frozen at the start of each slice
    int max_len = 256;
    int64_t max_events = 10'000'000;
};

GenerationTrace gillespie_simulate(const RateFn& rates, const Sequence& x0,
                                   const GillespieConfig& cfg, const Vocab& vocab, Rng& rng);

// Trace text format (one record per line, tab separated):
//   step  t  phases  token ids
// with phases "-" when empty, "|" between phases, ";" between edits.
std::string format_trace_record(const GenerationTrace::Record& rec);
GenerationTrace::Record parse_trace_record(const std::string& line);

// Re-applies a record's phases to `x`; equals the record's stored sequence
// for traces produced by simulate.
Sequence replay_record(const Sequence& x, const GenerationTrace::Record& rec, const Vocab& vocab,
                       int max_len);

}  // namespace editflow
