#pragma once

// Parametric edit-rate models.
//
// A model maps (x_t, t) to per-position rates: an insert rate for every
// anchor, delete/substitute rates for every non-BOS position, and normalized
// token distributions for inserts and substitutions. Raw parameters are
// logits; rates go through a clamped exponential and distributions through a
// softmax, so any finite parameter vector yields a valid prediction.
//
// Two parameterizations:
//   tabular     — one logit block per (sequence, quantized-t bucket); only
//                 usable when every reachable sequence fits the enumerated
//                 table (lengths up to max_tail tokens after BOS).
//   featurized  — shared linear map from a local token window, the time t,
//                 the relative position, and a conditioning flag.
//
// The substitution distribution assigns zero mass to the token already at the
// position, so summing rates over the one-edit neighbors of x_t gives exactly
// the total exit rate.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "editflow/sequence.hpp"

namespace editflow {

struct RatePrediction {
    int n = 0;  // positions in x_t, including BOS
    int m = 0;  // vocabulary size
    std::vector<double> lam_ins;  // size n; anchor p inserts to the right of p
    std::vector<double> lam_del;  // size n; slot 0 is always 0
    std::vector<double> lam_sub;  // size n; slot 0 is always 0
    std::vector<double> q_ins;    // n x m, row-major
    std::vector<double> q_sub;    // n x m, row-major; row 0 unused

    double exit_rate() const;
    double q_ins_at(int p, TokenId a) const { return q_ins[static_cast<size_t>(p) * m + a]; }
    double q_sub_at(int p, TokenId a) const { return q_sub[static_cast<size_t>(p) * m + a]; }
};

// Cotangent with respect to a RatePrediction's fields.
struct PredictionCotangent {
    std::vector<double> lam_ins, lam_del, lam_sub;  // size n
    std::vector<double> q_ins, q_sub;               // n x m

    static PredictionCotangent zeros(int n, int m);
};

struct PredictContext {
    int cond_tokens = 0;       // protected prompt tokens following BOS; no edits inside
    bool cond_visible = true;  // false gives the unconditional view for guidance
};

enum class ModelKind { Tabular, Featurized };

struct ModelParams {
    ModelKind kind = ModelKind::Tabular;
    Vocab vocab;
    int n_max = 256;

    // tabular
    int max_tail = 0;
    int t_buckets = 1;

    // featurized
    int window_radius = 2;

    std::vector<double> theta;

    int64_t param_count() const { return static_cast<int64_t>(theta.size()); }
};

ModelParams make_tabular_params(const Vocab& vocab, int max_tail, int t_buckets, int n_max);
ModelParams make_featurized_params(const Vocab& vocab, int window_radius, int n_max);

// Tabular time quantization. Buckets are log-spaced in 1-t down to a floor of
// 1e-3; the last bucket absorbs everything closer to 1. Log-time training
// draws (TrainConfig::t_log_sampling) give every bucket equal occupancy.
int time_bucket(double t, int buckets);
// Midpoint (in log space) of a bucket, used when tabulating predictions.
double bucket_representative_t(int bucket, int buckets);

// Deterministic in all arguments. Tabular models throw std::out_of_range when
// x_t is longer than the enumerated table allows.
RatePrediction predict(const ModelParams& params, const Sequence& x, double t,
                       const PredictContext& ctx = {});

double rate_of_edit(const RatePrediction& pred, const EditOp& op);

// Pulls `cot` back through predict and adds scale * d(prediction)/d(theta)
// into grad (same length as params.theta). Matches central finite differences
// away from the logit clamp boundary.
void accumulate_predict_grad(const ModelParams& params, const Sequence& x, double t,
                             const PredictContext& ctx, const PredictionCotangent& cot,
                             double scale, std::vector<std::pair<int64_t, double>>& grad_entries);

// Checkpoint blob: a versioned text header followed by one hex-float
// parameter per line; round-trips bit-exactly.
void save_checkpoint(const ModelParams& params, std::ostream& os);
ModelParams load_checkpoint(std::istream& is);
void save_checkpoint_file(const ModelParams& params, const std::string& path,
                          const std::string& provenance_line = "");
ModelParams load_checkpoint_file(const std::string& path);

const char* to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

}  // namespace editflow
