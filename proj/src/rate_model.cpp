#include "editflow/rate_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace editflow {

namespace {

constexpr double kLogitClamp = 30.0;

double clamped_exp(double logit) {
    return std::exp(std::clamp(logit, -kLogitClamp, kLogitClamp));
}

bool inside_clamp(double logit) { return logit > -kLogitClamp && logit < kLogitClamp; }

// --------------------------------------------------------------------------
// tabular layout
// --------------------------------------------------------------------------

// Logits for a state with n positions (tail length k = n-1):
//   [0, n)                 lam_ins
//   [n, 2n-1)              lam_del for positions 1..n-1
//   [2n-1, 3n-2)           lam_sub for positions 1..n-1
//   [3n-2, 3n-2+n*M)       q_ins rows
//   [3n-2+n*M, ...)        q_sub rows for positions 1..n-1
int64_t block_size(int tail, int m) {
    const int64_t n = tail + 1;
    return 3 * n - 2 + (2 * n - 1) * m;
}

struct TabularLayout {
    int m = 0;
    int max_tail = 0;
    std::vector<int64_t> pow_m;         // M^k
    std::vector<int64_t> theta_prefix;  // sum over shorter tails of M^k * block
    int64_t stride = 0;                 // theta slots per t-bucket

    TabularLayout(int m_, int max_tail_) : m(m_), max_tail(max_tail_) {
        pow_m.resize(static_cast<size_t>(max_tail) + 1);
        theta_prefix.resize(static_cast<size_t>(max_tail) + 2);
        pow_m[0] = 1;
        theta_prefix[0] = 0;
        for (int k = 0; k <= max_tail; ++k) {
            if (k > 0) pow_m[static_cast<size_t>(k)] = pow_m[static_cast<size_t>(k) - 1] * m;
            theta_prefix[static_cast<size_t>(k) + 1] =
                theta_prefix[static_cast<size_t>(k)] +
                pow_m[static_cast<size_t>(k)] * block_size(k, m);
        }
        stride = theta_prefix[static_cast<size_t>(max_tail) + 1];
    }

    int64_t state_offset(const Sequence& x) const {
        const int tail = x.size() - 1;
        int64_t rank = 0;
        for (int i = 1; i < x.size(); ++i) rank = rank * m + x[i];
        return theta_prefix[static_cast<size_t>(tail)] + rank * block_size(tail, m);
    }
};



// --------------------------------------------------------------------------
// featurized layout
// --------------------------------------------------------------------------

constexpr int kWindow = 5;  // token slots at offsets -2..2

struct FeaturizedLayout {
    int m = 0;
    int features = 0;  // 5 one-hot blocks of (M+1) plus t, relpos, bias, cond
    int outputs = 0;   // l_ins, l_del, l_sub, q_ins logits, q_sub logits

    explicit FeaturizedLayout(int m_)
        : m(m_), features(kWindow * (m_ + 1) + 4), outputs(3 + 2 * m_) {}

    int64_t theta_size() const { return static_cast<int64_t>(outputs) * features; }
    int feat_t() const { return kWindow * (m + 1); }
    int feat_relpos() const { return kWindow * (m + 1) + 1; }
    int feat_bias() const { return kWindow * (m + 1) + 2; }
    int feat_cond() const { return kWindow * (m + 1) + 3; }
};

// Active features of position p: the five window one-hots plus the scalar
// slots. Everything else is zero, so dot products stay O(outputs * 9).
struct ActiveFeatures {
    int idx[kWindow + 4];
    double val[kWindow + 4];
    int count = 0;

    void add(int i, double v) {
        idx[count] = i;
        val[count] = v;
        ++count;
    }
};

ActiveFeatures position_features(const FeaturizedLayout& lay, const Sequence& x, int p, double t,
                                 const PredictContext& ctx) {
    ActiveFeatures f;
    const int n = x.size();
    for (int d = -2; d <= 2; ++d) {
        const int q = p + d;
        const int tok = (q >= 0 && q < n) ? x[q] : lay.m;  // out-of-range class
        f.add((d + 2) * (lay.m + 1) + tok, 1.0);
    }
    f.add(lay.feat_t(), t);
    f.add(lay.feat_relpos(), n > 1 ? static_cast<double>(p) / (n - 1) : 0.0);
    f.add(lay.feat_bias(), 1.0);
    const bool flagged = ctx.cond_visible && ctx.cond_tokens > 0 && p <= ctx.cond_tokens;
    if (flagged) f.add(lay.feat_cond(), 1.0);
    return f;
}

void softmax_into(const double* logits, const int* skip_token, double* out, int m) {
    double max_logit = -1e300;
    for (int a = 0; a < m; ++a) {
        if (skip_token && a == *skip_token) continue;
        max_logit = std::max(max_logit, std::clamp(logits[a], -kLogitClamp, kLogitClamp));
    }
    double total = 0.0;
    for (int a = 0; a < m; ++a) {
        if (skip_token && a == *skip_token) {
            out[a] = 0.0;
            continue;
        }
        out[a] = std::exp(std::clamp(logits[a], -kLogitClamp, kLogitClamp) - max_logit);
        total += out[a];
    }
    for (int a = 0; a < m; ++a) out[a] /= total;
}

void check_predict_args(const ModelParams& params, const Sequence& x, double t,
                        const PredictContext& ctx) {
    if (x.size() < 1 || x[0] != params.vocab.bos)
        throw std::invalid_argument("predict: x must carry the BOS sentinel");
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("predict: t outside [0,1]");
    if (ctx.cond_tokens < 0 || ctx.cond_tokens >= x.size())
        throw std::invalid_argument("predict: cond_tokens out of range");
}

}  // namespace

namespace {
constexpr double kBucketTailFloor = 1e-3;
}

int time_bucket(double t, int buckets) {
    const double s_max = -std::log(kBucketTailFloor);
    const double s = -std::log1p(-std::min(t, 1.0 - kBucketTailFloor));
    return std::clamp(static_cast<int>(buckets * s / s_max), 0, buckets - 1);
}

double bucket_representative_t(int bucket, int buckets) {
    const double s_max = -std::log(kBucketTailFloor);
    const double s = (bucket + 0.5) * s_max / buckets;
    return -std::expm1(-s);
}

double RatePrediction::exit_rate() const {
    double total = 0.0;
    for (double v : lam_ins) total += v;
    for (double v : lam_del) total += v;
    for (double v : lam_sub) total += v;
    return total;
}

PredictionCotangent PredictionCotangent::zeros(int n, int m) {
    PredictionCotangent c;
    c.lam_ins.assign(static_cast<size_t>(n), 0.0);
    c.lam_del.assign(static_cast<size_t>(n), 0.0);
    c.lam_sub.assign(static_cast<size_t>(n), 0.0);
    c.q_ins.assign(static_cast<size_t>(n) * m, 0.0);
    c.q_sub.assign(static_cast<size_t>(n) * m, 0.0);
    return c;
}

// Rate logits start low so an untrained slot proposes almost no edits;
// distribution logits start uniform.
constexpr double kLambdaLogitInit = -3.0;

ModelParams make_tabular_params(const Vocab& vocab, int max_tail, int t_buckets, int n_max) {
    vocab.validate();
    if (max_tail < 0) throw std::invalid_argument("make_tabular_params: max_tail must be >= 0");
    if (t_buckets < 1) throw std::invalid_argument("make_tabular_params: t_buckets must be >= 1");
    ModelParams p;
    p.kind = ModelKind::Tabular;
    p.vocab = vocab;
    p.n_max = n_max;
    p.max_tail = max_tail;
    p.t_buckets = t_buckets;
    TabularLayout lay(vocab.size, max_tail);
    p.theta.assign(static_cast<size_t>(lay.stride) * t_buckets, 0.0);
    for (int b = 0; b < t_buckets; ++b) {
        for (int k = 0; k <= max_tail; ++k) {
            const int n = k + 1;
            const int64_t count = [&] {
                int64_t c = 1;
                for (int j = 0; j < k; ++j) c *= vocab.size;
                return c;
            }();
            for (int64_t r = 0; r < count; ++r) {
                const int64_t blk = static_cast<int64_t>(b) * lay.stride +
                                    lay.theta_prefix[static_cast<size_t>(k)] +
                                    r * block_size(k, vocab.size);
                for (int64_t i = 0; i < 3 * n - 2; ++i)
                    p.theta[static_cast<size_t>(blk + i)] = kLambdaLogitInit;
            }
        }
    }
    return p;
}

ModelParams make_featurized_params(const Vocab& vocab, int window_radius, int n_max) {
    vocab.validate();
    if (window_radius != 2)
        throw std::invalid_argument("make_featurized_params: only window radius 2 is supported");
    ModelParams p;
    p.kind = ModelKind::Featurized;
    p.vocab = vocab;
    p.n_max = n_max;
    p.window_radius = window_radius;
    FeaturizedLayout lay(vocab.size);
    p.theta.assign(static_cast<size_t>(lay.theta_size()), 0.0);
    return p;
}

RatePrediction predict(const ModelParams& params, const Sequence& x, double t,
                       const PredictContext& ctx) {
    check_predict_args(params, x, t, ctx);
    const int n = x.size();
    const int m = params.vocab.size;
    RatePrediction pred;
    pred.n = n;
    pred.m = m;
    pred.lam_ins.assign(static_cast<size_t>(n), 0.0);
    pred.lam_del.assign(static_cast<size_t>(n), 0.0);
    pred.lam_sub.assign(static_cast<size_t>(n), 0.0);
    pred.q_ins.assign(static_cast<size_t>(n) * m, 0.0);
    pred.q_sub.assign(static_cast<size_t>(n) * m, 0.0);

    const int first_ins = ctx.cond_tokens;       // anchors below this stay inside the prompt
    const int first_edit = ctx.cond_tokens + 1;  // first position delete/substitute may touch

    if (params.kind == ModelKind::Tabular) {
        if (x.size() - 1 > params.max_tail)
            throw std::out_of_range("predict: state outside the enumerated table");
        for (int i = 1; i < n; ++i)
            if (!params.vocab.valid_token(x[i]))
                throw std::out_of_range("predict: state outside the enumerated table");
        TabularLayout lay(m, params.max_tail);
        const int64_t base = static_cast<int64_t>(time_bucket(t, params.t_buckets)) * lay.stride +
                             lay.state_offset(x);
        const double* blk = params.theta.data() + base;
        for (int p = 0; p < n; ++p) {
            if (p >= first_ins) pred.lam_ins[static_cast<size_t>(p)] = clamped_exp(blk[p]);
        }
        for (int p = 1; p < n; ++p) {
            if (p >= first_edit) {
                pred.lam_del[static_cast<size_t>(p)] = clamped_exp(blk[n + (p - 1)]);
                if (m > 1)
                    pred.lam_sub[static_cast<size_t>(p)] = clamped_exp(blk[2 * n - 1 + (p - 1)]);
            }
        }
        const double* q_ins_logits = blk + 3 * n - 2;
        const double* q_sub_logits = q_ins_logits + static_cast<int64_t>(n) * m;
        for (int p = 0; p < n; ++p) {
            softmax_into(q_ins_logits + static_cast<int64_t>(p) * m, nullptr,
                         pred.q_ins.data() + static_cast<size_t>(p) * m, m);
        }
        for (int p = 1; p < n; ++p) {
            if (m > 1) {
                const int cur = x[p];
                softmax_into(q_sub_logits + static_cast<int64_t>(p - 1) * m, &cur,
                             pred.q_sub.data() + static_cast<size_t>(p) * m, m);
            } else {
                pred.q_sub[static_cast<size_t>(p) * m + x[p]] = 1.0;  // rate is forced to 0
            }
        }
        return pred;
    }

    FeaturizedLayout lay(m);
    std::vector<double> logits(static_cast<size_t>(lay.outputs));
    for (int p = 0; p < n; ++p) {
        const ActiveFeatures f = position_features(lay, x, p, t, ctx);
        for (int o = 0; o < lay.outputs; ++o) {
            const double* row = params.theta.data() + static_cast<int64_t>(o) * lay.features;
            double v = 0.0;
            for (int k = 0; k < f.count; ++k) v += row[f.idx[k]] * f.val[k];
            logits[static_cast<size_t>(o)] = v;
        }
        if (p >= first_ins) pred.lam_ins[static_cast<size_t>(p)] = clamped_exp(logits[0]);
        if (p >= first_edit && p >= 1) {
            pred.lam_del[static_cast<size_t>(p)] = clamped_exp(logits[1]);
            if (m > 1) pred.lam_sub[static_cast<size_t>(p)] = clamped_exp(logits[2]);
        }
        softmax_into(logits.data() + 3, nullptr, pred.q_ins.data() + static_cast<size_t>(p) * m, m);
        if (p >= 1) {
            if (m > 1) {
                const int cur = x[p];
                softmax_into(logits.data() + 3 + m, &cur,
                             pred.q_sub.data() + static_cast<size_t>(p) * m, m);
            } else {
                pred.q_sub[static_cast<size_t>(p) * m + x[p]] = 1.0;
            }
        }
    }
    return pred;
}

double rate_of_edit(const RatePrediction& pred, const EditOp& op) {
    switch (op.kind) {
        case EditKind::Insert:
            if (op.pos < 0 || op.pos >= pred.n || op.token < 0 || op.token >= pred.m)
                throw std::out_of_range("rate_of_edit: bad insert");
            return pred.lam_ins[static_cast<size_t>(op.pos)] * pred.q_ins_at(op.pos, op.token);
        case EditKind::Delete:
            if (op.pos < 1 || op.pos >= pred.n) throw std::out_of_range("rate_of_edit: bad delete");
            return pred.lam_del[static_cast<size_t>(op.pos)];
        case EditKind::Substitute:
            if (op.pos < 1 || op.pos >= pred.n || op.token < 0 || op.token >= pred.m)
                throw std::out_of_range("rate_of_edit: bad substitute");
            return pred.lam_sub[static_cast<size_t>(op.pos)] * pred.q_sub_at(op.pos, op.token);
    }
    throw std::invalid_argument("rate_of_edit: unknown kind");
}

namespace {

// Softmax pullback: given output probabilities s and cotangent g over them,
// the logit cotangent is s_a * (g_a - <g, s>).
void softmax_pullback(const double* s, const double* g, int m, const int* skip_token,
                      int64_t theta_base, double scale,
                      std::vector<std::pair<int64_t, double>>& out) {
    double gs = 0.0;
    for (int a = 0; a < m; ++a) {
        if (skip_token && a == *skip_token) continue;
        gs += g[a] * s[a];
    }
    for (int a = 0; a < m; ++a) {
        if (skip_token && a == *skip_token) continue;
        const double v = s[a] * (g[a] - gs);
        if (v != 0.0) out.emplace_back(theta_base + a, scale * v);
    }
}

}  // namespace

void accumulate_predict_grad(const ModelParams& params, const Sequence& x, double t,
                             const PredictContext& ctx, const PredictionCotangent& cot,
                             double scale, std::vector<std::pair<int64_t, double>>& grad_entries) {
    check_predict_args(params, x, t, ctx);
    const int n = x.size();
    const int m = params.vocab.size;
    const RatePrediction pred = predict(params, x, t, ctx);
    const int first_ins = ctx.cond_tokens;
    const int first_edit = ctx.cond_tokens + 1;

    if (params.kind == ModelKind::Tabular) {
        TabularLayout lay(m, params.max_tail);
        const int64_t base = static_cast<int64_t>(time_bucket(t, params.t_buckets)) * lay.stride +
                             lay.state_offset(x);
        const double* blk = params.theta.data() + base;
        for (int p = 0; p < n; ++p) {
            if (p >= first_ins && inside_clamp(blk[p]) && cot.lam_ins[static_cast<size_t>(p)] != 0.0)
                grad_entries.emplace_back(
                    base + p, scale * cot.lam_ins[static_cast<size_t>(p)] *
                                  pred.lam_ins[static_cast<size_t>(p)]);
        }
        for (int p = 1; p < n; ++p) {
            if (p < first_edit) continue;
            if (inside_clamp(blk[n + (p - 1)]) && cot.lam_del[static_cast<size_t>(p)] != 0.0)
                grad_entries.emplace_back(
                    base + n + (p - 1), scale * cot.lam_del[static_cast<size_t>(p)] *
                                            pred.lam_del[static_cast<size_t>(p)]);
            if (m > 1 && inside_clamp(blk[2 * n - 1 + (p - 1)]) &&
                cot.lam_sub[static_cast<size_t>(p)] != 0.0)
                grad_entries.emplace_back(
                    base + 2 * n - 1 + (p - 1), scale * cot.lam_sub[static_cast<size_t>(p)] *
                                                    pred.lam_sub[static_cast<size_t>(p)]);
        }
        const int64_t q_ins_base = base + 3 * n - 2;
        const int64_t q_sub_base = q_ins_base + static_cast<int64_t>(n) * m;
        for (int p = 0; p < n; ++p) {
            softmax_pullback(pred.q_ins.data() + static_cast<size_t>(p) * m,
                             cot.q_ins.data() + static_cast<size_t>(p) * m, m, nullptr,
                             q_ins_base + static_cast<int64_t>(p) * m, scale, grad_entries);
        }
        if (m > 1) {
            for (int p = 1; p < n; ++p) {
                const int cur = x[p];
                softmax_pullback(pred.q_sub.data() + static_cast<size_t>(p) * m,
                                 cot.q_sub.data() + static_cast<size_t>(p) * m, m, &cur,
                                 q_sub_base + static_cast<int64_t>(p - 1) * m, scale,
                                 grad_entries);
            }
        }
        return;
    }

    FeaturizedLayout lay(m);
    std::vector<double> logits(static_cast<size_t>(lay.outputs));
    std::vector<double> dlogits(static_cast<size_t>(lay.outputs));
    for (int p = 0; p < n; ++p) {
        const ActiveFeatures f = position_features(lay, x, p, t, ctx);
        for (int o = 0; o < lay.outputs; ++o) {
            const double* row = params.theta.data() + static_cast<int64_t>(o) * lay.features;
            double v = 0.0;
            for (int k = 0; k < f.count; ++k) v += row[f.idx[k]] * f.val[k];
            logits[static_cast<size_t>(o)] = v;
        }
        std::fill(dlogits.begin(), dlogits.end(), 0.0);
        if (p >= first_ins && inside_clamp(logits[0]))
            dlogits[0] = cot.lam_ins[static_cast<size_t>(p)] * pred.lam_ins[static_cast<size_t>(p)];
        if (p >= first_edit && p >= 1) {
            if (inside_clamp(logits[1]))
                dlogits[1] =
                    cot.lam_del[static_cast<size_t>(p)] * pred.lam_del[static_cast<size_t>(p)];
            if (m > 1 && inside_clamp(logits[2]))
                dlogits[2] =
                    cot.lam_sub[static_cast<size_t>(p)] * pred.lam_sub[static_cast<size_t>(p)];
        }
        {
            const double* s = pred.q_ins.data() + static_cast<size_t>(p) * m;
            const double* g = cot.q_ins.data() + static_cast<size_t>(p) * m;
            double gs = 0.0;
            for (int a = 0; a < m; ++a) gs += g[a] * s[a];
            for (int a = 0; a < m; ++a) dlogits[static_cast<size_t>(3 + a)] = s[a] * (g[a] - gs);
        }
        if (p >= 1 && m > 1) {
            const double* s = pred.q_sub.data() + static_cast<size_t>(p) * m;
            const double* g = cot.q_sub.data() + static_cast<size_t>(p) * m;
            const int cur = x[p];
            double gs = 0.0;
            for (int a = 0; a < m; ++a)
                if (a != cur) gs += g[a] * s[a];
            for (int a = 0; a < m; ++a)
                dlogits[static_cast<size_t>(3 + m + a)] = a == cur ? 0.0 : s[a] * (g[a] - gs);
        }
        for (int o = 0; o < lay.outputs; ++o) {
            const double d = dlogits[static_cast<size_t>(o)];
            if (d == 0.0) continue;
            for (int k = 0; k < f.count; ++k) {
                grad_entries.emplace_back(static_cast<int64_t>(o) * lay.features + f.idx[k],
                                          scale * d * f.val[k]);
            }
        }
    }
}

// --------------------------------------------------------------------------
// checkpoint io
// --------------------------------------------------------------------------

const char* to_string(ModelKind k) { return k == ModelKind::Tabular ? "tabular" : "featurized"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "tabular") return ModelKind::Tabular;
    if (s == "featurized") return ModelKind::Featurized;
    throw std::invalid_argument("unknown model kind: " + s);
}

void save_checkpoint(const ModelParams& params, std::ostream& os) {
    os << "editflow-checkpoint v1\n";
    os << "kind=" << to_string(params.kind) << "\n";
    os << "vocab_size=" << params.vocab.size << "\n";
    os << "bos_id=" << params.vocab.bos << "\n";
    os << "n_max=" << params.n_max << "\n";
    os << "max_tail=" << params.max_tail << "\n";
    os << "t_buckets=" << params.t_buckets << "\n";
    os << "window_radius=" << params.window_radius << "\n";
    os << "param_count=" << params.param_count() << "\n";
    char buf[48];
    for (double v : params.theta) {
        std::snprintf(buf, sizeof(buf), "%a\n", v);
        os << buf;
    }
    os << "end\n";
}

namespace {

std::pair<std::string, std::string> split_kv(const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos)
        throw std::runtime_error("checkpoint: malformed header line: " + line);
    return {line.substr(0, eq), line.substr(eq + 1)};
}

}  // namespace

ModelParams load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("checkpoint: empty stream");
    while (!line.empty() && line[0] == '#') {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: empty stream");
    }
    if (line != "editflow-checkpoint v1")
        throw std::runtime_error("checkpoint: unsupported format: " + line);
    ModelParams p;
    int64_t count = -1;
    for (int i = 0; i < 8; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated header");
        auto [key, value] = split_kv(line);
        if (key == "kind") p.kind = model_kind_from_string(value);
        else if (key == "vocab_size") p.vocab.size = std::stoi(value);
        else if (key == "bos_id") p.vocab.bos = std::stoi(value);
        else if (key == "n_max") p.n_max = std::stoi(value);
        else if (key == "max_tail") p.max_tail = std::stoi(value);
        else if (key == "t_buckets") p.t_buckets = std::stoi(value);
        else if (key == "window_radius") p.window_radius = std::stoi(value);
        else if (key == "param_count") count = std::stoll(value);
        else throw std::runtime_error("checkpoint: unexpected header key: " + key);
    }
    if (count < 0) throw std::runtime_error("checkpoint: missing param_count");
    p.vocab.validate();
    p.theta.resize(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        if (!std::getline(is, line)) throw std::runtime_error("checkpoint: truncated parameters");
        p.theta[static_cast<size_t>(i)] = std::strtod(line.c_str(), nullptr);
    }
    if (!std::getline(is, line) || line != "end")
        throw std::runtime_error("checkpoint: missing end marker");
    return p;
}

void save_checkpoint_file(const ModelParams& params, const std::string& path,
                          const std::string& provenance_line) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    if (!provenance_line.empty()) os << provenance_line << "\n";
    save_checkpoint(params, os);
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

ModelParams load_checkpoint_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint file: " + path);
    return load_checkpoint(is);
}

}  // namespace editflow
