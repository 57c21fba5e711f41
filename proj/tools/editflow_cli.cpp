// Command-line reproduction harness: train / sample / coupling-heatmap /
// verify over the desk-scale toy datasets.

#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <vector>

#include "editflow/config.hpp"
#include "editflow/oracle.hpp"
#include "editflow/sampler.hpp"
#include "editflow/toy.hpp"
#include "editflow/training.hpp"

namespace ef = editflow;

namespace {

std::string provenance(const char* cmd, const ef::Config& cfg, uint64_t seed) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "# editflow v1 cmd=%s config_hash=%016" PRIx64 " seed=%" PRIu64,
                  cmd, cfg.hash(), seed);
    return buf;
}

ef::Vocab read_vocab(ef::Config& cfg) {
    ef::Vocab vocab;
    vocab.size = static_cast<int32_t>(cfg.require_int("vocab_size"));
    vocab.bos = static_cast<ef::TokenId>(cfg.get_int("bos_id", 0));
    vocab.validate();
    return vocab;
}

ef::ToyDataConfig read_data_config(ef::Config& cfg, const ef::Vocab& vocab) {
    ef::ToyDataConfig data;
    data.vocab = vocab;
    const std::string generator = cfg.get_string("data", "uniform");
    if (generator != "uniform")
        throw std::runtime_error("unknown data generator: " + generator);
    data.data_len = static_cast<int>(cfg.get_int("data_len", 4));
    data.source = ef::source_kind_from_string(cfg.get_string("source", "empty"));
    data.source_len = static_cast<int>(cfg.get_int("source_len", 0));
    data.cond_prefix = static_cast<int>(cfg.get_int("cond_prefix", 0));
    data.coupling = [&]() {
        const std::string mode = cfg.get_string("coupling", "worst_case");
        if (mode == "optimal") return ef::CouplingMode::Optimal;
        if (mode == "pad_right") return ef::CouplingMode::PadRight;
        if (mode == "worst_case") return ef::CouplingMode::WorstCase;
        if (mode == "uniform_x0") return ef::CouplingMode::UniformX0;
        throw std::runtime_error("unknown coupling: " + mode);
    }();
    data.ux0.num_delete = static_cast<int>(cfg.get_int("num_delete", 0));
    data.ux0.num_substitute = static_cast<int>(cfg.get_int("num_substitute", 0));
    data.validate();
    return data;
}

ef::SamplerConfig read_sampler_config(ef::Config& cfg, uint64_t seed, int default_max_len) {
    ef::SamplerConfig sc;
    sc.steps = static_cast<int>(cfg.get_int("steps", 1000));
    sc.guidance_w = cfg.get_double("guidance_w", 1.0);
    sc.cfg = ef::cfg_variant_from_string(cfg.get_string("cfg", "off"));
    sc.temperature = cfg.get_double("temperature", 1.0);
    sc.top_p = cfg.get_double("top_p", 1.0);
    sc.top_k = static_cast<int>(cfg.get_int("top_k", 0));
    sc.seed = seed;
    sc.max_len = static_cast<int>(cfg.get_int("max_len", default_max_len));
    sc.reverse_guidance_w = cfg.get_double("reverse_guidance_w", 1.0);
    sc.reverse_temperature = cfg.get_double("reverse_temperature", 1.0);
    sc.reverse_top_p = cfg.get_double("reverse_top_p", 1.0);
    sc.reverse_top_k = static_cast<int>(cfg.get_int("reverse_top_k", 0));
    const std::string corr = cfg.get_string("corrector", "");
    if (!corr.empty()) {
        double c = 0, a = 0, b = 0;
        if (std::sscanf(corr.c_str(), "%lf:%lf:%lf", &c, &a, &b) != 3)
            throw std::runtime_error("corrector must be c:a:b, got: " + corr);
        sc.corrector = {c, a, b};
    }
    sc.validate();
    return sc;
}

// Forward rate function for a loaded checkpoint, with optional guidance.
ef::RateFn build_rate_fn(const ef::ModelParams& params, int cond_tokens, ef::CfgVariant variant,
                         double w) {
    if (variant == ef::CfgVariant::Off) {
        if (params.kind == ef::ModelKind::Tabular && cond_tokens == 0)
            return ef::cached_tabular_rate_fn(params);
        return ef::model_rate_fn(params, {cond_tokens, true});
    }
    return ef::guided_rate_fn(ef::model_rate_fn(params, {cond_tokens, true}),
                              ef::model_rate_fn(params, {cond_tokens, false}), w, variant);
}

int cmd_train(const std::string& config_path, int64_t seed_override, const std::string& out) {
    ef::Config cfg = ef::Config::from_file(config_path);
    const ef::Vocab vocab = read_vocab(cfg);
    const ef::ToyDataConfig data = read_data_config(cfg, vocab);

    const std::string kind = cfg.get_string("model", "tabular");
    ef::ModelParams params;
    if (kind == "tabular") {
        const int max_tail = static_cast<int>(cfg.require_int("max_tail"));
        const int t_buckets = static_cast<int>(cfg.get_int("t_buckets", 16));
        const int n_max = static_cast<int>(cfg.get_int("n_max", max_tail + 1));
        params = ef::make_tabular_params(vocab, max_tail, t_buckets, n_max);
    } else if (kind == "featurized") {
        const int n_max = static_cast<int>(cfg.get_int("n_max", 256));
        params = ef::make_featurized_params(vocab, static_cast<int>(cfg.get_int("window_radius", 2)),
                                            n_max);
    } else {
        throw std::runtime_error("unknown model kind: " + kind);
    }

    ef::TrainConfig tc;
    tc.coupling = data.coupling;
    tc.scheduler = ef::scheduler_kind_from_string(cfg.get_string("scheduler", "cubic"));
    tc.batch = static_cast<int>(cfg.get_int("batch", 256));
    tc.steps = static_cast<int>(cfg.get_int("steps", 1000));
    tc.lr = cfg.get_double("lr", kind == "tabular" ? 1e-2 : 1e-3);
    tc.optimizer = ef::optimizer_kind_from_string(cfg.get_string("optimizer", "adam"));
    tc.beta1 = cfg.get_double("beta1", 0.9);
    tc.beta2 = cfg.get_double("beta2", 0.95);
    tc.localized = cfg.get_bool("localized", false);
    if (tc.localized) tc.lambda_prop = cfg.require_double("lambda_prop");
    tc.cond_drop = cfg.get_double("cond_drop", 0.0);
    tc.seed = static_cast<uint64_t>(seed_override >= 0 ? seed_override : cfg.get_int("seed", 0));
    if (seed_override >= 0) cfg.get_int("seed", 0);  // consume the key either way
    tc.t_delta = cfg.get_double("t_delta", 1e-3);
    tc.t_log_sampling = cfg.get_bool("t_log_sampling", false);
    tc.parallel = cfg.get_bool("parallel", true);
    const bool reverse = cfg.get_bool("reverse", false);
    cfg.reject_unknown();

    std::cout << "resolved config:\n" << cfg.resolved_text();

    const std::string metrics_path = out + ".metrics";
    std::ofstream metrics(metrics_path, std::ios::binary);
    if (!metrics) throw std::runtime_error("cannot open metrics file: " + metrics_path);
    metrics << provenance("train", cfg, tc.seed) << "\n";

    const ef::PairSampler pairs = ef::make_toy_pair_sampler(data);
    const ef::TrainResult result = reverse ? ef::train_reverse(params, pairs, tc, &metrics)
                                           : ef::train(params, pairs, tc, &metrics);

    ef::save_checkpoint_file(params, out, provenance("train", cfg, tc.seed));
    if (!result.history.empty()) {
        std::cout << "steps " << result.history.size() << ", final loss "
                  << result.history.back().stats.loss << ", clamp warnings "
                  << result.clamp_warnings << "\n";
    }
    std::cout << "checkpoint written to " << out << "\n";
    std::cout << "metrics written to " << metrics_path << "\n";
    return 0;
}

int cmd_sample(const std::string& config_path, int64_t seed_override, int64_t count,
               const std::string& out) {
    ef::Config cfg = ef::Config::from_file(config_path);
    const ef::ModelParams params = ef::load_checkpoint_file(cfg.require_string("checkpoint"));
    const uint64_t seed =
        static_cast<uint64_t>(seed_override >= 0 ? seed_override : cfg.get_int("seed", 0));
    if (seed_override >= 0) cfg.get_int("seed", 0);
    ef::SamplerConfig sc = read_sampler_config(cfg, seed, params.n_max);

    const std::string prompt_text = cfg.get_string("prompt", "");
    const ef::Sequence prompt = ef::encode_tail(prompt_text, params.vocab);
    const int cond_tokens = prompt.size() - 1;

    const std::string source = cfg.get_string("source", "empty");
    const int source_len = static_cast<int>(cfg.get_int("source_len", 0));
    const bool decode = cfg.get_bool("decode", false);

    const ef::RateFn forward = build_rate_fn(params, cond_tokens, sc.cfg, sc.guidance_w);
    ef::RateFn reverse_fn;
    const bool corrector_on = sc.corrector.c > 0.0;
    const std::string reverse_path = cfg.get_string("reverse_checkpoint", "");
    if (corrector_on) {
        if (reverse_path.empty())
            throw std::runtime_error("corrector is active but reverse_checkpoint is not set");
        const ef::ModelParams rev_params = ef::load_checkpoint_file(reverse_path);
        ef::RateFn rev =
            build_rate_fn(rev_params, cond_tokens, sc.cfg, sc.reverse_guidance_w);
        // The reverse model runs on its own forward clock; flip time here.
        reverse_fn = [rev = std::move(rev)](const ef::Sequence& x, double t) {
            return rev(x, 1.0 - t);
        };
    }
    cfg.reject_unknown();
    std::cout << "resolved config:\n" << cfg.resolved_text();

    std::ofstream os(out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + out);
    os << provenance("sample", cfg, seed) << " count=" << count << "\n";

    for (int64_t i = 0; i < count; ++i) {
        ef::Rng rng = ef::Rng::fork(seed, static_cast<uint64_t>(i));
        std::vector<ef::TokenId> tail(prompt.toks.begin() + 1, prompt.toks.end());
        if (source == "uniform") {
            for (int k = 0; k < source_len; ++k)
                tail.push_back(static_cast<ef::TokenId>(rng.uniform_int(params.vocab.size)));
        } else if (source != "empty") {
            throw std::runtime_error("unknown source kind: " + source);
        }
        const ef::Sequence x0 = ef::make_sequence(params.vocab, tail);
        const ef::GenerationTrace trace =
            ef::simulate(forward, corrector_on ? &reverse_fn : nullptr, x0, sc, params.vocab, rng);
        os << "# trace " << i << "\n";
        for (const auto& rec : trace.records) os << ef::format_trace_record(rec) << "\n";
        if (decode) os << "final " << ef::decode_tail(trace.final_x()) << "\n";
    }
    std::cout << "traces written to " << out << "\n";
    return 0;
}

int cmd_heatmap(const std::string& config_path, int64_t seed_override, int64_t count,
                const std::string& out) {
    ef::Config cfg = ef::Config::from_file(config_path);
    const ef::ModelParams params = ef::load_checkpoint_file(cfg.require_string("checkpoint"));
    const uint64_t seed =
        static_cast<uint64_t>(seed_override >= 0 ? seed_override : cfg.get_int("seed", 0));
    if (seed_override >= 0) cfg.get_int("seed", 0);
    ef::SamplerConfig sc = read_sampler_config(cfg, seed, params.n_max);
    const int len = static_cast<int>(cfg.get_int("heatmap_len", 4));
    // Valid for `sample` but unused here: sources are the grid strings.
    cfg.get_string("source", "");
    cfg.get_int("source_len", 0);
    cfg.get_string("prompt", "");
    cfg.get_bool("decode", false);
    cfg.reject_unknown();
    std::cout << "resolved config:\n" << cfg.resolved_text();

    const ef::RateFn forward = build_rate_fn(params, 0, sc.cfg, sc.guidance_w);
    const auto sources = ef::uniform_length_atoms(params.vocab, len);
    const int64_t grid = static_cast<int64_t>(sources.size());

    // counts[src][tgt], last column is "other".
    std::vector<std::vector<int64_t>> counts(static_cast<size_t>(grid),
                                             std::vector<int64_t>(static_cast<size_t>(grid) + 1, 0));
    for (int64_t src = 0; src < grid; ++src) {
        const ef::Sequence& x0 = sources[static_cast<size_t>(src)].x;
        std::vector<int> final_bins(static_cast<size_t>(count));
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < count; ++i) {
            ef::Rng rng =
                ef::Rng::fork(seed, static_cast<uint64_t>(src) * static_cast<uint64_t>(count) +
                                        static_cast<uint64_t>(i));
            const ef::GenerationTrace trace =
                ef::simulate(forward, nullptr, x0, sc, params.vocab, rng);
            const ef::Sequence& fin = trace.final_x();
            int bin = static_cast<int>(grid);  // other
            if (fin.size() - 1 == len) {
                int64_t rank = 0;
                for (int k = 1; k < fin.size(); ++k) rank = rank * params.vocab.size + fin[k];
                bin = static_cast<int>(rank);
            }
            final_bins[static_cast<size_t>(i)] = bin;
        }
        for (int bin : final_bins) ++counts[static_cast<size_t>(src)][static_cast<size_t>(bin)];
    }

    std::ofstream os(out, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open output file: " + out);
    os << provenance("coupling-heatmap", cfg, seed) << " count=" << count << "\n";
    os << "x0,x1,count,prob\n";
    char buf[64];
    for (int64_t src = 0; src < grid; ++src) {
        const std::string src_name = ef::decode_tail(sources[static_cast<size_t>(src)].x);
        for (int64_t tgt = 0; tgt <= grid; ++tgt) {
            const std::string tgt_name =
                tgt == grid ? "other" : ef::decode_tail(sources[static_cast<size_t>(tgt)].x);
            const int64_t c = counts[static_cast<size_t>(src)][static_cast<size_t>(tgt)];
            std::snprintf(buf, sizeof(buf), "%.17g",
                          count > 0 ? static_cast<double>(c) / static_cast<double>(count) : 0.0);
            os << src_name << ',' << tgt_name << ',' << c << ',' << buf << "\n";
        }
    }

    // Side-by-side reference: the uniform coupling used at training time.
    std::string train_out = out;
    const auto dot = train_out.rfind('.');
    train_out.insert(dot == std::string::npos ? train_out.size() : dot, "_train");
    std::ofstream ts(train_out, std::ios::binary);
    if (!ts) throw std::runtime_error("cannot open output file: " + train_out);
    ts << provenance("coupling-heatmap", cfg, seed) << " reference=training-coupling\n";
    ts << "x0,x1,count,prob\n";
    std::snprintf(buf, sizeof(buf), "%.17g", 1.0 / static_cast<double>(grid));
    for (int64_t src = 0; src < grid; ++src) {
        const std::string src_name = ef::decode_tail(sources[static_cast<size_t>(src)].x);
        for (int64_t tgt = 0; tgt <= grid; ++tgt) {
            const std::string tgt_name =
                tgt == grid ? "other" : ef::decode_tail(sources[static_cast<size_t>(tgt)].x);
            if (tgt == grid) ts << src_name << ",other,0,0\n";
            else ts << src_name << ',' << tgt_name << ",1," << buf << "\n";
        }
    }
    std::cout << "heatmap written to " << out << " and " << train_out << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, int64_t seed_override) {
    const uint64_t seed = static_cast<uint64_t>(seed_override >= 0 ? seed_override : 0);
    ef::VerifyReport rep;
    if (suite == "kfe") rep = ef::verify_kfe_suite();
    else if (suite == "theorem1") rep = ef::verify_theorem1_suite();
    else if (suite == "lemmas") rep = ef::verify_rate_lemmas();
    else if (suite == "propagation") rep = ef::verify_propagation_suite(seed);
    else if (suite == "corrector") rep = ef::verify_corrector_suite(seed);
    else if (suite == "cfg-identities") rep = ef::verify_cfg_identities(seed);
    else {
        std::cerr << "unknown suite: " << suite
                  << " (expected kfe|theorem1|lemmas|propagation|corrector|cfg-identities)\n";
        return 2;
    }
    std::cout << "suite " << suite << "\n" << rep.summary();
    return rep.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"edit-operation flow models: desk-scale training, sampling, and verification"};
    app.require_subcommand(1);

    std::string config_path, out, suite;
    int64_t seed = -1;
    int64_t count = 100;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("--config", config_path, "run configuration")->required();
    train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", out, "checkpoint output path")->required();

    auto* sample = app.add_subcommand("sample", "generate traces from a checkpoint");
    sample->add_option("--config", config_path, "run configuration")->required();
    sample->add_option("--seed", seed, "override the config seed");
    sample->add_option("--count", count, "number of traces");
    sample->add_option("--out", out, "trace output path")->required();

    auto* heatmap = app.add_subcommand("coupling-heatmap",
                                       "tabulate generated targets per source string");
    heatmap->add_option("--config", config_path, "run configuration")->required();
    heatmap->add_option("--seed", seed, "override the config seed");
    heatmap->add_option("--count", count, "samples per source");
    heatmap->add_option("--out", out, "csv output path")->required();

    auto* verify = app.add_subcommand("verify", "run a named oracle suite");
    verify->add_option("--suite", suite, "suite name")->required();
    verify->add_option("--seed", seed, "suite seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, seed, out);
        if (sample->parsed()) return cmd_sample(config_path, seed, count, out);
        if (heatmap->parsed()) return cmd_heatmap(config_path, seed, count, out);
        if (verify->parsed()) return cmd_verify(suite, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
