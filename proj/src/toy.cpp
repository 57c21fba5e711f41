#include "editflow/toy.hpp"

#include <stdexcept>

namespace editflow {

void ToyDataConfig::validate() const {
    vocab.validate();
    if (data_len < 0) throw std::invalid_argument("toy data: data_len must be >= 0");
    if (source == SourceKind::Uniform && source_len < 0)
        throw std::invalid_argument("toy data: source_len must be >= 0");
    if (cond_prefix < 0 || cond_prefix > data_len)
        throw std::invalid_argument("toy data: cond_prefix must lie in [0, data_len]");
}

namespace {

std::vector<TokenId> uniform_tail(const Vocab& vocab, int len, Rng& rng) {
    std::vector<TokenId> tail(static_cast<size_t>(len));
    for (auto& t : tail) t = static_cast<TokenId>(rng.uniform_int(vocab.size));
    return tail;
}

// Re-attaches the shared prompt cells between the BOS cell and the aligned
// remainder.
AlignedPair splice_prompt(AlignedPair rest, std::span<const TokenId> prompt) {
    AlignedPair out;
    out.provenance = rest.provenance;
    out.z0.push_back(rest.z0[0]);
    out.z1.push_back(rest.z1[0]);
    for (TokenId t : prompt) {
        out.z0.push_back(t);
        out.z1.push_back(t);
    }
    out.z0.insert(out.z0.end(), rest.z0.begin() + 1, rest.z0.end());
    out.z1.insert(out.z1.end(), rest.z1.begin() + 1, rest.z1.end());
    return out;
}

}  // namespace

PairSampler make_toy_pair_sampler(const ToyDataConfig& cfg) {
    cfg.validate();
    return [cfg](Rng& rng) -> CoupledDraw {
        const std::vector<TokenId> target_tail = uniform_tail(cfg.vocab, cfg.data_len, rng);
        const std::span<const TokenId> prompt(target_tail.data(),
                                              static_cast<size_t>(cfg.cond_prefix));
        const std::span<const TokenId> rest_tail(target_tail.data() + cfg.cond_prefix,
                                                 target_tail.size() -
                                                     static_cast<size_t>(cfg.cond_prefix));
        const Sequence x1_rest = make_sequence(cfg.vocab, rest_tail);

        AlignedPair pair;
        if (cfg.coupling == CouplingMode::UniformX0) {
            pair = align_uniform_x0(x1_rest, cfg.ux0, cfg.vocab, rng);
        } else {
            Sequence x0_rest = cfg.source == SourceKind::Empty
                                   ? bos_only(cfg.vocab)
                                   : make_sequence(cfg.vocab,
                                                   uniform_tail(cfg.vocab, cfg.source_len, rng));
            switch (cfg.coupling) {
                case CouplingMode::Optimal: pair = align_optimal(x0_rest, x1_rest, cfg.vocab); break;
                case CouplingMode::PadRight:
                    pair = align_pad_right(x0_rest, x1_rest, cfg.vocab);
                    break;
                case CouplingMode::WorstCase:
                    pair = align_worst_case(x0_rest, x1_rest, cfg.vocab);
                    break;
                case CouplingMode::UniformX0: break;  // handled above
            }
        }
        return {splice_prompt(std::move(pair), prompt), cfg.cond_prefix};
    };
}

Sequence draw_toy_source(const ToyDataConfig& cfg, Rng& rng) {
    if (cfg.coupling == CouplingMode::UniformX0) {
        const int draws = cfg.ux0.num_delete + cfg.ux0.num_substitute;
        return make_sequence(cfg.vocab, uniform_tail(cfg.vocab, draws, rng));
    }
    if (cfg.source == SourceKind::Empty) return bos_only(cfg.vocab);
    return make_sequence(cfg.vocab, uniform_tail(cfg.vocab, cfg.source_len, rng));
}

SourceKind source_kind_from_string(const std::string& s) {
    if (s == "empty") return SourceKind::Empty;
    if (s == "uniform") return SourceKind::Uniform;
    throw std::invalid_argument("unknown source kind: " + s);
}

const char* to_string(SourceKind k) { return k == SourceKind::Empty ? "empty" : "uniform"; }

char token_name(TokenId t) {
    if (t < 0 || t >= 26) throw std::invalid_argument("token_name: id outside letter range");
    return static_cast<char>('A' + t);
}

std::string decode_tail(const Sequence& x) {
    std::string s;
    for (int i = 1; i < x.size(); ++i) s += token_name(x[i]);
    return s;
}

Sequence encode_tail(const std::string& text, const Vocab& vocab) {
    std::vector<TokenId> tail;
    tail.reserve(text.size());
    for (char c : text) {
        if (c < 'A' || c >= static_cast<char>('A' + vocab.size))
            throw std::invalid_argument("encode_tail: letter outside vocabulary");
        tail.push_back(static_cast<TokenId>(c - 'A'));
    }
    return make_sequence(vocab, tail);
}

}  // namespace editflow
