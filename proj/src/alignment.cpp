#include "editflow/alignment.hpp"

#include <algorithm>
#include <stdexcept>

namespace editflow {

const char* to_string(CouplingMode m) {
    switch (m) {
        case CouplingMode::Optimal: return "optimal";
        case CouplingMode::PadRight: return "pad_right";
        case CouplingMode::WorstCase: return "worst_case";
        case CouplingMode::UniformX0: return "uniform_x0";
    }
    return "?";
}

int AlignedPair::disagreement_count() const {
    int count = 0;
    for (size_t i = 0; i < z0.size(); ++i)
        if (z0[i] != z1[i]) ++count;
    return count;
}

AlignedPair swap_sides(AlignedPair pair) {
    std::swap(pair.z0, pair.z1);
    return pair;
}

Sequence rm_blanks(const AlignedSeq& z, const Vocab& vocab) {
    std::vector<TokenId> toks;
    toks.reserve(z.size());
    for (TokenId c : z)
        if (c != kBlank) toks.push_back(c);
    if (toks.empty() || toks[0] != vocab.bos)
        throw std::invalid_argument("rm_blanks: stripped cells do not start with BOS");
    return Sequence(std::move(toks));
}

namespace {

void check_inputs(const Sequence& x0, const Sequence& x1, const Vocab& vocab) {
    if (x0.size() < 1 || x1.size() < 1 || x0[0] != vocab.bos || x1[0] != vocab.bos)
        throw std::invalid_argument("alignment: inputs must carry the BOS sentinel");
}

}  // namespace

AlignedPair align_optimal(const Sequence& x0, const Sequence& x1, const Vocab& vocab) {
    check_inputs(x0, x1, vocab);
    const int n0 = x0.size() - 1;
    const int n1 = x1.size() - 1;
    auto a = [&](int i) { return x0[i + 1]; };  // tail tokens, 0-based
    auto b = [&](int j) { return x1[j + 1]; };

    // d[i][j] = edit distance between the first i tokens of x0's tail and the
    // first j tokens of x1's tail.
    std::vector<std::vector<int>> d(static_cast<size_t>(n0) + 1,
                                    std::vector<int>(static_cast<size_t>(n1) + 1, 0));
    for (int i = 0; i <= n0; ++i) d[i][0] = i;
    for (int j = 0; j <= n1; ++j) d[0][j] = j;
    for (int i = 1; i <= n0; ++i) {
        for (int j = 1; j <= n1; ++j) {
            const int sub = d[i - 1][j - 1] + (a(i - 1) == b(j - 1) ? 0 : 1);
            const int del = d[i - 1][j] + 1;
            const int ins = d[i][j - 1] + 1;
            d[i][j] = std::min({sub, del, ins});
        }
    }

    // Backtrack with the substitute > delete > insert tie-break.
    AlignedSeq rev0, rev1;
    int i = n0, j = n1;
    while (i > 0 || j > 0) {
        const int cur = d[i][j];
        if (i > 0 && j > 0 && cur == d[i - 1][j - 1] + (a(i - 1) == b(j - 1) ? 0 : 1)) {
            rev0.push_back(a(i - 1));
            rev1.push_back(b(j - 1));
            --i;
            --j;
        } else if (i > 0 && cur == d[i - 1][j] + 1) {
            rev0.push_back(a(i - 1));
            rev1.push_back(kBlank);
            --i;
        } else {
            rev0.push_back(kBlank);
            rev1.push_back(b(j - 1));
            --j;
        }
    }

    AlignedPair pair;
    pair.provenance = CouplingMode::Optimal;
    pair.z0.push_back(vocab.bos);
    pair.z1.push_back(vocab.bos);
    pair.z0.insert(pair.z0.end(), rev0.rbegin(), rev0.rend());
    pair.z1.insert(pair.z1.end(), rev1.rbegin(), rev1.rend());
    return pair;
}

AlignedPair align_pad_right(const Sequence& x0, const Sequence& x1, const Vocab& vocab) {
    check_inputs(x0, x1, vocab);
    const int n0 = x0.size() - 1;
    const int n1 = x1.size() - 1;
    const int n = std::max(n0, n1);
    AlignedPair pair;
    pair.provenance = CouplingMode::PadRight;
    pair.z0.push_back(vocab.bos);
    pair.z1.push_back(vocab.bos);
    for (int k = 0; k < n; ++k) {
        pair.z0.push_back(k < n0 ? x0[k + 1] : kBlank);
        pair.z1.push_back(k < n1 ? x1[k + 1] : kBlank);
    }
    return pair;
}

AlignedPair align_worst_case(const Sequence& x0, const Sequence& x1, const Vocab& vocab) {
    check_inputs(x0, x1, vocab);
    const int n0 = x0.size() - 1;
    const int n1 = x1.size() - 1;
    AlignedPair pair;
    pair.provenance = CouplingMode::WorstCase;
    pair.z0.push_back(vocab.bos);
    pair.z1.push_back(vocab.bos);
    for (int k = 0; k < n0; ++k) {
        pair.z0.push_back(x0[k + 1]);
        pair.z1.push_back(kBlank);
    }
    for (int k = 0; k < n1; ++k) {
        pair.z0.push_back(kBlank);
        pair.z1.push_back(x1[k + 1]);
    }
    return pair;
}

AlignedPair align_uniform_x0(const Sequence& x1, const UniformX0Config& cfg, const Vocab& vocab,
                             Rng& rng, std::span<const double> token_probs) {
    if (x1.size() < 1 || x1[0] != vocab.bos)
        throw std::invalid_argument("align_uniform_x0: x1 must carry the BOS sentinel");
    if (cfg.num_delete < 0 || cfg.num_substitute < 0)
        throw std::invalid_argument("align_uniform_x0: counts must be nonnegative");
    if (!token_probs.empty() && static_cast<int>(token_probs.size()) != vocab.size)
        throw std::invalid_argument("align_uniform_x0: token_probs size mismatch");

    const int len = x1.size() - 1;
    const int n_sub = std::min(len, cfg.num_substitute);
    const int n_del = cfg.num_delete + cfg.num_substitute - n_sub;

    auto draw_token = [&]() -> TokenId {
        if (token_probs.empty()) return static_cast<TokenId>(rng.uniform_int(vocab.size));
        return static_cast<TokenId>(rng.categorical(token_probs));
    };
    std::vector<TokenId> x0_toks(static_cast<size_t>(n_del + n_sub));
    for (auto& t : x0_toks) t = draw_token();

    enum : uint8_t { Ins, Del, Sub };
    std::vector<uint8_t> labels;
    labels.insert(labels.end(), static_cast<size_t>(len - n_sub), Ins);
    labels.insert(labels.end(), static_cast<size_t>(n_del), Del);
    labels.insert(labels.end(), static_cast<size_t>(n_sub), Sub);
    // Fisher-Yates
    for (size_t k = labels.size(); k > 1; --k) {
        const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(k)));
        std::swap(labels[k - 1], labels[j]);
    }

    AlignedPair pair;
    pair.provenance = CouplingMode::UniformX0;
    pair.z0.push_back(vocab.bos);
    pair.z1.push_back(vocab.bos);
    size_t x0_idx = 0;
    int x1_idx = 0;
    for (uint8_t label : labels) {
        switch (label) {
            case Ins:
                pair.z0.push_back(kBlank);
                pair.z1.push_back(x1[++x1_idx]);
                break;
            case Del:
                pair.z0.push_back(x0_toks[x0_idx++]);
                pair.z1.push_back(kBlank);
                break;
            case Sub:
                pair.z0.push_back(x0_toks[x0_idx++]);
                pair.z1.push_back(x1[++x1_idx]);
                break;
        }
    }
    return pair;
}

}  // namespace editflow
