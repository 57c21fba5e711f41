#pragma once

// Shared helpers for the test suites.

#include <vector>

#include "editflow/alignment.hpp"
#include "editflow/rate_model.hpp"
#include "editflow/rng.hpp"
#include "editflow/sequence.hpp"

namespace editflow::testing {

inline Sequence seq(const Vocab& vocab, std::initializer_list<TokenId> tail) {
    return make_sequence(vocab, std::vector<TokenId>(tail));
}

inline ModelParams randomize(ModelParams params, Rng& rng, double scale = 0.5) {
    for (double& v : params.theta) v = scale * rng.normal();
    return params;
}

// Left-to-right replay of the edits encoded by an aligned pair; the running
// anchor tracks the position of the last produced token.
inline Sequence replay_pair_edits(const AlignedPair& pair, const Vocab& vocab, int n_max) {
    Sequence x = rm_blanks(pair.z0, vocab);
    int anchor = 0;
    for (int i = 1; i < pair.cells(); ++i) {
        const TokenId a = pair.z0[static_cast<size_t>(i)];
        const TokenId b = pair.z1[static_cast<size_t>(i)];
        if (a != kBlank && b != kBlank) {
            if (a != b) x = apply_edit(x, {EditKind::Substitute, anchor + 1, b}, vocab, n_max);
            ++anchor;
        } else if (a != kBlank && b == kBlank) {
            x = apply_edit(x, {EditKind::Delete, anchor + 1, -1}, vocab, n_max);
        } else if (a == kBlank && b != kBlank) {
            x = apply_edit(x, {EditKind::Insert, anchor, b}, vocab, n_max);
            ++anchor;
        }
    }
    return x;
}

// All sequences with tails of length <= max_tail over the vocabulary.
inline std::vector<Sequence> all_sequences(const Vocab& vocab, int max_tail) {
    std::vector<Sequence> out;
    out.push_back(bos_only(vocab));
    size_t begin = 0;
    for (int len = 1; len <= max_tail; ++len) {
        const size_t end = out.size();
        for (size_t i = begin; i < end; ++i) {
            for (TokenId a = 0; a < vocab.size; ++a) {
                Sequence x = out[i];
                x.toks.push_back(a);
                out.push_back(std::move(x));
            }
        }
        begin = end;
    }
    return out;
}

}  // namespace editflow::testing
