#pragma once

// Aligned-sequence space and coupling constructors.
//
// An aligned sequence is a fixed-length cell list over token ids plus the
// blank marker. Stripping blanks recovers an ordinary Sequence; a pair
// (z0, z1) of equal length encodes one concrete chain of edits between the
// sequences it strips to. Cell 0 is always the shared BOS cell. Constructors
// never emit a cell that is blank on both sides, although such cells are
// legal in intermediate path states.

#include <optional>
#include <span>
#include <vector>

#include "editflow/rng.hpp"
#include "editflow/sequence.hpp"

namespace editflow {

// Blank marker. Lives only in alignment space, never inside a Sequence.
inline constexpr TokenId kBlank = -1;

using AlignedSeq = std::vector<TokenId>;

enum class CouplingMode { Optimal, PadRight, WorstCase, UniformX0 };

const char* to_string(CouplingMode m);

struct AlignedPair {
    AlignedSeq z0;
    AlignedSeq z1;
    CouplingMode provenance = CouplingMode::Optimal;

    int cells() const { return static_cast<int>(z0.size()); }
    // Cells where the two sides disagree, i.e. pending edit operations.
    int disagreement_count() const;
};

AlignedPair swap_sides(AlignedPair pair);

// Order-preserving removal of blank cells. Throws std::invalid_argument when
// the stripped result does not start with the BOS id.
Sequence rm_blanks(const AlignedSeq& z, const Vocab& vocab);

// Minimal-edit-distance alignment via unit-cost dynamic programming. Ties are
// broken deterministically: substitute over delete over insert.
AlignedPair align_optimal(const Sequence& x0, const Sequence& x1, const Vocab& vocab);

// Positional alignment; the shorter tail is padded with blanks on the right.
AlignedPair align_pad_right(const Sequence& x0, const Sequence& x1, const Vocab& vocab);

// Deletes every x0 token and inserts every x1 token.
AlignedPair align_worst_case(const Sequence& x0, const Sequence& x1, const Vocab& vocab);

struct UniformX0Config {
    int num_delete = 0;
    int num_substitute = 0;  // clipped to the length of x1's tail
};

// Draws a random x0 and a shuffled interleaving of insert/delete/substitute
// cells against x1. x0 tokens come from `token_probs` when given (length M),
// otherwise uniformly from the vocabulary.
AlignedPair align_uniform_x0(const Sequence& x1, const UniformX0Config& cfg, const Vocab& vocab,
                             Rng& rng, std::span<const double> token_probs = {});

}  // namespace editflow
