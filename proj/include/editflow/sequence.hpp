#pragma once

// Token vocabulary, variable-length sequences, and edit operations.
//
// A Sequence always carries the BOS sentinel at position 0; the BOS-only
// sequence encodes the empty string. Edits are position-anchored:
//   insert  — anchor in [0, n), new token goes to the right of the anchor
//   delete  — anchor in [1, n), BOS itself is immutable
//   subst   — anchor in [1, n)
// All operations are pure; inputs are never mutated.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace editflow {

using TokenId = int32_t;

struct Vocab {
    int32_t size = 0;   // token ids are 0 .. size-1
    TokenId bos = 0;    // reserved sentinel id, bos < size

    bool valid_token(TokenId t) const { return t >= 0 && t < size; }
    void validate() const;
};

struct Sequence {
    std::vector<TokenId> toks;  // toks[0] == vocab.bos always

    Sequence() = default;
    explicit Sequence(std::vector<TokenId> t) : toks(std::move(t)) {}

    int size() const { return static_cast<int>(toks.size()); }
    TokenId operator[](int i) const { return toks[static_cast<size_t>(i)]; }
    bool operator==(const Sequence&) const = default;
};

// BOS followed by the given tail tokens.
Sequence make_sequence(const Vocab& vocab, std::span<const TokenId> tail);
Sequence bos_only(const Vocab& vocab);

bool valid_sequence(const Vocab& vocab, const Sequence& x, int n_max);

enum class EditKind : uint8_t { Insert, Delete, Substitute };

struct EditOp {
    EditKind kind;
    int32_t pos = 0;      // anchor position in the sequence the op applies to
    TokenId token = -1;   // inserted/substituted value; unused for Delete

    bool operator==(const EditOp&) const = default;
};

std::string to_string(const EditOp& op);

// Applies one edit. Throws std::out_of_range for a bad anchor (including any
// delete/substitute aimed at BOS), std::invalid_argument for a bad token, and
// std::length_error when an insert would exceed n_max.
Sequence apply_edit(const Sequence& x, const EditOp& op, const Vocab& vocab, int n_max);

// Every legal one-edit neighbor of x, each op exactly once, in a fixed order:
// inserts by (anchor, token), then deletes by anchor, then substitutions by
// (anchor, token). Distinct ops may produce equal sequences.
std::vector<std::pair<EditOp, Sequence>> enumerate_edits(const Sequence& x, const Vocab& vocab,
                                                         int n_max);

// Applies a set of edits whose anchors refer to positions of x itself, as if
// they fired at the same instant: per position, delete/substitute acts first
// and an insert at the same anchor lands immediately to its right. At most one
// delete-or-substitute and one insert may target a given anchor.
Sequence apply_simultaneous(const Sequence& x, std::span<const EditOp> edits, const Vocab& vocab,
                            int n_max);

}  // namespace editflow
