#include "editflow/sequence.hpp"

#include <algorithm>
#include <stdexcept>

namespace editflow {

void Vocab::validate() const {
    if (size < 1) throw std::invalid_argument("Vocab: size must be >= 1");
    if (bos < 0 || bos >= size) throw std::invalid_argument("Vocab: bos id out of range");
}

Sequence make_sequence(const Vocab& vocab, std::span<const TokenId> tail) {
    std::vector<TokenId> toks;
    toks.reserve(tail.size() + 1);
    toks.push_back(vocab.bos);
    for (TokenId t : tail) {
        if (!vocab.valid_token(t)) throw std::invalid_argument("make_sequence: bad token id");
        toks.push_back(t);
    }
    return Sequence(std::move(toks));
}

Sequence bos_only(const Vocab& vocab) { return Sequence({vocab.bos}); }

bool valid_sequence(const Vocab& vocab, const Sequence& x, int n_max) {
    if (x.size() < 1 || x.size() > n_max) return false;
    if (x[0] != vocab.bos) return false;
    return std::all_of(x.toks.begin(), x.toks.end(),
                       [&](TokenId t) { return vocab.valid_token(t); });
}

std::string to_string(const EditOp& op) {
    switch (op.kind) {
        case EditKind::Insert:
            return "ins:" + std::to_string(op.pos) + ":" + std::to_string(op.token);
        case EditKind::Delete:
            return "del:" + std::to_string(op.pos);
        case EditKind::Substitute:
            return "sub:" + std::to_string(op.pos) + ":" + std::to_string(op.token);
    }
    return "?";
}

Sequence apply_edit(const Sequence& x, const EditOp& op, const Vocab& vocab, int n_max) {
    const int n = x.size();
    Sequence out = x;
    switch (op.kind) {
        case EditKind::Insert:
            if (op.pos < 0 || op.pos >= n) throw std::out_of_range("insert: anchor out of range");
            if (!vocab.valid_token(op.token)) throw std::invalid_argument("insert: bad token id");
            if (n + 1 > n_max) throw std::length_error("insert: sequence would exceed n_max");
            out.toks.insert(out.toks.begin() + op.pos + 1, op.token);
            return out;
        case EditKind::Delete:
            if (op.pos < 1 || op.pos >= n) throw std::out_of_range("delete: anchor out of range");
            out.toks.erase(out.toks.begin() + op.pos);
            return out;
        case EditKind::Substitute:
            if (op.pos < 1 || op.pos >= n)
                throw std::out_of_range("substitute: anchor out of range");
            if (!vocab.valid_token(op.token))
                throw std::invalid_argument("substitute: bad token id");
            out.toks[static_cast<size_t>(op.pos)] = op.token;
            return out;
    }
    throw std::invalid_argument("apply_edit: unknown kind");
}

std::vector<std::pair<EditOp, Sequence>> enumerate_edits(const Sequence& x, const Vocab& vocab,
                                                         int n_max) {
    const int n = x.size();
    std::vector<std::pair<EditOp, Sequence>> out;
    if (n < n_max) {
        for (int p = 0; p < n; ++p) {
            for (TokenId a = 0; a < vocab.size; ++a) {
                EditOp op{EditKind::Insert, p, a};
                out.emplace_back(op, apply_edit(x, op, vocab, n_max));
            }
        }
    }
    for (int p = 1; p < n; ++p) {
        EditOp op{EditKind::Delete, p, -1};
        out.emplace_back(op, apply_edit(x, op, vocab, n_max));
    }
    for (int p = 1; p < n; ++p) {
        for (TokenId a = 0; a < vocab.size; ++a) {
            if (a == x[p]) continue;  // a self-substitution is not a transition
            EditOp op{EditKind::Substitute, p, a};
            out.emplace_back(op, apply_edit(x, op, vocab, n_max));
        }
    }
    return out;
}

Sequence apply_simultaneous(const Sequence& x, std::span<const EditOp> edits, const Vocab& vocab,
                            int n_max) {
    const int n = x.size();
    std::vector<TokenId> ins_at(static_cast<size_t>(n), -1);
    std::vector<TokenId> sub_at(static_cast<size_t>(n), -1);
    std::vector<uint8_t> del_at(static_cast<size_t>(n), 0);

    for (const EditOp& op : edits) {
        switch (op.kind) {
            case EditKind::Insert:
                if (op.pos < 0 || op.pos >= n)
                    throw std::out_of_range("apply_simultaneous: insert anchor");
                if (!vocab.valid_token(op.token))
                    throw std::invalid_argument("apply_simultaneous: insert token");
                if (ins_at[static_cast<size_t>(op.pos)] != -1)
                    throw std::invalid_argument("apply_simultaneous: duplicate insert anchor");
                ins_at[static_cast<size_t>(op.pos)] = op.token;
                break;
            case EditKind::Delete:
            case EditKind::Substitute:
                if (op.pos < 1 || op.pos >= n)
                    throw std::out_of_range("apply_simultaneous: removal anchor");
                if (del_at[static_cast<size_t>(op.pos)] || sub_at[static_cast<size_t>(op.pos)] != -1)
                    throw std::invalid_argument("apply_simultaneous: duplicate removal anchor");
                if (op.kind == EditKind::Delete) {
                    del_at[static_cast<size_t>(op.pos)] = 1;
                } else {
                    if (!vocab.valid_token(op.token))
                        throw std::invalid_argument("apply_simultaneous: substitute token");
                    sub_at[static_cast<size_t>(op.pos)] = op.token;
                }
                break;
        }
    }

    std::vector<TokenId> result;
    result.reserve(static_cast<size_t>(n) + edits.size());
    for (int p = 0; p < n; ++p) {
        if (sub_at[static_cast<size_t>(p)] != -1) {
            result.push_back(sub_at[static_cast<size_t>(p)]);
        } else if (!del_at[static_cast<size_t>(p)]) {
            result.push_back(x[p]);
        }
        if (ins_at[static_cast<size_t>(p)] != -1) {
            result.push_back(ins_at[static_cast<size_t>(p)]);
        }
    }
    if (static_cast<int>(result.size()) > n_max)
        throw std::length_error("apply_simultaneous: result exceeds n_max");
    return Sequence(std::move(result));
}

}  // namespace editflow
