#include <doctest.h>

#include <set>

#include "editflow/sequence.hpp"
#include "editflow/toy.hpp"
#include "test_util.hpp"

using namespace editflow;
using testing::seq;

namespace {
const Vocab kAb{2, 0};  // BOS doubles as token A in the two-letter toys
const int kNmax = 64;
}  // namespace

TEST_CASE("apply_edit implements the three operations") {
    const Vocab v{4, 0};  // 0=BOS, 1=A, 2=B, 3=C
    const Sequence x = seq(v, {1, 2});

    CHECK(apply_edit(x, {EditKind::Insert, 1, 3}, v, kNmax) == seq(v, {1, 3, 2}));
    CHECK(apply_edit(x, {EditKind::Insert, 0, 3}, v, kNmax) == seq(v, {3, 1, 2}));
    CHECK(apply_edit(x, {EditKind::Insert, 2, 3}, v, kNmax) == seq(v, {1, 2, 3}));
    CHECK(apply_edit(x, {EditKind::Delete, 1, -1}, v, kNmax) == seq(v, {2}));
    CHECK(apply_edit(x, {EditKind::Substitute, 2, 1}, v, kNmax) == seq(v, {1, 1}));

    // Deleting the only token leaves the empty sequence.
    CHECK(apply_edit(seq(v, {2}), {EditKind::Delete, 1, -1}, v, kNmax) == bos_only(v));
}

TEST_CASE("kitten becomes smitten through one substitution and one insertion") {
    const Vocab v{26, 0};
    const Sequence kitten = encode_tail("KITTEN", v);
    const Sequence step1 = apply_edit(kitten, {EditKind::Substitute, 1, 'S' - 'A'}, v, kNmax);
    CHECK(decode_tail(step1) == "SITTEN");
    const Sequence step2 = apply_edit(step1, {EditKind::Insert, 1, 'M' - 'A'}, v, kNmax);
    CHECK(decode_tail(step2) == "SMITTEN");
}

TEST_CASE("apply_edit rejects bad anchors, tokens, and overflow") {
    const Vocab v{2, 0};
    const Sequence x = seq(v, {1});
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Insert, 2, 1}, v, kNmax), std::out_of_range);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Insert, -1, 1}, v, kNmax), std::out_of_range);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Delete, 0, -1}, v, kNmax), std::out_of_range);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Substitute, 0, 1}, v, kNmax), std::out_of_range);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Substitute, 2, 1}, v, kNmax), std::out_of_range);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Insert, 0, 7}, v, kNmax), std::invalid_argument);
    CHECK_THROWS_AS(apply_edit(x, {EditKind::Insert, 0, 1}, v, 2), std::length_error);
}

TEST_CASE("enumerate_edits lists every legal neighbor exactly once") {
    SUBCASE("BOS-only sequence has insertions only") {
        const auto edits = enumerate_edits(bos_only(kAb), kAb, kNmax);
        REQUIRE(edits.size() == 2);
        for (const auto& [op, result] : edits) CHECK(op.kind == EditKind::Insert);
    }

    SUBCASE("one-token sequence: 4 inserts, 1 delete, 1 substitution") {
        // Hand enumeration: anchors {0,1} x tokens {0,1} inserts; delete at 1;
        // the only substitution flips token 1 to the other letter.
        const auto edits = enumerate_edits(seq(kAb, {1}), kAb, kNmax);
        int ins = 0, del = 0, sub = 0;
        for (const auto& [op, result] : edits) {
            if (op.kind == EditKind::Insert) ++ins;
            if (op.kind == EditKind::Delete) ++del;
            if (op.kind == EditKind::Substitute) {
                ++sub;
                CHECK(op.token == 0);
            }
        }
        CHECK(ins == 4);
        CHECK(del == 1);
        CHECK(sub == 1);
        CHECK(edits.size() == 6);
    }

    SUBCASE("ops round-trip through apply_edit and are pairwise distinct") {
        Rng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<TokenId> tail(static_cast<size_t>(rng.uniform_int(5)));
            for (auto& t : tail) t = static_cast<TokenId>(rng.uniform_int(kAb.size));
            const Sequence x = make_sequence(kAb, tail);
            std::set<std::tuple<int, int, int>> seen;
            for (const auto& [op, result] : enumerate_edits(x, kAb, kNmax)) {
                CHECK(apply_edit(x, op, kAb, kNmax) == result);
                CHECK(seen.insert({static_cast<int>(op.kind), op.pos, op.token}).second);
                const int delta = result.size() - x.size();
                if (op.kind == EditKind::Insert) CHECK(delta == 1);
                if (op.kind == EditKind::Delete) CHECK(delta == -1);
                if (op.kind == EditKind::Substitute) CHECK(delta == 0);
                CHECK(result[0] == kAb.bos);
            }
        }
    }

    SUBCASE("distinct inserts can produce the same sequence") {
        const Sequence x = seq(kAb, {1, 1});
        const auto edits = enumerate_edits(x, kAb, kNmax);
        int dup = 0;
        for (size_t i = 0; i < edits.size(); ++i)
            for (size_t j = i + 1; j < edits.size(); ++j)
                if (edits[i].second == edits[j].second) ++dup;
        CHECK(dup > 0);
    }

    SUBCASE("insertions disappear at the length cap") {
        const auto edits = enumerate_edits(seq(kAb, {1}), kAb, 2);
        for (const auto& [op, result] : edits) CHECK(op.kind != EditKind::Insert);
    }
}

TEST_CASE("apply_simultaneous composes one step of edits") {
    const Vocab v{4, 0};
    const Sequence x = seq(v, {1, 2, 3});

    SUBCASE("delete and insert at the same anchor put the new token in place") {
        const std::vector<EditOp> edits{{EditKind::Delete, 2, -1}, {EditKind::Insert, 2, 1}};
        CHECK(apply_simultaneous(x, edits, v, kNmax) == seq(v, {1, 1, 3}));
    }
    SUBCASE("substitute then insert to its right") {
        const std::vector<EditOp> edits{{EditKind::Substitute, 1, 3}, {EditKind::Insert, 1, 2}};
        CHECK(apply_simultaneous(x, edits, v, kNmax) == seq(v, {3, 2, 2, 3}));
    }
    SUBCASE("edits across anchors apply with original positions") {
        const std::vector<EditOp> edits{{EditKind::Delete, 1, -1},
                                        {EditKind::Insert, 0, 3},
                                        {EditKind::Substitute, 3, 1}};
        CHECK(apply_simultaneous(x, edits, v, kNmax) == seq(v, {3, 2, 1}));
    }
    SUBCASE("duplicate anchors are rejected") {
        const std::vector<EditOp> edits{{EditKind::Delete, 1, -1}, {EditKind::Substitute, 1, 2}};
        CHECK_THROWS_AS(apply_simultaneous(x, edits, v, kNmax), std::invalid_argument);
    }
    SUBCASE("matches sequential application when anchors are disjoint and descending") {
        Rng rng(3);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<TokenId> tail(1 + static_cast<size_t>(rng.uniform_int(5)));
            for (auto& t : tail) t = static_cast<TokenId>(rng.uniform_int(v.size));
            const Sequence base = make_sequence(v, tail);
            // One removal and one insert at different anchors.
            const int del_pos = 1 + static_cast<int>(rng.uniform_int(base.size() - 1));
            int ins_pos = static_cast<int>(rng.uniform_int(base.size()));
            if (ins_pos == del_pos) continue;
            const std::vector<EditOp> edits{{EditKind::Delete, del_pos, -1},
                                            {EditKind::Insert, ins_pos, 1}};
            Sequence expected = base;
            // Apply in descending anchor order so indices stay valid.
            if (del_pos > ins_pos) {
                expected = apply_edit(expected, edits[0], v, kNmax);
                expected = apply_edit(expected, edits[1], v, kNmax);
            } else {
                expected = apply_edit(expected, edits[1], v, kNmax);
                expected = apply_edit(expected, edits[0], v, kNmax);
            }
            CHECK(apply_simultaneous(base, edits, v, kNmax) == expected);
        }
    }
}
