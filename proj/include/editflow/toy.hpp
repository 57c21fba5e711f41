#pragma once

// Desk-scale dataset generators and the letter codec used by the CLI.
// Targets are uniform fixed-length strings; sources are either the empty
// sequence or uniform fixed-length strings. An optional conditioning prefix
// is taken from the target and shared verbatim by both sides of the pair.

#include <string>

#include "editflow/alignment.hpp"
#include "editflow/training.hpp"

namespace editflow {

enum class SourceKind { Empty, Uniform };

struct ToyDataConfig {
    Vocab vocab;
    int data_len = 4;
    SourceKind source = SourceKind::Empty;
    int source_len = 0;
    int cond_prefix = 0;  // leading target tokens treated as the prompt
    CouplingMode coupling = CouplingMode::WorstCase;
    UniformX0Config ux0;

    void validate() const;
};

PairSampler make_toy_pair_sampler(const ToyDataConfig& cfg);

// Source draw used at sampling time (prompt excluded).
Sequence draw_toy_source(const ToyDataConfig& cfg, Rng& rng);

SourceKind source_kind_from_string(const std::string& s);
const char* to_string(SourceKind k);

// Tokens render as letters: id 0 -> 'A', 1 -> 'B', ...
char token_name(TokenId t);
std::string decode_tail(const Sequence& x);
Sequence encode_tail(const std::string& text, const Vocab& vocab);

}  // namespace editflow
