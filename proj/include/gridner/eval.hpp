#pragma once

#include <string>
#include <vector>

#include "gridner/corpus.hpp"
#include "gridner/model.hpp"

namespace gridner {

// Micro span-level exact-match scores.
struct EvalResult {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t true_positives = 0;
    std::size_t predicted = 0;
    std::size_t gold = 0;
};

enum class SliceKind { all, discontinuous, overlapped, gap_bucket };

struct SliceSpec {
    SliceKind kind = SliceKind::all;
    int gap_length = 0;  // bucket slices only; >= 1

    // "all", "disc", "overlap", "gap:K"
    static SliceSpec parse(const std::string& text);
    std::string name() const;
};

// Exact match: a prediction is a true positive iff its type and full fragment
// set equal a gold mention's. Corpora must align (same length, matching ids).
EvalResult span_f1(const std::vector<AnnotatedExample>& pred,
                   const std::vector<AnnotatedExample>& gold);

int max_gap_length(const EntityMention& mention);  // 0 for continuous mentions
bool mentions_overlap(const EntityMention& a, const EntityMention& b);

// all: identity. discontinuous / overlapped: keeps qualifying sentences whole.
// gap_bucket(k): keeps sentences owning at least one discontinuous mention of
// max gap k, with entities restricted to exactly those mentions.
std::vector<AnnotatedExample> slice_filter(const std::vector<AnnotatedExample>& corpus,
                                           const SliceSpec& spec);

// Scores a slice: sentence selection comes from the gold side; for gap
// buckets the mention restriction applies to both sides.
EvalResult span_f1_sliced(const std::vector<AnnotatedExample>& pred,
                          const std::vector<AnnotatedExample>& gold, const SliceSpec& spec);

// Ascending distinct max-gap lengths of the gold discontinuous mentions.
std::vector<int> observed_gap_buckets(const std::vector<AnnotatedExample>& corpus);

// Attention tables for chosen grid cells of one forward pass, as TSV rows:
//   linear <i> <j> <t> <weight>         intra-span weight of token t
//   cc     <i> <j> <p> <q> <weight>     criss-cross weight of cell (p,q)
std::string attention_dump_tsv(const ForwardTrace& trace,
                               const std::vector<std::pair<int, int>>& cells);

}  // namespace gridner
