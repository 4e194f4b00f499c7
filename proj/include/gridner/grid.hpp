#pragma once

#include <compare>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "gridner/corpus.hpp"

namespace gridner {

// n x n single-label grid over the label set C. Upper triangle (i<j) holds
// only {None, Frag, Gap}; lower triangle (i>j) holds only {None} plus entity
// types; the diagonal may hold any label.
struct GridLabelMatrix {
    int n = 0;
    std::vector<int> cells;  // row-major label ids

    GridLabelMatrix() = default;
    explicit GridLabelMatrix(int size) : n(size), cells(std::size_t(size) * size, 0) {}

    int at(int i, int j) const { return cells[std::size_t(i) * n + j]; }
    int& at(int i, int j) { return cells[std::size_t(i) * n + j]; }
    bool operator==(const GridLabelMatrix&) const = default;
};

// The (tail, head) cell carrying an entity type; marks a mention's outermost
// boundaries and seeds path search.
struct Anchor {
    int tail = 0;
    int head = 0;
    std::string entity_type;
    auto operator<=>(const Anchor&) const = default;
};

struct SpanInventory {
    std::set<TokenSpan> fragments;
    std::set<TokenSpan> gaps;
    std::set<Anchor> anchors;
};

// Structural decomposition of one mention: its fragments, the gaps between
// consecutive fragments, and the (tail, head, type) anchor.
struct EntitySpans {
    std::vector<TokenSpan> fragments;
    std::vector<TokenSpan> gaps;
    Anchor anchor;
};

EntitySpans spans_of(const EntityMention& entity);
SpanInventory inventory_of(const AnnotatedExample& example);

// One grid cell where two different non-None labels competed.
struct CellConflict {
    int i = 0;
    int j = 0;
    std::string winner;
    std::string loser;
    auto operator<=>(const CellConflict&) const = default;
};
using ConflictReport = std::vector<CellConflict>;

struct EncodedGrid {
    GridLabelMatrix grid;
    ConflictReport conflicts;
};

// Applies the placement rules: Frag at each fragment's (head, tail) cell, Gap
// at each gap's, the entity type at the mention's (tail, head) cell; a
// one-word entity puts its type on the diagonal instead of Frag. Cell
// conflicts resolve as entity type > Frag > Gap and are reported. Two
// different entity types competing for one cell cannot be represented and
// throw validation_error.
EncodedGrid encode_grid(const AnnotatedExample& example, const LabelSet& labels);

// Throws validation_error if the triangle discipline is violated.
void check_triangle_discipline(const GridLabelMatrix& grid, const LabelSet& labels);

// TSV dump: "i<TAB>j<TAB>label_name" per non-None cell, sorted by (i, j).
std::string grid_to_tsv(const GridLabelMatrix& grid, const LabelSet& labels);

// Reads a TSV dump. Label names other than None/Frag/Gap become the entity
// types of the returned label set.
struct ParsedGrid {
    GridLabelMatrix grid;
    LabelSet labels;
};
ParsedGrid grid_from_tsv(std::istream& in, int n, const std::string& source_name);

}  // namespace gridner
