#pragma once

#include <compare>
#include <cstddef>
#include <vector>

#include "gridner/grid.hpp"

namespace gridner {

// Directed edge over token boundary nodes 0..n. A span (h, t) becomes the
// edge h -> t+1 so that consecutive spans chain end-to-start.
struct Edge {
    enum class Kind { Frag, Gap };
    int from = 0;
    int to = 0;
    Kind kind = Kind::Frag;
    auto operator<=>(const Edge&) const = default;
};

struct EdgeGraph {
    int n = 0;  // sentence length; nodes are 0..n
    std::vector<Edge> edges;
};

// A complete head -> tail+1 edge sequence: odd edge count, Frag first and
// last, kinds strictly alternating.
struct DecodedPath {
    Anchor anchor;
    std::vector<Edge> edges;
};

struct GraphAndAnchors {
    EdgeGraph graph;
    std::vector<Anchor> anchors;  // sorted
};

inline constexpr std::size_t kDefaultPathCap = 256;

GraphAndAnchors build_edge_graph(const GridLabelMatrix& grid, const LabelSet& labels);

// All valid paths for one anchor, lexicographic by edge sequence. Throws
// decode_error when more than `path_cap` paths exist.
std::vector<DecodedPath> enumerate_valid_paths(const EdgeGraph& graph, const Anchor& anchor,
                                               std::size_t path_cap = kDefaultPathCap);

EntityMention mention_from_path(const DecodedPath& path);

// Full grid decode: sorted, duplicate-free mentions across all anchors.
std::vector<EntityMention> decode_entities(const GridLabelMatrix& grid, const LabelSet& labels,
                                           std::size_t path_cap = kDefaultPathCap);

}  // namespace gridner
