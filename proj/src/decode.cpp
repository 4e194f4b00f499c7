#include "gridner/decode.hpp"

#include <algorithm>
#include <set>
#include <string>

namespace gridner {

GraphAndAnchors build_edge_graph(const GridLabelMatrix& grid, const LabelSet& labels) {
    check_triangle_discipline(grid, labels);
    GraphAndAnchors out;
    out.graph.n = grid.n;
    for (int i = 0; i < grid.n; ++i) {
        for (int j = 0; j < grid.n; ++j) {
            const int id = grid.at(i, j);
            if (id == LabelSet::kNone) continue;
            if (id == LabelSet::kFrag) {
                out.graph.edges.push_back({i, j + 1, Edge::Kind::Frag});
            } else if (id == LabelSet::kGap) {
                out.graph.edges.push_back({i, j + 1, Edge::Kind::Gap});
            } else {
                out.anchors.push_back({i, j, labels.name_of(id)});
                // A diagonal entity type doubles as a one-word fragment candidate.
                if (i == j) out.graph.edges.push_back({i, i + 1, Edge::Kind::Frag});
            }
        }
    }
    std::sort(out.graph.edges.begin(), out.graph.edges.end());
    std::sort(out.anchors.begin(), out.anchors.end());
    return out;
}

namespace {

struct Adjacency {
    // Outgoing targets per node, split by kind, ascending.
    std::vector<std::vector<int>> frag;
    std::vector<std::vector<int>> gap;

    explicit Adjacency(const EdgeGraph& g)
        : frag(std::size_t(g.n) + 1), gap(std::size_t(g.n) + 1) {
        for (const auto& e : g.edges)
            (e.kind == Edge::Kind::Frag ? frag : gap)[std::size_t(e.from)].push_back(e.to);
    }
};

std::string anchor_text(const Anchor& a) {
    return "(" + std::to_string(a.tail) + "," + std::to_string(a.head) + "," +
           a.entity_type + ")";
}

}  // namespace

std::vector<DecodedPath> enumerate_valid_paths(const EdgeGraph& graph, const Anchor& anchor,
                                               std::size_t path_cap) {
    if (anchor.head > anchor.tail)
        throw validation_error("anchor head exceeds tail: " + anchor_text(anchor));
    const int target = anchor.tail + 1;
    const Adjacency adj(graph);

    // Which (node, last-kind) states admit a valid completion to the target.
    // After a Frag edge the path may stop at the target or continue with a
    // Gap; after a Gap it must continue with a Frag. Nodes strictly increase,
    // so a reverse sweep settles both tables.
    std::vector<char> done_frag(std::size_t(target) + 1, 0);
    std::vector<char> done_gap(std::size_t(target) + 1, 0);
    done_frag[std::size_t(target)] = 1;
    for (int v = target - 1; v >= 0; --v) {
        for (int w : adj.gap[std::size_t(v)])
            if (w <= target && done_gap[std::size_t(w)]) { done_frag[std::size_t(v)] = 1; break; }
        for (int w : adj.frag[std::size_t(v)])
            if (w <= target && done_frag[std::size_t(w)]) { done_gap[std::size_t(v)] = 1; break; }
    }
    // done_frag[v]: a path whose last edge was Frag and now sits at v can finish.
    // done_gap[v]: a path whose last edge was Gap and now sits at v can finish.

    struct State {
        int node;
        Edge::Kind last;
        std::vector<Edge> edges;
    };

    std::vector<DecodedPath> complete;
    std::vector<State> frontier;
    for (int w : adj.frag[std::size_t(anchor.head)]) {
        if (w > target || !done_frag[std::size_t(w)]) continue;
        frontier.push_back({w, Edge::Kind::Frag, {{anchor.head, w, Edge::Kind::Frag}}});
    }

    auto overflow = [&] {
        throw decode_error("more than " + std::to_string(path_cap) +
                           " paths for anchor " + anchor_text(anchor));
    };

    while (!frontier.empty()) {
        // Pruning keeps every frontier entry extendable to a distinct valid
        // path, so the frontier size bounds the final path count from below.
        if (frontier.size() > path_cap) overflow();
        std::vector<State> next;
        for (auto& s : frontier) {
            if (s.node == target && s.last == Edge::Kind::Frag) {
                if (complete.size() == path_cap) overflow();
                complete.push_back({anchor, std::move(s.edges)});
                continue;
            }
            const bool want_gap = s.last == Edge::Kind::Frag;
            const auto& out = (want_gap ? adj.gap : adj.frag)[std::size_t(s.node)];
            const auto& done = want_gap ? done_gap : done_frag;
            const Edge::Kind kind = want_gap ? Edge::Kind::Gap : Edge::Kind::Frag;
            for (int w : out) {
                if (w > target || !done[std::size_t(w)]) continue;
                State t;
                t.node = w;
                t.last = kind;
                t.edges = s.edges;
                t.edges.push_back({s.node, w, kind});
                next.push_back(std::move(t));
            }
        }
        frontier = std::move(next);
    }

    std::sort(complete.begin(), complete.end(),
              [](const DecodedPath& a, const DecodedPath& b) { return a.edges < b.edges; });
    return complete;
}

EntityMention mention_from_path(const DecodedPath& path) {
    EntityMention m;
    m.entity_type = path.anchor.entity_type;
    for (const auto& e : path.edges)
        if (e.kind == Edge::Kind::Frag) m.fragments.push_back({e.from, e.to - 1});
    return m;
}

std::vector<EntityMention> decode_entities(const GridLabelMatrix& grid, const LabelSet& labels,
                                           std::size_t path_cap) {
    GraphAndAnchors ga = build_edge_graph(grid, labels);
    std::set<EntityMention> mentions;
    for (const auto& anchor : ga.anchors)
        for (const auto& path : enumerate_valid_paths(ga.graph, anchor, path_cap))
            mentions.insert(mention_from_path(path));
    return {mentions.begin(), mentions.end()};
}

}  // namespace gridner
