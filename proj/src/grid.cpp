#include "gridner/grid.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace gridner {

EntitySpans spans_of(const EntityMention& entity) {
    EntitySpans spans;
    spans.fragments = entity.fragments;
    for (std::size_t k = 1; k < entity.fragments.size(); ++k)
        spans.gaps.push_back(
            {entity.fragments[k - 1].end + 1, entity.fragments[k].start - 1});
    spans.anchor = {entity.tail(), entity.head(), entity.entity_type};
    return spans;
}

SpanInventory inventory_of(const AnnotatedExample& example) {
    SpanInventory inv;
    for (const auto& m : example.entities) {
        EntitySpans s = spans_of(m);
        inv.fragments.insert(s.fragments.begin(), s.fragments.end());
        inv.gaps.insert(s.gaps.begin(), s.gaps.end());
        inv.anchors.insert(s.anchor);
    }
    return inv;
}

namespace {

int priority(const LabelSet& labels, int id) {
    if (labels.is_entity_type(id)) return 2;
    if (id == LabelSet::kFrag) return 1;
    return 0;  // Gap
}

}  // namespace

EncodedGrid encode_grid(const AnnotatedExample& example, const LabelSet& labels) {
    const int n = example.sentence.size();
    // All non-None writes per cell, deduplicated per label.
    std::map<std::pair<int, int>, std::set<int>> writes;

    for (const auto& m : example.entities) {
        const int type_id = labels.id_of(m.entity_type);
        if (!labels.is_entity_type(type_id))
            throw validation_error("not an entity type label: " + m.entity_type);
        EntitySpans s = spans_of(m);
        const bool one_word = s.fragments.size() == 1 && s.fragments[0].length() == 1;
        for (const auto& f : s.fragments) {
            // A one-word entity is annotated with its type only; the type cell
            // still doubles as a fragment candidate at decode time.
            if (one_word) break;
            writes[{f.start, f.end}].insert(LabelSet::kFrag);
        }
        for (const auto& g : s.gaps) writes[{g.start, g.end}].insert(LabelSet::kGap);
        writes[{s.anchor.tail, s.anchor.head}].insert(type_id);
    }

    EncodedGrid out;
    out.grid = GridLabelMatrix(n);
    for (const auto& [cell, ids] : writes) {
        auto [i, j] = cell;
        int winner = -1;
        for (int id : ids) {
            if (winner == -1) {
                winner = id;
                continue;
            }
            if (labels.is_entity_type(id) && labels.is_entity_type(winner))
                throw validation_error(
                    "entity types " + labels.name_of(winner) + " and " + labels.name_of(id) +
                    " compete for cell (" + std::to_string(i) + "," + std::to_string(j) +
                    "); a single-label grid cannot represent this");
            if (priority(labels, id) > priority(labels, winner)) winner = id;
        }
        out.grid.at(i, j) = winner;
        for (int id : ids)
            if (id != winner)
                out.conflicts.push_back({i, j, labels.name_of(winner), labels.name_of(id)});
    }
    std::sort(out.conflicts.begin(), out.conflicts.end());
    return out;
}

void check_triangle_discipline(const GridLabelMatrix& grid, const LabelSet& labels) {
    for (int i = 0; i < grid.n; ++i) {
        for (int j = 0; j < grid.n; ++j) {
            const int id = grid.at(i, j);
            if (id < 0 || id >= labels.size())
                throw validation_error("cell (" + std::to_string(i) + "," +
                                       std::to_string(j) + ") has label id " +
                                       std::to_string(id) + " outside the label set");
            if (i < j && labels.is_entity_type(id))
                throw validation_error("entity type label above the diagonal at (" +
                                       std::to_string(i) + "," + std::to_string(j) + ")");
            if (i > j && (id == LabelSet::kFrag || id == LabelSet::kGap))
                throw validation_error("span label below the diagonal at (" +
                                       std::to_string(i) + "," + std::to_string(j) + ")");
        }
    }
}

std::string grid_to_tsv(const GridLabelMatrix& grid, const LabelSet& labels) {
    std::ostringstream os;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j)
            if (grid.at(i, j) != LabelSet::kNone)
                os << i << "\t" << j << "\t" << labels.name_of(grid.at(i, j)) << "\n";
    return os.str();
}

ParsedGrid grid_from_tsv(std::istream& in, int n, const std::string& source_name) {
    if (n < 1) throw validation_error("grid size must be positive");
    struct Cell {
        int i, j;
        std::string label;
    };
    std::vector<Cell> cells;
    std::vector<std::string> types;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Cell c;
        if (!(ls >> c.i >> c.j >> c.label))
            throw parse_error(source_name, line_no, "expected \"i<TAB>j<TAB>label\"");
        if (c.i < 0 || c.i >= n || c.j < 0 || c.j >= n)
            throw parse_error(source_name, line_no, "cell indices outside grid of size " +
                                                        std::to_string(n));
        if (c.label == "None")
            throw parse_error(source_name, line_no, "None cells must be omitted");
        if (c.label != "Frag" && c.label != "Gap") types.push_back(c.label);
        cells.push_back(c);
    }
    ParsedGrid out;
    out.labels = LabelSet(std::move(types));
    out.grid = GridLabelMatrix(n);
    for (const auto& c : cells) {
        int& slot = out.grid.at(c.i, c.j);
        const int id = out.labels.id_of(c.label);
        if (slot != LabelSet::kNone && slot != id)
            throw validation_error(source_name + ": cell (" + std::to_string(c.i) + "," +
                                   std::to_string(c.j) + ") assigned twice");
        slot = id;
    }
    check_triangle_discipline(out.grid, out.labels);
    return out;
}

}  // namespace gridner
