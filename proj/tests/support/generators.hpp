#pragma once

// Seeded random structures for property tests plus the templated toy corpus
// used by the training and acceptance suites.

#include <algorithm>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gridner/corpus.hpp"
#include "gridner/grid.hpp"

#include "oracles.hpp"

namespace generators {

inline std::size_t pick(std::mt19937_64& rng, std::size_t bound) { return rng() % bound; }

// One random mention of `frags` fragments inside [0, n). Fragment lengths are
// 1..3 and gaps 1..6. `fixed_head` / `fixed_tail` force boundary-token sharing
// with an existing mention.
inline std::optional<gridner::EntityMention> random_mention(
    std::mt19937_64& rng, int n, const std::string& type,
    std::optional<int> fixed_head = std::nullopt, std::optional<int> fixed_tail = std::nullopt) {
    const int frags = 1 + int(pick(rng, 4));
    std::vector<int> frag_lengths(std::size_t(frags));
    std::vector<int> gap_lengths(std::size_t(frags) - 1);
    int total = 0;
    for (auto& l : frag_lengths) {
        l = 1 + int(pick(rng, 3));
        total += l;
    }
    for (auto& g : gap_lengths) {
        g = 1 + int(pick(rng, 6));
        total += g;
    }
    if (total > n) return std::nullopt;
    int start;
    if (fixed_head) {
        start = *fixed_head;
    } else if (fixed_tail) {
        start = *fixed_tail - total + 1;
    } else {
        start = int(pick(rng, std::size_t(n - total + 1)));
    }
    if (start < 0 || start + total > n) return std::nullopt;

    gridner::EntityMention m;
    m.entity_type = type;
    int at = start;
    for (int f = 0; f < frags; ++f) {
        m.fragments.push_back({at, at + frag_lengths[std::size_t(f)] - 1});
        at += frag_lengths[std::size_t(f)];
        if (f + 1 < frags) at += gap_lengths[std::size_t(f)];
    }
    return m;
}

struct ExampleOptions {
    int max_tokens = 20;
    int max_mentions = 4;
    bool two_types = false;  // occasionally draw a second entity type
};

// A random valid annotated example with deliberate head/tail sharing between
// mentions. Always satisfies the data invariants; says nothing about
// encodability.
inline gridner::AnnotatedExample random_example(std::mt19937_64& rng,
                                                const ExampleOptions& opt = {}) {
    gridner::AnnotatedExample ex;
    const int n = 2 + int(pick(rng, std::size_t(opt.max_tokens - 1)));
    ex.sentence.tokens.assign(std::size_t(n), "w");
    for (int t = 0; t < n; ++t) ex.sentence.tokens[std::size_t(t)] = "w" + std::to_string(t);

    const int mentions = 1 + int(pick(rng, std::size_t(opt.max_mentions)));
    std::set<gridner::EntityMention> seen;
    for (int m = 0; m < mentions; ++m) {
        const std::string type =
            opt.two_types && pick(rng, 4) == 0 ? "Disorder" : "ADE";
        std::optional<int> head, tail;
        if (!ex.entities.empty()) {
            const auto& prev = ex.entities[pick(rng, ex.entities.size())];
            switch (pick(rng, 3)) {
                case 0: head = prev.head(); break;
                case 1: tail = prev.tail(); break;
                default: break;
            }
        }
        for (int attempt = 0; attempt < 8; ++attempt) {
            auto cand = random_mention(rng, n, type, head, tail);
            if (cand && seen.insert(*cand).second) {
                ex.entities.push_back(*cand);
                break;
            }
        }
    }
    gridner::validate_example(ex);
    return ex;
}

// An example whose encoding is conflict-free and whose grid the exhaustive
// oracle decodes back to exactly the gold set. The scheme cannot represent
// every overlapped configuration in a single-label grid, so inherently
// ambiguous draws are rejected and resampled.
inline gridner::AnnotatedExample admissible_example(std::mt19937_64& rng,
                                                    const ExampleOptions& opt = {}) {
    for (;;) {
        gridner::AnnotatedExample ex = random_example(rng, opt);
        const gridner::LabelSet labels = gridner::derive_label_set({ex});
        gridner::EncodedGrid enc;
        try {
            enc = gridner::encode_grid(ex, labels);
        } catch (const gridner::validation_error&) {
            continue;  // two entity types on one cell
        }
        if (!enc.conflicts.empty()) continue;
        const auto decoded = oracles::brute_force_decode(enc.grid, labels);
        const auto gold = gridner::entity_set(ex);
        if (std::set<gridner::EntityMention>(decoded.begin(), decoded.end()) != gold) continue;
        return ex;
    }
}

// A triangle-disciplined random grid with at most `density` non-None cells.
inline gridner::GridLabelMatrix random_grid(std::mt19937_64& rng, const gridner::LabelSet& labels,
                                            int max_n = 10, double density = 0.3) {
    const int n = 1 + int(pick(rng, std::size_t(max_n)));
    gridner::GridLabelMatrix grid(n);
    const auto& types = labels.entity_types();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (double(rng() >> 11) * 0x1.0p-53 >= density) continue;
            if (i < j) {
                grid.at(i, j) = pick(rng, 2) ? gridner::LabelSet::kFrag : gridner::LabelSet::kGap;
            } else if (i > j) {
                grid.at(i, j) = labels.id_of(types[pick(rng, types.size())]);
            } else {
                switch (pick(rng, 3)) {
                    case 0: grid.at(i, j) = gridner::LabelSet::kFrag; break;
                    case 1: grid.at(i, j) = gridner::LabelSet::kGap; break;
                    default: grid.at(i, j) = labels.id_of(types[pick(rng, types.size())]);
                }
            }
        }
    }
    return grid;
}

// --- toy corpus ---------------------------------------------------------------

// Templated sentences with continuous, overlapped and discontinuous ADE
// mentions; deterministic for a given count.
inline std::vector<gridner::AnnotatedExample> toy_corpus(int count = 50) {
    const std::vector<std::string> adjs = {"severe", "mild", "sharp", "chronic"};
    const std::vector<std::string> parts = {"joint", "shoulder", "knee",  "hip",
                                            "back",  "neck",     "wrist", "ankle"};
    const std::vector<std::string> syms = {"pain", "swelling", "stiffness", "cramps"};

    std::vector<gridner::AnnotatedExample> corpus;
    std::mt19937_64 rng(7);
    for (int k = 0; k < count; ++k) {
        const auto& adj = adjs[pick(rng, adjs.size())];
        const auto& p1 = parts[pick(rng, parts.size())];
        std::string p2 = parts[pick(rng, parts.size())];
        while (p2 == p1) p2 = parts[pick(rng, parts.size())];
        std::string p3 = parts[pick(rng, parts.size())];
        while (p3 == p1 || p3 == p2) p3 = parts[pick(rng, parts.size())];
        const auto& sym = syms[pick(rng, syms.size())];

        gridner::AnnotatedExample ex;
        ex.sentence.id = "toy-" + std::to_string(k);
        switch (k % 5) {
            case 0:  // continuous mention
                ex.sentence.tokens = {"patient", "reports", adj, p1, sym, "today"};
                ex.entities = {{"ADE", {{2, 4}}}};
                break;
            case 1:  // three mentions sharing head and tail
                ex.sentence.tokens = {adj, p1, ",", p2, "and", p3, sym};
                ex.entities = {{"ADE", {{0, 1}, {6, 6}}},
                               {"ADE", {{0, 0}, {3, 3}, {6, 6}}},
                               {"ADE", {{0, 0}, {5, 6}}}};
                break;
            case 2:  // continuous overlapped with discontinuous
                ex.sentence.tokens = {p1, "and", p2, sym, "since", "yesterday"};
                ex.entities = {{"ADE", {{2, 3}}}, {"ADE", {{0, 0}, {3, 3}}}};
                break;
            case 3:  // one-word mention
                ex.sentence.tokens = {"felt", sym, "in", "the", p1, "area"};
                ex.entities = {{"ADE", {{1, 1}}}};
                break;
            default:  // wide gap
                ex.sentence.tokens = {adj, p1, ",", p2, ",", "or", p3, sym};
                ex.entities = {{"ADE", {{0, 1}, {7, 7}}}, {"ADE", {{0, 0}, {6, 7}}}};
                break;
        }
        gridner::validate_example(ex);
        corpus.push_back(std::move(ex));
    }
    return corpus;
}

}  // namespace generators
