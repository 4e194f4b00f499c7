#include "gridner/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gridner/grid.hpp"

namespace gridner {

SliceSpec SliceSpec::parse(const std::string& text) {
    if (text == "all") return {SliceKind::all, 0};
    if (text == "disc") return {SliceKind::discontinuous, 0};
    if (text == "overlap") return {SliceKind::overlapped, 0};
    if (text.rfind("gap:", 0) == 0) {
        int k = 0;
        try {
            k = std::stoi(text.substr(4));
        } catch (...) {
            throw validation_error("bad slice: " + text);
        }
        if (k < 1) throw validation_error("gap bucket must be >= 1");
        return {SliceKind::gap_bucket, k};
    }
    throw validation_error("unknown slice \"" + text + "\" (use all|disc|overlap|gap:K)");
}

std::string SliceSpec::name() const {
    switch (kind) {
        case SliceKind::all: return "all";
        case SliceKind::discontinuous: return "disc";
        case SliceKind::overlapped: return "overlap";
        case SliceKind::gap_bucket: return "gap:" + std::to_string(gap_length);
    }
    return "?";
}

namespace {

void check_aligned(const std::vector<AnnotatedExample>& pred,
                   const std::vector<AnnotatedExample>& gold) {
    if (pred.size() != gold.size())
        throw validation_error("prediction and gold corpora differ in size: " +
                               std::to_string(pred.size()) + " vs " +
                               std::to_string(gold.size()));
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i].sentence.id != gold[i].sentence.id)
            throw validation_error("example ids diverge at record " + std::to_string(i + 1) +
                                   ": \"" + pred[i].sentence.id + "\" vs \"" +
                                   gold[i].sentence.id + "\"");
}

EvalResult score(std::size_t tp, std::size_t n_pred, std::size_t n_gold) {
    EvalResult r;
    r.true_positives = tp;
    r.predicted = n_pred;
    r.gold = n_gold;
    r.precision = n_pred ? double(tp) / double(n_pred) : 0.0;
    r.recall = n_gold ? double(tp) / double(n_gold) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

}  // namespace

EvalResult span_f1(const std::vector<AnnotatedExample>& pred,
                   const std::vector<AnnotatedExample>& gold) {
    check_aligned(pred, gold);
    std::size_t tp = 0, n_pred = 0, n_gold = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto p = entity_set(pred[i]);
        const auto g = entity_set(gold[i]);
        n_pred += p.size();
        n_gold += g.size();
        for (const auto& m : p) tp += g.count(m);
    }
    return score(tp, n_pred, n_gold);
}

int max_gap_length(const EntityMention& mention) {
    int best = 0;
    for (std::size_t k = 1; k < mention.fragments.size(); ++k)
        best = std::max(best,
                        mention.fragments[k].start - mention.fragments[k - 1].end - 1);
    return best;
}

bool mentions_overlap(const EntityMention& a, const EntityMention& b) {
    for (const auto& fa : a.fragments)
        for (const auto& fb : b.fragments)
            if (fa.start <= fb.end && fb.start <= fa.end) return true;
    return false;
}

namespace {

bool keep_example(const AnnotatedExample& ex, const SliceSpec& spec) {
    switch (spec.kind) {
        case SliceKind::all:
            return true;
        case SliceKind::discontinuous:
            return std::any_of(ex.entities.begin(), ex.entities.end(),
                               [](const EntityMention& m) { return m.discontinuous(); });
        case SliceKind::overlapped:
            for (std::size_t a = 0; a < ex.entities.size(); ++a)
                for (std::size_t b = a + 1; b < ex.entities.size(); ++b)
                    if (mentions_overlap(ex.entities[a], ex.entities[b])) return true;
            return false;
        case SliceKind::gap_bucket:
            return std::any_of(ex.entities.begin(), ex.entities.end(),
                               [&](const EntityMention& m) {
                                   return m.discontinuous() &&
                                          max_gap_length(m) == spec.gap_length;
                               });
    }
    return false;
}

std::vector<EntityMention> bucket_mentions(const std::vector<EntityMention>& mentions,
                                           int gap_length) {
    std::vector<EntityMention> out;
    for (const auto& m : mentions)
        if (m.discontinuous() && max_gap_length(m) == gap_length) out.push_back(m);
    return out;
}

}  // namespace

std::vector<AnnotatedExample> slice_filter(const std::vector<AnnotatedExample>& corpus,
                                           const SliceSpec& spec) {
    if (spec.kind == SliceKind::gap_bucket && spec.gap_length < 1)
        throw validation_error("gap bucket must be >= 1");
    std::vector<AnnotatedExample> out;
    for (const auto& ex : corpus) {
        if (!keep_example(ex, spec)) continue;
        out.push_back(ex);
        if (spec.kind == SliceKind::gap_bucket)
            out.back().entities = bucket_mentions(ex.entities, spec.gap_length);
    }
    return out;
}

EvalResult span_f1_sliced(const std::vector<AnnotatedExample>& pred,
                          const std::vector<AnnotatedExample>& gold, const SliceSpec& spec) {
    check_aligned(pred, gold);
    std::vector<AnnotatedExample> pred_slice, gold_slice;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (!keep_example(gold[i], spec)) continue;
        gold_slice.push_back(gold[i]);
        pred_slice.push_back(pred[i]);
        if (spec.kind == SliceKind::gap_bucket) {
            gold_slice.back().entities = bucket_mentions(gold[i].entities, spec.gap_length);
            pred_slice.back().entities = bucket_mentions(pred[i].entities, spec.gap_length);
        }
    }
    return span_f1(pred_slice, gold_slice);
}

std::vector<int> observed_gap_buckets(const std::vector<AnnotatedExample>& corpus) {
    std::set<int> buckets;
    for (const auto& ex : corpus)
        for (const auto& m : ex.entities)
            if (m.discontinuous()) buckets.insert(max_gap_length(m));
    return {buckets.begin(), buckets.end()};
}

std::string attention_dump_tsv(const ForwardTrace& trace,
                               const std::vector<std::pair<int, int>>& cells) {
    const int n = int(trace.h.shape()[0]);
    std::ostringstream os;
    os.precision(17);
    for (const auto& [i, j] : cells) {
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw validation_error("attention cell (" + std::to_string(i) + "," +
                                   std::to_string(j) + ") outside a grid of size " +
                                   std::to_string(n));
        if (i == j) {
            // Single-token span: one weight of 1 by convention.
            os << "linear\t" << i << "\t" << j << "\t" << i << "\t" << 1.0 << "\n";
        } else {
            const std::size_t lo = std::size_t(std::min(i, j)), hi = std::size_t(std::max(i, j));
            const auto& scores = i < j ? trace.scores_upper.value() : trace.scores_lower.value();
            const auto w = softmax_window(scores, lo, hi);
            for (std::size_t t = lo; t <= hi; ++t)
                os << "linear\t" << i << "\t" << j << "\t" << t << "\t" << w[t - lo] << "\n";
        }
        const auto cc = criss_cross_cells(n, i, j);
        const std::size_t dq = trace.q.shape()[2];
        const double inv_sqrt = 1.0 / std::sqrt(double(dq));
        std::vector<double> scores(cc.size());
        const double* qc = trace.q.value().data() + (std::size_t(i) * n + j) * dq;
        for (std::size_t s = 0; s < cc.size(); ++s) {
            const auto [p, r] = cc[s];
            const double* ks = trace.k.value().data() + (std::size_t(p) * n + r) * dq;
            double dot = 0.0;
            for (std::size_t c = 0; c < dq; ++c) dot += qc[c] * ks[c];
            scores[s] = dot * inv_sqrt;
        }
        const auto w = softmax_window(scores, 0, scores.size() - 1);
        for (std::size_t s = 0; s < cc.size(); ++s)
            os << "cc\t" << i << "\t" << j << "\t" << cc[s].first << "\t" << cc[s].second
               << "\t" << w[s] << "\n";
    }
    return os.str();
}

}  // namespace gridner
