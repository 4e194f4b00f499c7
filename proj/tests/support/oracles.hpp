#pragma once

// Independent reference implementations used only by tests. Each oracle
// recomputes its result from raw inputs with straightforward loops and stays
// off the library's fast paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gridner/corpus.hpp"
#include "gridner/decode.hpp"
#include "gridner/grid.hpp"
#include "gridner/tensor.hpp"

namespace oracles {

// --- exhaustive path decoding -------------------------------------------------

// DFS over every edge sequence of the shifted-edge graph, then filter by the
// path validity rules. Intended for n <= 12 grids.
inline std::vector<gridner::EntityMention> brute_force_decode(
    const gridner::GridLabelMatrix& grid, const gridner::LabelSet& labels) {
    using gridner::Edge;
    struct RawEdge {
        int from, to;
        bool frag;
    };
    const int n = grid.n;
    std::vector<std::vector<RawEdge>> out(std::size_t(n) + 1);
    std::vector<gridner::Anchor> anchors;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const int id = grid.at(i, j);
            if (id == gridner::LabelSet::kNone) continue;
            if (id == gridner::LabelSet::kFrag) {
                out[std::size_t(i)].push_back({i, j + 1, true});
            } else if (id == gridner::LabelSet::kGap) {
                out[std::size_t(i)].push_back({i, j + 1, false});
            } else {
                anchors.push_back({i, j, labels.name_of(id)});
                if (i == j) out[std::size_t(i)].push_back({i, i + 1, true});
            }
        }
    }

    auto valid = [](const std::vector<RawEdge>& path) {
        if (path.size() % 2 == 0) return false;
        if (!path.front().frag || !path.back().frag) return false;
        for (std::size_t k = 1; k < path.size(); ++k)
            if (path[k].frag == path[k - 1].frag) return false;
        return true;
    };

    std::set<gridner::EntityMention> found;
    for (const auto& anchor : anchors) {
        const int target = anchor.tail + 1;
        std::vector<RawEdge> path;
        std::function<void(int)> dfs = [&](int v) {
            if (v == target && valid(path)) {
                gridner::EntityMention m;
                m.entity_type = anchor.entity_type;
                for (const auto& e : path)
                    if (e.frag) m.fragments.push_back({e.from, e.to - 1});
                found.insert(std::move(m));
            }
            for (const auto& e : out[std::size_t(v)]) {
                if (e.to > target) continue;
                path.push_back(e);
                dfs(e.to);
                path.pop_back();
            }
        };
        dfs(anchor.head);
    }
    return {found.begin(), found.end()};
}

// --- finite differences --------------------------------------------------------

struct GradCheckResult {
    bool ok = true;
    double max_abs_diff = 0.0;
    std::string failure;  // first offending coordinate, when not ok
};

// Central differences against reverse-mode gradients. `make_loss` must
// rebuild the graph from the live parameter values on every call.
template <typename LossFn>
GradCheckResult check_gradients(std::vector<std::pair<std::string, gridner::Tensor*>> params,
                                LossFn make_loss, double step = 1e-5, double rtol = 1e-4,
                                double floor = 1e-7) {
    for (auto& [name, t] : params) t->zero_grad();
    gridner::backward(make_loss());
    std::map<std::string, std::vector<double>> analytic;
    for (auto& [name, t] : params) analytic[name] = t->grad();

    GradCheckResult res;
    for (auto& [name, t] : params) {
        auto& value = t->mutable_value();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double orig = value[i];
            double fp, fm;
            {
                gridner::NoGradGuard no_grad;
                value[i] = orig + step;
                fp = make_loss().item();
                value[i] = orig - step;
                fm = make_loss().item();
            }
            value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[name][i];
            const double diff = std::abs(a - numeric);
            res.max_abs_diff = std::max(res.max_abs_diff, diff);
            const double tol = std::max(floor, rtol * std::max(std::abs(a), std::abs(numeric)));
            if (diff > tol && res.ok) {
                res.ok = false;
                res.failure = name + "[" + std::to_string(i) + "]: analytic " +
                              std::to_string(a) + " vs numeric " + std::to_string(numeric);
            }
        }
        t->zero_grad();
    }
    return res;
}

// --- numeric references ---------------------------------------------------------

// out[k] = sum_{p,q} u[p] * u1[p,k,q] * v[q], plain triple loop.
inline std::vector<double> bilinear_triple_loop(const std::vector<double>& u,
                                                const std::vector<double>& u1,
                                                const std::vector<double>& v, std::size_t d) {
    std::vector<double> out(d, 0.0);
    for (std::size_t p = 0; p < d; ++p)
        for (std::size_t k = 0; k < d; ++k)
            for (std::size_t q = 0; q < d; ++q)
                out[k] += u[p] * u1[(p * d + k) * d + q] * v[q];
    return out;
}

// Intra-span weighted sum for one cell, recomputed from scratch (scores
// included) out of h and the triangle's weight vector and bias.
inline std::vector<double> linear_attention_cell(const std::vector<double>& h, std::size_t n,
                                                 std::size_t d, const std::vector<double>& w_reg,
                                                 double b_reg, std::size_t i, std::size_t j) {
    if (i == j) return {h.begin() + i * d, h.begin() + (i + 1) * d};
    const std::size_t lo = std::min(i, j), hi = std::max(i, j);
    std::vector<double> scores(hi - lo + 1);
    for (std::size_t t = lo; t <= hi; ++t) {
        double a = b_reg;
        for (std::size_t c = 0; c < d; ++c) a += w_reg[c] * h[t * d + c];
        scores[t - lo] = a;
    }
    const double mx = *std::max_element(scores.begin(), scores.end());
    double z = 0.0;
    for (auto& s : scores) {
        s = std::exp(s - mx);
        z += s;
    }
    std::vector<double> out(d, 0.0);
    for (std::size_t t = lo; t <= hi; ++t) {
        const double wt = scores[t - lo] / z;
        for (std::size_t c = 0; c < d; ++c) out[c] += wt * h[t * d + c];
    }
    return out;
}

// Full n^2 x n^2 attention with cells outside row i / column j masked out.
inline std::vector<double> masked_full_attention(const std::vector<double>& q,
                                                 const std::vector<double>& k,
                                                 const std::vector<double>& v, std::size_t n,
                                                 std::size_t dq, std::size_t dv) {
    std::vector<double> out(n * n * dv, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            std::vector<double> scores(n * n, -std::numeric_limits<double>::infinity());
            for (std::size_t p = 0; p < n; ++p) {
                for (std::size_t r = 0; r < n; ++r) {
                    if (p != i && r != j) continue;  // masked
                    double dot = 0.0;
                    for (std::size_t c = 0; c < dq; ++c)
                        dot += q[(i * n + j) * dq + c] * k[(p * n + r) * dq + c];
                    scores[p * n + r] = dot / std::sqrt(double(dq));
                }
            }
            const double mx = *std::max_element(scores.begin(), scores.end());
            double z = 0.0;
            std::vector<double> w(n * n, 0.0);
            for (std::size_t s = 0; s < n * n; ++s) {
                if (std::isinf(scores[s])) continue;
                w[s] = std::exp(scores[s] - mx);
                z += w[s];
            }
            for (std::size_t s = 0; s < n * n; ++s) {
                if (w[s] == 0.0) continue;
                const double wt = w[s] / z;
                for (std::size_t c = 0; c < dv; ++c)
                    out[(i * n + j) * dv + c] += wt * v[s * dv + c];
            }
        }
    }
    return out;
}

}  // namespace oracles
