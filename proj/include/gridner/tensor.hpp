#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gridner/errors.hpp"

namespace gridner {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_text(const Shape& shape);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until backward touches it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Dense row-major fp64 array with shape metadata. Copies share the underlying
// node; operations record the compute graph through parent links.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<double>& value() const { return node_->value; }
    // Mutating a value invalidates any graph built on top of it; intended for
    // initialization, optimizer steps and finite-difference probes on leaves.
    std::vector<double>& mutable_value() { return node_->value; }

    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;  // scalar tensors only

    std::shared_ptr<detail::Node> node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

// While alive, newly created operations do not record the graph (values only).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// --- elementwise and reductions ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor mean_all(const Tensor& x);
Tensor sum_all(const Tensor& x);

// --- shape and gather --------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor row(const Tensor& x, std::size_t i);                       // [n,d] -> [d]
Tensor stack_rows(const std::vector<Tensor>& rows);               // k x [d] -> [k,d]
Tensor slice_last(const Tensor& x, std::size_t lo, std::size_t len);  // rank-1
Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids);

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& x, const Tensor& w);                  // [..,a]x[a,b]
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
// out[k] = sum_{p,q} u[p] * u1[p,k,q] * v[q]
Tensor bilinear(const Tensor& u, const Tensor& u1, const Tensor& v);
// out[i,j,k] = sum_{p,q} a[i,p] * u1[p,k,q] * b[j,q]
Tensor bilinear_pairs(const Tensor& a, const Tensor& u1, const Tensor& b);
// out[i,j] = [a_i ; b_j]
Tensor pair_concat(const Tensor& a, const Tensor& b);

// --- nonlinear blocks --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);

// Softmax-weighted sums of h's rows over the token window of each grid cell:
// cell (i,j) with i<j mixes rows i..j with upper_scores, i>j mixes rows j..i
// with lower_scores, and the diagonal copies row i.
Tensor linear_attention_grid(const Tensor& h, const Tensor& upper_scores,
                             const Tensor& lower_scores);

// Attention of each grid cell over the 2n-1 cells sharing its row or column.
// q,k: [n,n,d'], v: [n,n,dv]; scores scaled by 1/sqrt(d').
Tensor criss_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train);

// Mean negative log-likelihood over all cells: -(1/N) sum w_c log p[gold_c],
// log clamped below at log(1e-12). `cell_weights` (optional, same length as
// gold) scales individual terms; the 1/N normalization is unchanged.
Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& gold,
                      const std::vector<double>& cell_weights = {});

// --- reverse pass ------------------------------------------------------------

// Reverse accumulation from a scalar loss. Each reachable node is visited
// exactly once; leaf gradients accumulate across calls until zero_grad.
void backward(const Tensor& loss);

// --- shared plain-math helpers (no graph) ------------------------------------

// Stable softmax of scores[lo..hi] inclusive.
std::vector<double> softmax_window(const std::vector<double>& scores, std::size_t lo,
                                   std::size_t hi);
// The criss-cross cell list of (i,j): row i left to right, then column j
// skipping (i,j) itself. Always 2n-1 entries.
std::vector<std::pair<int, int>> criss_cross_cells(int n, int i, int j);

}  // namespace gridner
