#include "gridner/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

namespace gridner {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
using StrideXX = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using StridedMap = Eigen::Map<RowMat, 0, StrideXX>;
using StridedConstMap = Eigen::Map<const RowMat, 0, StrideXX>;

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_text(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

NodePtr make_node(Shape shape, std::vector<double> value, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    if (value.size() != shape_size(shape))
        throw shape_error("data length " + std::to_string(value.size()) +
                          " does not match shape " + shape_text(shape));
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Tensor make_op(Shape shape, std::vector<double> value, std::vector<NodePtr> parents,
               std::function<void(detail::Node&)> backward_fn) {
    auto n = make_node(std::move(shape), std::move(value), false);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward = std::move(backward_fn);
        }
    }
    return Tensor(n);
}

// Adds g into p's gradient buffer when p participates in the reverse pass.
void accumulate(const NodePtr& p, const double* g, std::size_t count) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    VecMap(p->grad.data(), count) += ConstVecMap(g, count);
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw shape_error(std::string(op) + ": shapes " + shape_text(a.shape()) + " vs " +
                          shape_text(b.shape()));
}

// Fixed-k slice of a [d,d,d] tensor laid out row-major: element (p,q) of the
// d x d matrix U1[:,k,:].
StridedConstMap u1_slice(const std::vector<double>& u1, std::size_t d, std::size_t k) {
    return StridedConstMap(u1.data() + k * d, d, d, StrideXX(d * d, 1));
}

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(make_node(std::move(shape), std::vector<double>(n, fill), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(make_node({1}, {v}, requires_grad));
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
    if (size() != 1) throw shape_error("item() on non-scalar tensor " + shape_text(shape()));
    return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// --- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.size());
    VecMap(out.data(), out.size()) = ConstVecMap(a.value().data(), a.size()) +
                                     ConstVecMap(b.value().data(), b.size());
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node& self) {
        accumulate(an, self.grad.data(), self.grad.size());
        accumulate(bn, self.grad.data(), self.grad.size());
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node& self) {
        const std::size_t n = self.grad.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    VecMap(out.data(), out.size()) = c * ConstVecMap(a.value().data(), a.size());
    auto an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, c](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        VecMap(an->grad.data(), an->grad.size()) +=
            c * ConstVecMap(self.grad.data(), self.grad.size());
    });
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.value()[i]);
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn}, [xn](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    });
}

Tensor sigmoid(const Tensor& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.value()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                          : std::exp(v) / (1.0 + std::exp(v));
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn}, [xn](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * self.value[i] * (1.0 - self.value[i]);
    });
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / double(x.size());
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    auto xn = x.node();
    return make_op({1}, {acc * inv}, {xn}, [xn, inv](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = self.grad[0] * inv;
        for (auto& gi : xn->grad) gi += g;
    });
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.value()) acc += v;
    auto xn = x.node();
    return make_op({1}, {acc}, {xn}, [xn](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double g = self.grad[0];
        for (auto& gi : xn->grad) gi += g;
    });
}

// --- shape and gather ----------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_size(shape) != x.size())
        throw shape_error("reshape: " + shape_text(x.shape()) + " to " + shape_text(shape));
    auto xn = x.node();
    return make_op(std::move(shape), x.value(), {xn}, [xn](detail::Node& self) {
        accumulate(xn, self.grad.data(), self.grad.size());
    });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0)
        throw shape_error("concat_last: shapes " + shape_text(a.shape()) + " vs " +
                          shape_text(b.shape()));
    for (std::size_t i = 0; i + 1 < a.rank(); ++i)
        if (a.shape()[i] != b.shape()[i])
            throw shape_error("concat_last: shapes " + shape_text(a.shape()) + " vs " +
                              shape_text(b.shape()));
    const std::size_t la = a.shape().back(), lb = b.shape().back();
    const std::size_t lead = a.size() / la;
    Shape shape = a.shape();
    shape.back() = la + lb;
    std::vector<double> out(lead * (la + lb));
    for (std::size_t r = 0; r < lead; ++r) {
        std::copy_n(a.value().data() + r * la, la, out.data() + r * (la + lb));
        std::copy_n(b.value().data() + r * lb, lb, out.data() + r * (la + lb) + la);
    }
    auto an = a.node(), bn = b.node();
    return make_op(std::move(shape), std::move(out), {an, bn},
                   [an, bn, lead, la, lb](detail::Node& self) {
                       if (an->requires_grad) an->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       for (std::size_t r = 0; r < lead; ++r) {
                           const double* g = self.grad.data() + r * (la + lb);
                           if (an->requires_grad)
                               for (std::size_t i = 0; i < la; ++i) an->grad[r * la + i] += g[i];
                           if (bn->requires_grad)
                               for (std::size_t i = 0; i < lb; ++i) bn->grad[r * lb + i] += g[la + i];
                       }
                   });
}

Tensor row(const Tensor& x, std::size_t i) {
    if (x.rank() != 2) throw shape_error("row: expected rank-2, got " + shape_text(x.shape()));
    const std::size_t d = x.shape()[1];
    if (i >= x.shape()[0]) throw shape_error("row index out of range");
    std::vector<double> out(x.value().data() + i * d, x.value().data() + (i + 1) * d);
    auto xn = x.node();
    return make_op({d}, std::move(out), {xn}, [xn, i, d](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t c = 0; c < d; ++c) xn->grad[i * d + c] += self.grad[c];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw shape_error("stack_rows: no rows");
    const std::size_t d = rows.front().size();
    std::vector<double> out;
    out.reserve(rows.size() * d);
    std::vector<NodePtr> parents;
    for (const auto& r : rows) {
        if (r.rank() != 1 || r.size() != d)
            throw shape_error("stack_rows: inconsistent row shape " + shape_text(r.shape()));
        out.insert(out.end(), r.value().begin(), r.value().end());
        parents.push_back(r.node());
    }
    auto ps = parents;
    return make_op({rows.size(), d}, std::move(out), std::move(parents),
                   [ps, d](detail::Node& self) {
                       for (std::size_t r = 0; r < ps.size(); ++r)
                           accumulate(ps[r], self.grad.data() + r * d, d);
                   });
}

Tensor slice_last(const Tensor& x, std::size_t lo, std::size_t len) {
    if (x.rank() != 1) throw shape_error("slice_last: expected rank-1");
    if (lo + len > x.size()) throw shape_error("slice_last: range out of bounds");
    std::vector<double> out(x.value().data() + lo, x.value().data() + lo + len);
    auto xn = x.node();
    return make_op({len}, std::move(out), {xn}, [xn, lo, len](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) xn->grad[lo + i] += self.grad[i];
    });
}

Tensor embedding_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw shape_error("embedding_rows: table must be rank-2");
    const std::size_t v = table.shape()[0], e = table.shape()[1];
    for (int id : ids)
        if (id < 0 || std::size_t(id) >= v)
            throw validation_error("token id " + std::to_string(id) +
                                   " outside vocabulary of size " + std::to_string(v));
    std::vector<double> out(ids.size() * e);
    for (std::size_t t = 0; t < ids.size(); ++t)
        std::copy_n(table.value().data() + std::size_t(ids[t]) * e, e, out.data() + t * e);
    auto tn = table.node();
    return make_op({ids.size(), e}, std::move(out), {tn}, [tn, ids, e](detail::Node& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t t = 0; t < ids.size(); ++t)
            for (std::size_t c = 0; c < e; ++c)
                tn->grad[std::size_t(ids[t]) * e + c] += self.grad[t * e + c];
    });
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& x, const Tensor& w) {
    if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.shape()[0])
        throw shape_error("matmul: shapes " + shape_text(x.shape()) + " vs " +
                          shape_text(w.shape()));
    const std::size_t a = w.shape()[0], b = w.shape()[1];
    const std::size_t m = x.size() / a;
    std::vector<double> out(m * b);
    MatMap(out.data(), m, b).noalias() =
        ConstMatMap(x.value().data(), m, a) * ConstMatMap(w.value().data(), a, b);
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    shape.push_back(b);
    auto xn = x.node(), wn = w.node();
    return make_op(std::move(shape), std::move(out), {xn, wn},
                   [xn, wn, m, a, b](detail::Node& self) {
                       ConstMatMap g(self.grad.data(), m, b);
                       if (xn->requires_grad) {
                           xn->ensure_grad();
                           MatMap(xn->grad.data(), m, a).noalias() +=
                               g * ConstMatMap(wn->value.data(), a, b).transpose();
                       }
                       if (wn->requires_grad) {
                           wn->ensure_grad();
                           MatMap(wn->grad.data(), a, b).noalias() +=
                               ConstMatMap(xn->value.data(), m, a).transpose() * g;
                       }
                   });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() < 1 || w.rank() != 2 || x.shape().back() != w.shape()[0])
        throw shape_error("affine: shapes " + shape_text(x.shape()) + " vs " +
                          shape_text(w.shape()));
    if (b.rank() != 1 || b.shape()[0] != w.shape()[1])
        throw shape_error("affine: bias " + shape_text(b.shape()) + " vs weight " +
                          shape_text(w.shape()));
    const std::size_t a = w.shape()[0], bc = w.shape()[1];
    const std::size_t m = x.size() / a;
    std::vector<double> out(m * bc);
    MatMap o(out.data(), m, bc);
    o.noalias() = ConstMatMap(x.value().data(), m, a) * ConstMatMap(w.value().data(), a, bc);
    o.rowwise() += ConstVecMap(b.value().data(), bc).transpose();
    Shape shape(x.shape().begin(), x.shape().end() - 1);
    shape.push_back(bc);
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return make_op(std::move(shape), std::move(out), {xn, wn, bn},
                   [xn, wn, bn, m, a, bc](detail::Node& self) {
                       ConstMatMap g(self.grad.data(), m, bc);
                       if (xn->requires_grad) {
                           xn->ensure_grad();
                           MatMap(xn->grad.data(), m, a).noalias() +=
                               g * ConstMatMap(wn->value.data(), a, bc).transpose();
                       }
                       if (wn->requires_grad) {
                           wn->ensure_grad();
                           MatMap(wn->grad.data(), a, bc).noalias() +=
                               ConstMatMap(xn->value.data(), m, a).transpose() * g;
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();
                           VecMap(bn->grad.data(), bc) += g.colwise().sum().transpose();
                       }
                   });
}

Tensor bilinear(const Tensor& u, const Tensor& u1, const Tensor& v) {
    const std::size_t d = u.size();
    if (u.rank() != 1 || v.rank() != 1 || v.size() != d || u1.rank() != 3 ||
        u1.shape() != Shape{d, d, d})
        throw shape_error("bilinear: shapes " + shape_text(u.shape()) + ", " +
                          shape_text(u1.shape()) + ", " + shape_text(v.shape()));
    std::vector<double> out(d);
    ConstVecMap uv(u.value().data(), d), vv(v.value().data(), d);
    for (std::size_t k = 0; k < d; ++k)
        out[k] = uv.transpose() * u1_slice(u1.value(), d, k) * vv;
    auto un = u.node(), u1n = u1.node(), vn = v.node();
    return make_op({d}, std::move(out), {un, u1n, vn}, [un, u1n, vn, d](detail::Node& self) {
        ConstVecMap uv(un->value.data(), d), vv(vn->value.data(), d);
        if (un->requires_grad) un->ensure_grad();
        if (vn->requires_grad) vn->ensure_grad();
        if (u1n->requires_grad) u1n->ensure_grad();
        for (std::size_t k = 0; k < d; ++k) {
            const double gk = self.grad[k];
            if (gk == 0.0) continue;
            auto ck = u1_slice(u1n->value, d, k);
            if (un->requires_grad) VecMap(un->grad.data(), d).noalias() += gk * (ck * vv);
            if (vn->requires_grad)
                VecMap(vn->grad.data(), d).noalias() += gk * (ck.transpose() * uv);
            if (u1n->requires_grad) {
                StridedMap gk_slice(u1n->grad.data() + k * d, d, d,
                                                         StrideXX(d * d, 1));
                gk_slice.noalias() += gk * (uv * vv.transpose());
            }
        }
    });
}

Tensor bilinear_pairs(const Tensor& a, const Tensor& u1, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || u1.rank() != 3)
        throw shape_error("bilinear_pairs: shapes " + shape_text(a.shape()) + ", " +
                          shape_text(u1.shape()) + ", " + shape_text(b.shape()));
    const std::size_t n = a.shape()[0], d = a.shape()[1], m = b.shape()[0];
    if (b.shape()[1] != d || u1.shape() != Shape{d, d, d})
        throw shape_error("bilinear_pairs: shapes " + shape_text(a.shape()) + ", " +
                          shape_text(u1.shape()) + ", " + shape_text(b.shape()));
    std::vector<double> out(n * m * d);
    ConstMatMap av(a.value().data(), n, d), bv(b.value().data(), m, d);
    RowMat t(n, d);
    for (std::size_t k = 0; k < d; ++k) {
        t.noalias() = av * u1_slice(u1.value(), d, k);
        StridedMap slice(out.data() + k, n, m, StrideXX(m * d, d));
        slice.noalias() = t * bv.transpose();
    }
    auto an = a.node(), u1n = u1.node(), bn = b.node();
    return make_op({n, m, d}, std::move(out), {an, u1n, bn},
                   [an, u1n, bn, n, m, d](detail::Node& self) {
                       ConstMatMap av(an->value.data(), n, d), bv(bn->value.data(), m, d);
                       if (an->requires_grad) an->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       if (u1n->requires_grad) u1n->ensure_grad();
                       RowMat p(n, d), q(m, d);
                       for (std::size_t k = 0; k < d; ++k) {
                           StridedConstMap gk(self.grad.data() + k, n, m,
                                                                    StrideXX(m * d, d));
                           auto ck = u1_slice(u1n->value, d, k);
                           p.noalias() = gk * bv;  // n x d
                           if (an->requires_grad)
                               MatMap(an->grad.data(), n, d).noalias() += p * ck.transpose();
                           if (bn->requires_grad) {
                               q.noalias() = gk.transpose() * av;  // m x d
                               MatMap(bn->grad.data(), m, d).noalias() += q * ck;
                           }
                           if (u1n->requires_grad) {
                               StridedMap gslice(
                                   u1n->grad.data() + k * d, d, d, StrideXX(d * d, 1));
                               gslice.noalias() += av.transpose() * p;
                           }
                       }
                   });
}

Tensor pair_concat(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw shape_error("pair_concat: shapes " + shape_text(a.shape()) + " vs " +
                          shape_text(b.shape()));
    const std::size_t n = a.shape()[0], da = a.shape()[1];
    const std::size_t m = b.shape()[0], db = b.shape()[1];
    std::vector<double> out(n * m * (da + db));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double* cell = out.data() + (i * m + j) * (da + db);
            std::copy_n(a.value().data() + i * da, da, cell);
            std::copy_n(b.value().data() + j * db, db, cell + da);
        }
    auto an = a.node(), bn = b.node();
    return make_op({n, m, da + db}, std::move(out), {an, bn},
                   [an, bn, n, m, da, db](detail::Node& self) {
                       if (an->requires_grad) an->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < m; ++j) {
                               const double* g = self.grad.data() + (i * m + j) * (da + db);
                               if (an->requires_grad)
                                   for (std::size_t c = 0; c < da; ++c)
                                       an->grad[i * da + c] += g[c];
                               if (bn->requires_grad)
                                   for (std::size_t c = 0; c < db; ++c)
                                       bn->grad[j * db + c] += g[da + c];
                           }
                   });
}

// --- nonlinear blocks --------------------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank())
        throw shape_error("softmax: axis " + std::to_string(axis) + " for shape " +
                          shape_text(x.shape()));
    const std::size_t k = x.shape()[axis];
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
    const std::size_t outer = x.size() / (k * inner);
    std::vector<double> out(x.size());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * k * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, x.value()[base + c * inner]);
            double z = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double e = std::exp(x.value()[base + c * inner] - mx);
                out[base + c * inner] = e;
                z += e;
            }
            for (std::size_t c = 0; c < k; ++c) out[base + c * inner] /= z;
        }
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn},
                   [xn, k, inner, outer](detail::Node& self) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       for (std::size_t o = 0; o < outer; ++o)
                           for (std::size_t in = 0; in < inner; ++in) {
                               const std::size_t base = o * k * inner + in;
                               double dot = 0.0;
                               for (std::size_t c = 0; c < k; ++c)
                                   dot += self.grad[base + c * inner] * self.value[base + c * inner];
                               for (std::size_t c = 0; c < k; ++c)
                                   xn->grad[base + c * inner] +=
                                       self.value[base + c * inner] *
                                       (self.grad[base + c * inner] - dot);
                           }
                   });
}

std::vector<double> softmax_window(const std::vector<double>& scores, std::size_t lo,
                                   std::size_t hi) {
    std::vector<double> w(hi - lo + 1);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = lo; t <= hi; ++t) mx = std::max(mx, scores[t]);
    double z = 0.0;
    for (std::size_t t = lo; t <= hi; ++t) {
        w[t - lo] = std::exp(scores[t] - mx);
        z += w[t - lo];
    }
    for (auto& v : w) v /= z;
    return w;
}

Tensor linear_attention_grid(const Tensor& h, const Tensor& upper_scores,
                             const Tensor& lower_scores) {
    if (h.rank() != 2) throw shape_error("linear_attention_grid: h must be [n,d]");
    const std::size_t n = h.shape()[0], d = h.shape()[1];
    if (upper_scores.shape() != Shape{n} || lower_scores.shape() != Shape{n})
        throw shape_error("linear_attention_grid: scores must be [n]");
    std::vector<double> out(n * n * d);
    // Weights are cached for the reverse pass; windows vary per cell.
    auto weights = std::make_shared<std::vector<std::vector<double>>>(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double* cell = out.data() + (i * n + j) * d;
            if (i == j) {
                std::copy_n(h.value().data() + i * d, d, cell);
                continue;
            }
            const std::size_t lo = std::min(i, j), hi = std::max(i, j);
            auto w = softmax_window(i < j ? upper_scores.value() : lower_scores.value(), lo, hi);
            for (std::size_t t = lo; t <= hi; ++t) {
                const double wt = w[t - lo];
                const double* ht = h.value().data() + t * d;
                for (std::size_t c = 0; c < d; ++c) cell[c] += wt * ht[c];
            }
            (*weights)[i * n + j] = std::move(w);
        }
    }
    auto hn = h.node(), un = upper_scores.node(), ln = lower_scores.node();
    return make_op({n, n, d}, std::move(out), {hn, un, ln},
                   [hn, un, ln, n, d, weights](detail::Node& self) {
                       if (hn->requires_grad) hn->ensure_grad();
                       if (un->requires_grad) un->ensure_grad();
                       if (ln->requires_grad) ln->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                               const double* g = self.grad.data() + (i * n + j) * d;
                               if (i == j) {
                                   if (hn->requires_grad)
                                       for (std::size_t c = 0; c < d; ++c)
                                           hn->grad[i * d + c] += g[c];
                                   continue;
                               }
                               const std::size_t lo = std::min(i, j), hi = std::max(i, j);
                               const auto& w = (*weights)[i * n + j];
                               // s_t = h_t . g ; score grads via softmax jacobian
                               double mixed = 0.0;
                               std::vector<double> s(hi - lo + 1);
                               for (std::size_t t = lo; t <= hi; ++t) {
                                   const double* ht = hn->value.data() + t * d;
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < d; ++c) dot += ht[c] * g[c];
                                   s[t - lo] = dot;
                                   mixed += w[t - lo] * dot;
                               }
                               if (hn->requires_grad)
                                   for (std::size_t t = lo; t <= hi; ++t) {
                                       const double wt = w[t - lo];
                                       for (std::size_t c = 0; c < d; ++c)
                                           hn->grad[t * d + c] += wt * g[c];
                                   }
                               const auto& sn = i < j ? un : ln;
                               if (sn->requires_grad)
                                   for (std::size_t t = lo; t <= hi; ++t)
                                       sn->grad[t] += w[t - lo] * (s[t - lo] - mixed);
                           }
                   });
}

std::vector<std::pair<int, int>> criss_cross_cells(int n, int i, int j) {
    std::vector<std::pair<int, int>> cells;
    cells.reserve(2 * std::size_t(n) - 1);
    for (int q = 0; q < n; ++q) cells.emplace_back(i, q);
    for (int p = 0; p < n; ++p)
        if (p != i) cells.emplace_back(p, j);
    return cells;
}

Tensor criss_cross_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3)
        throw shape_error("criss_cross_attention: grids must be rank-3");
    const std::size_t n = q.shape()[0];
    const std::size_t dq = q.shape()[2], dv = v.shape()[2];
    if (q.shape()[1] != n || k.shape() != Shape{n, n, dq} || v.shape()[0] != n ||
        v.shape()[1] != n)
        throw shape_error("criss_cross_attention: shapes " + shape_text(q.shape()) + ", " +
                          shape_text(k.shape()) + ", " + shape_text(v.shape()));
    const double inv_sqrt = 1.0 / std::sqrt(double(dq));
    const std::size_t set_size = 2 * n - 1;
    std::vector<double> out(n * n * dv, 0.0);
    auto weights = std::make_shared<std::vector<double>>(n * n * set_size);
    std::vector<double> scores(set_size);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const auto cells = criss_cross_cells(int(n), int(i), int(j));
            const double* qc = q.value().data() + (i * n + j) * dq;
            for (std::size_t s = 0; s < set_size; ++s) {
                const auto [p, r] = cells[s];
                const double* ks = k.value().data() + (std::size_t(p) * n + std::size_t(r)) * dq;
                double dot = 0.0;
                for (std::size_t c = 0; c < dq; ++c) dot += qc[c] * ks[c];
                scores[s] = dot * inv_sqrt;
            }
            auto w = softmax_window(scores, 0, set_size - 1);
            double* cell = out.data() + (i * n + j) * dv;
            for (std::size_t s = 0; s < set_size; ++s) {
                const auto [p, r] = cells[s];
                const double* vs = v.value().data() + (std::size_t(p) * n + std::size_t(r)) * dv;
                for (std::size_t c = 0; c < dv; ++c) cell[c] += w[s] * vs[c];
            }
            std::copy(w.begin(), w.end(), weights->data() + (i * n + j) * set_size);
        }
    }
    auto qn = q.node(), kn = k.node(), vn = v.node();
    return make_op({n, n, dv}, std::move(out), {qn, kn, vn},
                   [qn, kn, vn, n, dq, dv, inv_sqrt, set_size, weights](detail::Node& self) {
                       if (qn->requires_grad) qn->ensure_grad();
                       if (kn->requires_grad) kn->ensure_grad();
                       if (vn->requires_grad) vn->ensure_grad();
                       std::vector<double> sdot(set_size), z(set_size);
                       for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                               const auto cells = criss_cross_cells(int(n), int(i), int(j));
                               const double* g = self.grad.data() + (i * n + j) * dv;
                               const double* w = weights->data() + (i * n + j) * set_size;
                               double mixed = 0.0;
                               for (std::size_t s = 0; s < set_size; ++s) {
                                   const auto [p, r] = cells[s];
                                   const double* vs =
                                       vn->value.data() + (std::size_t(p) * n + std::size_t(r)) * dv;
                                   double dot = 0.0;
                                   for (std::size_t c = 0; c < dv; ++c) dot += vs[c] * g[c];
                                   sdot[s] = dot;
                                   mixed += w[s] * dot;
                               }
                               for (std::size_t s = 0; s < set_size; ++s)
                                   z[s] = w[s] * (sdot[s] - mixed);
                               const double* qc = qn->value.data() + (i * n + j) * dq;
                               double* gq = qn->requires_grad
                                                ? qn->grad.data() + (i * n + j) * dq
                                                : nullptr;
                               for (std::size_t s = 0; s < set_size; ++s) {
                                   const auto [p, r] = cells[s];
                                   const std::size_t off = std::size_t(p) * n + std::size_t(r);
                                   if (vn->requires_grad) {
                                       double* gv = vn->grad.data() + off * dv;
                                       for (std::size_t c = 0; c < dv; ++c)
                                           gv[c] += w[s] * g[c];
                                   }
                                   if (z[s] == 0.0) continue;
                                   const double zs = z[s] * inv_sqrt;
                                   const double* ks = kn->value.data() + off * dq;
                                   if (gq)
                                       for (std::size_t c = 0; c < dq; ++c) gq[c] += zs * ks[c];
                                   if (kn->requires_grad) {
                                       double* gk = kn->grad.data() + off * dq;
                                       for (std::size_t c = 0; c < dq; ++c) gk[c] += zs * qc[c];
                                   }
                               }
                           }
                   });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng, bool train) {
    if (rate < 0.0 || rate >= 1.0)
        throw numeric_error("dropout rate must lie in [0,1): " + std::to_string(rate));
    if (!train || rate == 0.0) {
        // Identity in eval mode; consumes no randomness.
        auto xn = x.node();
        return make_op(x.shape(), x.value(), {xn}, [xn](detail::Node& self) {
            accumulate(xn, self.grad.data(), self.grad.size());
        });
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x.size());
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*mask)[i] = uniform01(rng) >= rate ? keep_scale : 0.0;
        out[i] = x.value()[i] * (*mask)[i];
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(out), {xn}, [xn, mask](detail::Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            xn->grad[i] += self.grad[i] * (*mask)[i];
    });
}

Tensor nll_from_probs(const Tensor& probs, const std::vector<int>& gold,
                      const std::vector<double>& cell_weights) {
    if (probs.rank() < 1) throw shape_error("nll_from_probs: probs must have a label axis");
    const std::size_t c = probs.shape().back();
    const std::size_t cells = probs.size() / c;
    if (gold.size() != cells)
        throw shape_error("nll_from_probs: " + std::to_string(gold.size()) +
                          " gold labels for " + std::to_string(cells) + " cells");
    if (!cell_weights.empty() && cell_weights.size() != cells)
        throw shape_error("nll_from_probs: cell weight count mismatch");
    for (int id : gold)
        if (id < 0 || std::size_t(id) >= c)
            throw validation_error("gold label id " + std::to_string(id) +
                                   " outside label set of size " + std::to_string(c));
    constexpr double kFloor = 1e-12;
    const double inv = 1.0 / double(cells);
    double loss = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
        const double p = probs.value()[i * c + std::size_t(gold[i])];
        const double w = cell_weights.empty() ? 1.0 : cell_weights[i];
        loss -= w * std::log(std::max(p, kFloor));
    }
    loss *= inv;
    auto pn = probs.node();
    return make_op({1}, {loss}, {pn}, [pn, gold, cell_weights, c, inv](detail::Node& self) {
        constexpr double floor = 1e-12;
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < gold.size(); ++i) {
            const double p = pn->value[i * c + std::size_t(gold[i])];
            if (p <= floor) continue;  // clamped region has zero slope
            const double w = cell_weights.empty() ? 1.0 : cell_weights[i];
            pn->grad[i * c + std::size_t(gold[i])] -= g * w * inv / p;
        }
    });
}

// --- reverse pass ------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw numeric_error("backward requires a scalar loss, got " + shape_text(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return;

    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    struct Frame {
        detail::Node* node;
        std::size_t next = 0;
    };
    std::vector<Frame> stack{{root.get()}};
    seen.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            detail::Node* p = f.node->parents[f.next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior grads are per-pass scratch; leaf grads accumulate until
    // zero_grad so batches can sum over examples.
    for (auto* node : order)
        if (!node->parents.empty()) node->grad.assign(node->value.size(), 0.0);
    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace gridner
