#pragma once

// Reverse-mode autodiff on 4D (N,C,H,W) tensors, sized for toy keypoint nets.
// Define-by-run: every op returns a new node holding values plus a backward
// closure; Tensor::backward() topo-sorts the tape from the root. Templated on
// the scalar so training runs float and finite-difference checks run double.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "chartex/core/error.hpp"

namespace chartex::nn {

struct Shape {
    int n = 1, c = 1, h = 1, w = 1;

    int size() const { return n * c * h * w; }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
               "," + std::to_string(w) + ")";
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

// RAII guard that disables tape construction (inference mode).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

template <typename S>
using Vec = Eigen::Array<S, Eigen::Dynamic, 1>;
template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatRM<S>>;

template <typename S>
struct Node {
    Shape shape;
    Vec<S> val;
    Vec<S> grad;
    bool requires_grad = false;
    std::function<void()> backward;            // accumulates into parents' grads
    std::vector<std::shared_ptr<Node>> parents;

    void ensure_grad() {
        if (grad.size() != val.size()) grad = Vec<S>::Zero(val.size());
    }
};

template <typename S>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

    static Tensor zeros(Shape s) { return constant(s, S(0)); }
    static Tensor constant(Shape s, S value) {
        auto n = std::make_shared<Node<S>>();
        n->shape = s;
        n->val = Vec<S>::Constant(s.size(), value);
        return Tensor(n);
    }
    static Tensor from(Shape s, Vec<S> values) {
        require(static_cast<int>(values.size()) == s.size(), "ShapeError",
                "tensor data size does not match shape " + s.str());
        auto n = std::make_shared<Node<S>>();
        n->shape = s;
        n->val = std::move(values);
        return Tensor(n);
    }
    // leaf that participates in gradient accumulation (parameters, probes)
    static Tensor param(Shape s, Vec<S> values) {
        Tensor t = from(s, std::move(values));
        t.node_->requires_grad = true;
        t.node_->ensure_grad();
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    const Vec<S>& val() const { return node_->val; }
    Vec<S>& val() { return node_->val; }
    Vec<S>& grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    std::shared_ptr<Node<S>> node() const { return node_; }

    S item() const {
        require(node_->shape.size() == 1, "ShapeError", "item() needs a scalar tensor");
        return node_->val(0);
    }
    S at(int n, int c, int h, int w) const {
        const Shape& s = node_->shape;
        return node_->val(((n * s.c + c) * s.h + h) * s.w + w);
    }

    void zero_grad() {
        if (node_->grad.size()) node_->grad.setZero();
    }

    // reverse pass from a scalar root
    void backward() const {
        require(node_->shape.size() == 1, "ShapeError", "backward() needs a scalar root");
        std::vector<Node<S>*> order;
        std::unordered_set<Node<S>*> seen;
        std::function<void(Node<S>*)> visit = [&](Node<S>* n) {
            if (!n || seen.count(n)) return;
            seen.insert(n);
            for (auto& p : n->parents) visit(p.get());
            order.push_back(n);
        };
        visit(node_.get());
        for (Node<S>* n : order) n->ensure_grad();
        node_->grad(0) = S(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backward) (*it)->backward();
    }

  private:
    std::shared_ptr<Node<S>> node_;
};

namespace detail {

template <typename S>
std::shared_ptr<Node<S>> make_result(Shape s, Vec<S> val,
                                     std::vector<std::shared_ptr<Node<S>>> parents) {
    auto n = std::make_shared<Node<S>>();
    n->shape = s;
    n->val = std::move(val);
    if (grad_mode()) {
        for (auto& p : parents)
            if (p->requires_grad) n->requires_grad = true;
        if (n->requires_grad) n->parents = std::move(parents);
    }
    return n;
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    require(a.shape() == b.shape(), "ShapeError",
            std::string(op) + ": " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

// ---- elementwise ----

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "add");
    auto n = detail::make_result<S>(a.shape(), a.val() + b.val(), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node(), out = n.get();
        n->backward = [pa, pb, out] {
            if (pa->requires_grad) pa->grad += out->grad;
            if (pb->requires_grad) pb->grad += out->grad;
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "sub");
    auto n = detail::make_result<S>(a.shape(), a.val() - b.val(), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node(), out = n.get();
        n->backward = [pa, pb, out] {
            if (pa->requires_grad) pa->grad += out->grad;
            if (pb->requires_grad) pb->grad -= out->grad;
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "mul");
    auto n = detail::make_result<S>(a.shape(), a.val() * b.val(), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node(), out = n.get();
        n->backward = [pa, pb, out] {
            if (pa->requires_grad) pa->grad += out->grad * pb->val;
            if (pb->requires_grad) pb->grad += out->grad * pa->val;
        };
    }
    return Tensor<S>(n);
}

// elementwise quotient; caller guarantees the denominator stays away from 0
template <typename S>
Tensor<S> div(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape(a, b, "div");
    auto n = detail::make_result<S>(a.shape(), a.val() / b.val(), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node(), out = n.get();
        n->backward = [pa, pb, out] {
            if (pa->requires_grad) pa->grad += out->grad / pb->val;
            if (pb->requires_grad) pb->grad -= out->grad * out->val / pb->val;
        };
    }
    return Tensor<S>(n);
}

// out = scale * x + shift, elementwise
template <typename S>
Tensor<S> affine(const Tensor<S>& x, S scale, S shift) {
    auto n = detail::make_result<S>(x.shape(), (x.val() * scale + shift).eval(), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto out = n.get();
        n->backward = [px, out, scale] { px->grad += out->grad * scale; };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    auto n = detail::make_result<S>(x.shape(), x.val().max(S(0)), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto out = n.get();
        n->backward = [px, out] {
            px->grad += out->grad * (px->val > S(0)).template cast<S>();
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    Vec<S> y(x.val().size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const S v = x.val()(i);
        y(i) = v >= 0 ? S(1) / (S(1) + std::exp(-v))
                      : std::exp(v) / (S(1) + std::exp(v));
    }
    auto n = detail::make_result<S>(x.shape(), std::move(y), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto out = n.get();
        n->backward = [px, out] {
            px->grad += out->grad * out->val * (S(1) - out->val);
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> sqrt_op(const Tensor<S>& x, S eps = S(1e-12)) {
    auto n = detail::make_result<S>(x.shape(), (x.val() + eps).sqrt(), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto out = n.get();
        n->backward = [px, out] { px->grad += out->grad / (S(2) * out->val); };
    }
    return Tensor<S>(n);
}

// ---- reductions ----

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
    Vec<S> v(1);
    v(0) = x.val().sum();
    auto n = detail::make_result<S>({1, 1, 1, 1}, std::move(v), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto out = n.get();
        n->backward = [px, out] { px->grad += out->grad(0); };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
    return affine(sum_all(x), S(1) / S(x.shape().size()), S(0));
}

// ---- 2D matrix ops (tensors shaped (rows, cols, 1, 1)) ----

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    const int r = a.shape().n, k = a.shape().c, k2 = b.shape().n, c = b.shape().c;
    require(a.shape().h == 1 && a.shape().w == 1 && b.shape().h == 1 && b.shape().w == 1 &&
                k == k2,
            "ShapeError", "matmul: " + a.shape().str() + " x " + b.shape().str());
    Vec<S> out(r * c);
    MapM<S>(out.data(), r, c) = CMapM<S>(a.val().data(), r, k) * CMapM<S>(b.val().data(), k, c);
    auto n = detail::make_result<S>({r, c, 1, 1}, std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        auto o = n.get();
        n->backward = [pa, pb, o, r, k, c] {
            CMapM<S> g(o->grad.data(), r, c);
            if (pa->requires_grad)
                MapM<S>(pa->grad.data(), r, k) += g * CMapM<S>(pb->val.data(), k, c).transpose();
            if (pb->requires_grad)
                MapM<S>(pb->grad.data(), k, c) += CMapM<S>(pa->val.data(), r, k).transpose() * g;
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> transpose2d(const Tensor<S>& a) {
    const int r = a.shape().n, c = a.shape().c;
    require(a.shape().h == 1 && a.shape().w == 1, "ShapeError", "transpose2d needs a matrix");
    Vec<S> out(r * c);
    MapM<S>(out.data(), c, r) = CMapM<S>(a.val().data(), r, c).transpose();
    auto n = detail::make_result<S>({c, r, 1, 1}, std::move(out), {a.node()});
    if (n->requires_grad) {
        auto pa = a.node();
        auto o = n.get();
        n->backward = [pa, o, r, c] {
            MapM<S>(pa->grad.data(), r, c) += CMapM<S>(o->grad.data(), c, r).transpose();
        };
    }
    return Tensor<S>(n);
}

// adds a (1 x C) bias row to every row of an (R x C) matrix
template <typename S>
Tensor<S> add_bias_cols(const Tensor<S>& m, const Tensor<S>& bias) {
    const int r = m.shape().n, c = m.shape().c;
    require(bias.shape().n == 1 && bias.shape().c == c && bias.shape().h == 1 &&
                bias.shape().w == 1,
            "ShapeError", "add_bias_cols: bias " + bias.shape().str());
    Vec<S> out = m.val();
    MapM<S> om(out.data(), r, c);
    om.rowwise() += CMapM<S>(bias.val().data(), 1, c).row(0);
    auto n = detail::make_result<S>(m.shape(), std::move(out), {m.node(), bias.node()});
    if (n->requires_grad) {
        auto pm = m.node(), pb = bias.node();
        auto o = n.get();
        n->backward = [pm, pb, o, r, c] {
            if (pm->requires_grad) pm->grad += o->grad;
            if (pb->requires_grad)
                MapM<S>(pb->grad.data(), 1, c) += CMapM<S>(o->grad.data(), r, c).colwise().sum();
        };
    }
    return Tensor<S>(n);
}

// rowwise softmax of an (R x C) matrix
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& m) {
    const int r = m.shape().n, c = m.shape().c;
    require(m.shape().h == 1 && m.shape().w == 1, "ShapeError", "softmax_rows needs a matrix");
    Vec<S> out(r * c);
    CMapM<S> in(m.val().data(), r, c);
    MapM<S> om(out.data(), r, c);
    for (int i = 0; i < r; ++i) {
        const S mx = in.row(i).maxCoeff();
        om.row(i) = (in.row(i).array() - mx).exp();
        om.row(i) /= om.row(i).sum();
    }
    auto n = detail::make_result<S>(m.shape(), std::move(out), {m.node()});
    if (n->requires_grad) {
        auto pm = m.node();
        auto o = n.get();
        n->backward = [pm, o, r, c] {
            CMapM<S> y(o->val.data(), r, c);
            CMapM<S> gy(o->grad.data(), r, c);
            MapM<S> gx(pm->grad.data(), r, c);
            for (int i = 0; i < r; ++i) {
                const S dot = (gy.row(i).array() * y.row(i).array()).sum();
                gx.row(i).array() += y.row(i).array() * (gy.row(i).array() - dot);
            }
        };
    }
    return Tensor<S>(n);
}

// rows scaled to unit L2 norm (for cosine similarity)
template <typename S>
Tensor<S> normalize_rows(const Tensor<S>& m, S eps = S(1e-12)) {
    const int r = m.shape().n, c = m.shape().c;
    require(m.shape().h == 1 && m.shape().w == 1, "ShapeError", "normalize_rows needs a matrix");
    Vec<S> out(r * c), norms(r);
    CMapM<S> in(m.val().data(), r, c);
    MapM<S> om(out.data(), r, c);
    for (int i = 0; i < r; ++i) {
        norms(i) = std::sqrt(in.row(i).squaredNorm() + eps);
        om.row(i) = in.row(i) / norms(i);
    }
    auto n = detail::make_result<S>(m.shape(), std::move(out), {m.node()});
    if (n->requires_grad) {
        auto pm = m.node();
        auto o = n.get();
        n->backward = [pm, o, r, c, norms] {
            CMapM<S> y(o->val.data(), r, c);
            CMapM<S> gy(o->grad.data(), r, c);
            MapM<S> gx(pm->grad.data(), r, c);
            for (int i = 0; i < r; ++i) {
                const S dot = (gy.row(i).array() * y.row(i).array()).sum();
                gx.row(i).array() += (gy.row(i).array() - y.row(i).array() * dot) / norms(i);
            }
        };
    }
    return Tensor<S>(n);
}

// ---- shape plumbing ----

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape s) {
    require(s.size() == x.shape().size(), "ShapeError",
            "reshape " + x.shape().str() + " -> " + s.str());
    auto n = detail::make_result<S>(s, x.val(), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o] { px->grad += o->grad; };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require(sa.n == sb.n && sa.h == sb.h && sa.w == sb.w, "ShapeError",
            "concat_channels: " + sa.str() + " vs " + sb.str());
    Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
    Vec<S> out(so.size());
    const int plane = sa.h * sa.w;
    for (int n4 = 0; n4 < sa.n; ++n4) {
        out.segment(n4 * so.c * plane, sa.c * plane) =
            a.val().segment(n4 * sa.c * plane, sa.c * plane);
        out.segment(n4 * so.c * plane + sa.c * plane, sb.c * plane) =
            b.val().segment(n4 * sb.c * plane, sb.c * plane);
    }
    auto n = detail::make_result<S>(so, std::move(out), {a.node(), b.node()});
    if (n->requires_grad) {
        auto pa = a.node(), pb = b.node();
        auto o = n.get();
        const int ca = sa.c, cb = sb.c, nb = sa.n;
        n->backward = [pa, pb, o, ca, cb, nb, plane] {
            const int co = ca + cb;
            for (int n4 = 0; n4 < nb; ++n4) {
                if (pa->requires_grad)
                    pa->grad.segment(n4 * ca * plane, ca * plane) +=
                        o->grad.segment(n4 * co * plane, ca * plane);
                if (pb->requires_grad)
                    pb->grad.segment(n4 * cb * plane, cb * plane) +=
                        o->grad.segment(n4 * co * plane + ca * plane, cb * plane);
            }
        };
    }
    return Tensor<S>(n);
}

// multiply each channel of x by a (N,1,H,W) gate map
template <typename S>
Tensor<S> mul_gate(const Tensor<S>& x, const Tensor<S>& gate) {
    const Shape& s = x.shape();
    require(gate.shape().n == s.n && gate.shape().c == 1 && gate.shape().h == s.h &&
                gate.shape().w == s.w,
            "ShapeError", "mul_gate: gate " + gate.shape().str() + " vs x " + s.str());
    Vec<S> out(s.size());
    const int plane = s.h * s.w;
    for (int n4 = 0; n4 < s.n; ++n4)
        for (int c = 0; c < s.c; ++c)
            out.segment((n4 * s.c + c) * plane, plane) =
                x.val().segment((n4 * s.c + c) * plane, plane) *
                gate.val().segment(n4 * plane, plane);
    auto n = detail::make_result<S>(s, std::move(out), {x.node(), gate.node()});
    if (n->requires_grad) {
        auto px = x.node(), pg = gate.node();
        auto o = n.get();
        const int nb = s.n, cc = s.c;
        n->backward = [px, pg, o, nb, cc, plane] {
            for (int n4 = 0; n4 < nb; ++n4) {
                for (int c = 0; c < cc; ++c) {
                    const auto g = o->grad.segment((n4 * cc + c) * plane, plane);
                    if (px->requires_grad)
                        px->grad.segment((n4 * cc + c) * plane, plane) +=
                            g * pg->val.segment(n4 * plane, plane);
                    if (pg->requires_grad)
                        pg->grad.segment(n4 * plane, plane) +=
                            g * px->val.segment((n4 * cc + c) * plane, plane);
                }
            }
        };
    }
    return Tensor<S>(n);
}

// embeddings at a list of (batch, cell-y, cell-x) sites -> (K x C) matrix
struct CellRef {
    int n = 0, y = 0, x = 0;
};

template <typename S>
Tensor<S> gather_cells(const Tensor<S>& x, const std::vector<CellRef>& cells) {
    const Shape& s = x.shape();
    const int k = static_cast<int>(cells.size());
    Vec<S> out(k * s.c);
    for (int i = 0; i < k; ++i) {
        const auto& cr = cells[i];
        require(cr.n >= 0 && cr.n < s.n && cr.y >= 0 && cr.y < s.h && cr.x >= 0 && cr.x < s.w,
                "ShapeError", "gather_cells: site out of bounds");
        for (int c = 0; c < s.c; ++c)
            out(i * s.c + c) = x.val()(((cr.n * s.c + c) * s.h + cr.y) * s.w + cr.x);
    }
    auto n = detail::make_result<S>({k, s.c, 1, 1}, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, cells, s] {
            for (size_t i = 0; i < cells.size(); ++i) {
                const auto& cr = cells[i];
                for (int c = 0; c < s.c; ++c)
                    px->grad(((cr.n * s.c + c) * s.h + cr.y) * s.w + cr.x) +=
                        o->grad(i * s.c + c);
            }
        };
    }
    return Tensor<S>(n);
}

// ---- spatial ops ----

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias, int stride,
                 int pad) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();  // (Cout, Cin, kh, kw)
    require(sw.c == sx.c, "ShapeError",
            "conv2d: weight " + sw.str() + " does not match input " + sx.str());
    require(bias.shape().size() == sw.n, "ShapeError", "conv2d: bias size");
    const int ho = (sx.h + 2 * pad - sw.h) / stride + 1;
    const int wo = (sx.w + 2 * pad - sw.w) / stride + 1;
    require(ho >= 1 && wo >= 1, "ShapeError", "conv2d: output would be empty");

    const int kdim = sx.c * sw.h * sw.w;
    const int cols = ho * wo;
    Shape so{sx.n, sw.n, ho, wo};
    Vec<S> out(so.size());

    // im2col per sample; saved for the backward pass
    auto colbuf = std::make_shared<std::vector<MatRM<S>>>(sx.n);
    for (int n4 = 0; n4 < sx.n; ++n4) {
        MatRM<S>& col = (*colbuf)[n4];
        col.setZero(kdim, cols);
        const S* src = x.val().data() + n4 * sx.c * sx.h * sx.w;
        for (int c = 0; c < sx.c; ++c) {
            for (int ky = 0; ky < sw.h; ++ky) {
                for (int kx = 0; kx < sw.w; ++kx) {
                    const int row = (c * sw.h + ky) * sw.w + kx;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= sx.h) continue;
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= sx.w) continue;
                            col(row, oy * wo + ox) = src[(c * sx.h + iy) * sx.w + ix];
                        }
                    }
                }
            }
        }
        CMapM<S> wm(w.val().data(), sw.n, kdim);
        MapM<S> om(out.data() + n4 * sw.n * cols, sw.n, cols);
        om = wm * col;
        om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(
            bias.val().data(), sw.n);
    }

    auto n = detail::make_result<S>(so, std::move(out), {x.node(), w.node(), bias.node()});
    if (n->requires_grad) {
        auto px = x.node(), pw = w.node(), pb = bias.node();
        auto o = n.get();
        n->backward = [px, pw, pb, o, colbuf, sx, sw, ho, wo, stride, pad, kdim, cols] {
            for (int n4 = 0; n4 < sx.n; ++n4) {
                CMapM<S> gy(o->grad.data() + n4 * sw.n * cols, sw.n, cols);
                if (pw->requires_grad)
                    MapM<S>(pw->grad.data(), sw.n, kdim) += gy * (*colbuf)[n4].transpose();
                if (pb->requires_grad)
                    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(pb->grad.data(), sw.n) +=
                        gy.rowwise().sum();
                if (px->requires_grad) {
                    MatRM<S> gcol = CMapM<S>(pw->val.data(), sw.n, kdim).transpose() * gy;
                    S* gx = px->grad.data() + n4 * sx.c * sx.h * sx.w;
                    for (int c = 0; c < sx.c; ++c)
                        for (int ky = 0; ky < sw.h; ++ky)
                            for (int kx = 0; kx < sw.w; ++kx) {
                                const int row = (c * sw.h + ky) * sw.w + kx;
                                for (int oy = 0; oy < ho; ++oy) {
                                    const int iy = oy * stride + ky - pad;
                                    if (iy < 0 || iy >= sx.h) continue;
                                    for (int ox = 0; ox < wo; ++ox) {
                                        const int ix = ox * stride + kx - pad;
                                        if (ix < 0 || ix >= sx.w) continue;
                                        gx[(c * sx.h + iy) * sx.w + ix] +=
                                            gcol(row, oy * wo + ox);
                                    }
                                }
                            }
                }
            }
        };
    }
    return Tensor<S>(n);
}

// transposed convolution; weight shaped (Cin, Cout, kh, kw)
template <typename S>
Tensor<S> conv_transpose2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias,
                           int stride, int pad) {
    const Shape& sx = x.shape();
    const Shape& sw = w.shape();
    require(sw.n == sx.c, "ShapeError",
            "conv_transpose2d: weight " + sw.str() + " vs input " + sx.str());
    const int cout = sw.c;
    require(bias.shape().size() == cout, "ShapeError", "conv_transpose2d: bias size");
    const int ho = (sx.h - 1) * stride - 2 * pad + sw.h;
    const int wo = (sx.w - 1) * stride - 2 * pad + sw.w;
    require(ho >= 1 && wo >= 1, "ShapeError", "conv_transpose2d: output would be empty");
    Shape so{sx.n, cout, ho, wo};
    Vec<S> out(so.size());

    for (int n4 = 0; n4 < sx.n; ++n4) {
        S* dst = out.data() + n4 * cout * ho * wo;
        for (int co = 0; co < cout; ++co) {
            const S b = bias.val()(co);
            for (int i = 0; i < ho * wo; ++i) dst[co * ho * wo + i] = b;
        }
        const S* src = x.val().data() + n4 * sx.c * sx.h * sx.w;
        for (int ci = 0; ci < sx.c; ++ci)
            for (int iy = 0; iy < sx.h; ++iy)
                for (int ix = 0; ix < sx.w; ++ix) {
                    const S v = src[(ci * sx.h + iy) * sx.w + ix];
                    if (v == S(0)) continue;
                    for (int co = 0; co < cout; ++co)
                        for (int ky = 0; ky < sw.h; ++ky) {
                            const int oy = iy * stride + ky - pad;
                            if (oy < 0 || oy >= ho) continue;
                            for (int kx = 0; kx < sw.w; ++kx) {
                                const int ox = ix * stride + kx - pad;
                                if (ox < 0 || ox >= wo) continue;
                                dst[(co * ho + oy) * wo + ox] +=
                                    v * w.val()(((ci * cout + co) * sw.h + ky) * sw.w + kx);
                            }
                        }
                }
    }

    auto n = detail::make_result<S>(so, std::move(out), {x.node(), w.node(), bias.node()});
    if (n->requires_grad) {
        auto px = x.node(), pw = w.node(), pb = bias.node();
        auto o = n.get();
        n->backward = [px, pw, pb, o, sx, sw, cout, ho, wo, stride, pad] {
            for (int n4 = 0; n4 < sx.n; ++n4) {
                const S* gy = o->grad.data() + n4 * cout * ho * wo;
                const S* xv = px->val.data() + n4 * sx.c * sx.h * sx.w;
                S* gx = px->grad.data() + n4 * sx.c * sx.h * sx.w;
                if (pb->requires_grad)
                    for (int co = 0; co < cout; ++co)
                        for (int i = 0; i < ho * wo; ++i)
                            pb->grad(co) += gy[co * ho * wo + i];
                for (int ci = 0; ci < sx.c; ++ci)
                    for (int iy = 0; iy < sx.h; ++iy)
                        for (int ix = 0; ix < sx.w; ++ix) {
                            S acc = S(0);
                            for (int co = 0; co < cout; ++co)
                                for (int ky = 0; ky < sw.h; ++ky) {
                                    const int oy = iy * stride + ky - pad;
                                    if (oy < 0 || oy >= ho) continue;
                                    for (int kx = 0; kx < sw.w; ++kx) {
                                        const int ox = ix * stride + kx - pad;
                                        if (ox < 0 || ox >= wo) continue;
                                        const S g = gy[(co * ho + oy) * wo + ox];
                                        const int widx =
                                            ((ci * cout + co) * sw.h + ky) * sw.w + kx;
                                        if (px->requires_grad) acc += g * pw->val(widx);
                                        if (pw->requires_grad)
                                            pw->grad(widx) +=
                                                g * xv[(ci * sx.h + iy) * sx.w + ix];
                                    }
                                }
                            if (px->requires_grad) gx[(ci * sx.h + iy) * sx.w + ix] += acc;
                        }
            }
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> maxpool2(const Tensor<S>& x) {
    const Shape& s = x.shape();
    require(s.h % 2 == 0 && s.w % 2 == 0, "ShapeError", "maxpool2 needs even dims");
    Shape so{s.n, s.c, s.h / 2, s.w / 2};
    Vec<S> out(so.size());
    auto argmax = std::make_shared<std::vector<int>>(so.size());
    for (int n4 = 0; n4 < s.n; ++n4)
        for (int c = 0; c < s.c; ++c) {
            const S* src = x.val().data() + (n4 * s.c + c) * s.h * s.w;
            const int base = (n4 * so.c + c) * so.h * so.w;
            for (int oy = 0; oy < so.h; ++oy)
                for (int ox = 0; ox < so.w; ++ox) {
                    int best = (2 * oy) * s.w + 2 * ox;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const int idx = (2 * oy + dy) * s.w + 2 * ox + dx;
                            if (src[idx] > src[best]) best = idx;
                        }
                    out(base + oy * so.w + ox) = src[best];
                    (*argmax)[base + oy * so.w + ox] = (n4 * s.c + c) * s.h * s.w + best;
                }
        }
    auto n = detail::make_result<S>(so, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, argmax] {
            for (Eigen::Index i = 0; i < o->grad.size(); ++i)
                px->grad((*argmax)[i]) += o->grad(i);
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> upsample2_nearest(const Tensor<S>& x) {
    const Shape& s = x.shape();
    Shape so{s.n, s.c, s.h * 2, s.w * 2};
    Vec<S> out(so.size());
    for (int p = 0; p < s.n * s.c; ++p) {
        const S* src = x.val().data() + p * s.h * s.w;
        S* dst = out.data() + p * so.h * so.w;
        for (int y = 0; y < so.h; ++y)
            for (int xw = 0; xw < so.w; ++xw)
                dst[y * so.w + xw] = src[(y / 2) * s.w + xw / 2];
    }
    auto n = detail::make_result<S>(so, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, s, so] {
            for (int p = 0; p < s.n * s.c; ++p) {
                const S* g = o->grad.data() + p * so.h * so.w;
                S* gx = px->grad.data() + p * s.h * s.w;
                for (int y = 0; y < so.h; ++y)
                    for (int xw = 0; xw < so.w; ++xw)
                        gx[(y / 2) * s.w + xw / 2] += g[y * so.w + xw];
            }
        };
    }
    return Tensor<S>(n);
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    const Shape& s = x.shape();
    Shape so{s.n, s.c, 1, 1};
    Vec<S> out(so.size());
    const int plane = s.h * s.w;
    for (int p = 0; p < s.n * s.c; ++p) out(p) = x.val().segment(p * plane, plane).mean();
    auto n = detail::make_result<S>(so, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, s, plane] {
            for (int p = 0; p < s.n * s.c; ++p)
                px->grad.segment(p * plane, plane) += o->grad(p) / S(plane);
        };
    }
    return Tensor<S>(n);
}

enum class PoolDir { Left, Right, Top, Bottom };

// directional running max: Left propagates evidence from the right edge
// leftwards (out[y,x] = max over x' >= x), and so on per the other directions.
template <typename S>
Tensor<S> corner_pool(const Tensor<S>& x, PoolDir dir) {
    const Shape& s = x.shape();
    Vec<S> out(s.size());
    auto argmax = std::make_shared<std::vector<int>>(s.size());
    auto scan = [&](int plane_base, int start, int count, int step) {
        // running max along a scanline; first max wins on ties
        int best = plane_base + start;
        for (int i = 0, idx = start; i < count; ++i, idx += step) {
            const int cur = plane_base + idx;
            if (x.val()(cur) > x.val()(best)) best = cur;
            out(cur) = x.val()(best);
            (*argmax)[cur] = best;
        }
    };
    for (int p = 0; p < s.n * s.c; ++p) {
        const int base = p * s.h * s.w;
        switch (dir) {
            case PoolDir::Left:  // scan right -> left
                for (int y = 0; y < s.h; ++y) scan(base, y * s.w + s.w - 1, s.w, -1);
                break;
            case PoolDir::Right:  // out[y,x] = max over x' <= x
                for (int y = 0; y < s.h; ++y) scan(base, y * s.w, s.w, 1);
                break;
            case PoolDir::Top:  // out[y,x] = max over y' >= y
                for (int xw = 0; xw < s.w; ++xw) scan(base, (s.h - 1) * s.w + xw, s.h, -s.w);
                break;
            case PoolDir::Bottom:  // out[y,x] = max over y' <= y
                for (int xw = 0; xw < s.w; ++xw) scan(base, xw, s.h, s.w);
                break;
        }
    }
    auto n = detail::make_result<S>(s, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, argmax] {
            for (Eigen::Index i = 0; i < o->grad.size(); ++i)
                px->grad((*argmax)[i]) += o->grad(i);
        };
    }
    return Tensor<S>(n);
}

// batch normalization over (N,H,W) per channel
template <typename S>
Tensor<S> batchnorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                    Vec<S>& running_mean, Vec<S>& running_var, bool training,
                    S momentum = S(0.1), S eps = S(1e-5)) {
    const Shape& s = x.shape();
    require(gamma.shape().size() == s.c && beta.shape().size() == s.c, "ShapeError",
            "batchnorm: affine params must have C entries");
    require(running_mean.size() == s.c && running_var.size() == s.c, "ShapeError",
            "batchnorm: running stats must have C entries");
    const int plane = s.h * s.w;
    const int m = s.n * plane;

    Vec<S> mean(s.c), var(s.c);
    if (training) {
        for (int c = 0; c < s.c; ++c) {
            S acc = 0;
            for (int n4 = 0; n4 < s.n; ++n4)
                acc += x.val().segment((n4 * s.c + c) * plane, plane).sum();
            mean(c) = acc / S(m);
            S v = 0;
            for (int n4 = 0; n4 < s.n; ++n4)
                v += (x.val().segment((n4 * s.c + c) * plane, plane) - mean(c)).square().sum();
            var(c) = v / S(m);
        }
        running_mean = (S(1) - momentum) * running_mean + momentum * mean;
        running_var = (S(1) - momentum) * running_var + momentum * var;
    } else {
        mean = running_mean;
        var = running_var;
    }

    Vec<S> inv_std = (var + eps).sqrt().inverse();
    Vec<S> out(s.size()), xhat(s.size());
    for (int n4 = 0; n4 < s.n; ++n4)
        for (int c = 0; c < s.c; ++c) {
            auto seg = x.val().segment((n4 * s.c + c) * plane, plane);
            auto xh = (seg - mean(c)) * inv_std(c);
            xhat.segment((n4 * s.c + c) * plane, plane) = xh;
            out.segment((n4 * s.c + c) * plane, plane) = gamma.val()(c) * xh + beta.val()(c);
        }

    auto n = detail::make_result<S>(s, std::move(out),
                                    {x.node(), gamma.node(), beta.node()});
    if (n->requires_grad) {
        auto px = x.node(), pg = gamma.node(), pb = beta.node();
        auto o = n.get();
        auto xh = std::make_shared<Vec<S>>(std::move(xhat));
        n->backward = [px, pg, pb, o, xh, inv_std, s, plane, m, training] {
            for (int c = 0; c < s.c; ++c) {
                S sum_gy = 0, sum_gy_xh = 0;
                for (int n4 = 0; n4 < s.n; ++n4) {
                    const int off = (n4 * s.c + c) * plane;
                    sum_gy += o->grad.segment(off, plane).sum();
                    sum_gy_xh +=
                        (o->grad.segment(off, plane) * xh->segment(off, plane)).sum();
                }
                if (pg->requires_grad) pg->grad(c) += sum_gy_xh;
                if (pb->requires_grad) pb->grad(c) += sum_gy;
                if (px->requires_grad) {
                    const S g = pg->val(c);
                    for (int n4 = 0; n4 < s.n; ++n4) {
                        const int off = (n4 * s.c + c) * plane;
                        if (training) {
                            px->grad.segment(off, plane) +=
                                g * inv_std(c) *
                                (o->grad.segment(off, plane) - sum_gy / S(m) -
                                 xh->segment(off, plane) * (sum_gy_xh / S(m)));
                        } else {
                            px->grad.segment(off, plane) +=
                                g * inv_std(c) * o->grad.segment(off, plane);
                        }
                    }
                }
            }
        };
    }
    return Tensor<S>(n);
}

// bilinear ROI pooling: samples a regular (oh x ow) grid inside bbox with 4
// samples per output cell, averaged. Box in feature-cell coordinates.
template <typename S>
Tensor<S> roi_align(const Tensor<S>& x, S x0, S y0, S x1, S y1, int oh, int ow) {
    const Shape& s = x.shape();
    require(s.n == 1, "ShapeError", "roi_align: single image only");
    require(x1 > x0 && y1 > y0, "EmptyBox", "roi_align: degenerate box");
    require(oh >= 1 && ow >= 1, "ShapeError", "roi_align: output size");

    const S bin_h = (y1 - y0) / S(oh);
    const S bin_w = (x1 - x0) / S(ow);
    struct Tap {
        int idx;
        S weight;
    };
    auto taps = std::make_shared<std::vector<Tap>>();
    taps->reserve(static_cast<size_t>(oh) * ow * 16);
    auto tap_offsets = std::make_shared<std::vector<int>>();

    Vec<S> out(Shape{1, s.c, oh, ow}.size());
    out.setZero();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            tap_offsets->push_back(static_cast<int>(taps->size()));
            for (int sy = 0; sy < 2; ++sy) {
                for (int sxp = 0; sxp < 2; ++sxp) {
                    const S py = y0 + (S(oy) + S(0.25) + S(0.5) * sy) * bin_h;
                    const S px = x0 + (S(ox) + S(0.25) + S(0.5) * sxp) * bin_w;
                    // clamp to valid bilinear support
                    const S cy = std::min(std::max(py, S(0)), S(s.h - 1));
                    const S cx = std::min(std::max(px, S(0)), S(s.w - 1));
                    const int iy = std::min(static_cast<int>(cy), s.h - 2 >= 0 ? s.h - 2 : 0);
                    const int ix = std::min(static_cast<int>(cx), s.w - 2 >= 0 ? s.w - 2 : 0);
                    const S fy = cy - iy, fx = cx - ix;
                    const S w00 = (1 - fy) * (1 - fx), w01 = (1 - fy) * fx;
                    const S w10 = fy * (1 - fx), w11 = fy * fx;
                    const int y2 = std::min(iy + 1, s.h - 1), x2 = std::min(ix + 1, s.w - 1);
                    taps->push_back({iy * s.w + ix, w00 / 4});
                    taps->push_back({iy * s.w + x2, w01 / 4});
                    taps->push_back({y2 * s.w + ix, w10 / 4});
                    taps->push_back({y2 * s.w + x2, w11 / 4});
                }
            }
        }
    }
    tap_offsets->push_back(static_cast<int>(taps->size()));

    for (int c = 0; c < s.c; ++c) {
        const S* src = x.val().data() + c * s.h * s.w;
        for (int cell = 0; cell < oh * ow; ++cell) {
            S acc = 0;
            for (int t = (*tap_offsets)[cell]; t < (*tap_offsets)[cell + 1]; ++t)
                acc += src[(*taps)[t].idx] * (*taps)[t].weight;
            out(c * oh * ow + cell) = acc;
        }
    }

    auto n = detail::make_result<S>({1, s.c, oh, ow}, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, taps, tap_offsets, s, oh, ow] {
            for (int c = 0; c < s.c; ++c) {
                S* gx = px->grad.data() + c * s.h * s.w;
                for (int cell = 0; cell < oh * ow; ++cell) {
                    const S g = o->grad(c * oh * ow + cell);
                    for (int t = (*tap_offsets)[cell]; t < (*tap_offsets)[cell + 1]; ++t)
                        gx[(*taps)[t].idx] += g * (*taps)[t].weight;
                }
            }
        };
    }
    return Tensor<S>(n);
}

// ---- loss heads (constant targets / weights) ----

// sum_i w_i * BCE(sigmoid(z_i), t_i) / sum_i w_i, numerically stable in z
template <typename S>
Tensor<S> bce_logits_weighted(const Tensor<S>& z, const Vec<S>& target, const Vec<S>& weight) {
    require(static_cast<int>(target.size()) == z.shape().size() &&
                static_cast<int>(weight.size()) == z.shape().size(),
            "ShapeMismatch", "bce_logits_weighted");
    const S wsum = weight.sum();
    require(wsum > S(0), "ShapeMismatch", "bce_logits_weighted: zero weight mass");
    S acc = 0;
    for (Eigen::Index i = 0; i < target.size(); ++i) {
        const S v = z.val()(i);
        acc += weight(i) * (std::max(v, S(0)) - v * target(i) + std::log1p(std::exp(-std::abs(v))));
    }
    Vec<S> out(1);
    out(0) = acc / wsum;
    auto n = detail::make_result<S>({1, 1, 1, 1}, std::move(out), {z.node()});
    if (n->requires_grad) {
        auto pz = z.node();
        auto o = n.get();
        n->backward = [pz, o, target, weight, wsum] {
            const S g = o->grad(0) / wsum;
            for (Eigen::Index i = 0; i < target.size(); ++i) {
                const S v = pz->val(i);
                const S sig = v >= 0 ? S(1) / (S(1) + std::exp(-v))
                                     : std::exp(v) / (S(1) + std::exp(v));
                pz->grad(i) += g * weight(i) * (sig - target(i));
            }
        };
    }
    return Tensor<S>(n);
}

// mean squared error against a constant target
template <typename S>
Tensor<S> mse_against(const Tensor<S>& x, const Vec<S>& target) {
    require(static_cast<int>(target.size()) == x.shape().size(), "ShapeMismatch", "mse_against");
    const S m = S(target.size());
    Vec<S> out(1);
    out(0) = (x.val() - target).square().sum() / m;
    auto n = detail::make_result<S>({1, 1, 1, 1}, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, target, m] {
            px->grad += o->grad(0) * S(2) / m * (px->val - target);
        };
    }
    return Tensor<S>(n);
}

// L1 against a constant target, restricted to mask > 0; mean over active entries
template <typename S>
Tensor<S> l1_masked(const Tensor<S>& x, const Vec<S>& target, const Vec<S>& mask) {
    require(static_cast<int>(target.size()) == x.shape().size() &&
                static_cast<int>(mask.size()) == x.shape().size(),
            "ShapeMismatch", "l1_masked");
    const S active = std::max(S(1), mask.sum());
    Vec<S> out(1);
    out(0) = (mask * (x.val() - target).abs()).sum() / active;
    auto n = detail::make_result<S>({1, 1, 1, 1}, std::move(out), {x.node()});
    if (n->requires_grad) {
        auto px = x.node();
        auto o = n.get();
        n->backward = [px, o, target, mask, active] {
            const S g = o->grad(0) / active;
            for (Eigen::Index i = 0; i < mask.size(); ++i) {
                if (mask(i) == S(0)) continue;
                const S d = px->val(i) - target(i);
                px->grad(i) += g * mask(i) * (d > 0 ? S(1) : d < 0 ? S(-1) : S(0));
            }
        };
    }
    return Tensor<S>(n);
}

// rowwise softmax cross-entropy of an (N x C) logit matrix against int labels
template <typename S>
Tensor<S> softmax_ce(const Tensor<S>& logits, const std::vector<int>& labels, bool mean = true) {
    const int r = logits.shape().n, c = logits.shape().c;
    require(static_cast<int>(labels.size()) == r, "ShapeMismatch", "softmax_ce labels");
    CMapM<S> in(logits.val().data(), r, c);
    auto probs = std::make_shared<MatRM<S>>(r, c);
    S acc = 0;
    for (int i = 0; i < r; ++i) {
        require(labels[i] >= 0 && labels[i] < c, "ShapeMismatch", "softmax_ce label range");
        const S mx = in.row(i).maxCoeff();
        probs->row(i) = (in.row(i).array() - mx).exp();
        const S z = probs->row(i).sum();
        probs->row(i) /= z;
        acc -= std::log(std::max((*probs)(i, labels[i]), std::numeric_limits<S>::min()));
    }
    const S denom = mean ? S(r) : S(1);
    Vec<S> out(1);
    out(0) = acc / denom;
    auto n = detail::make_result<S>({1, 1, 1, 1}, std::move(out), {logits.node()});
    if (n->requires_grad) {
        auto pl = logits.node();
        auto o = n.get();
        n->backward = [pl, o, probs, labels, r, c, denom] {
            const S g = o->grad(0) / denom;
            MapM<S> gx(pl->grad.data(), r, c);
            for (int i = 0; i < r; ++i) {
                gx.row(i) += g * probs->row(i);
                gx(i, labels[i]) -= g;
            }
        };
    }
    return Tensor<S>(n);
}

}  // namespace chartex::nn
