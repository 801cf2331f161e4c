#pragma once

// Elementwise, matmul, reduction and shape ops on Tensor<T>, each with its
// backward closure. Elementwise binaries broadcast numpy-style (size-1 dims
// stretch); matmul broadcasts leading batch dims only.

#include <algorithm>
#include <cmath>

#include "axunet/tensor.hpp"

namespace axunet {

namespace detail {

struct BcastPlan {
    Shape out_shape;
    std::vector<std::int64_t> a_str;  // per out dim, 0 where broadcast
    std::vector<std::int64_t> b_str;
    bool same_shape = false;
};

inline BcastPlan broadcast_plan(const char* op, const Shape& a, const Shape& b) {
    BcastPlan plan;
    if (a == b) {
        plan.out_shape = a;
        plan.same_shape = true;
        return plan;
    }
    const int nd = static_cast<int>(std::max(a.size(), b.size()));
    plan.out_shape.assign(nd, 1);
    for (int d = 0; d < nd; ++d) {
        const std::int64_t da = d < nd - static_cast<int>(a.size()) ? 1 : a[d - (nd - a.size())];
        const std::int64_t db = d < nd - static_cast<int>(b.size()) ? 1 : b[d - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcast-compatible");
        plan.out_shape[d] = std::max(da, db);
    }
    const Shape sa = strides_of(a), sb = strides_of(b);
    plan.a_str.assign(nd, 0);
    plan.b_str.assign(nd, 0);
    for (int d = 0; d < nd; ++d) {
        const int ia = d - (nd - static_cast<int>(a.size()));
        const int ib = d - (nd - static_cast<int>(b.size()));
        if (ia >= 0 && a[ia] != 1) plan.a_str[d] = sa[ia];
        if (ib >= 0 && b[ib] != 1) plan.b_str[d] = sb[ib];
    }
    return plan;
}

inline std::int64_t bcast_offset(std::int64_t flat, const Shape& out_shape,
                                 const std::vector<std::int64_t>& str) {
    std::int64_t off = 0;
    for (int d = static_cast<int>(out_shape.size()) - 1; d >= 0; --d) {
        const std::int64_t idx = flat % out_shape[d];
        flat /= out_shape[d];
        off += idx * str[d];
    }
    return off;
}

// C[M,N] += A[M,K] * B[K,N]; contributions per element arrive in ascending k
// so results are independent of the loop blocking.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b + p * n;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const T* arow = a + i * k;
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t p = 0; p < k; ++p)
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = a[p * m + i];
            const T* brow = b + p * n;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
}

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary_elementwise(const char* op, const Tensor<T>& a, const Tensor<T>& b, Fwd f,
                             DA dfda, DB dfdb) {
    const BcastPlan plan = broadcast_plan(op, a.shape(), b.shape());
    const std::int64_t n = numel(plan.out_shape);
    std::vector<T> out(static_cast<std::size_t>(n));
    const auto ad = a.data(), bd = b.data();
    if (plan.same_shape) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = f(ad[i], bd[i]);
    } else {
        for (std::int64_t i = 0; i < n; ++i)
            out[i] = f(ad[bcast_offset(i, plan.out_shape, plan.a_str)],
                       bd[bcast_offset(i, plan.out_shape, plan.b_str)]);
    }
    auto an = a.node(), bn = b.node();
    return make_op_result<T>(
        op, plan.out_shape, std::move(out), {an, bn},
        [an, bn, plan, dfda, dfdb](Node<T>& self) {
            const std::int64_t sz = static_cast<std::int64_t>(self.data.size());
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::int64_t i = 0; i < sz; ++i) {
                const std::int64_t ia =
                    plan.same_shape ? i : bcast_offset(i, plan.out_shape, plan.a_str);
                const std::int64_t ib =
                    plan.same_shape ? i : bcast_offset(i, plan.out_shape, plan.b_str);
                const T g = self.grad[i];
                if (an->requires_grad) an->grad[ia] += g * dfda(an->data[ia], bn->data[ib]);
                if (bn->requires_grad) bn->grad[ib] += g * dfdb(an->data[ia], bn->data[ib]);
            }
        });
}

template <typename T, typename Fwd, typename Dfdx>
Tensor<T> unary_elementwise(const char* op, const Tensor<T>& x, Fwd f, Dfdx dfdx) {
    const std::int64_t n = x.size();
    std::vector<T> out(static_cast<std::size_t>(n));
    const auto xd = x.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = f(xd[i]);
    auto xn = x.node();
    return make_op_result<T>(op, x.shape(), std::move(out), {xn}, [xn, dfdx](Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.data.size(); ++i)
            xn->grad[i] += self.grad[i] * dfdx(xn->data[i], self.data[i]);
    });
}

template <typename T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_elementwise<T>(
        "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return detail::unary_elementwise<T>(
        "scale", x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary_elementwise<T>(
        "add_scalar", x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_elementwise<T>(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

// ln(1 + e^x); linear tail above 30 keeps exp in range
template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    return detail::unary_elementwise<T>(
        "softplus", x, [](T v) { return v > T(30) ? v : std::log1p(std::exp(v)); },
        [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_elementwise<T>(
        "sigmoid", x, [](T v) { return detail::stable_sigmoid(v); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
    if (numel(new_shape) != x.size())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " cannot become " +
                         shape_str(new_shape));
    auto xn = x.node();
    std::vector<T> out(x.data().begin(), x.data().end());
    return detail::make_op_result<T>("reshape", std::move(new_shape), std::move(out), {xn},
                                     [xn](detail::Node<T>& self) {
                                         xn->accumulate_grad(self.grad);
                                     });
}

// [..., A, B] -> [..., B, A]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    if (x.ndim() < 2) throw ShapeError("transpose_last2: needs rank >= 2, got " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    const std::int64_t rows = out_shape[out_shape.size() - 2];
    const std::int64_t cols = out_shape[out_shape.size() - 1];
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    const std::int64_t mat = rows * cols;
    const std::int64_t batches = x.size() / mat;
    std::vector<T> out(static_cast<std::size_t>(x.size()));
    const auto xd = x.data();
    for (std::int64_t b = 0; b < batches; ++b)
        for (std::int64_t r = 0; r < rows; ++r)
            for (std::int64_t c = 0; c < cols; ++c)
                out[b * mat + c * rows + r] = xd[b * mat + r * cols + c];
    auto xn = x.node();
    return detail::make_op_result<T>(
        "transpose_last2", std::move(out_shape), std::move(out), {xn},
        [xn, rows, cols, mat, batches](detail::Node<T>& self) {
            xn->ensure_grad();
            for (std::int64_t b = 0; b < batches; ++b)
                for (std::int64_t c = 0; c < cols; ++c)
                    for (std::int64_t r = 0; r < rows; ++r)
                        xn->grad[b * mat + r * cols + c] += self.grad[b * mat + c * rows + r];
        });
}

// Batched matrix product [...,M,K] x [...,K,N] -> [...,M,N]; leading batch
// dims broadcast against each other.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw ShapeError("matmul: both operands need rank >= 2, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const Shape& as = a.shape();
    const Shape& bs = b.shape();
    const std::int64_t m = as[as.size() - 2], k = as[as.size() - 1];
    const std::int64_t kb = bs[bs.size() - 2], n = bs[bs.size() - 1];
    if (k != kb)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(as) + " vs " +
                         shape_str(bs));
    const Shape abatch(as.begin(), as.end() - 2);
    const Shape bbatch(bs.begin(), bs.end() - 2);
    const detail::BcastPlan plan = detail::broadcast_plan("matmul", abatch, bbatch);
    const std::int64_t nbatch = numel(plan.out_shape);

    Shape out_shape = plan.out_shape;
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<T> out(static_cast<std::size_t>(nbatch * m * n), T(0));
    const auto ad = a.data(), bd = b.data();
    const std::int64_t amat = m * k, bmat = k * n, cmat = m * n;
    auto batch_off = [&](std::int64_t i, const std::vector<std::int64_t>& str) {
        return plan.same_shape ? i : detail::bcast_offset(i, plan.out_shape, str);
    };
    for (std::int64_t i = 0; i < nbatch; ++i)
        detail::gemm_nn(ad.data() + batch_off(i, plan.a_str) * amat,
                        bd.data() + batch_off(i, plan.b_str) * bmat, out.data() + i * cmat, m, k, n);

    auto an = a.node(), bn = b.node();
    return detail::make_op_result<T>(
        "matmul", std::move(out_shape), std::move(out), {an, bn},
        [an, bn, plan, m, k, n, nbatch, amat, bmat, cmat](detail::Node<T>& self) {
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            for (std::int64_t i = 0; i < nbatch; ++i) {
                const T* g = self.grad.data() + i * cmat;
                const std::int64_t ia =
                    plan.same_shape ? i : detail::bcast_offset(i, plan.out_shape, plan.a_str);
                const std::int64_t ib =
                    plan.same_shape ? i : detail::bcast_offset(i, plan.out_shape, plan.b_str);
                if (an->requires_grad)  // dA += dC * B^T
                    detail::gemm_nt(g, bn->data.data() + ib * bmat, an->grad.data() + ia * amat,
                                    m, n, k);
                if (bn->requires_grad)  // dB += A^T * dC
                    detail::gemm_tn(an->data.data() + ia * amat, g, bn->grad.data() + ib * bmat,
                                    k, m, n);
            }
        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int nd = parts[0].ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    std::int64_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int d = 0; d < nd; ++d)
            if (d != axis && p.shape()[d] != out_shape[d])
                throw ShapeError("concat: shape " + shape_str(p.shape()) +
                                 " incompatible with " + shape_str(out_shape) + " on axis " +
                                 std::to_string(axis));
        axis_total += p.shape()[axis];
    }
    out_shape[axis] = axis_total;

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= out_shape[d];
    for (int d = axis + 1; d < nd; ++d) inner *= out_shape[d];

    std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
    std::vector<std::shared_ptr<detail::Node<T>>> nodes;
    std::vector<std::int64_t> extents;
    std::int64_t at = 0;
    for (const auto& p : parts) {
        const std::int64_t e = p.shape()[axis];
        const auto pd = p.data();
        for (std::int64_t o = 0; o < outer; ++o)
            std::copy_n(pd.data() + o * e * inner, e * inner,
                        out.data() + (o * axis_total + at) * inner);
        at += e;
        nodes.push_back(p.node());
        extents.push_back(e);
    }
    auto parents = nodes;
    return detail::make_op_result<T>(
        "concat", std::move(out_shape), std::move(out), std::move(parents),
        [nodes, extents, outer, inner, axis_total](detail::Node<T>& self) {
            std::int64_t off = 0;
            for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
                const std::int64_t e = extents[pi];
                if (nodes[pi]->requires_grad) {
                    nodes[pi]->ensure_grad();
                    for (std::int64_t o = 0; o < outer; ++o) {
                        const T* src = self.grad.data() + (o * axis_total + off) * inner;
                        T* dst = nodes[pi]->grad.data() + o * e * inner;
                        for (std::int64_t i = 0; i < e * inner; ++i) dst[i] += src[i];
                    }
                }
                off += e;
            }
        });
}

// Contiguous slice [start, start+len) along one axis.
template <typename T>
Tensor<T> narrow(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t len) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("narrow: axis out of range");
    const std::int64_t extent = x.shape()[axis];
    if (start < 0 || len <= 0 || start + len > extent)
        throw ShapeError("narrow: [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") outside axis of extent " + std::to_string(extent));
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (int d = axis + 1; d < nd; ++d) inner *= x.shape()[d];
    std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
    const auto xd = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
        std::copy_n(xd.data() + (o * extent + start) * inner, len * inner,
                    out.data() + o * len * inner);
    auto xn = x.node();
    return detail::make_op_result<T>(
        "narrow", std::move(out_shape), std::move(out), {xn},
        [xn, outer, inner, extent, start, len](detail::Node<T>& self) {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o) {
                const T* src = self.grad.data() + o * len * inner;
                T* dst = xn->grad.data() + (o * extent + start) * inner;
                for (std::int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (const T v : x.data()) acc += v;
    auto xn = x.node();
    return detail::make_op_result<T>("sum", Shape{}, std::vector<T>{acc}, {xn},
                                     [xn](detail::Node<T>& self) {
                                         xn->ensure_grad();
                                         const T g = self.grad[0];
                                         for (auto& gv : xn->grad) gv += g;
                                     });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdims = false) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("sum: axis out of range");
    const std::int64_t extent = x.shape()[axis];
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (int d = axis + 1; d < nd; ++d) inner *= x.shape()[d];
    Shape out_shape;
    for (int d = 0; d < nd; ++d) {
        if (d == axis) {
            if (keepdims) out_shape.push_back(1);
        } else {
            out_shape.push_back(x.shape()[d]);
        }
    }
    if (out_shape.empty()) out_shape = Shape{};
    std::vector<T> out(static_cast<std::size_t>(outer * inner), T(0));
    const auto xd = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t e = 0; e < extent; ++e)
            for (std::int64_t i = 0; i < inner; ++i)
                out[o * inner + i] += xd[(o * extent + e) * inner + i];
    auto xn = x.node();
    return detail::make_op_result<T>(
        "sum_axis", std::move(out_shape), std::move(out), {xn},
        [xn, outer, inner, extent](detail::Node<T>& self) {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t e = 0; e < extent; ++e)
                    for (std::int64_t i = 0; i < inner; ++i)
                        xn->grad[(o * extent + e) * inner + i] += self.grad[o * inner + i];
        });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdims = false) {
    return scale(sum(x, axis, keepdims), T(1) / static_cast<T>(x.shape()[axis]));
}

// Rowwise max is subtracted before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("softmax: axis out of range");
    const std::int64_t extent = x.shape()[axis];
    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (int d = axis + 1; d < nd; ++d) inner *= x.shape()[d];
    std::vector<T> out(static_cast<std::size_t>(x.size()));
    const auto xd = x.data();
    for (std::int64_t o = 0; o < outer; ++o)
        for (std::int64_t i = 0; i < inner; ++i) {
            const auto lane = [&](std::int64_t e) { return (o * extent + e) * inner + i; };
            T mx = xd[lane(0)];
            for (std::int64_t e = 1; e < extent; ++e) mx = std::max(mx, xd[lane(e)]);
            T denom = T(0);
            for (std::int64_t e = 0; e < extent; ++e) {
                const T ev = std::exp(xd[lane(e)] - mx);
                out[lane(e)] = ev;
                denom += ev;
            }
            for (std::int64_t e = 0; e < extent; ++e) out[lane(e)] /= denom;
        }
    auto xn = x.node();
    return detail::make_op_result<T>(
        "softmax", x.shape(), std::move(out), {xn},
        [xn, outer, inner, extent](detail::Node<T>& self) {
            xn->ensure_grad();
            for (std::int64_t o = 0; o < outer; ++o)
                for (std::int64_t i = 0; i < inner; ++i) {
                    const auto lane = [&](std::int64_t e) { return (o * extent + e) * inner + i; };
                    T dot = T(0);
                    for (std::int64_t e = 0; e < extent; ++e)
                        dot += self.grad[lane(e)] * self.data[lane(e)];
                    for (std::int64_t e = 0; e < extent; ++e)
                        xn->grad[lane(e)] += self.data[lane(e)] * (self.grad[lane(e)] - dot);
                }
        });
}

}  // namespace axunet
