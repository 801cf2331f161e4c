#pragma once

// 2D convolution family. conv2d uses the cross-correlation convention (no
// kernel flip) and lowers to patch matrices + GEMM; the GEMM accumulates the
// C*kh*kw axis in ascending order, so results are bit-identical to a direct
// (c, kh, kw) loop nest. conv_transpose2d is the data-adjoint of conv2d with
// the same kernel.

#include <algorithm>
#include <limits>

#include "axunet/ops.hpp"
#include "axunet/parallel.hpp"
#include "axunet/tensor.hpp"

namespace axunet {

namespace detail {

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                                    std::int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// cols[pos, (c*kh+dh)*kw+dw] for pos = oh*OW+ow; zero where the tap falls in padding
template <typename T>
void im2col(const T* x, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
            std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t OH,
            std::int64_t OW, T* cols) {
    const std::int64_t ckk = C * kh * kw;
    for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
            T* row = cols + (oh * OW + ow) * ckk;
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t dh = 0; dh < kh; ++dh) {
                    const std::int64_t ih = oh * stride - pad + dh;
                    for (std::int64_t dw = 0; dw < kw; ++dw) {
                        const std::int64_t iw = ow * stride - pad + dw;
                        *row++ = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                     ? x[(c * H + ih) * W + iw]
                                     : T(0);
                    }
                }
        }
}

template <typename T>
void col2im_add(const T* cols, std::int64_t C, std::int64_t H, std::int64_t W, std::int64_t kh,
                std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t OH,
                std::int64_t OW, T* x) {
    const std::int64_t ckk = C * kh * kw;
    for (std::int64_t oh = 0; oh < OH; ++oh)
        for (std::int64_t ow = 0; ow < OW; ++ow) {
            const T* row = cols + (oh * OW + ow) * ckk;
            for (std::int64_t c = 0; c < C; ++c)
                for (std::int64_t dh = 0; dh < kh; ++dh) {
                    const std::int64_t ih = oh * stride - pad + dh;
                    for (std::int64_t dw = 0; dw < kw; ++dw) {
                        const std::int64_t iw = ow * stride - pad + dw;
                        if (ih >= 0 && ih < H && iw >= 0 && iw < W)
                            x[(c * H + ih) * W + iw] += row[(c * kh + dh) * kw + dw];
                    }
                }
        }
}

inline void check_conv_geometry(const char* op, std::int64_t H, std::int64_t W, std::int64_t kh,
                                std::int64_t kw, std::int64_t stride, std::int64_t pad) {
    if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
    if (pad < 0) throw ShapeError(std::string(op) + ": negative padding");
    if (kh > H + 2 * pad || kw > W + 2 * pad)
        throw ShapeError(std::string(op) + ": kernel " + std::to_string(kh) + "x" +
                         std::to_string(kw) + " larger than padded input " +
                         std::to_string(H + 2 * pad) + "x" + std::to_string(W + 2 * pad));
}

}  // namespace detail

// x [N,C,H,W], weight [O,C,kh,kw], bias [O] or undefined -> [N,O,H',W']
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::int64_t stride, std::int64_t padding) {
    if (x.ndim() != 4 || weight.ndim() != 4)
        throw ShapeError("conv2d: expected 4-d input and kernel, got " + shape_str(x.shape()) +
                         " and " + shape_str(weight.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t O = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(1) != C)
        throw ShapeError("conv2d: input has " + std::to_string(C) + " channels but kernel expects " +
                         std::to_string(weight.dim(1)));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != O))
        throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(O) + " output channels");
    detail::check_conv_geometry("conv2d", H, W, kh, kw, stride, padding);
    const std::int64_t OH = detail::conv_out_extent(H, kh, stride, padding);
    const std::int64_t OW = detail::conv_out_extent(W, kw, stride, padding);
    const std::int64_t ckk = C * kh * kw, pos = OH * OW;

    std::vector<T> out(static_cast<std::size_t>(N * O * pos), T(0));
    const auto xd = x.data();
    const auto wd = weight.data();
    parallel_for(N, [&](std::int64_t n) {
        std::vector<T> cols(static_cast<std::size_t>(pos * ckk));
        detail::im2col(xd.data() + n * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW,
                       cols.data());
        detail::gemm_nt(wd.data(), cols.data(), out.data() + n * O * pos, O, ckk, pos);
    });
    if (bias.defined()) {
        const auto bd = bias.data();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t o = 0; o < O; ++o) {
                T* row = out.data() + (n * O + o) * pos;
                for (std::int64_t p = 0; p < pos; ++p) row[p] += bd[o];
            }
    }

    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<detail::Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);
    return detail::make_op_result<T>(
        "conv2d", Shape{N, O, OH, OW}, std::move(out), std::move(parents),
        [xn, wn, bn, N, C, H, W, O, kh, kw, stride, padding, OH, OW, ckk,
         pos](detail::Node<T>& self) {
            std::vector<T> cols(static_cast<std::size_t>(pos * ckk));
            std::vector<T> dcols(static_cast<std::size_t>(pos * ckk));
            if (xn->requires_grad) xn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            for (std::int64_t n = 0; n < N; ++n) {
                const T* g = self.grad.data() + n * O * pos;
                if (bn && bn->requires_grad)
                    for (std::int64_t o = 0; o < O; ++o)
                        for (std::int64_t p = 0; p < pos; ++p) bn->grad[o] += g[o * pos + p];
                if (wn->requires_grad || xn->requires_grad)
                    detail::im2col(xn->data.data() + n * C * H * W, C, H, W, kh, kw, stride,
                                   padding, OH, OW, cols.data());
                if (wn->requires_grad)  // dW += dY * cols
                    detail::gemm_nn(g, cols.data(), wn->grad.data(), O, pos, ckk);
                if (xn->requires_grad) {  // dcols = dY^T * W, then scatter
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    detail::gemm_tn(g, wn->data.data(), dcols.data(), pos, O, ckk);
                    detail::col2im_add(dcols.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                                       xn->grad.data() + n * C * H * W);
                }
            }
        });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::int64_t stride,
                 std::int64_t padding) {
    return conv2d(x, weight, Tensor<T>{}, stride, padding);
}

// One kh x kw filter per channel: x [N,C,H,W], weight [C,1,kh,kw] -> [N,C,H',W']
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, std::int64_t stride,
                           std::int64_t padding) {
    if (x.ndim() != 4 || weight.ndim() != 4 || weight.dim(1) != 1)
        throw ShapeError("depthwise_conv2d: expected x [N,C,H,W] and kernel [C,1,kh,kw], got " +
                         shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(0) != C)
        throw ShapeError("depthwise_conv2d: input has " + std::to_string(C) +
                         " channels but kernel has " + std::to_string(weight.dim(0)));
    detail::check_conv_geometry("depthwise_conv2d", H, W, kh, kw, stride, padding);
    const std::int64_t OH = detail::conv_out_extent(H, kh, stride, padding);
    const std::int64_t OW = detail::conv_out_extent(W, kw, stride, padding);

    std::vector<T> out(static_cast<std::size_t>(N * C * OH * OW), T(0));
    const auto xd = x.data();
    const auto wd = weight.data();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const T* xc = xd.data() + (n * C + c) * H * W;
            const T* wc = wd.data() + c * kh * kw;
            T* oc = out.data() + (n * C + c) * OH * OW;
            for (std::int64_t oh = 0; oh < OH; ++oh)
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    T acc = T(0);
                    for (std::int64_t dh = 0; dh < kh; ++dh) {
                        const std::int64_t ih = oh * stride - padding + dh;
                        if (ih < 0 || ih >= H) continue;
                        for (std::int64_t dw = 0; dw < kw; ++dw) {
                            const std::int64_t iw = ow * stride - padding + dw;
                            if (iw < 0 || iw >= W) continue;
                            acc += xc[ih * W + iw] * wc[dh * kw + dw];
                        }
                    }
                    oc[oh * OW + ow] = acc;
                }
        }

    auto xn = x.node();
    auto wn = weight.node();
    return detail::make_op_result<T>(
        "depthwise_conv2d", Shape{N, C, OH, OW}, std::move(out), {xn, wn},
        [xn, wn, N, C, H, W, kh, kw, stride, padding, OH, OW](detail::Node<T>& self) {
            if (xn->requires_grad) xn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            for (std::int64_t n = 0; n < N; ++n)
                for (std::int64_t c = 0; c < C; ++c) {
                    const T* g = self.grad.data() + (n * C + c) * OH * OW;
                    const T* xc = xn->data.data() + (n * C + c) * H * W;
                    const T* wc = wn->data.data() + c * kh * kw;
                    for (std::int64_t oh = 0; oh < OH; ++oh)
                        for (std::int64_t ow = 0; ow < OW; ++ow) {
                            const T gv = g[oh * OW + ow];
                            for (std::int64_t dh = 0; dh < kh; ++dh) {
                                const std::int64_t ih = oh * stride - padding + dh;
                                if (ih < 0 || ih >= H) continue;
                                for (std::int64_t dw = 0; dw < kw; ++dw) {
                                    const std::int64_t iw = ow * stride - padding + dw;
                                    if (iw < 0 || iw >= W) continue;
                                    if (wn->requires_grad)
                                        wn->grad[c * kh * kw + dh * kw + dw] +=
                                            gv * xc[ih * W + iw];
                                    if (xn->requires_grad)
                                        xn->grad[(n * C + c) * H * W + ih * W + iw] +=
                                            gv * wc[dh * kw + dw];
                                }
                            }
                        }
                }
        });
}

// Depthwise spatial filtering then 1x1 channel mixing; the depthwise stage
// carries stride/padding, the single bias applies after the pointwise stage.
template <typename T>
Tensor<T> separable_conv2d(const Tensor<T>& x, const Tensor<T>& depthwise_kernel,
                           const Tensor<T>& pointwise_kernel, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t padding) {
    if (pointwise_kernel.ndim() != 4 || pointwise_kernel.dim(2) != 1 || pointwise_kernel.dim(3) != 1)
        throw ShapeError("separable_conv2d: pointwise kernel must be [O,C,1,1], got " +
                         shape_str(pointwise_kernel.shape()));
    if (pointwise_kernel.dim(1) != depthwise_kernel.dim(0))
        throw ShapeError("separable_conv2d: depthwise stage yields " +
                         std::to_string(depthwise_kernel.dim(0)) +
                         " channels but pointwise stage expects " +
                         std::to_string(pointwise_kernel.dim(1)));
    return conv2d(depthwise_conv2d(x, depthwise_kernel, stride, padding), pointwise_kernel, bias,
                  1, 0);
}

// x [N,Ci,H,W], weight [Ci,Co,kh,kw] -> [N,Co,(H-1)*stride-2p+kh+output_padding, ...].
// Forward is exactly the data-backward of conv2d with the same kernel.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::int64_t stride, std::int64_t padding,
                           std::int64_t output_padding = 0) {
    if (x.ndim() != 4 || weight.ndim() != 4)
        throw ShapeError("conv_transpose2d: expected 4-d input and kernel, got " +
                         shape_str(x.shape()) + " and " + shape_str(weight.shape()));
    const std::int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t Co = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
    if (weight.dim(0) != Ci)
        throw ShapeError("conv_transpose2d: input has " + std::to_string(Ci) +
                         " channels but kernel expects " + std::to_string(weight.dim(0)));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Co))
        throw ShapeError("conv_transpose2d: bias shape " + shape_str(bias.shape()) +
                         " does not match " + std::to_string(Co) + " output channels");
    if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
    if (padding < 0) throw ShapeError("conv_transpose2d: negative padding");
    if (output_padding < 0 || output_padding >= stride)
        throw ShapeError("conv_transpose2d: output_padding must be in [0, stride)");
    const std::int64_t OH = (H - 1) * stride - 2 * padding + kh + output_padding;
    const std::int64_t OW = (W - 1) * stride - 2 * padding + kw + output_padding;
    if (OH < 1 || OW < 1)
        throw ShapeError("conv_transpose2d: computed output " + std::to_string(OH) + "x" +
                         std::to_string(OW) + " is empty");
    const std::int64_t cokk = Co * kh * kw, pos = H * W;

    std::vector<T> out(static_cast<std::size_t>(N * Co * OH * OW), T(0));
    const auto xd = x.data();
    const auto wd = weight.data();
    parallel_for(N, [&](std::int64_t n) {
        // cols = x_n^T * W2, scattered onto the upsampled canvas
        std::vector<T> cols(static_cast<std::size_t>(pos * cokk), T(0));
        detail::gemm_tn(xd.data() + n * Ci * pos, wd.data(), cols.data(), pos, Ci, cokk);
        detail::col2im_add(cols.data(), Co, OH, OW, kh, kw, stride, padding, H, W,
                           out.data() + n * Co * OH * OW);
    });
    if (bias.defined()) {
        const auto bd = bias.data();
        for (std::int64_t n = 0; n < N; ++n)
            for (std::int64_t co = 0; co < Co; ++co) {
                T* plane = out.data() + (n * Co + co) * OH * OW;
                for (std::int64_t p = 0; p < OH * OW; ++p) plane[p] += bd[co];
            }
    }

    auto xn = x.node();
    auto wn = weight.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<detail::Node<T>>> parents{xn, wn};
    if (bn) parents.push_back(bn);
    return detail::make_op_result<T>(
        "conv_transpose2d", Shape{N, Co, OH, OW}, std::move(out), std::move(parents),
        [xn, wn, bn, N, Ci, H, W, Co, kh, kw, stride, padding, OH, OW, cokk,
         pos](detail::Node<T>& self) {
            std::vector<T> dcols(static_cast<std::size_t>(pos * cokk));
            if (xn->requires_grad) xn->ensure_grad();
            if (wn->requires_grad) wn->ensure_grad();
            if (bn && bn->requires_grad) bn->ensure_grad();
            for (std::int64_t n = 0; n < N; ++n) {
                const T* g = self.grad.data() + n * Co * OH * OW;
                if (bn && bn->requires_grad)
                    for (std::int64_t co = 0; co < Co; ++co)
                        for (std::int64_t p = 0; p < OH * OW; ++p)
                            bn->grad[co] += g[co * OH * OW + p];
                if (xn->requires_grad || wn->requires_grad)
                    detail::im2col(g, Co, OH, OW, kh, kw, stride, padding, H, W, dcols.data());
                if (xn->requires_grad)  // dx = W2 * dcols^T
                    detail::gemm_nt(wn->data.data(), dcols.data(),
                                    xn->grad.data() + n * Ci * pos, Ci, cokk, pos);
                if (wn->requires_grad)  // dW2 += x_n * dcols
                    detail::gemm_nn(xn->data.data() + n * Ci * pos, dcols.data(), wn->grad.data(),
                                    Ci, pos, cokk);
            }
        });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, std::int64_t stride,
                           std::int64_t padding, std::int64_t output_padding = 0) {
    return conv_transpose2d(x, weight, Tensor<T>{}, stride, padding, output_padding);
}

// Max over each window; gradient routes to the argmax, ties to the lowest
// flat index. Padding taps never win.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, std::int64_t k, std::int64_t stride,
                    std::int64_t padding = 0) {
    if (x.ndim() != 4) throw ShapeError("maxpool2d: expected 4-d input, got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    detail::check_conv_geometry("maxpool2d", H, W, k, k, stride, padding);
    const std::int64_t OH = detail::conv_out_extent(H, k, stride, padding);
    const std::int64_t OW = detail::conv_out_extent(W, k, stride, padding);

    std::vector<T> out(static_cast<std::size_t>(N * C * OH * OW));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
    const auto xd = x.data();
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c) {
            const std::int64_t base = (n * C + c) * H * W;
            for (std::int64_t oh = 0; oh < OH; ++oh)
                for (std::int64_t ow = 0; ow < OW; ++ow) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = -1;
                    for (std::int64_t dh = 0; dh < k; ++dh) {
                        const std::int64_t ih = oh * stride - padding + dh;
                        if (ih < 0 || ih >= H) continue;
                        for (std::int64_t dw = 0; dw < k; ++dw) {
                            const std::int64_t iw = ow * stride - padding + dw;
                            if (iw < 0 || iw >= W) continue;
                            const T v = xd[base + ih * W + iw];
                            if (v > best) {
                                best = v;
                                best_idx = base + ih * W + iw;
                            }
                        }
                    }
                    const std::int64_t oi = ((n * C + c) * OH + oh) * OW + ow;
                    out[oi] = best;
                    (*argmax)[oi] = best_idx;
                }
        }

    auto xn = x.node();
    return detail::make_op_result<T>("maxpool2d", Shape{N, C, OH, OW}, std::move(out), {xn},
                                     [xn, argmax](detail::Node<T>& self) {
                                         xn->ensure_grad();
                                         for (std::size_t i = 0; i < self.data.size(); ++i)
                                             xn->grad[(*argmax)[i]] += self.grad[i];
                                     });
}

}  // namespace axunet
