#pragma once

// Pixel and channel attention, summed into the self-attention block that sits
// on each encoder skip path.
//
// PAM projects x with 1x1 convs to C/r-channel Q, K, V, feature-maps Q and K
// through softplus and evaluates the normalized kernel attention in its
// linearized order:
//     out_i = [phi(Q)_i (phi(K)^T V)] / [phi(Q)_i . sum_j phi(K)_j]
// i.e. O(N*(C/r)^2) instead of forming the N x N matrix. A final 1x1 conv
// restores C channels before the residual add.
//
// CAM is parameter-free: A = softmax_j(X_flat X_flat^T) over channels, and
// x + A*X_flat reshaped back.

#include "axunet/nn.hpp"
#include "axunet/ops.hpp"

namespace axunet {

template <typename T>
struct PamParams {
    Tensor<T> wq, wk, wv;  // [C/r, C, 1, 1]
    Tensor<T> w_out;       // [C, C/r, 1, 1]
    std::int64_t reduction = 8;

    PamParams() = default;
    PamParams(std::int64_t channels, std::int64_t r, Rng& rng) : reduction(r) {
        if (r < 1 || channels % r != 0)
            throw ConfigError("pixel attention: reduction " + std::to_string(r) +
                              " does not divide " + std::to_string(channels) + " channels");
        const std::int64_t cr = channels / r;
        wq = kaiming_uniform<T>({cr, channels, 1, 1}, channels, rng);
        wk = kaiming_uniform<T>({cr, channels, 1, 1}, channels, rng);
        wv = kaiming_uniform<T>({cr, channels, 1, 1}, channels, rng);
        w_out = kaiming_uniform<T>({channels, cr, 1, 1}, cr, rng);
    }

    std::int64_t channels() const { return wq.dim(1); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".wq", &wq});
        out.push_back({prefix + ".wk", &wk});
        out.push_back({prefix + ".wv", &wv});
        out.push_back({prefix + ".w_out", &w_out});
    }
};

template <typename T>
Tensor<T> pam_forward(const Tensor<T>& x, const PamParams<T>& p) {
    if (x.ndim() != 4) throw ShapeError("pam_forward: expected [N,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != p.channels())
        throw ShapeError("pam_forward: input has " + std::to_string(C) +
                         " channels but parameters expect " + std::to_string(p.channels()));
    const std::int64_t cr = C / p.reduction;
    const std::int64_t hw = H * W;

    auto flatten_positions = [&](const Tensor<T>& t) {
        return transpose_last2(reshape(t, {N, cr, hw}));  // [N,HW,C/r]
    };
    auto phi_q = flatten_positions(softplus(conv2d(x, p.wq, 1, 0)));
    auto phi_k = flatten_positions(softplus(conv2d(x, p.wk, 1, 0)));
    auto v = flatten_positions(conv2d(x, p.wv, 1, 0));

    auto ktv = matmul(transpose_last2(phi_k), v);            // [N,C/r,C/r]
    auto numer = matmul(phi_q, ktv);                         // [N,HW,C/r]
    auto k_sum = reshape(sum(phi_k, 1, true), {N, cr, 1});   // sum over positions
    auto denom = matmul(phi_q, k_sum);                       // [N,HW,1], positive: phi > 0
    auto attended = div(numer, denom);                       // broadcast over C/r

    auto spatial = reshape(transpose_last2(attended), {N, cr, H, W});
    return add(x, conv2d(spatial, p.w_out, 1, 0));
}

template <typename T>
Tensor<T> cam_forward(const Tensor<T>& x) {
    if (x.ndim() != 4) throw ShapeError("cam_forward: expected [N,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto flat = reshape(x, {N, C, H * W});
    auto energy = matmul(flat, transpose_last2(flat));  // [N,C,C]
    auto attn = softmax(energy, 2);                     // rows sum to 1
    return add(x, reshape(matmul(attn, flat), {N, C, H, W}));
}

template <typename T>
Tensor<T> self_attention_forward(const Tensor<T>& x, const PamParams<T>& p) {
    return add(pam_forward(x, p), cam_forward(x));
}

}  // namespace axunet
