#pragma once

// BCE-Dice training objective and the Dice evaluation metric. Losses take
// logits; sigmoid lives inside so the stable log-sum-exp form of BCE can be
// used. bce_dice averages the per-region (WT, TC, ET) channel losses.

#include "axunet/ops.hpp"

namespace axunet {

// 1 - (2*sum(y*p) + eps) / (sum y + sum p + eps), p = sigmoid(logits).
// The symmetric smoothing makes empty-vs-empty cost zero.
template <typename T>
Tensor<T> dice_loss(const Tensor<T>& logits, const Tensor<T>& target, double smooth_eps = 1e-6) {
    if (logits.shape() != target.shape())
        throw ShapeError("dice_loss: logits " + shape_str(logits.shape()) + " vs target " +
                         shape_str(target.shape()));
    auto p = sigmoid(logits);
    auto inter = sum(mul(p, target));
    auto denom = add(sum(p), sum(target));
    auto ratio = div(add_scalar(scale(inter, T(2)), static_cast<T>(smooth_eps)),
                     add_scalar(denom, static_cast<T>(smooth_eps)));
    return add_scalar(scale(ratio, T(-1)), T(1));
}

// Mean over elements of max(x,0) - x*y + ln(1 + e^{-|x|}), the overflow-free
// rearrangement of -[y ln s(x) + (1-y) ln(1-s(x))].
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& logits, const Tensor<T>& target) {
    if (logits.shape() != target.shape())
        throw ShapeError("bce_loss: logits " + shape_str(logits.shape()) + " vs target " +
                         shape_str(target.shape()));
    const std::int64_t n = logits.size();
    const auto xd = logits.data();
    const auto yd = target.data();
    T acc = T(0);
    for (std::int64_t i = 0; i < n; ++i) {
        const T x = xd[i], y = yd[i];
        acc += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    auto xn = logits.node();
    auto yn = target.node();
    const T inv_n = T(1) / static_cast<T>(n);
    return detail::make_op_result<T>(
        "bce_loss", Shape{}, std::vector<T>{acc * inv_n}, {xn, yn},
        [xn, yn, n, inv_n](detail::Node<T>& self) {
            const T g = self.grad[0] * inv_n;
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    xn->grad[i] += g * (detail::stable_sigmoid(xn->data[i]) - yn->data[i]);
            }
            if (yn->requires_grad) {
                yn->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i) yn->grad[i] += g * (-xn->data[i]);
            }
        });
}

// Per region channel c: L_c = BCE + Dice; total = mean(L_WT, L_TC, L_ET).
template <typename T>
Tensor<T> bce_dice_loss(const Tensor<T>& logits, const Tensor<T>& target,
                        double smooth_eps = 1e-6) {
    if (logits.ndim() != 4 || logits.dim(1) != 3)
        throw ShapeError("bce_dice_loss: expected [N,3,H,W] logits, got " +
                         shape_str(logits.shape()));
    if (logits.shape() != target.shape())
        throw ShapeError("bce_dice_loss: logits " + shape_str(logits.shape()) + " vs target " +
                         shape_str(target.shape()));
    Tensor<T> total;
    for (int c = 0; c < 3; ++c) {
        auto lc = narrow(logits, 1, c, 1);
        auto tc = narrow(target, 1, c, 1);
        auto channel = add(bce_loss(lc, tc), dice_loss(lc, tc, smooth_eps));
        total = total.defined() ? add(total, channel) : channel;
    }
    return scale(total, T(1) / T(3));
}

// 2|P n G| / (|P| + |G|) on hard binary masks; both empty counts as 1.
template <typename T>
double dice_score(const Tensor<T>& pred, const Tensor<T>& gt) {
    if (pred.shape() != gt.shape())
        throw ShapeError("dice_score: pred " + shape_str(pred.shape()) + " vs gt " +
                         shape_str(gt.shape()));
    double inter = 0.0, p_sum = 0.0, g_sum = 0.0;
    const auto pd = pred.data();
    const auto gd = gt.data();
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const T p = pd[i], g = gd[i];
        if ((p != T(0) && p != T(1)) || (g != T(0) && g != T(1)))
            throw NumericError("dice_score: inputs must be binary 0/1 masks");
        inter += static_cast<double>(p) * static_cast<double>(g);
        p_sum += static_cast<double>(p);
        g_sum += static_cast<double>(g);
    }
    if (p_sum + g_sum == 0.0) return 1.0;
    return 2.0 * inter / (p_sum + g_sum);
}

}  // namespace axunet
