#pragma once

// Adam with bias correction, and the cosine annealing schedule
// lr(e) = lr0/2 * (1 + cos(pi * e / total)).

#include <cmath>
#include <vector>

#include "axunet/nn.hpp"

namespace axunet {

inline double cosine_lr(int epoch, double lr0, int total_epochs) {
    if (total_epochs < 1) throw ConfigError("scheduler: total epochs must be >= 1");
    if (epoch < 0 || epoch > total_epochs)
        throw ConfigError("scheduler: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + "]");
    constexpr double kPi = 3.14159265358979323846;
    return 0.5 * lr0 * (1.0 + std::cos(kPi * static_cast<double>(epoch) /
                                       static_cast<double>(total_epochs)));
}

template <typename T>
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;
    std::vector<std::vector<T>> m, v;  // aligned with the parameter list order

    void init(const ParamList<T>& params) {
        m.clear();
        v.clear();
        for (const auto& p : params) {
            m.emplace_back(p.tensor->size(), T(0));
            v.emplace_back(p.tensor->size(), T(0));
        }
        step_count = 0;
    }
};

// One update over all parameters. A parameter whose grad buffer was never
// populated contributes a zero gradient. Moment shapes must match.
template <typename T>
void adam_step(const ParamList<T>& params, AdamState<T>& state, double lr) {
    if (state.m.size() != params.size()) state.init(params);
    ++state.step_count;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& theta = params[pi].tensor->leaf_data();
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        if (m.size() != theta.size())
            throw ShapeError("adam: moment buffers for " + params[pi].name +
                             " do not match the parameter size");
        const bool has_grad = params[pi].tensor->has_grad();
        const auto grad = has_grad ? params[pi].tensor->grad() : std::span<const T>{};
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
            const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * g;
            const double vi =
                state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            theta[i] = static_cast<T>(static_cast<double>(theta[i]) -
                                      lr * m_hat / (std::sqrt(v_hat) + state.eps));
        }
    }
}

template <typename T>
void zero_gradients(const ParamList<T>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace axunet
