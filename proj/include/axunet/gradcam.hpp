#pragma once

// Gradient-weighted class activation mapping on any traced layer. The target
// scalar is the spatial sum of one region channel's logits; weights are the
// spatial means of its gradient at the hooked layer; the map is
// ReLU(sum_k w_k A_k), bilinearly upsampled to input size and max-normalized
// into [0,1] (an all-zero map stays all-zero).

#include <filesystem>

#include "axunet/imageops.hpp"
#include "axunet/model.hpp"
#include "axunet/optim.hpp"

namespace axunet {

struct GradCamRequest {
    std::string layer = "head";  // e.g. "head", "attention1", "deblock3.conv"
    int region = 0;              // 0 = WT, 1 = TC, 2 = ET
    double target_scale = 1.0;   // positive rescaling; the heatmap is invariant
};

template <typename T>
Tensor<T> gradcam(AXUNet<T>& model, const Tensor<T>& input, const GradCamRequest& req) {
    if (input.ndim() != 4 || input.dim(0) != 1 || input.dim(1) != 3)
        throw ShapeError("gradcam: expected a single [1,3,H,W] slice, got " +
                         shape_str(input.shape()));
    if (req.region < 0 || req.region > 2)
        throw ConfigError("gradcam: region must be 0 (WT), 1 (TC) or 2 (ET)");
    if (req.target_scale <= 0.0) throw ConfigError("gradcam: target_scale must be positive");

    ForwardTrace<T> trace;
    auto logits = model.forward(input, &trace);
    const Tensor<T>* hooked = trace.find(req.layer);
    if (!hooked) {
        std::string names;
        for (const auto& n : trace.names()) names += " " + n;
        throw ConfigError("gradcam: layer \"" + req.layer + "\" not found; available:" + names);
    }

    auto params = model.named_parameters();
    zero_gradients(params);
    auto target =
        scale(sum(narrow(logits, 1, req.region, 1)), static_cast<T>(req.target_scale));
    target.backward();
    if (!hooked->has_grad())
        throw NumericError("gradcam: layer \"" + req.layer +
                           "\" received no gradient from the target");

    const std::int64_t K = hooked->dim(1), h = hooked->dim(2), w = hooked->dim(3);
    const auto act = hooked->data();
    const auto grad = hooked->grad();
    std::vector<T> map(static_cast<std::size_t>(h * w), T(0));
    for (std::int64_t k = 0; k < K; ++k) {
        T wk = T(0);
        for (std::int64_t i = 0; i < h * w; ++i) wk += grad[k * h * w + i];
        wk /= static_cast<T>(h * w);
        for (std::int64_t i = 0; i < h * w; ++i) map[i] += wk * act[k * h * w + i];
    }
    for (auto& v : map) v = std::max(v, T(0));

    auto up = imageops::resize_bilinear(map.data(), h, w, input.dim(2), input.dim(3));
    T mx = T(0);
    for (const auto v : up) mx = std::max(mx, v);
    if (mx > T(0))
        for (auto& v : up) v /= mx;

    zero_gradients(params);  // leave no residue behind
    return Tensor<T>::from_data({input.dim(2), input.dim(3)}, std::move(up));
}

// Grayscale base (first channel) blended with a green-yellow-red colormap;
// per-pixel opacity is 0.4 * heat, so a cold pixel shows the plain base.
Tensor<float> overlay(const Tensor<float>& image3, const Tensor<float>& heatmap);

// Binary Netpbm: "P6\n<w> <h>\n255\n" + RGB bytes.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb);

}  // namespace axunet
