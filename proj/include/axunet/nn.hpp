#pragma once

// Thin parameter-owning layers over the functional conv ops, plus the
// Kaiming-uniform initializer used everywhere. Layers register their tensors
// under dotted paths ("encoder.entry1.sep1.depthwise") for checkpoints.

#include <string>
#include <vector>

#include "axunet/conv.hpp"
#include "axunet/rng.hpp"
#include "axunet/tensor.hpp"

namespace axunet {

template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T>* tensor;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

// Uniform in [-sqrt(6/fan_in), +sqrt(6/fan_in)] (ReLU gain), biases start at zero.
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<T> vals(static_cast<std::size_t>(numel(shape)));
    for (auto& v : vals) v = static_cast<T>(rng.uniform(-bound, bound));
    return Tensor<T>::from_data(std::move(shape), std::move(vals), true);
}

template <typename T>
struct Conv2dLayer {
    Tensor<T> weight;  // [O,C,k,k]
    Tensor<T> bias;    // [O], undefined when constructed without bias
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    Conv2dLayer() = default;
    Conv2dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
                std::int64_t padding_, Rng& rng, bool with_bias = true)
        : weight(kaiming_uniform<T>({out_ch, in_ch, k, k}, in_ch * k * k, rng)),
          stride(stride_),
          padding(padding_) {
        if (with_bias) bias = Tensor<T>::zeros({out_ch}, true);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv2d(x, weight, bias, stride, padding);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", &weight});
        if (bias.defined()) out.push_back({prefix + ".bias", &bias});
    }
};

template <typename T>
struct SepConv2dLayer {
    Tensor<T> depthwise;  // [C,1,k,k]
    Tensor<T> pointwise;  // [O,C,1,1]
    Tensor<T> bias;       // [O]
    std::int64_t stride = 1;
    std::int64_t padding = 0;

    SepConv2dLayer() = default;
    SepConv2dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
                   std::int64_t padding_, Rng& rng)
        : depthwise(kaiming_uniform<T>({in_ch, 1, k, k}, k * k, rng)),
          pointwise(kaiming_uniform<T>({out_ch, in_ch, 1, 1}, in_ch, rng)),
          bias(Tensor<T>::zeros({out_ch}, true)),
          stride(stride_),
          padding(padding_) {
        const std::int64_t sep = in_ch * k * k + out_ch * in_ch;
        const std::int64_t full = out_ch * in_ch * k * k;
        if (sep >= full)
            throw ConfigError("separable conv " + std::to_string(in_ch) + "->" +
                              std::to_string(out_ch) + " k=" + std::to_string(k) + " would use " +
                              std::to_string(sep) + " weights, not fewer than the full conv's " +
                              std::to_string(full));
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        return separable_conv2d(x, depthwise, pointwise, bias, stride, padding);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".depthwise", &depthwise});
        out.push_back({prefix + ".pointwise", &pointwise});
        out.push_back({prefix + ".bias", &bias});
    }
};

template <typename T>
struct ConvT2dLayer {
    Tensor<T> weight;  // [Ci,Co,k,k]
    Tensor<T> bias;    // [Co]
    std::int64_t stride = 1;
    std::int64_t padding = 0;
    std::int64_t output_padding = 0;

    ConvT2dLayer() = default;
    ConvT2dLayer(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k, std::int64_t stride_,
                 std::int64_t padding_, std::int64_t output_padding_, Rng& rng)
        : weight(kaiming_uniform<T>({in_ch, out_ch, k, k}, in_ch * k * k, rng)),
          bias(Tensor<T>::zeros({out_ch}, true)),
          stride(stride_),
          padding(padding_),
          output_padding(output_padding_) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        return conv_transpose2d(x, weight, bias, stride, padding, output_padding);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        out.push_back({prefix + ".weight", &weight});
        out.push_back({prefix + ".bias", &bias});
    }
};

}  // namespace axunet
