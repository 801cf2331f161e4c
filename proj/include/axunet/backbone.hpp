#pragma once

// Xception-style encoder: stem, three entry blocks, repeated middle blocks,
// and an exit stage. Taps f1..f4 sit at strides 2/4/8/16 for the attention
// skip paths; the bottleneck sits at stride 32. No normalization layers.

#include <array>
#include <string>
#include <vector>

#include "axunet/nn.hpp"

namespace axunet {

struct XceptionConfig {
    std::int64_t stem_channels = 32;
    std::array<std::int64_t, 3> block_channels{128, 256, 728};
    int middle_repeats = 8;
    double width_multiplier = 1.0;
    std::int64_t attention_reduction = 8;

    // nearest positive multiple of the attention reduction
    std::int64_t scaled(std::int64_t base) const {
        const double w = static_cast<double>(base) * width_multiplier;
        const double r = static_cast<double>(attention_reduction);
        const std::int64_t m = std::llround(w / r);
        return std::max<std::int64_t>(1, m) * attention_reduction;
    }

    void validate() const {
        if (width_multiplier <= 0.0) throw ConfigError("encoder: width_multiplier must be > 0");
        if (middle_repeats < 0) throw ConfigError("encoder: middle_repeats must be >= 0");
        if (attention_reduction < 1) throw ConfigError("encoder: attention_reduction must be >= 1");
        if (stem_channels < 1) throw ConfigError("encoder: stem_channels must be >= 1");
    }

    std::int64_t stem() const { return scaled(stem_channels); }
    std::int64_t tap1() const { return 2 * stem(); }
    std::int64_t tap2() const { return scaled(block_channels[0]); }
    std::int64_t tap3() const { return scaled(block_channels[1]); }
    std::int64_t tap4() const { return scaled(block_channels[2]); }
    std::int64_t bottleneck() const { return tap4(); }
};

template <typename T>
struct EncoderFeatures {
    Tensor<T> f1, f2, f3, f4;  // strides 2, 4, 8, 16
    Tensor<T> bottleneck;      // stride 32
};

// sepconv -> ReLU -> sepconv -> maxpool(3, stride 2, pad 1), plus a strided
// 1x1 side branch; halves the spatial dims.
template <typename T>
struct EntryBlock {
    SepConv2dLayer<T> sep1, sep2;
    Conv2dLayer<T> side;

    EntryBlock() = default;
    EntryBlock(std::int64_t in_ch, std::int64_t out_ch, Rng& rng)
        : sep1(in_ch, out_ch, 3, 1, 1, rng),
          sep2(out_ch, out_ch, 3, 1, 1, rng),
          side(in_ch, out_ch, 1, 2, 0, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto main = maxpool2d(sep2(relu(sep1(x))), 3, 2, 1);
        return add(main, side(x));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        sep1.collect(prefix + ".sep1", out);
        sep2.collect(prefix + ".sep2", out);
        side.collect(prefix + ".side", out);
    }
};

// x + sepconv(ReLU(sepconv(ReLU(sepconv(ReLU(x)))))); shape-preserving.
template <typename T>
struct MiddleBlock {
    SepConv2dLayer<T> sep1, sep2, sep3;

    MiddleBlock() = default;
    MiddleBlock(std::int64_t ch, Rng& rng)
        : sep1(ch, ch, 3, 1, 1, rng), sep2(ch, ch, 3, 1, 1, rng), sep3(ch, ch, 3, 1, 1, rng) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        return add(x, sep3(relu(sep2(relu(sep1(relu(x)))))));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        sep1.collect(prefix + ".sep1", out);
        sep2.collect(prefix + ".sep2", out);
        sep3.collect(prefix + ".sep3", out);
    }
};

template <typename T>
struct Encoder {
    XceptionConfig cfg;
    Conv2dLayer<T> stem1, stem2;
    EntryBlock<T> entry1, entry2, entry3;
    std::vector<MiddleBlock<T>> middle;
    EntryBlock<T> exit_block;
    SepConv2dLayer<T> exit_sep1, exit_sep2;

    Encoder() = default;
    Encoder(const XceptionConfig& config, Rng& rng) : cfg(config) {
        cfg.validate();
        const std::int64_t s = cfg.stem();
        stem1 = Conv2dLayer<T>(3, s, 3, 2, 1, rng);
        stem2 = Conv2dLayer<T>(s, cfg.tap1(), 3, 1, 1, rng);
        entry1 = EntryBlock<T>(cfg.tap1(), cfg.tap2(), rng);
        entry2 = EntryBlock<T>(cfg.tap2(), cfg.tap3(), rng);
        entry3 = EntryBlock<T>(cfg.tap3(), cfg.tap4(), rng);
        middle.reserve(cfg.middle_repeats);
        for (int i = 0; i < cfg.middle_repeats; ++i) middle.emplace_back(cfg.tap4(), rng);
        exit_block = EntryBlock<T>(cfg.tap4(), cfg.bottleneck(), rng);
        exit_sep1 = SepConv2dLayer<T>(cfg.bottleneck(), cfg.bottleneck(), 3, 1, 1, rng);
        exit_sep2 = SepConv2dLayer<T>(cfg.bottleneck(), cfg.bottleneck(), 3, 1, 1, rng);
    }

    EncoderFeatures<T> operator()(const Tensor<T>& x) const {
        if (x.ndim() != 4 || x.dim(1) != 3)
            throw ShapeError("encoder: expected [N,3,H,W], got " + shape_str(x.shape()));
        if (x.dim(2) % 32 != 0 || x.dim(3) % 32 != 0)
            throw ShapeError("encoder: spatial dims " + std::to_string(x.dim(2)) + "x" +
                             std::to_string(x.dim(3)) + " must be divisible by 32");
        EncoderFeatures<T> f;
        f.f1 = relu(stem2(relu(stem1(x))));
        f.f2 = entry1(f.f1);
        f.f3 = entry2(f.f2);
        f.f4 = entry3(f.f3);
        auto t = f.f4;
        for (const auto& m : middle) t = m(t);
        t = exit_block(t);
        f.bottleneck = relu(exit_sep2(relu(exit_sep1(t))));
        return f;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        stem1.collect(prefix + ".stem1", out);
        stem2.collect(prefix + ".stem2", out);
        entry1.collect(prefix + ".entry1", out);
        entry2.collect(prefix + ".entry2", out);
        entry3.collect(prefix + ".entry3", out);
        for (std::size_t i = 0; i < middle.size(); ++i)
            middle[i].collect(prefix + ".middle" + std::to_string(i + 1), out);
        exit_block.collect(prefix + ".exit", out);
        exit_sep1.collect(prefix + ".exit_sep1", out);
        exit_sep2.collect(prefix + ".exit_sep2", out);
    }
};

}  // namespace axunet
