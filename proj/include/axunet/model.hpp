#pragma once

// DeBlock decoder and the full AXUNet assembly: Xception encoder, one
// self-attention block per skip level, four DeBlocks consuming attended
// skips deepest-first, a final stride-2 deconv back to input resolution and
// a 1x1 head producing three logit channels (WT, TC, ET). Sigmoids are
// applied by the loss/metric layers, not here.

#include <optional>
#include <string>
#include <vector>

#include "axunet/attention.hpp"
#include "axunet/backbone.hpp"

namespace axunet {

struct ModelConfig {
    double width_multiplier = 1.0;
    int middle_repeats = 8;
    std::int64_t attention_reduction = 8;
    bool attention_enabled = true;
    std::string combine_mode = "concat";  // or "add"
    std::int64_t input_size = 224;
    std::int64_t stem_channels = 32;
    std::array<std::int64_t, 3> block_channels{128, 256, 728};

    XceptionConfig encoder_config() const {
        XceptionConfig cfg;
        cfg.stem_channels = stem_channels;
        cfg.block_channels = block_channels;
        cfg.middle_repeats = middle_repeats;
        cfg.width_multiplier = width_multiplier;
        cfg.attention_reduction = attention_reduction;
        return cfg;
    }

    void validate() const {
        encoder_config().validate();
        if (combine_mode != "concat" && combine_mode != "add")
            throw ConfigError("model: combine_mode must be \"concat\" or \"add\", got \"" +
                              combine_mode + "\"");
        if (input_size < 32 || input_size % 32 != 0)
            throw ConfigError("model: input_size must be a positive multiple of 32");
    }
};

// 1x1 conv, two 3x3 transposed convs (first with stride 2), 1x1 conv, each
// followed by ReLU; doubles the spatial dims.
template <typename T>
struct DeBlock {
    Conv2dLayer<T> conv_in;
    ConvT2dLayer<T> deconv1, deconv2;
    Conv2dLayer<T> conv_out;

    DeBlock() = default;
    DeBlock(std::int64_t in_ch, std::int64_t out_ch, Rng& rng)
        : conv_in(in_ch, out_ch, 1, 1, 0, rng),
          deconv1(out_ch, out_ch, 3, 2, 1, 1, rng),
          deconv2(out_ch, out_ch, 3, 1, 1, 0, rng),
          conv_out(out_ch, out_ch, 1, 1, 0, rng) {}

    Tensor<T> up(const Tensor<T>& x) const {
        return relu(conv_out(relu(deconv2(relu(deconv1(relu(conv_in(x))))))));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        conv_in.collect(prefix + ".conv_in", out);
        deconv1.collect(prefix + ".deconv1", out);
        deconv2.collect(prefix + ".deconv2", out);
        conv_out.collect(prefix + ".conv_out", out);
    }
};

// Upsamples x through the DeBlock and joins the attended skip: channel
// concatenation by default, elementwise addition in the ablation mode.
template <typename T>
Tensor<T> deblock_forward(const Tensor<T>& x, const Tensor<T>& skip_attended,
                          const DeBlock<T>& block, const std::string& combine_mode = "concat",
                          Tensor<T>* u_out = nullptr) {
    if (skip_attended.dim(2) != 2 * x.dim(2) || skip_attended.dim(3) != 2 * x.dim(3))
        throw ShapeError("deblock: skip " + shape_str(skip_attended.shape()) +
                         " is not double the input " + shape_str(x.shape()));
    auto u = block.up(x);
    if (u_out) *u_out = u;
    if (u.dim(2) != skip_attended.dim(2) || u.dim(3) != skip_attended.dim(3))
        throw ShapeError("deblock: upsampled " + shape_str(u.shape()) +
                         " does not align with skip " + shape_str(skip_attended.shape()));
    if (combine_mode == "add") return add(u, skip_attended);
    return concat<T>({u, skip_attended}, 1);
}

// Activations recorded during a forward pass, addressable by dotted name.
template <typename T>
struct ForwardTrace {
    std::vector<std::pair<std::string, Tensor<T>>> taps;

    void record(const std::string& name, const Tensor<T>& t) { taps.emplace_back(name, t); }

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [k, v] : taps)
            if (k == name) return &v;
        return nullptr;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(taps.size());
        for (const auto& [k, v] : taps) out.push_back(k);
        return out;
    }
};

template <typename T>
class AXUNet {
  public:
    AXUNet(const ModelConfig& config, std::uint64_t seed) : cfg_(config) {
        cfg_.validate();
        Rng rng(derive_seed(seed, "init"));
        encoder_ = Encoder<T>(cfg_.encoder_config(), rng);
        const auto enc = encoder_.cfg;
        const std::int64_t c1 = enc.tap1(), c2 = enc.tap2(), c3 = enc.tap3(), c4 = enc.tap4();
        if (cfg_.attention_enabled) {
            attention_.reserve(4);
            for (const std::int64_t c : {c1, c2, c3, c4})
                attention_.emplace_back(c, cfg_.attention_reduction, rng);
        }
        // with concat joins each DeBlock sees its own output width plus the skip
        const std::int64_t j = cfg_.combine_mode == "concat" ? 2 : 1;
        de4_ = DeBlock<T>(enc.bottleneck(), c4, rng);
        de3_ = DeBlock<T>(j * c4, c3, rng);
        de2_ = DeBlock<T>(j * c3, c2, rng);
        de1_ = DeBlock<T>(j * c2, c1, rng);
        final_deconv_ = ConvT2dLayer<T>(j * c1, c1, 3, 2, 1, 1, rng);
        head_ = Conv2dLayer<T>(c1, 3, 1, 1, 0, rng);
    }

    Tensor<T> forward(const Tensor<T>& x, ForwardTrace<T>* trace = nullptr) const {
        auto f = stage("encoder", [&] { return encoder_(x); });
        if (trace) {
            trace->record("encoder.f1", f.f1);
            trace->record("encoder.f2", f.f2);
            trace->record("encoder.f3", f.f3);
            trace->record("encoder.f4", f.f4);
            trace->record("encoder.bottleneck", f.bottleneck);
        }
        std::array<Tensor<T>, 4> skips = {f.f1, f.f2, f.f3, f.f4};
        for (int i = 0; i < 4; ++i) {
            const std::string name = "attention" + std::to_string(i + 1);
            if (cfg_.attention_enabled)
                skips[i] = stage(name.c_str(),
                                 [&] { return self_attention_forward(skips[i], attention_[i]); });
            if (trace) trace->record(name, skips[i]);
        }
        auto d = f.bottleneck;
        const DeBlock<T>* blocks[4] = {&de4_, &de3_, &de2_, &de1_};
        for (int i = 0; i < 4; ++i) {
            const std::string name = "deblock" + std::to_string(4 - i);
            Tensor<T> u;
            d = stage(name.c_str(), [&] {
                return deblock_forward(d, skips[3 - i], *blocks[i], cfg_.combine_mode, &u);
            });
            if (trace) trace->record(name + ".conv", u);
        }
        auto up = stage("final_deconv", [&] { return relu(final_deconv_(d)); });
        if (trace) trace->record("final_deconv", up);
        auto logits = stage("head", [&] { return head_(up); });
        if (trace) trace->record("head", logits);
        return logits;
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return forward(x); }

    ParamList<T> named_parameters() {
        ParamList<T> out;
        encoder_.collect("encoder", out);
        for (std::size_t i = 0; i < attention_.size(); ++i)
            attention_[i].collect("attention" + std::to_string(i + 1), out);
        de4_.collect("deblock4", out);
        de3_.collect("deblock3", out);
        de2_.collect("deblock2", out);
        de1_.collect("deblock1", out);
        final_deconv_.collect("final_deconv", out);
        head_.collect("head", out);
        return out;
    }

    const ModelConfig& config() const { return cfg_; }
    const Encoder<T>& encoder() const { return encoder_; }

  private:
    template <typename F>
    static auto stage(const char* name, F&& fn) {
        try {
            return fn();
        } catch (const ShapeError& e) {
            throw ShapeError(std::string(name) + ": " + e.what());
        }
    }

  public:
    ModelConfig cfg_;
    Encoder<T> encoder_;
    std::vector<PamParams<T>> attention_;
    DeBlock<T> de4_, de3_, de2_, de1_;
    ConvT2dLayer<T> final_deconv_;
    Conv2dLayer<T> head_;
};

// Per-channel sigmoid >= threshold; logit 0 at threshold 0.5 counts as
// foreground. Output is a detached 0/1 tensor of the same shape.
template <typename T>
Tensor<T> predict_mask_tensor(const Tensor<T>& logits, double threshold = 0.5) {
    NoGradGuard ng;
    auto probs = sigmoid(logits);
    std::vector<T> out(probs.data().begin(), probs.data().end());
    for (auto& v : out) v = v >= static_cast<T>(threshold) ? T(1) : T(0);
    return Tensor<T>::from_data(logits.shape(), std::move(out));
}

}  // namespace axunet
