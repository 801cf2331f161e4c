#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "axunet/backbone.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using axunet::Shape;
using axunet::Tensor;
using axunet::XceptionConfig;
using T64 = Tensor<double>;

namespace {

XceptionConfig micro_cfg(double wm = 0.125, int repeats = 1) {
    XceptionConfig cfg;
    cfg.width_multiplier = wm;
    cfg.middle_repeats = repeats;
    return cfg;
}

}  // namespace

TEST_CASE("entry block halves spatial dims and maps channel widths") {
    axunet::Rng rng(51);
    axunet::EntryBlock<double> block(4, 8, rng);
    auto x = testutil::random_tensor<double>({1, 4, 16, 16}, rng);
    auto y = block(x);
    CHECK(y.shape() == Shape{1, 8, 8, 8});
}

TEST_CASE("entry block maps zero input to zero when biases are zero") {
    axunet::Rng rng(52);
    axunet::EntryBlock<double> block(4, 8, rng);
    auto x = T64::zeros({1, 4, 8, 8});
    auto y = block(x);
    for (const auto v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("entry block gradient check") {
    axunet::Rng rng(53);
    axunet::EntryBlock<double> block(4, 8, rng);
    auto x = testutil::random_tensor<double>({1, 4, 8, 8}, rng, true);
    auto wt = testutil::random_tensor<double>({1, 8, 4, 4}, rng);
    auto res = gradcheck::check(
        {&x, &block.sep1.depthwise, &block.sep1.pointwise, &block.sep2.bias, &block.side.weight},
        [&] { return axunet::sum(axunet::mul(block(x), wt)); }, 25);
    CHECK_MESSAGE(res.max_rel_err < 1e-5, res.worst);
}

TEST_CASE("middle block is a pure residual: zero weights give identity") {
    axunet::Rng rng(54);
    axunet::MiddleBlock<double> block(8, rng);
    for (auto* t : {&block.sep1.depthwise, &block.sep1.pointwise, &block.sep2.depthwise,
                    &block.sep2.pointwise, &block.sep3.depthwise, &block.sep3.pointwise})
        std::fill(t->leaf_data().begin(), t->leaf_data().end(), 0.0);
    auto x = testutil::random_tensor<double>({2, 8, 5, 5}, rng);
    auto y = block(x);
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("middle block preserves shape and passes gradcheck") {
    axunet::Rng rng(55);
    axunet::MiddleBlock<double> block(8, rng);
    auto x = testutil::random_tensor<double>({1, 8, 4, 4}, rng, true);
    CHECK(block(x).shape() == x.shape());
    auto wt = testutil::random_tensor<double>({1, 8, 4, 4}, rng);
    auto res = gradcheck::check(
        {&x, &block.sep2.depthwise, &block.sep3.pointwise},
        [&] { return axunet::sum(axunet::mul(block(x), wt)); }, 25);
    CHECK_MESSAGE(res.max_rel_err < 1e-5, res.worst);
}

TEST_CASE("encode yields the five-level pyramid at strides 2..32") {
    axunet::Rng rng(56);
    auto cfg = micro_cfg();
    axunet::Encoder<double> enc(cfg, rng);
    auto x = testutil::random_tensor<double>({1, 3, 64, 64}, rng);
    auto f = enc(x);
    CHECK(f.f1.shape() == Shape{1, cfg.tap1(), 32, 32});
    CHECK(f.f2.shape() == Shape{1, cfg.tap2(), 16, 16});
    CHECK(f.f3.shape() == Shape{1, cfg.tap3(), 8, 8});
    CHECK(f.f4.shape() == Shape{1, cfg.tap4(), 4, 4});
    CHECK(f.bottleneck.shape() == Shape{1, cfg.bottleneck(), 2, 2});
}

TEST_CASE("encode at 224x224 matches the documented tap resolutions") {
    // stride arithmetic only; micro widths keep it fast
    axunet::Rng rng(57);
    axunet::Encoder<double> enc(micro_cfg(0.0625, 0), rng);
    auto x = T64::zeros({1, 3, 224, 224});
    auto f = enc(x);
    CHECK(f.f1.dim(2) == 112);
    CHECK(f.f2.dim(2) == 56);
    CHECK(f.f3.dim(2) == 28);
    CHECK(f.f4.dim(2) == 14);
    CHECK(f.bottleneck.dim(2) == 7);
}

TEST_CASE("encode rejects spatial dims not divisible by 32") {
    axunet::Rng rng(58);
    axunet::Encoder<double> enc(micro_cfg(), rng);
    CHECK_THROWS_AS((void)enc(T64::zeros({1, 3, 48, 64})), axunet::ShapeError);
}

TEST_CASE("encode is deterministic for fixed weights and input") {
    axunet::Rng rng(59);
    axunet::Encoder<double> enc(micro_cfg(), rng);
    auto x = testutil::random_tensor<double>({1, 3, 32, 32}, rng);
    auto a = enc(x);
    auto b = enc(x);
    for (std::int64_t i = 0; i < a.bottleneck.size(); ++i)
        CHECK(a.bottleneck.data()[i] == b.bottleneck.data()[i]);
}

TEST_CASE("channel widths scale with the multiplier and stay divisible by r") {
    XceptionConfig cfg;
    cfg.width_multiplier = 0.125;
    CHECK(cfg.tap2() == 16);
    CHECK(cfg.tap3() == 32);
    CHECK(cfg.tap4() == 88);  // 91 rounded to the nearest multiple of 8
    for (const auto c : {cfg.tap1(), cfg.tap2(), cfg.tap3(), cfg.tap4()})
        CHECK(c % cfg.attention_reduction == 0);
    XceptionConfig full;
    CHECK(full.tap2() == 128);
    CHECK(full.tap4() == 728);
}

TEST_CASE("encoder parameter names are dotted paths") {
    axunet::Rng rng(60);
    axunet::Encoder<double> enc(micro_cfg(), rng);
    axunet::ParamList<double> params;
    enc.collect("encoder", params);
    bool found = false;
    for (const auto& p : params)
        if (p.name == "encoder.entry1.sep1.depthwise") found = true;
    CHECK(found);
    CHECK(params.size() > 20);
}
