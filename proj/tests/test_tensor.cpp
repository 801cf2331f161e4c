#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>

#include "axunet/axtn.hpp"
#include "axunet/ops.hpp"
#include "axunet/tensor.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using axunet::Shape;
using axunet::Tensor;
using T64 = Tensor<double>;

TEST_CASE("tensor construction and invariants") {
    auto t = T64::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.size() == 6);
    CHECK(t.at({1, 2}) == 6.0);
    CHECK_THROWS_AS(T64::from_data({2, 3}, {1, 2, 3}), axunet::ShapeError);
    CHECK_THROWS_AS((void)T64::zeros({2, 0}), axunet::ShapeError);
    CHECK_THROWS_AS(t.item(), axunet::ShapeError);
}

TEST_CASE("non-finite op outputs are an error, never silent") {
    auto a = T64::from_data({2}, {1.0, 1.0});
    auto b = T64::from_data({2}, {1.0, 0.0});
    CHECK_THROWS_AS((void)axunet::div(a, b), axunet::NumericError);
}

TEST_CASE("elementwise broadcasting over leading and size-1 dims") {
    auto a = T64::from_data({2, 2}, {1, 2, 3, 4});
    auto b = T64::from_data({2, 1}, {10, 20});
    auto c = axunet::add(a, b);
    CHECK(c.at({0, 1}) == 12.0);
    CHECK(c.at({1, 0}) == 23.0);
    auto bad = T64::zeros({3, 2});
    CHECK_THROWS_AS((void)axunet::add(a, bad), axunet::ShapeError);
}

TEST_CASE("softplus(0) = ln 2 and stability tail") {
    auto x = T64::from_data({3}, {0.0, 40.0, -40.0});
    auto y = axunet::softplus(x);
    CHECK(y.at({0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(y.at({1}) == 40.0);  // linear tail above 30
    CHECK(y.at({2}) == doctest::Approx(std::exp(-40.0)).epsilon(1e-6));
}

TEST_CASE("softmax of a constant row is uniform") {
    const int n = 7;
    auto x = T64::full({1, n}, 3.25);
    auto y = axunet::softmax(x, 1);
    for (int i = 0; i < n; ++i) CHECK(y.at({0, i}) == doctest::Approx(1.0 / n).epsilon(1e-12));
    // large magnitudes survive thanks to the rowwise max subtraction
    auto big = T64::from_data({1, 2}, {1000.0, 1000.0});
    auto yb = axunet::softmax(big, 1);
    CHECK(yb.at({0, 0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("matmul identity and transpose identity") {
    axunet::Rng rng(7);
    auto a = testutil::random_tensor<double>({3, 4}, rng);
    auto eye = T64::zeros({3, 3});
    {
        auto& d = eye.leaf_data();
        for (int i = 0; i < 3; ++i) d[i * 3 + i] = 1.0;
    }
    auto ia = axunet::matmul(eye, a);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) CHECK(ia.at({i, j}) == a.at({i, j}));

    auto b = testutil::random_tensor<double>({4, 5}, rng);
    auto ab_t = axunet::transpose_last2(axunet::matmul(a, b));
    auto bt_at = axunet::matmul(axunet::transpose_last2(b), axunet::transpose_last2(a));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(ab_t.at({i, j}) == doctest::Approx(bt_at.at({i, j})).epsilon(1e-12));
}

TEST_CASE("matmul broadcasts leading batch dims") {
    axunet::Rng rng(9);
    auto a = testutil::random_tensor<double>({2, 3, 4}, rng);
    auto b = testutil::random_tensor<double>({1, 4, 5}, rng);
    auto c = axunet::matmul(a, b);
    CHECK(c.shape() == Shape{2, 3, 5});
    // batch 1 of a times the shared b
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) acc += a.at({1, 2, k}) * b.at({0, k, 1});
    CHECK(c.at({1, 2, 1}) == doctest::Approx(acc).epsilon(1e-12));

    auto bad = testutil::random_tensor<double>({2, 5, 6}, rng);
    CHECK_THROWS_AS((void)axunet::matmul(a, bad), axunet::ShapeError);
}

TEST_CASE("backward populates gradients for all and only requires-grad leaves") {
    axunet::Rng rng(3);
    auto a = testutil::random_tensor<double>({2, 2}, rng, true);
    auto b = testutil::random_tensor<double>({2, 2}, rng, false);
    auto c = testutil::random_tensor<double>({2, 2}, rng, true);
    auto loss = axunet::sum(axunet::mul(axunet::add(a, b), c));
    loss.backward();
    CHECK(a.has_grad());
    CHECK(c.has_grad());
    CHECK_FALSE(b.has_grad());
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(a.grad()[i * 2 + j] == c.at({i, j}));
}

TEST_CASE("no-grad mode detaches outputs") {
    auto a = T64::ones({2}, true);
    axunet::NoGradGuard ng;
    auto y = axunet::scale(a, 2.0);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradient checks: elementwise ops over three random shapes") {
    const std::vector<Shape> shapes = {{5}, {2, 3}, {2, 2, 3}};
    int si = 0;
    for (const auto& shape : shapes) {
        axunet::Rng rng(100 + si++);
        auto a = testutil::random_tensor<double>(shape, rng, true);
        auto b = testutil::random_tensor<double>(shape, rng, true, 0.5, 1.5);  // safe divisor
        auto w = testutil::random_tensor<double>(shape, rng);

        auto res = gradcheck::check({&a, &b}, [&] {
            auto f = axunet::add(axunet::mul(a, b), axunet::div(a, b));
            return axunet::sum(axunet::mul(f, w));
        });
        CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);

        auto res2 = gradcheck::check({&a}, [&] {
            auto f = axunet::sigmoid(axunet::softplus(axunet::scale(a, 1.7)));
            return axunet::sum(axunet::mul(f, w));
        });
        CHECK_MESSAGE(res2.max_rel_err < 1e-6, res2.worst);

        auto c = testutil::random_tensor_away_from_zero<double>(shape, rng, true);
        auto res3 = gradcheck::check({&c}, [&] {
            return axunet::sum(axunet::mul(axunet::relu(c), w));
        });
        CHECK_MESSAGE(res3.max_rel_err < 1e-6, res3.worst);
    }
}

TEST_CASE("gradient checks: matmul both arguments, three shapes") {
    const std::vector<std::pair<Shape, Shape>> cases = {
        {{3, 4}, {4, 5}}, {{2, 2, 3}, {2, 3, 2}}, {{2, 1, 4}, {1, 4, 3}}};
    int si = 0;
    for (const auto& [sa, sb] : cases) {
        axunet::Rng rng(200 + si++);
        auto a = testutil::random_tensor<double>(sa, rng, true);
        auto b = testutil::random_tensor<double>(sb, rng, true);
        auto res = gradcheck::check({&a, &b}, [&] {
            return axunet::sum(axunet::matmul(a, b));
        });
        CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);
    }
}

TEST_CASE("gradient checks: softmax, reductions, reshape, transpose, concat, narrow") {
    axunet::Rng rng(300);
    auto a = testutil::random_tensor<double>({2, 3, 4}, rng, true);
    auto b = testutil::random_tensor<double>({2, 3, 4}, rng, true);
    auto w1 = testutil::random_tensor<double>({2, 3, 4}, rng);
    auto w2 = testutil::random_tensor<double>({2, 6, 4}, rng);

    auto res = gradcheck::check({&a}, [&] {
        return axunet::sum(axunet::mul(axunet::softmax(a, 2), w1));
    });
    CHECK_MESSAGE(res.max_rel_err < 1e-6, res.worst);

    auto res2 = gradcheck::check({&a}, [&] {
        auto s = axunet::sum(a, 1, true);               // [2,1,4]
        auto m = axunet::mean(a, 2, false);             // [2,3]
        return axunet::add(axunet::sum(s), axunet::sum(m));
    });
    CHECK_MESSAGE(res2.max_rel_err < 1e-6, res2.worst);

    auto res3 = gradcheck::check({&a, &b}, [&] {
        auto cat = axunet::concat<double>({a, b}, 1);   // [2,6,4]
        auto sl = axunet::narrow(cat, 1, 1, 4);
        auto tr = axunet::transpose_last2(axunet::reshape(sl, {2, 16}));
        return axunet::add(axunet::sum(axunet::mul(cat, w2)), axunet::sum(tr));
    });
    CHECK_MESSAGE(res3.max_rel_err < 1e-6, res3.worst);
}

TEST_CASE("axtn round trip is bit-exact for f32 and f64") {
    testutil::TempDir tmp("axtn");
    axunet::Rng rng(5);
    auto t64 = testutil::random_tensor<double>({3, 4, 5}, rng);
    auto p64 = tmp.path() / "a.axtn";
    axunet::axtn::save(p64, t64);
    auto r64 = axunet::axtn::load<double>(p64);
    CHECK(r64.shape() == t64.shape());
    for (std::int64_t i = 0; i < t64.size(); ++i) CHECK(r64.data()[i] == t64.data()[i]);

    auto t32 = testutil::random_tensor<float>({7}, rng);
    auto p32 = tmp.path() / "b.axtn";
    axunet::axtn::save(p32, t32);
    auto r32 = axunet::axtn::load<float>(p32);
    for (std::int64_t i = 0; i < t32.size(); ++i) CHECK(r32.data()[i] == t32.data()[i]);

    // header layout: magic, version, dtype, ndim
    std::ifstream in(p32, std::ios::binary);
    char hdr[7];
    in.read(hdr, 7);
    CHECK(hdr[0] == 'A');
    CHECK(hdr[3] == 'N');
    CHECK(hdr[4] == 1);
    CHECK(hdr[5] == 1);  // f32
    CHECK(hdr[6] == 1);  // ndim

    CHECK_THROWS_AS((void)axunet::axtn::load<double>(p32), axunet::DataError);  // dtype mismatch
    CHECK_THROWS_AS((void)axunet::axtn::load<float>(tmp.path() / "missing.axtn"),
                    axunet::DataError);
}
