#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "axunet/attention.hpp"
#include "doctest.h"
#include "support/gradcheck.hpp"
#include "support/references.hpp"
#include "support/testutil.hpp"

using axunet::Shape;
using axunet::Tensor;
using T64 = Tensor<double>;

namespace {

// scalar-loop 1x1 convolution: y[o,p] = sum_c w[o,c] * x[c,p]
std::vector<double> conv1x1_loop(const std::vector<double>& x, std::int64_t C, std::int64_t hw,
                                 const Tensor<double>& w) {
    const std::int64_t O = w.dim(0);
    std::vector<double> y(static_cast<std::size_t>(O * hw), 0.0);
    for (std::int64_t o = 0; o < O; ++o)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t p = 0; p < hw; ++p)
                y[o * hw + p] += w.data()[o * C + c] * x[c * hw + p];
    return y;
}

double softplus_ref(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }

}  // namespace

TEST_CASE("pam on a single pixel: one key, attention weight exactly 1") {
    axunet::Rng rng(31);
    const std::int64_t C = 8, r = 8;
    axunet::PamParams<double> p(C, r, rng);
    auto x = testutil::random_tensor<double>({2, C, 1, 1}, rng);
    auto y = axunet::pam_forward(x, p);
    // out = x + w_out(v), v = wv * x
    auto v = axunet::conv2d(x, p.wv, 1, 0);
    auto expect = axunet::add(x, axunet::conv2d(v, p.w_out, 1, 0));
    for (std::int64_t i = 0; i < y.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(expect.data()[i]).epsilon(1e-12));
}

TEST_CASE("pam matches the explicit quadratic attention oracle") {
    const std::vector<Shape> shapes = {{1, 8, 4, 4}, {2, 8, 3, 5}, {1, 16, 4, 4}};
    int si = 0;
    for (const auto& shape : shapes) {
        axunet::Rng rng(800 + si++);
        const std::int64_t N = shape[0], C = shape[1], H = shape[2], W = shape[3];
        const std::int64_t r = 8, cr = C / r, hw = H * W;
        axunet::PamParams<double> p(C, r, rng);
        auto x = testutil::random_tensor<double>(shape, rng);
        auto y = axunet::pam_forward(x, p);

        for (std::int64_t n = 0; n < N; ++n) {
            const std::vector<double> xn(x.data().begin() + n * C * hw,
                                         x.data().begin() + (n + 1) * C * hw);
            auto q = conv1x1_loop(xn, C, hw, p.wq);
            auto k = conv1x1_loop(xn, C, hw, p.wk);
            auto v = conv1x1_loop(xn, C, hw, p.wv);
            // to position-major [P, D] with the softplus feature map on q,k
            std::vector<double> phi_q(hw * cr), phi_k(hw * cr), vp(hw * cr);
            for (std::int64_t d = 0; d < cr; ++d)
                for (std::int64_t pos = 0; pos < hw; ++pos) {
                    phi_q[pos * cr + d] = softplus_ref(q[d * hw + pos]);
                    phi_k[pos * cr + d] = softplus_ref(k[d * hw + pos]);
                    vp[pos * cr + d] = v[d * hw + pos];
                }
            std::vector<double> row_sums;
            auto att = refimpl::kernel_attention_quadratic(phi_q, phi_k, vp, hw, cr, &row_sums);
            for (const double s : row_sums) CHECK(std::abs(s - 1.0) < 1e-10);

            // back to channel-major, then the restoring 1x1 conv and residual
            std::vector<double> att_cm(cr * hw);
            for (std::int64_t d = 0; d < cr; ++d)
                for (std::int64_t pos = 0; pos < hw; ++pos)
                    att_cm[d * hw + pos] = att[pos * cr + d];
            auto restored = conv1x1_loop(att_cm, cr, hw, p.w_out);
            for (std::int64_t i = 0; i < C * hw; ++i) {
                const double expect = xn[i] + restored[i];
                CHECK(std::abs(y.data()[n * C * hw + i] - expect) < 1e-10);
            }
        }
    }
}

TEST_CASE("pam rejects channels not divisible by the reduction") {
    axunet::Rng rng(32);
    CHECK_THROWS_AS(axunet::PamParams<double>(12, 8, rng), axunet::ConfigError);
}

TEST_CASE("pam is residual: zero value or output projection passes x through") {
    axunet::Rng rng(33);
    const std::int64_t C = 8;
    auto x = testutil::random_tensor<double>({1, C, 3, 3}, rng);

    axunet::PamParams<double> p1(C, 8, rng);
    std::fill(p1.wv.leaf_data().begin(), p1.wv.leaf_data().end(), 0.0);
    auto y1 = axunet::pam_forward(x, p1);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y1.data()[i] == x.data()[i]);

    axunet::PamParams<double> p2(C, 8, rng);
    std::fill(p2.w_out.leaf_data().begin(), p2.w_out.leaf_data().end(), 0.0);
    auto y2 = axunet::pam_forward(x, p2);
    for (std::int64_t i = 0; i < x.size(); ++i) CHECK(y2.data()[i] == x.data()[i]);
}

TEST_CASE("cam with a single channel doubles the input") {
    axunet::Rng rng(34);
    auto x = testutil::random_tensor<double>({2, 1, 3, 4}, rng);
    auto y = axunet::cam_forward(x);
    for (std::int64_t i = 0; i < x.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-12));
}

TEST_CASE("cam on zero input returns zero") {
    auto x = T64::zeros({1, 4, 3, 3});
    auto y = axunet::cam_forward(x);
    for (const auto v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("cam attention rows sum to one") {
    axunet::Rng rng(35);
    auto x = testutil::random_tensor<double>({2, 5, 3, 3}, rng);
    const std::int64_t N = 2, C = 5;
    auto flat = axunet::reshape(x, {N, C, 9});
    auto attn = axunet::softmax(axunet::matmul(flat, axunet::transpose_last2(flat)), 2);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t i = 0; i < C; ++i) {
            double s = 0.0;
            for (std::int64_t j = 0; j < C; ++j) s += attn.at({n, i, j});
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
}

TEST_CASE("cam matches an independent scalar-loop reimplementation") {
    axunet::Rng rng(36);
    const std::int64_t C = 4, H = 3, W = 3, hw = H * W;
    auto x = testutil::random_tensor<double>({1, C, H, W}, rng);
    auto y = axunet::cam_forward(x);

    const std::vector<double> xd(x.data().begin(), x.data().end());
    std::vector<double> energy(C * C, 0.0);
    for (std::int64_t i = 0; i < C; ++i)
        for (std::int64_t j = 0; j < C; ++j)
            for (std::int64_t p = 0; p < hw; ++p)
                energy[i * C + j] += xd[i * hw + p] * xd[j * hw + p];
    std::vector<double> attn(C * C);
    for (std::int64_t i = 0; i < C; ++i) {
        double mx = energy[i * C];
        for (std::int64_t j = 1; j < C; ++j) mx = std::max(mx, energy[i * C + j]);
        double denom = 0.0;
        for (std::int64_t j = 0; j < C; ++j) {
            attn[i * C + j] = std::exp(energy[i * C + j] - mx);
            denom += attn[i * C + j];
        }
        for (std::int64_t j = 0; j < C; ++j) attn[i * C + j] /= denom;
    }
    for (std::int64_t i = 0; i < C; ++i)
        for (std::int64_t p = 0; p < hw; ++p) {
            double acc = xd[i * hw + p];
            for (std::int64_t j = 0; j < C; ++j) acc += attn[i * C + j] * xd[j * hw + p];
            CHECK(std::abs(y.data()[i * hw + p] - acc) < 1e-10);
        }
}

TEST_CASE("self-attention is the sum of both branches and preserves shape") {
    axunet::Rng rng(37);
    const std::int64_t C = 16;
    axunet::PamParams<double> p(C, 8, rng);
    auto x = testutil::random_tensor<double>({2, C, 4, 5}, rng);
    auto y = axunet::self_attention_forward(x, p);
    CHECK(y.shape() == x.shape());
    auto expect = axunet::add(axunet::pam_forward(x, p), axunet::cam_forward(x));
    for (std::int64_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == expect.data()[i]);
}

TEST_CASE("self-attention has no cross-batch leakage") {
    axunet::Rng rng(38);
    const std::int64_t C = 8;
    axunet::PamParams<double> p(C, 8, rng);
    auto a = testutil::random_tensor<double>({1, C, 3, 3}, rng);
    auto b = testutil::random_tensor<double>({1, C, 3, 3}, rng);
    auto ab = axunet::concat<double>({a, b}, 0);
    auto ba = axunet::concat<double>({b, a}, 0);
    auto y_ab = axunet::self_attention_forward(ab, p);
    auto y_ba = axunet::self_attention_forward(ba, p);
    const std::int64_t half = y_ab.size() / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        CHECK(y_ab.data()[i] == y_ba.data()[half + i]);
        CHECK(y_ab.data()[half + i] == y_ba.data()[i]);
    }
}

TEST_CASE("gradient check through the full self-attention block") {
    axunet::Rng rng(39);
    const std::int64_t C = 8;
    axunet::PamParams<double> p(C, 8, rng);
    auto x = testutil::random_tensor<double>({1, C, 4, 4}, rng, true);
    auto wt = testutil::random_tensor<double>({1, C, 4, 4}, rng);
    auto res = gradcheck::check(
        {&x, &p.wq, &p.wk, &p.wv, &p.w_out},
        [&] { return axunet::sum(axunet::mul(axunet::self_attention_forward(x, p), wt)); }, 30);
    CHECK_MESSAGE(res.max_rel_err < 1e-5, res.worst);
}
