#include "biomoe/error.hpp"
#include "biomoe/kernels.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace biomoe;
using biomoe::oracle::max_abs_diff;
using biomoe::oracle::random_tensor;

namespace {

// Maclaurin series of erf; converges for the moderate arguments used here.
double erf_series(double x)
{
    double term = x, sum = x;
    for (int n = 1; n < 200; ++n) {
        term *= -x * x / n;
        sum += term / (2 * n + 1);
    }
    return 2.0 / std::sqrt(std::numbers::pi) * sum;
}

}  // namespace

TEST(DepthwiseConv, IdentityKernelIsIdentity)
{
    const Tensor x = random_tensor({6, 5, 3}, 1);
    Tensor k({3, 3, 3});
    for (std::size_t c = 0; c < 3; ++c)
        k.at({1, 1, c}) = 1.0f;
    const Tensor y = depthwise_conv2d(x, k, Tensor({3}), {.stride = 1, .padding = 1});
    EXPECT_EQ(y, x);
}

TEST(DepthwiseConv, BoxSumPlusBias)
{
    Tensor x({5, 5, 1}, 1.0f);
    Tensor k({3, 3, 1}, 1.0f);
    Tensor b({1}, 0.5f);
    const Tensor y = depthwise_conv2d(x, k, b, {.stride = 1, .padding = 1});
    EXPECT_FLOAT_EQ(y.at({2, 2, 0}), 9.5f);
    EXPECT_FLOAT_EQ(y.at({0, 0, 0}), 4.5f);  // corner sees a 2x2 window
}

TEST(DepthwiseConv, MatchesNestedLoops)
{
    for (std::uint32_t seed = 0; seed < 10; ++seed) {
        const Tensor x = random_tensor({5, 5, 2}, seed);
        const Tensor k = random_tensor({3, 3, 2}, seed + 100);
        const Tensor b = random_tensor({2}, seed + 200);
        for (std::size_t stride : {1, 2}) {
            const Tensor got = depthwise_conv2d(x, k, b, {.stride = stride, .padding = 1});
            EXPECT_LT(max_abs_diff(got, oracle::naive_depthwise(x, k, b, stride, 1)), 1e-6);
        }
    }
}

TEST(DepthwiseConv, ChannelMismatchRejected)
{
    EXPECT_THROW(depthwise_conv2d(Tensor({4, 4, 2}), Tensor({3, 3, 3}), Tensor(), {}), ShapeError);
    EXPECT_THROW(depthwise_conv2d(Tensor({4, 4, 2}), Tensor({3, 3, 2}), Tensor({3}), {}), ShapeError);
    EXPECT_THROW(depthwise_conv2d(Tensor({4, 4, 2}), Tensor({2, 2, 2}), Tensor(), {}), ShapeError);
}

TEST(Conv2d, MatchesNestedLoops)
{
    const Tensor x = random_tensor({7, 6, 3}, 4);
    const Tensor w = random_tensor({3, 3, 3, 5}, 5);
    const Tensor b = random_tensor({5}, 6);
    const Tensor y = conv2d(x, w, b, {.stride = 2, .padding = 1});
    ASSERT_EQ(y.dims(), (Shape{4, 3, 5}));
    for (std::size_t oy = 0; oy < 4; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox)
            for (std::size_t co = 0; co < 5; ++co) {
                double acc = b[co];
                for (std::size_t ky = 0; ky < 3; ++ky)
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
                        if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6)
                            continue;
                        for (std::size_t ci = 0; ci < 3; ++ci)
                            acc += static_cast<double>(x.at({static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci})) *
                                   w.at({ky, kx, ci, co});
                    }
                EXPECT_NEAR(y.at({oy, ox, co}), acc, 1e-5);
            }
}

TEST(LayerNorm, HandComputedExample)
{
    const Tensor x({3}, std::vector<float>{1, 2, 3});
    const Tensor y = layer_norm(x, Tensor({3}, 1.0f), Tensor({3}, 0.0f));
    EXPECT_NEAR(y[0], -1.2247, 1e-4);
    EXPECT_NEAR(y[1], 0.0, 1e-6);
    EXPECT_NEAR(y[2], 1.2247, 1e-4);
}

TEST(LayerNorm, ConstantVectorMapsToBeta)
{
    const Tensor x({4}, 3.0f);
    const Tensor y = layer_norm(x, Tensor({4}, 1.0f), Tensor({4}, 0.25f));
    for (float v : y.data())
        EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(LayerNorm, StandardizesEverySlice)
{
    const Tensor x = random_tensor({5, 32}, 3, -4.0f, 7.0f);
    const Tensor y = layer_norm(x, Tensor(), Tensor());
    for (std::size_t r = 0; r < 5; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t j = 0; j < 32; ++j)
            mean += y.at({r, j});
        mean /= 32;
        for (std::size_t j = 0; j < 32; ++j)
            var += (y.at({r, j}) - mean) * (y.at({r, j}) - mean);
        var /= 32;
        EXPECT_LT(std::abs(mean), 1e-6);
        EXPECT_LT(std::abs(var - 1.0), 1e-4);
    }
}

TEST(LayerNorm, ShiftAndScaleInvariant)
{
    const Tensor x = random_tensor({4, 16}, 8);
    Tensor z = x;
    for (float& v : z.data())
        v = 3.5f * v - 2.0f;
    EXPECT_LT(max_abs_diff(layer_norm(x, Tensor(), Tensor()), layer_norm(z, Tensor(), Tensor())), 1e-4);
}

TEST(LayerNorm, NormalizesAlongInnerAxis)
{
    // axis 0 of a [3, 2] tensor: each column is a slice
    const Tensor x({3, 2}, std::vector<float>{1, 10, 2, 20, 3, 30});
    const Tensor y = layer_norm(x, 0, Tensor(), Tensor());
    EXPECT_NEAR(y.at({0, 0}), -1.2247, 1e-4);
    EXPECT_NEAR(y.at({2, 1}), 1.2247, 1e-4);
}

TEST(LayerNorm, ErrorPaths)
{
    EXPECT_THROW(layer_norm(Tensor({3}), Tensor({2}), Tensor()), ShapeError);
    EXPECT_THROW(layer_norm(Tensor({3}), 1, Tensor(), Tensor()), ShapeError);
    EXPECT_THROW(layer_norm(Tensor({3}), Tensor(), Tensor(), 0.0f), ShapeError);
}

TEST(BatchNorm, Examples)
{
    const Tensor one({1}, 1.0f), zero({1}, 0.0f);
    const Tensor x = random_tensor({4, 1}, 2);
    EXPECT_LT(max_abs_diff(batch_norm_infer(x, zero, one, one, zero), x), 1e-5);

    const Tensor y = batch_norm_infer(Tensor({1}, 4.0f), Tensor({1}, 2.0f), Tensor({1}, 4.0f), Tensor({1}, 3.0f),
                                      Tensor({1}, 1.0f), 0.0f);
    EXPECT_FLOAT_EQ(y[0], 4.0f);

    const Tensor z = batch_norm_infer(x, zero, one, zero, Tensor({1}, 0.7f));
    for (float v : z.data())
        EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(BatchNorm, NegativeVarianceRejected)
{
    const Tensor one({1}, 1.0f);
    EXPECT_THROW(batch_norm_infer(one, one, Tensor({1}, -1.0f), one, one), ProcessingError);
}

TEST(Attention, SingleTokenReturnsValueRow)
{
    const Tensor x = random_tensor({1, 4}, 1);
    const Tensor wq = random_tensor({4, 3}, 2), wk = random_tensor({4, 3}, 3), wv = random_tensor({4, 3}, 4);
    EXPECT_EQ(attention(x, wq, wk, wv), linear(x, wv, Tensor()));
}

TEST(Attention, IdenticalKeysAverageValues)
{
    const Tensor x = random_tensor({3, 4}, 1);
    const Tensor wq = random_tensor({4, 2}, 2), wv = random_tensor({4, 2}, 4);
    const Tensor wk({4, 2});  // all keys are zero, hence identical
    const Tensor v = linear(x, wv, Tensor());
    const Tensor y = attention(x, wq, wk, wv);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 2; ++c)
            EXPECT_NEAR(y.at({i, c}), (v.at({0, c}) + v.at({1, c}) + v.at({2, c})) / 3.0f, 1e-6);
}

TEST(Attention, MatchesDirectOracleAndStaysInConvexHull)
{
    for (std::uint32_t seed = 0; seed < 20; ++seed) {
        const Tensor x = random_tensor({3, 4}, seed);
        const Tensor wq = random_tensor({4, 4}, seed + 1), wk = random_tensor({4, 4}, seed + 2),
                     wv = random_tensor({4, 4}, seed + 3);
        const Tensor y = attention(x, wq, wk, wv);
        EXPECT_LT(max_abs_diff(y, oracle::naive_attention(x, wq, wk, wv)), 1e-5);
        const Tensor v = linear(x, wv, Tensor());
        for (std::size_t c = 0; c < 4; ++c) {
            float lo = v.at({0, c}), hi = lo;
            for (std::size_t j = 1; j < 3; ++j) {
                lo = std::min(lo, v.at({j, c}));
                hi = std::max(hi, v.at({j, c}));
            }
            for (std::size_t i = 0; i < 3; ++i) {
                EXPECT_GE(y.at({i, c}), lo - 1e-6f);
                EXPECT_LE(y.at({i, c}), hi + 1e-6f);
            }
        }
    }
}

TEST(Attention, DimensionMismatchRejected)
{
    EXPECT_THROW(attention(Tensor({2, 4}), Tensor({3, 2}), Tensor({4, 2}), Tensor({4, 2})), ShapeError);
    EXPECT_THROW(attention(Tensor({2, 4}), Tensor({4, 2}), Tensor({4, 3}), Tensor({4, 2})), ShapeError);
}

TEST(Activation, PointValues)
{
    EXPECT_EQ(activate(Activation::relu, -1.0f), 0.0f);
    EXPECT_EQ(activate(Activation::relu, 2.0f), 2.0f);
    EXPECT_EQ(activate(Activation::elu, 0.0f), 0.0f);
    const float clamped = activate(Activation::hardtanh, activate(Activation::elu, -10.0f));
    EXPECT_NEAR(clamped, -1.0 + std::exp(-10.0), 1e-7);
    EXPECT_NEAR(clamped, -0.99995, 1e-5);
    EXPECT_EQ(activate(Activation::hardtanh, 3.0f), 1.0f);
    EXPECT_EQ(activate(Activation::gelu, 0.0f), 0.0f);
}

TEST(Activation, GeluMatchesErfSeries)
{
    for (int i = -40; i <= 40; ++i) {
        const double x = i * 0.1;
        const double want = 0.5 * x * (1.0 + erf_series(x / std::sqrt(2.0)));
        EXPECT_NEAR(activate(Activation::gelu, static_cast<float>(x)), want, 1e-6) << x;
        // odd part of GELU is x/2
        EXPECT_NEAR(activate(Activation::gelu, static_cast<float>(x)) - activate(Activation::gelu, static_cast<float>(-x)),
                    x, 1e-6);
    }
}

TEST(Activation, MonotoneNondecreasing)
{
    for (auto kind : {Activation::gelu, Activation::relu, Activation::elu, Activation::hardtanh}) {
        float prev = activate(kind, -0.75f);
        for (int i = -74; i <= 400; ++i) {
            const float cur = activate(kind, i * 0.01f);
            // GELU dips below zero on the negative side; it is monotone from its minimum near -0.75 onwards
            EXPECT_GE(cur, prev - 1e-7f);
            prev = cur;
        }
    }
}

TEST(DenseOps, MatchLoopOracles)
{
    const Tensor a = random_tensor({7, 5}, 1), b = random_tensor({5, 7}, 2), c = random_tensor({7, 5}, 3);
    EXPECT_LT(max_abs_diff(matmul(a, b), oracle::naive_matmul(a, b)), 1e-6);

    const Tensor s = softmax_rows(a);
    for (std::size_t i = 0; i < 7; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j)
            z += std::exp(static_cast<double>(a.at({i, j})));
        for (std::size_t j = 0; j < 5; ++j)
            EXPECT_NEAR(s.at({i, j}), std::exp(static_cast<double>(a.at({i, j}))) / z, 1e-6);
    }

    const Tensor sum = add(a, c);
    for (std::size_t i = 0; i < sum.size(); ++i)
        EXPECT_NEAR(sum[i], static_cast<double>(a[i]) + c[i], 1e-6);

    const Tensor cat = concat_lastdim(a, c);
    ASSERT_EQ(cat.dims(), (Shape{7, 10}));
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 10; ++j)
            EXPECT_EQ(cat.at({i, j}), j < 5 ? a.at({i, j}) : c.at({i, j - 5}));
}

TEST(DenseOps, SoftmaxSurvivesLargeLogits)
{
    const Tensor x({1, 3}, std::vector<float>{1000.0f, 1000.0f, -1000.0f});
    const Tensor s = softmax_rows(x);
    EXPECT_NEAR(s[0], 0.5, 1e-7);
    EXPECT_NEAR(s[2], 0.0, 1e-7);
}

TEST(DenseOps, ShapeErrors)
{
    EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
    EXPECT_THROW(add(Tensor({2, 3}), Tensor({3, 2})), ShapeError);
    EXPECT_THROW(concat_lastdim(Tensor({2, 3}), Tensor({3, 3})), ShapeError);
    EXPECT_THROW(linear(Tensor({2, 3}), Tensor({3, 4}), Tensor({3})), ShapeError);
}

TEST(DenseOps, Deterministic)
{
    const Tensor a = random_tensor({64, 96}, 1), b = random_tensor({96, 80}, 2);
    EXPECT_EQ(matmul(a, b), matmul(a, b));
    EXPECT_EQ(layer_norm(a, Tensor(), Tensor()), layer_norm(a, Tensor(), Tensor()));
}
