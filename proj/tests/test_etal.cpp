#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "spacetime/etal.hpp"

using namespace spacetime;

namespace {

constexpr std::size_t kN = 5;
constexpr std::size_t kL = 10;

Tensor tensor(Shape shape, const oracle::Vec& v) { return Tensor::from_vector(std::move(shape), v); }

// Applies q to each 3-vector of a node-major [N, L, 3] series.
oracle::Vec move(const oracle::Vec& v, const oracle::Mat3& q, const std::array<double, 3>& b = {}) {
    return oracle::transform(v, q, b);
}

}  // namespace

TEST(Etal, FeatureAttentionMatchesLoop) {
    std::mt19937_64 rng(1);
    const std::size_t n = 4, l = 5, d = 6;
    const auto theta = oracle::normal(n * l * d, rng);
    const auto wq = oracle::normal(d * d, rng), wk = oracle::normal(d * d, rng), wv = oracle::normal(d * d, rng);
    const Tensor out = feature_attention(tensor({n, l, d}, theta), tensor({d, d}, wq), tensor({d, d}, wk),
                                         tensor({d, d}, wv));
    EXPECT_LT(oracle::max_abs_diff(out.to_vector(), oracle::feature_attention(theta, n, l, d, wq, wk, wv)), 1e-12);
}

TEST(Etal, FeatureAttentionDegenerateCases) {
    std::mt19937_64 rng(2);
    const std::size_t d = 4;
    const auto wv = oracle::normal(d * d, rng);
    const auto one = oracle::normal(d, rng);
    const Tensor single = feature_attention(tensor({1, 1, d}, one), Tensor::zeros({d, d}), Tensor::zeros({d, d}),
                                            tensor({d, d}, wv));
    EXPECT_LT(oracle::max_abs_diff(single.to_vector(), matmul(tensor({1, d}, one), tensor({d, d}, wv)).to_vector()),
              1e-15);

    // Zero Q and K give uniform weights: every output row is the mean value row.
    const auto theta = oracle::normal(3 * d, rng);
    const auto out = feature_attention(tensor({1, 3, d}, theta), Tensor::zeros({d, d}), Tensor::zeros({d, d}),
                                       tensor({d, d}, wv))
                         .to_vector();
    const auto values = matmul(tensor({3, d}, theta), tensor({d, d}, wv)).to_vector();
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < d; ++c)
            EXPECT_NEAR(out[t * d + c], (values[c] + values[d + c] + values[2 * d + c]) / 3.0, 1e-14);
}

TEST(Etal, PositionAttentionMatchesLoopAndDegenerateCases) {
    std::mt19937_64 rng(3);
    const auto xi = oracle::normal(4 * 5 * 3, rng);
    EXPECT_LT(oracle::max_abs_diff(position_attention(tensor({4, 5, 3}, xi), 0.5).to_vector(),
                                   oracle::position_attention(xi, 4, 5, 0.5)),
              1e-12);
    oracle::Vec still(kL * 3);
    for (std::size_t t = 0; t < kL; ++t) still[t * 3] = 1.0, still[t * 3 + 1] = -2.0, still[t * 3 + 2] = 0.5;
    EXPECT_EQ(position_attention(tensor({1, kL, 3}, still), 0.5).to_vector(), still);
    const oracle::Vec single = {0.1, 0.2, 0.3};
    EXPECT_EQ(position_attention(tensor({1, 1, 3}, single), 0.5).to_vector(), single);
}

TEST(Etal, VelocityAttentionMatchesLoopAndDegenerateCases) {
    std::mt19937_64 rng(4);
    const auto omega = oracle::normal(4 * 5 * 3, rng);
    EXPECT_LT(oracle::max_abs_diff(velocity_attention(tensor({4, 5, 3}, omega)).to_vector(),
                                   oracle::velocity_attention(omega, 4, 5)),
              1e-12);
    const oracle::Vec single = {0.1, 0.2, 0.3};
    EXPECT_EQ(velocity_attention(tensor({1, 1, 3}, single)).to_vector(), single);
    oracle::Vec constant(4 * 3);
    for (std::size_t t = 0; t < 4; ++t) constant[t * 3] = 2.0, constant[t * 3 + 1] = -1.0, constant[t * 3 + 2] = 3.0;
    EXPECT_LT(oracle::max_abs_diff(velocity_attention(tensor({1, 4, 3}, constant)).to_vector(), constant), 1e-15);
}

TEST(Etal, AdjacencyAttentionMatchesLoopAndZeroInput) {
    std::mt19937_64 rng(5);
    const std::size_t n = 4, l = 5;
    const auto a = oracle::normal(l * n * n, rng);
    const auto qa = oracle::normal(n * n, rng), ka = oracle::normal(n * n, rng), va = oracle::normal(n * n, rng);
    const Tensor out =
        adjacency_attention(tensor({l, n, n}, a), tensor({n, n}, qa), tensor({n, n}, ka), tensor({n, n}, va));
    EXPECT_LT(oracle::max_abs_diff(out.to_vector(), oracle::adjacency_attention(a, l, n, qa, ka, va)), 1e-12);
    for (double v : adjacency_attention(Tensor::zeros({1, n, n}), tensor({n, n}, qa), tensor({n, n}, ka),
                                        tensor({n, n}, va))
                        .to_vector())
        EXPECT_EQ(v, 0.0);
}

TEST(Etal, WeightRowsSumToOne) {
    std::mt19937_64 rng(6);
    for (bool causal : {false, true}) {
        const Tensor xi = tensor({kN, kL, 3}, oracle::normal(kN * kL * 3, rng, 2.0));
        for (const Tensor& w : {position_weights(xi, causal), velocity_weights(xi, causal)}) {
            const auto v = w.to_vector();
            for (std::size_t row = 0; row < kN * kL; ++row) {
                double s = 0.0;
                for (std::size_t c = 0; c < kL; ++c) s += v[row * kL + c];
                EXPECT_NEAR(s, 1.0, 1e-12);
            }
        }
    }
}

TEST(Etal, CausalMaskBlocksFuture) {
    std::mt19937_64 rng(7);
    const auto w = position_weights(tensor({1, kL, 3}, oracle::normal(kL * 3, rng)), true).to_vector();
    for (std::size_t t = 0; t < kL; ++t)
        for (std::size_t s = t + 1; s < kL; ++s) EXPECT_EQ(w[t * kL + s], 0.0);
    // The first frame only sees itself.
    EXPECT_EQ(w[0], 1.0);
}

class EtalSymmetry : public ::testing::TestWithParam<bool> {};

TEST_P(EtalSymmetry, PositionAndVelocityEquivariance) {
    const bool reflect = GetParam();
    std::mt19937_64 rng(reflect ? 8 : 9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto xi = oracle::normal(kN * kL * 3, rng);
        const auto omega = oracle::normal(kN * kL * 3, rng);
        const oracle::Mat3 q = oracle::rotation(rng, reflect);
        const std::array<double, 3> b = {0.3, -2.0, 1.5};
        const auto p = position_attention(tensor({kN, kL, 3}, xi), 0.5).to_vector();
        const auto p2 = position_attention(tensor({kN, kL, 3}, move(xi, q, b)), 0.5).to_vector();
        EXPECT_LT(oracle::max_abs_diff(p2, move(p, q, b)), 1e-9);
        const auto v = velocity_attention(tensor({kN, kL, 3}, omega)).to_vector();
        const auto v2 = velocity_attention(tensor({kN, kL, 3}, move(omega, q))).to_vector();
        EXPECT_LT(oracle::max_abs_diff(v2, move(v, q)), 1e-9);
        EXPECT_LT(oracle::max_abs_diff(velocity_weights(tensor({kN, kL, 3}, move(omega, q))).to_vector(),
                                       velocity_weights(tensor({kN, kL, 3}, omega)).to_vector()),
                  1e-12);
    }
}

INSTANTIATE_TEST_SUITE_P(Determinant, EtalSymmetry, ::testing::Values(false, true));

TEST(PositionalEncoding, SinusoidTable) {
    const std::size_t l = 6, width = 5;
    const auto t = sinusoid_table(l, width).to_vector();
    for (std::size_t c = 0; c < width; ++c) EXPECT_EQ(t[c], c % 2 == 0 ? 0.0 : 1.0);
    for (std::size_t s = 0; s < l; ++s) {
        for (std::size_t c = 0; c < width; ++c) {
            const double freq = std::pow(10000.0, double(c - c % 2) / double(width));
            const double expected = c % 2 == 0 ? std::sin(double(s) / freq) : std::cos(double(s) / freq);
            EXPECT_NEAR(t[s * width + c], expected, 1e-15);
            EXPECT_LE(std::abs(t[s * width + c]), 1.0);
        }
    }
    bool distinct = false;
    for (std::size_t c = 0; c < width; ++c) distinct |= t[width + c] != t[2 * width + c];
    EXPECT_TRUE(distinct);
}

TEST(PositionalEncoding, BuildShapes) {
    const auto pe = PositionalEncodings::build(kL, kN, 8, 3);
    EXPECT_EQ(pe.w.shape(), (Shape{kL, 8}));
    EXPECT_EQ(pe.x.shape(), (Shape{kL, 3}));
    EXPECT_EQ(pe.y.shape(), (Shape{kL, 3}));
    EXPECT_EQ(pe.z.shape(), (Shape{kL, kN, kN}));
    EXPECT_EQ(reshape(pe.z, {kL, kN * kN}).to_vector(), sinusoid_table(kL, kN * kN).to_vector());
}

TEST(LayerNorm, FeatureAndAdjacencySlices) {
    std::mt19937_64 rng(10);
    const auto a = layer_norm_adjacency(tensor({2, 3, 3}, oracle::normal(18, rng))).to_vector();
    for (std::size_t s = 0; s < 2; ++s) {
        double m = 0.0, v = 0.0;
        for (std::size_t k = 0; k < 9; ++k) m += a[s * 9 + k] / 9.0;
        for (std::size_t k = 0; k < 9; ++k) v += (a[s * 9 + k] - m) * (a[s * 9 + k] - m) / 9.0;
        EXPECT_NEAR(m, 0.0, 1e-10);
        EXPECT_NEAR(v, 1.0, 1e-10);
    }
    const auto f = layer_norm_features(tensor({1, 2}, {1, 3})).to_vector();
    EXPECT_NEAR(f[0], -1.0, 1e-15);
    EXPECT_NEAR(f[1], 1.0, 1e-15);
}

TEST(EtalParams, CountsAndSharing) {
    Rng rng(11);
    EtalParams p(8, kN, true, rng);
    ParamList list;
    p.collect(list, "etal");
    EXPECT_EQ(list.numel(), EtalParams::count(8, kN, true));
    EXPECT_EQ(p.w_q.shape(), (Shape{8, 8}));
    EtalParams no_adj(8, kN, false, rng);
    EXPECT_FALSE(no_adj.has_adjacency());
    EXPECT_EQ(EtalParams::count(8, kN, false), 3u * 64u);
}
