#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spacetime/checkpoint.hpp"
#include "spacetime/tensor.hpp"

using namespace spacetime;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor::from_vector(std::move(shape), oracle::normal(n, rng), grad);
}

}  // namespace

TEST(Tensor, MatmulIdentityAndHandExample) {
    std::mt19937_64 rng(1);
    Tensor m = random_tensor({3, 3}, rng);
    Tensor eye = Tensor::from_vector({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    EXPECT_EQ(matmul(eye, m).to_vector(), m.to_vector());

    Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from_vector({2, 1}, {0, 1});
    EXPECT_EQ(matmul(a, b).to_vector(), (std::vector<double>{2, 4}));
}

TEST(Tensor, BatchedMatmulMatchesTripleLoop) {
    std::mt19937_64 rng(2);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor b = random_tensor({2, 4, 5}, rng);
    Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 3, 5}));
    for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < 4; ++k) acc += a.at({g, i, k}) * b.at({g, k, j});
                EXPECT_NEAR(c.at({g, i, j}), acc, 1e-12);
            }
}

TEST(Tensor, MatmulBroadcastsLeadingDims) {
    std::mt19937_64 rng(3);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tensor c = matmul(a, w);
    for (std::size_t g = 0; g < 2; ++g) {
        Tensor ag = reshape(slice(a, 0, g, 1), {3, 4});
        EXPECT_LT(oracle::max_abs_diff(reshape(slice(c, 0, g, 1), {3, 2}).to_vector(), matmul(ag, w).to_vector()),
                  1e-14);
    }
}

TEST(Tensor, MatmulRejectsMismatchedInner) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Tensor, SoftmaxMatchesLongDoubleOracle) {
    std::mt19937_64 rng(4);
    Tensor x = random_tensor({7}, rng);
    const auto y = softmax_last(x).to_vector();
    long double z = 0.0L;
    for (double v : x.data()) z += std::exp(static_cast<long double>(v));
    for (std::size_t i = 0; i < 7; ++i) {
        EXPECT_NEAR(y[i], static_cast<double>(std::exp(static_cast<long double>(x.data()[i])) / z), 1e-12);
    }
}

TEST(Tensor, SoftmaxEdgeCases) {
    const auto uniform = softmax_last(Tensor::zeros({4})).to_vector();
    for (double v : uniform) EXPECT_DOUBLE_EQ(v, 0.25);
    const auto big = softmax_last(Tensor::from_vector({2}, {1000, 0})).to_vector();
    EXPECT_NEAR(big[0], 1.0, 1e-12);
    EXPECT_NEAR(big[1], 0.0, 1e-12);
}

TEST(Tensor, ElementwiseAndReductions) {
    Tensor a = Tensor::from_vector({2, 3}, {1, -2, 3, 0.5, 4, -6});
    EXPECT_EQ(mul(a, Tensor::full({2, 3}, 1.0)).to_vector(), a.to_vector());
    EXPECT_EQ(sum(Tensor::full({2, 3}, 1.0), -1).to_vector(), (std::vector<double>{3, 3}));
    EXPECT_EQ(silu(Tensor::scalar(0.0)).item(), 0.0);
    EXPECT_EQ(relu(Tensor::scalar(-2.0)).item(), 0.0);
    // Row vector broadcast against the trailing axis.
    Tensor row = Tensor::from_vector({3}, {10, 20, 30});
    EXPECT_EQ(add(a, row).to_vector(), (std::vector<double>{11, 18, 33, 10.5, 24, 24}));
    EXPECT_EQ(mean(a, 0).to_vector(), (std::vector<double>{0.75, 1, -1.5}));
    EXPECT_THROW(add(a, Tensor::zeros({2})), ShapeError);
}

TEST(Tensor, PermuteSliceConcatIndexSelect) {
    std::mt19937_64 rng(5);
    Tensor a = random_tensor({2, 3, 4}, rng);
    Tensor p = permute(a, {2, 0, 1});
    ASSERT_EQ(p.shape(), (Shape{4, 2, 3}));
    EXPECT_EQ(p.at({3, 1, 2}), a.at({1, 2, 3}));
    Tensor parts = concat({slice(a, 1, 0, 1), slice(a, 1, 1, 2)}, 1);
    EXPECT_EQ(parts.to_vector(), a.to_vector());
    Tensor picked = index_select(a, 2, {3, 0});
    EXPECT_EQ(picked.at({1, 1, 0}), a.at({1, 1, 3}));
    EXPECT_EQ(picked.at({1, 1, 1}), a.at({1, 1, 0}));
}

TEST(Tensor, LayerNormExamples) {
    const auto two = layer_norm_last(Tensor::from_vector({2}, {1, 3}), 1e-5).to_vector();
    EXPECT_NEAR(two[0], -1.0, 1e-15);
    EXPECT_NEAR(two[1], 1.0, 1e-15);
    for (double v : layer_norm_last(Tensor::full({5}, 2.5), 1e-5).to_vector()) EXPECT_EQ(v, 0.0);

    std::mt19937_64 rng(6);
    const auto y = layer_norm_last(random_tensor({9}, rng), 1e-5).to_vector();
    double m = 0.0, var = 0.0;
    for (double v : y) m += v / 9.0;
    for (double v : y) var += (v - m) * (v - m) / 9.0;
    EXPECT_NEAR(m, 0.0, 1e-10);
    EXPECT_NEAR(var, 1.0, 1e-10);
}

TEST(Tensor, HandGradients) {
    Tensor w = Tensor::from_vector({2}, {1, 2}, true);
    backward(sum_all(mul(w, w)));
    EXPECT_EQ(w.grad(), (std::vector<double>{2, 4}));

    // d/dA sum(AB) = 1 B^T, d/dB = A^T 1.
    Tensor a = Tensor::from_vector({2, 2}, {1, 2, 3, 4}, true);
    Tensor b = Tensor::from_vector({2, 2}, {5, 6, 7, 8}, true);
    backward(sum_all(matmul(a, b)));
    EXPECT_EQ(a.grad(), (std::vector<double>{11, 15, 11, 15}));
    EXPECT_EQ(b.grad(), (std::vector<double>{4, 4, 6, 6}));
}

TEST(Tensor, ConstantLossLeavesZeroGrads) {
    Tensor w = Tensor::from_vector({3}, {1, 2, 3}, true);
    Tensor c = Tensor::from_vector({3}, {4, 5, 6});
    backward(sum_all(c));
    EXPECT_EQ(w.grad(), (std::vector<double>{0, 0, 0}));
    EXPECT_THROW(backward(c), ShapeError);
}

TEST(Tensor, TapeOrderAndSingleVisit) {
    Tensor x = Tensor::from_vector({2}, {0.3, -0.7}, true);
    Tensor y = mul(x, x);
    Tensor z = add(y, exp(y));  // y reused twice
    Tape tape = Tape::record(sum_all(z));
    const auto nodes = tape.nodes();
    std::vector<detail::Node*> seen;
    for (detail::Node* n : nodes) {
        EXPECT_EQ(std::count(seen.begin(), seen.end(), n), 0) << "node visited twice";
        for (const auto& parent : n->parents) {
            if (!parent->requires_grad) continue;
            EXPECT_NE(std::find(seen.begin(), seen.end(), parent.get()), seen.end()) << "operand after consumer";
        }
        seen.push_back(n);
    }
    tape.backward();
    const auto g = x.grad();
    for (std::size_t i = 0; i < 2; ++i) {
        const double xi = x.data()[i];
        EXPECT_NEAR(g[i], 2 * xi * (1 + std::exp(xi * xi)), 1e-14);
    }
}

TEST(Tensor, NoGradGuardStopsRecording) {
    Tensor w = Tensor::from_vector({2}, {1, 2}, true);
    NoGradGuard guard;
    Tensor y = mul(w, w);
    EXPECT_FALSE(y.requires_grad());
}

// Every differentiable op against an independent central difference.
TEST(Tensor, OpGradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(7);
    Tensor w = random_tensor({2, 3}, rng);
    Tensor other = random_tensor({3, 4}, rng);
    const std::vector<std::function<Tensor(const Tensor&)>> fns = {
        [&](const Tensor& x) { return sum_all(square(matmul(x, other))); },
        [&](const Tensor& x) { return sum_all(mul(softmax_last(x), w)); },
        [&](const Tensor& x) { return sum_all(mul(layer_norm_last(x, 1e-5), w)); },
        [&](const Tensor& x) { return sum_all(mul(silu(x), exp(scale(x, 0.3)))); },
        [&](const Tensor& x) { return sum_all(div(x, add_scalar(square(x), 1.0))); },
        [&](const Tensor& x) { return sum_all(sqrt(add_scalar(square(x), 0.5))); },
        [&](const Tensor& x) { return sum_all(mul(permute(x, {1, 0}), transpose_last(w))); },
        [&](const Tensor& x) { return sum_all(square(concat({x, index_select(x, 1, {2, 0})}, 1))); },
        [&](const Tensor& x) { return mean_all(square(sub(mean(x, 0, true), sum(x, 1, true)))); },
    };
    for (std::size_t f = 0; f < fns.size(); ++f) {
        Tensor x = random_tensor({2, 3}, rng, true);
        x.zero_grad();
        backward(fns[f](x));
        const auto analytic = x.grad();
        const auto numeric = oracle::numeric_gradient(
            [&](const oracle::Vec& v) { return fns[f](Tensor::from_vector({2, 3}, v)).item(); }, x.to_vector(),
            1e-6);
        EXPECT_LT(oracle::max_abs_diff(analytic, numeric), 1e-7) << "function " << f;
    }
}

TEST(Tensor, GradCheck) {
    std::mt19937_64 rng(8);
    Tensor at = random_tensor({5}, rng);
    EXPECT_LE(grad_check([](const Tensor& x) { return sum_all(square(x)); }, at), 1e-6);
    EXPECT_LE(grad_check([](const Tensor& x) { return sum_all(scale(x, 3.0)); }, at), 1e-9);
    Tensor w = random_tensor({5}, rng);
    EXPECT_LE(grad_check([&](const Tensor& x) { return sum_all(mul(softmax_last(x), w)); }, at), 1e-5);
}

TEST(Tensor, DropoutIsInvertedAndIdentityAtZero) {
    std::mt19937_64 rng(9);
    Tensor x = Tensor::full({10000}, 1.0);
    EXPECT_EQ(dropout(x, 0.0, rng).to_vector(), x.to_vector());
    const auto y = dropout(x, 0.25, rng).to_vector();
    double total = 0.0;
    for (double v : y) {
        EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
        total += v;
    }
    EXPECT_NEAR(total / 10000.0, 1.0, 0.05);
}

TEST(Checkpoint, RoundTripAndCorruption) {
    Checkpoint c;
    c.arrays.push_back({"a", Tensor::from_vector({2, 2}, {1, 2, 3, 4})});
    c.arrays.push_back({"scalar", Tensor::scalar(-0.5)});
    c.metadata = "{\"k\":1}";
    const std::string bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    ASSERT_EQ(back.arrays.size(), 2u);
    EXPECT_EQ(back.find("a")->to_vector(), c.arrays[0].tensor.to_vector());
    EXPECT_EQ(back.find("a")->shape(), (Shape{2, 2}));
    EXPECT_EQ(back.find("scalar")->item(), -0.5);
    EXPECT_EQ(back.metadata, c.metadata);
    EXPECT_EQ(back.find("missing"), nullptr);

    std::string bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
}
