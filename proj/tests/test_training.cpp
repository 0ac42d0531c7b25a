#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "spacetime/training.hpp"

using namespace spacetime;

namespace {

DatasetConfig tiny_data(std::size_t count = 10) {
    DatasetConfig c;
    c.seq_len = 4;
    c.horizon = 40;
    c.train_count = count;
    c.val_count = 4;
    c.test_count = 4;
    c.seed = 5;
    return c;
}

ModelConfig tiny_set(const DatasetConfig& d) {
    ModelConfig c = ModelConfig::defaults(ModelKind::Set);
    c.n_particles = d.n_particles;
    c.seq_len = d.seq_len;
    c.horizon = d.horizon;
    c.feature_dim = 4;
    c.hidden_dim = 8;
    c.blocks = 1;
    c.egcl_layers = 1;
    return c;
}

// Predicts the stored targets of a dataset, looked up by the first input frame.
class OracleModel final : public Model {
public:
    explicit OracleModel(ModelConfig c) : Model(std::move(c)) {}
    Prediction forward(const Batch& batch, const ForwardContext&) const override {
        return {batch.target_x, batch.target_v};
    }
};

class ZeroModel final : public Model {
public:
    explicit ZeroModel(ModelConfig c) : Model(std::move(c)) {}
    Prediction forward(const Batch& batch, const ForwardContext&) const override {
        return {Tensor::zeros(batch.target_x.shape()), Tensor::zeros(batch.target_v.shape())};
    }
};

}  // namespace

TEST(Adam, FirstStepIsSignedLearningRate) {
    Tensor w = Tensor::from_vector({3}, {1.0, -2.0, 0.5}, true);
    ParamList p;
    p.add("w", w);
    Adam opt(p, AdamConfig{.lr = 0.01});
    const std::vector<double> g = {3.0, -0.2, 1e-3};
    std::copy(g.begin(), g.end(), w.mutable_grad().begin());
    opt.step();
    const auto after = w.to_vector();
    EXPECT_NEAR(after[0], 1.0 - 0.01, 0.01 * 1e-5);
    EXPECT_NEAR(after[1], -2.0 + 0.01, 0.01 * 1e-5);
    EXPECT_NEAR(after[2], 0.5 - 0.01, 0.01 * 1e-4);
    EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
    Tensor w = Tensor::from_vector({2}, {1.0, 2.0}, true);
    ParamList p;
    p.add("w", w);
    Adam opt(p, AdamConfig{});
    for (int i = 0; i < 5; ++i) opt.step();
    EXPECT_EQ(w.to_vector(), (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, ConvergesOnQuadraticBowl) {
    const std::vector<double> target = {0.7, -1.3, 2.1};
    Tensor w = Tensor::zeros({3}, true);
    Tensor star = Tensor::from_vector({3}, target);
    ParamList p;
    p.add("w", w);
    Adam opt(p, AdamConfig{.lr = 0.05});
    for (int i = 0; i < 200; ++i) {
        p.zero_grad();
        backward(sum_all(square(sub(w, star))));
        opt.step();
    }
    EXPECT_LT(oracle::max_abs_diff(w.to_vector(), target), 1e-3);
}

TEST(Adam, NonFiniteGradientThrowsWithoutUpdating) {
    Tensor w = Tensor::from_vector({2}, {1.0, 2.0}, true);
    ParamList p;
    p.add("weights", w);
    Adam opt(p, AdamConfig{});
    w.mutable_grad()[1] = NAN;
    try {
        opt.step();
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
    }
    EXPECT_EQ(w.to_vector(), (std::vector<double>{1.0, 2.0}));
}

TEST(Evaluate, OracleAndZeroPredictors) {
    DatasetConfig dc = tiny_data();
    dc.noise_variance = 0.5;
    const Dataset d = generate_dataset(dc, "train");
    ModelConfig mc = tiny_set(dc);
    const EvalMetrics perfect = evaluate(OracleModel(mc), d, 3);
    EXPECT_EQ(perfect.mse, 0.0);
    EXPECT_EQ(perfect.loss, 0.0);

    // Zero prediction: the metrics are plain means of squared targets.
    double px = 0.0, pv = 0.0;
    std::size_t n = 0;
    for (const Trajectory& t : d.trajectories) {
        const auto x = t.positions_at(dc.seq_len + dc.horizon);
        const auto v = t.velocities_at(dc.seq_len + dc.horizon);
        for (std::size_t k = 0; k < x.size(); ++k) {
            px += x[k] * x[k];
            pv += v[k] * v[k];
            ++n;
        }
    }
    const EvalMetrics zero = evaluate(ZeroModel(mc), d, 4);
    EXPECT_NEAR(zero.pos_mse, px / double(n), 1e-12);
    EXPECT_NEAR(zero.vel_mse, pv / double(n), 1e-12);
    EXPECT_NEAR(zero.mse, (px + pv) / double(2 * n), 1e-12);

    Dataset empty = d;
    empty.trajectories.clear();
    EXPECT_THROW(evaluate(ZeroModel(mc), empty), InvalidArgument);
}

TEST(Evaluate, LinearBaselineFiniteAndPositive) {
    const DatasetConfig dc = tiny_data();
    ModelConfig mc = ModelConfig::defaults(ModelKind::Linear);
    mc.seq_len = dc.seq_len;
    mc.horizon = dc.horizon;
    const EvalMetrics m = evaluate(LinearModel(mc), generate_dataset(dc, "val"));
    EXPECT_TRUE(std::isfinite(m.mse));
    EXPECT_GT(m.mse, 0.0);
}

TEST(Train, SmokeRunLogsFiniteLosses) {
    const DatasetConfig dc = tiny_data();
    const Dataset train_set = generate_dataset(dc, "train");
    const Dataset val_set = generate_dataset(dc, "val");
    SetModel model(tiny_set(dc));
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 5;
    tc.lr = 1e-3;
    std::size_t calls = 0;
    const TrainResult r = train(model, train_set, val_set, tc, [&](const EpochMetrics&) { ++calls; });
    ASSERT_EQ(r.history.size(), 2u);
    EXPECT_EQ(calls, 2u);
    for (const EpochMetrics& e : r.history) {
        EXPECT_TRUE(std::isfinite(e.train_loss));
        EXPECT_TRUE(std::isfinite(e.val_mse));
    }
    EXPECT_EQ(r.history[0].epoch, 0u);
}

TEST(Train, SameSeedSameHistory) {
    const DatasetConfig dc = tiny_data();
    const Dataset train_set = generate_dataset(dc, "train");
    const Dataset val_set = generate_dataset(dc, "val");
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 4;
    tc.lr = 1e-3;
    tc.dropout = 0.1;
    tc.seed = 17;
    SetModel a(tiny_set(dc));
    SetModel b(tiny_set(dc));
    const TrainResult ra = train(a, train_set, val_set, tc);
    const TrainResult rb = train(b, train_set, val_set, tc);
    ASSERT_EQ(ra.history.size(), rb.history.size());
    for (std::size_t i = 0; i < ra.history.size(); ++i) {
        EXPECT_EQ(ra.history[i].train_loss, rb.history[i].train_loss);
        EXPECT_EQ(ra.history[i].val_mse, rb.history[i].val_mse);
    }
    EXPECT_EQ(snapshot_params(a), snapshot_params(b));
}

TEST(Train, RestoresBestValidationEpoch) {
    const DatasetConfig dc = tiny_data(20);
    const Dataset train_set = generate_dataset(dc, "train");
    const Dataset val_set = generate_dataset(dc, "val");
    SetModel model(tiny_set(dc));
    TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 10;
    tc.lr = 1e-3;
    const TrainResult r = train(model, train_set, val_set, tc);
    double best = r.history[0].val_mse;
    for (const EpochMetrics& e : r.history) best = std::min(best, e.val_mse);
    EXPECT_EQ(r.best_val_mse, best);
    EXPECT_EQ(evaluate(model, val_set).mse, best);
}

TEST(Train, RejectsBadConfig) {
    const DatasetConfig dc = tiny_data();
    const Dataset train_set = generate_dataset(dc, "train");
    SetModel model(tiny_set(dc));
    TrainConfig tc;
    tc.batch_size = 0;
    EXPECT_THROW(train(model, train_set, train_set, tc), InvalidArgument);
    tc.batch_size = 1000;
    EXPECT_THROW(train(model, train_set, train_set, tc), InvalidArgument);
    tc.batch_size = 2;
    tc.dropout = 1.0;
    EXPECT_THROW(train(model, train_set, train_set, tc), InvalidArgument);

    DatasetConfig other = dc;
    other.horizon = 80;
    EXPECT_THROW(train(model, generate_dataset(other, "train"), train_set, TrainConfig{}), InvalidArgument);
}

TEST(TrainConfig, JsonRoundTripAndDefaults) {
    TrainConfig tc;
    tc.epochs = 7;
    tc.lr = 2e-4;
    tc.seed = 9;
    EXPECT_EQ(TrainConfig::from_json(tc.to_json()).to_json(), tc.to_json());
    EXPECT_EQ(default_learning_rate(ModelKind::Set), 4.45e-5);
    EXPECT_EQ(default_learning_rate(ModelKind::Linear), 2.73e-5);
    EXPECT_EQ(default_weight_decay(ModelKind::Linear), 1e-6);
    EXPECT_EQ(default_weight_decay(ModelKind::Set), 0.0);
}
