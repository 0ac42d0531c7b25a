#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "spacetime/dataset.hpp"
#include "spacetime/nbody.hpp"

using namespace spacetime;

namespace {

ParticleState two_charges(double c0, double c1) {
    ParticleState s;
    s.positions = {-0.5, 0, 0, 0.5, 0, 0};
    s.velocities = {0, 0, 0, 0, 0, 0};
    s.charges = {c0, c1};
    return s;
}

DatasetConfig small_config() {
    DatasetConfig c;
    c.seq_len = 10;
    c.horizon = 100;
    c.train_count = 10;
    c.val_count = 3;
    c.test_count = 2;
    c.seed = 7;
    return c;
}

}  // namespace

TEST(InitialConditions, ShapesChargesAndDeterminism) {
    const ParticleState s = sample_initial_conditions(5, 11);
    EXPECT_EQ(s.positions.size(), 15u);
    EXPECT_EQ(s.velocities.size(), 15u);
    ASSERT_EQ(s.charges.size(), 5u);
    for (double c : s.charges) EXPECT_TRUE(c == 1.0 || c == -1.0);
    for (double x : s.positions) EXPECT_TRUE(std::isfinite(x));
    const ParticleState again = sample_initial_conditions(5, 11);
    EXPECT_EQ(again.positions, s.positions);
    EXPECT_EQ(again.velocities, s.velocities);
    EXPECT_EQ(again.charges, s.charges);
    EXPECT_THROW(sample_initial_conditions(1, 0), InvalidArgument);
}

TEST(InitialConditions, MomentsMatchDistributions) {
    double sx = 0.0, sv = 0.0, sv2 = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
        const ParticleState s = sample_initial_conditions(5, seed);
        for (std::size_t k = 0; k < s.positions.size(); ++k) {
            sx += s.positions[k];
            sv += s.velocities[k];
            sv2 += s.velocities[k] * s.velocities[k];
            ++count;
        }
    }
    const double n = static_cast<double>(count);
    EXPECT_LT(std::abs(sx / n), 3.0 / std::sqrt(n));
    EXPECT_LT(std::abs(sv / n), 3.0 * 0.5 / std::sqrt(n));
    EXPECT_NEAR(sv2 / n, 0.25, 0.01);
}

TEST(Forces, LikeRepelUnlikeAttract) {
    const auto like = coulomb_forces(two_charges(1, 1), 0.1);
    EXPECT_LT(like[0], 0.0);
    EXPECT_GT(like[3], 0.0);
    EXPECT_DOUBLE_EQ(like[0], -like[3]);
    const auto unlike = coulomb_forces(two_charges(1, -1), 0.1);
    EXPECT_GT(unlike[0], 0.0);
    EXPECT_LT(unlike[3], 0.0);
    // Hand value: |F| = 1 / (1 + 0.1)^{3/2} at unit separation.
    EXPECT_NEAR(like[3], 1.0 / std::pow(1.1, 1.5), 1e-15);
}

TEST(Forces, MatchAllPairsOracleAndSumToZero) {
    const ParticleState s = sample_initial_conditions(5, 3);
    const auto f = coulomb_forces(s, 0.1);
    EXPECT_LT(oracle::max_abs_diff(f, oracle::forces(s.positions, s.charges, 0.1)), 1e-12);
    for (std::size_t k = 0; k < 3; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < 5; ++i) total += f[3 * i + k];
        EXPECT_NEAR(total, 0.0, 1e-12);
    }
    EXPECT_THROW(coulomb_forces(s, 0.0), InvalidArgument);
}

TEST(Forces, NegativeGradientOfPotential) {
    const ParticleState s = sample_initial_conditions(4, 5);
    const auto f = coulomb_forces(s, 0.1);
    const auto g = oracle::numeric_gradient(
        [&](const oracle::Vec& x) {
            ParticleState t = s;
            t.positions = x;
            return potential_energy(t, 0.1);
        },
        s.positions, 1e-6);
    for (std::size_t k = 0; k < f.size(); ++k) EXPECT_NEAR(f[k], -g[k], 1e-7);
}

TEST(Integrator, MatchesOracleLeapfrog) {
    ParticleState s = sample_initial_conditions(5, 9);
    oracle::Vec x = s.positions, v = s.velocities;
    for (int step = 0; step < 20; ++step) {
        s = integrate_step(s, 1e-3, 0.1);
        oracle::leapfrog(x, v, s.charges, 1e-3, 0.1);
    }
    EXPECT_LT(oracle::max_abs_diff(s.positions, x), 1e-13);
    EXPECT_LT(oracle::max_abs_diff(s.velocities, v), 1e-13);
}

TEST(Integrator, SymmetricPairAndFreeDrift) {
    ParticleState s = integrate_step(two_charges(1, 1), 1e-2, 0.1);
    EXPECT_LT(s.positions[0], -0.5);
    EXPECT_DOUBLE_EQ(s.positions[0], -s.positions[3]);
    EXPECT_EQ(s.positions[1], 0.0);

    ParticleState free;
    free.positions = {1, 2, 3};
    free.velocities = {0.5, -1, 2};
    free.charges = {1};
    const ParticleState moved = integrate_step(free, 0.1, 0.1);
    for (std::size_t k = 0; k < 3; ++k) {
        EXPECT_EQ(moved.positions[k], free.positions[k] + 0.1 * free.velocities[k]);
        EXPECT_EQ(moved.velocities[k], free.velocities[k]);
    }
}

TEST(Integrator, ConservesMomentumAndEnergy) {
    ParticleState s = sample_initial_conditions(5, 21);
    const auto p0 = total_momentum(s);
    const double e0 = total_energy(s, 0.1);
    EXPECT_NEAR(e0, oracle::energy(s.positions, s.velocities, s.charges, 0.1), 1e-12);
    for (int step = 0; step < 1000; ++step) s = integrate_step(s, 1e-3, 0.1);
    const auto p1 = total_momentum(s);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p1[k], p0[k], 1e-8);
    EXPECT_LT(std::abs(total_energy(s, 0.1) - e0) / std::abs(e0), 1e-2);
}

TEST(Dataset, ConfigValidation) {
    DatasetConfig c = small_config();
    EXPECT_NO_THROW(c.validate());
    c.horizon = c.seq_len;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config();
    c.n_particles = 1;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config();
    c.dt = 0.0;
    EXPECT_THROW(c.validate(), InvalidArgument);
    c = small_config();
    EXPECT_FALSE(c.short_horizon());
    c.horizon = 50;
    EXPECT_TRUE(c.short_horizon());
}

TEST(Dataset, GenerationIsDeterministicAndSized) {
    const DatasetConfig c = small_config();
    const Dataset a = generate_dataset(c, "train");
    const Dataset b = generate_dataset(c, "train");
    ASSERT_EQ(a.size(), 10u);
    EXPECT_EQ(generate_dataset(c, "val").size(), 3u);
    EXPECT_EQ(generate_dataset(c, "test").size(), 2u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.trajectories[i].positions, b.trajectories[i].positions);
        EXPECT_EQ(a.trajectories[i].velocities, b.trajectories[i].velocities);
        EXPECT_EQ(a.trajectories[i].positions.size(), c.frames() * 5 * 3);
    }
    // Different splits draw different trajectories.
    EXPECT_NE(generate_dataset(c, "test").trajectories[0].positions, a.trajectories[0].positions);
    EXPECT_THROW(generate_dataset(c, "holdout"), InvalidArgument);
}

TEST(Dataset, TrajectoryFollowsIntegrator) {
    const DatasetConfig c = small_config();
    const Trajectory t = generate_dataset(c, "train").trajectories[4];
    ParticleState s = t.state_at(0);
    for (std::size_t f = 1; f < c.frames(); ++f) s = integrate_step(s, c.dt, c.softening);
    const auto last = t.positions_at(c.frames() - 1);
    EXPECT_EQ(std::vector<double>(last.begin(), last.end()), s.positions);
    EXPECT_EQ(t.state_at(7).charges, t.charges);
}

TEST(Dataset, NoiseVarianceAndChargesPreserved) {
    DatasetConfig c = small_config();
    c.train_count = 100;
    const Dataset clean = generate_dataset(c, "train");
    const Dataset same = add_noise(clean, 0.0, 1);
    EXPECT_EQ(same.trajectories[3].positions, clean.trajectories[3].positions);
    const Dataset noisy = add_noise(clean, 0.5, 1);
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        EXPECT_EQ(noisy.trajectories[i].charges, clean.trajectories[i].charges);
        for (std::size_t k = 0; k < clean.trajectories[i].positions.size(); ++k) {
            const double d = noisy.trajectories[i].positions[k] - clean.trajectories[i].positions[k];
            s += d;
            s2 += d * d;
            ++n;
        }
    }
    ASSERT_GE(n, 100000u);
    const double mean = s / double(n);
    EXPECT_NEAR(s2 / double(n) - mean * mean, 0.5, 0.025);
    EXPECT_THROW(add_noise(clean, -1.0, 1), InvalidArgument);
}

TEST(Dataset, FileRoundTripAndCorruption) {
    const auto dir = std::filesystem::temp_directory_path() / "spacetime_test_dataset";
    std::filesystem::create_directories(dir);
    const Dataset d = generate_dataset(small_config(), "val");
    write_dataset(dir / "val.setd", d);
    const Dataset back = read_dataset(dir / "val.setd");
    EXPECT_EQ(back.split, "val");
    EXPECT_EQ(config_to_json(back.config), config_to_json(d.config));
    ASSERT_EQ(back.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(back.trajectories[i].positions, d.trajectories[i].positions);
        EXPECT_EQ(back.trajectories[i].velocities, d.trajectories[i].velocities);
        EXPECT_EQ(back.trajectories[i].charges, d.trajectories[i].charges);
    }

    Dataset empty = d;
    empty.trajectories.clear();
    write_dataset(dir / "empty.setd", empty);
    EXPECT_EQ(read_dataset(dir / "empty.setd").size(), 0u);

    {
        std::fstream f(dir / "val.setd", std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    EXPECT_THROW(read_dataset(dir / "val.setd"), FormatError);
    EXPECT_THROW(read_dataset(dir / "absent.setd"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, ConfigJsonRoundTrip) {
    DatasetConfig c = small_config();
    c.noise_variance = 0.25;
    c.stride = 3;
    const DatasetConfig back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_THROW(config_from_json("[1,2]"), InvalidArgument);
    EXPECT_THROW(config_from_json("{not json"), InvalidArgument);
}
