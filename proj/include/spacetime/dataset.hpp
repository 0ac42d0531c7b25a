#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spacetime/nbody.hpp"

namespace spacetime {

struct DatasetConfig {
    std::size_t n_particles = 5;
    std::size_t seq_len = 10;   // L: input frames t = 1..L
    std::size_t horizon = 500;  // H: target frame t = L + H
    std::size_t train_count = 1000;
    std::size_t val_count = 200;
    std::size_t test_count = 200;
    double noise_variance = 0.0;
    double dt = 1e-3;
    double softening = 0.1;
    std::size_t stride = 1;  // integrator steps between stored frames
    std::uint64_t seed = 42;

    std::size_t frames() const { return seq_len + horizon + 1; }
    std::size_t count_for(const std::string& split) const;
    // Throws InvalidArgument on any inconsistent field (including L >= H).
    void validate() const;
    // True when H < 10 L, the regime where the horizon is not much longer
    // than the input window.
    bool short_horizon() const { return horizon < 10 * seq_len; }
};

/// One simulated trajectory with every frame t = 0..L+H. Positions and
/// velocities are [frames, N, 3] row-major.
struct Trajectory {
    std::vector<double> charges;
    std::vector<double> positions;
    std::vector<double> velocities;

    std::size_t n_particles() const { return charges.size(); }
    std::span<const double> positions_at(std::size_t t) const;
    std::span<const double> velocities_at(std::size_t t) const;
    ParticleState state_at(std::size_t t) const;
};

struct Dataset {
    std::string split;
    DatasetConfig config;
    std::vector<Trajectory> trajectories;

    std::size_t size() const { return trajectories.size(); }
};

inline constexpr const char* kSplits[] = {"train", "val", "test"};

// Simulates config.count_for(split) trajectories. Each one starts from its
// own seed derived from (config.seed, split, index); a nonzero
// noise_variance is applied afterwards with a split-derived seed.
Dataset generate_dataset(const DatasetConfig& config, const std::string& split);
Trajectory simulate_trajectory(const DatasetConfig& config, std::uint64_t seed);

// Adds i.i.d. N(0, variance) to every stored position and velocity.
Dataset add_noise(const Dataset& dataset, double variance, std::uint64_t seed);

std::string config_to_json(const DatasetConfig& config);
DatasetConfig config_from_json(const std::string& json);

// Layout, little-endian: "SETD" | version u32 | json_len u64 | json |
// per trajectory { charges f64[N] | positions f64[F*N*3] | velocities f64[F*N*3] }.
// The JSON carries the split name, trajectory count and full config.
inline constexpr std::uint32_t kDatasetVersion = 1;
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace spacetime
