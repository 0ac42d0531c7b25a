#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace spacetime {

inline constexpr std::size_t kSpatialDim = 3;

/// Positions and velocities are row-major [N, 3]; charges are exactly +1 or -1.
struct ParticleState {
    std::vector<double> positions;
    std::vector<double> velocities;
    std::vector<double> charges;

    std::size_t size() const { return charges.size(); }
};

// Positions ~ N(0, 1), velocities ~ N(0, 0.5^2), charges uniform on {-1, +1}.
ParticleState sample_initial_conditions(std::size_t n_particles, std::uint64_t seed);

// Softened Coulomb forces with unit constant:
//   F_i = sum_{j != i} c_i c_j (x_i - x_j) / (|x_i - x_j|^2 + softening)^{3/2}
// Each pair is evaluated once and applied with opposite signs.
std::vector<double> coulomb_forces(const ParticleState& state, double softening);

// One kick-drift-kick leapfrog step with unit masses.
ParticleState integrate_step(const ParticleState& state, double dt, double softening);

double kinetic_energy(const ParticleState& state);
// Potential whose negative gradient is coulomb_forces with the same softening.
double potential_energy(const ParticleState& state, double softening);
inline double total_energy(const ParticleState& state, double softening) {
    return kinetic_energy(state) + potential_energy(state, softening);
}
std::array<double, kSpatialDim> total_momentum(const ParticleState& state);

}  // namespace spacetime
