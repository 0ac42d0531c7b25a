#include "spacetime/nbody.hpp"

#include <cmath>
#include <random>

#include "spacetime/error.hpp"
#include "spacetime/rng.hpp"

namespace spacetime {

ParticleState sample_initial_conditions(std::size_t n_particles, std::uint64_t seed) {
    if (n_particles < 2) throw InvalidArgument("sample_initial_conditions: need at least 2 particles");
    Rng rng(seed);
    std::normal_distribution<double> pos(0.0, 1.0);
    std::normal_distribution<double> vel(0.0, 0.5);
    std::bernoulli_distribution sign(0.5);
    ParticleState s;
    s.positions.resize(n_particles * kSpatialDim);
    s.velocities.resize(n_particles * kSpatialDim);
    s.charges.resize(n_particles);
    for (double& x : s.positions) x = pos(rng);
    for (double& v : s.velocities) v = vel(rng);
    for (double& c : s.charges) c = sign(rng) ? 1.0 : -1.0;
    return s;
}

std::vector<double> coulomb_forces(const ParticleState& state, double softening) {
    if (!(softening > 0.0)) throw InvalidArgument("coulomb_forces: softening must be positive");
    const std::size_t n = state.size();
    std::vector<double> f(n * kSpatialDim, 0.0);
    const double* x = state.positions.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double d[kSpatialDim];
            double r2 = 0.0;
            for (std::size_t k = 0; k < kSpatialDim; ++k) {
                d[k] = x[i * kSpatialDim + k] - x[j * kSpatialDim + k];
                r2 += d[k] * d[k];
            }
            const double s = r2 + softening;
            const double w = state.charges[i] * state.charges[j] / (s * std::sqrt(s));
            for (std::size_t k = 0; k < kSpatialDim; ++k) {
                f[i * kSpatialDim + k] += w * d[k];
                f[j * kSpatialDim + k] -= w * d[k];
            }
        }
    }
    return f;
}

ParticleState integrate_step(const ParticleState& state, double dt, double softening) {
    if (!(dt > 0.0)) throw InvalidArgument("integrate_step: dt must be positive");
    ParticleState next = state;
    const double half = 0.5 * dt;
    const auto f0 = coulomb_forces(state, softening);
    for (std::size_t i = 0; i < next.velocities.size(); ++i) next.velocities[i] += half * f0[i];
    for (std::size_t i = 0; i < next.positions.size(); ++i) next.positions[i] += dt * next.velocities[i];
    const auto f1 = coulomb_forces(next, softening);
    for (std::size_t i = 0; i < next.velocities.size(); ++i) next.velocities[i] += half * f1[i];
    return next;
}

double kinetic_energy(const ParticleState& state) {
    double e = 0.0;
    for (double v : state.velocities) e += v * v;
    return 0.5 * e;
}

double potential_energy(const ParticleState& state, double softening) {
    const std::size_t n = state.size();
    const double* x = state.positions.data();
    double u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double r2 = 0.0;
            for (std::size_t k = 0; k < kSpatialDim; ++k) {
                const double d = x[i * kSpatialDim + k] - x[j * kSpatialDim + k];
                r2 += d * d;
            }
            u += state.charges[i] * state.charges[j] / std::sqrt(r2 + softening);
        }
    }
    return u;
}

std::array<double, kSpatialDim> total_momentum(const ParticleState& state) {
    std::array<double, kSpatialDim> p{};
    for (std::size_t i = 0; i < state.size(); ++i) {
        for (std::size_t k = 0; k < kSpatialDim; ++k) p[k] += state.velocities[i * kSpatialDim + k];
    }
    return p;
}

}  // namespace spacetime
