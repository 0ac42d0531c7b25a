#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "spacetime/rng.hpp"
#include "spacetime/tensor.hpp"

namespace spacetime::verify {

using Mat3 = std::array<double, 9>;  // row-major

// Gram-Schmidt on a Gaussian 3x3 matrix, then the first row is negated if
// needed so that det(Q) == det_sign (+1 or -1).
Mat3 random_orthogonal(Rng& rng, int det_sign);
double determinant(const Mat3& q);

// Applies y = Q x + b to every trailing 3-vector of x. Pass b = {} for a
// pure rotation.
Tensor apply_isometry(const Tensor& x, const Mat3& q, const std::array<double, 3>& b = {});

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);
// Reorders one axis so that output index i holds input index perm[i].
Tensor permute_axis(const Tensor& t, int axis, const std::vector<std::size_t>& perm);

Tensor random_normal(Shape shape, Rng& rng, double stddev = 1.0);

// Reference ETAL components written as explicit loops over node, time and
// coordinate indices, for one node-major series [N, L, k] (adjacency
// [L, N, N]). Used to cross-check the tensorised kernels.
std::vector<double> loop_feature_attention(const std::vector<double>& theta, std::size_t n, std::size_t l,
                                           std::size_t d, const std::vector<double>& w_q,
                                           const std::vector<double>& w_k, const std::vector<double>& w_v);
std::vector<double> loop_position_attention(const std::vector<double>& xi, std::size_t n, std::size_t l,
                                            std::size_t dim, double coeff);
std::vector<double> loop_velocity_attention(const std::vector<double>& omega, std::size_t n, std::size_t l,
                                            std::size_t dim);
std::vector<double> loop_adjacency_attention(const std::vector<double>& a, std::size_t l, std::size_t n,
                                             const std::vector<double>& q_a, const std::vector<double>& k_a,
                                             const std::vector<double>& v_a);

struct PropertyResult {
    std::string name;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct SuiteOptions {
    std::size_t trials = 25;
    double tolerance = 1e-8;
    std::uint64_t seed = 0;
    std::size_t n_particles = 5;
    std::size_t seq_len = 10;
    std::size_t feature_dim = 8;
    std::size_t hidden_dim = 16;
};

// Every equivariance, permutation, normalisation and loop-equivalence
// property of the EGCL, ETAL and SET layers, each compared against the same
// tolerance. Deterministic given the options.
std::vector<PropertyResult> run_property_suite(const SuiteOptions& options);

}  // namespace spacetime::verify
