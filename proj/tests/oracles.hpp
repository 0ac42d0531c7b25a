#pragma once

// Independent reference implementations used as test oracles. Everything
// here is written with plain loops over std::vector and shares no code with
// the library beyond reading parameter values out of tensors.

#include <array>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "spacetime/egcl.hpp"
#include "spacetime/nbody.hpp"
#include "spacetime/nn.hpp"
#include "spacetime/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat3 = std::array<double, 9>;

// Rotation from a unit quaternion; a reflection is the rotation followed by
// negating the x axis.
Mat3 rotation(std::mt19937_64& rng, bool reflect);
Vec transform(const Vec& points, const Mat3& q, const std::array<double, 3>& b = {});

Vec normal(std::size_t n, std::mt19937_64& rng, double stddev = 1.0);
double max_abs_diff(const Vec& a, const Vec& b);

// Coulomb forces summed over every ordered pair (no action-reaction shortcut).
Vec forces(const Vec& x, const Vec& charges, double softening);
double energy(const Vec& x, const Vec& v, const Vec& charges, double softening);
void leapfrog(Vec& x, Vec& v, const Vec& charges, double dt, double softening);

// y = act(x W + b) on one vector.
Vec dense(const Vec& x, const spacetime::Linear& layer);
Vec mlp(const Vec& x, const spacetime::Mlp& net);

struct Graph {
    Vec h;  // [N, d]
    Vec x;  // [N, 3]
    Vec v;  // [N, 3]
};

// One EGCL update of a single graph, edge by edge.
Graph egcl(const spacetime::Egcl& layer, const Graph& in, const Vec& adjacency, std::size_t n, std::size_t d);

// ETAL components for one node-major series [N, L, k] (adjacency [L, N, N]).
Vec feature_attention(const Vec& theta, std::size_t n, std::size_t l, std::size_t d, const Vec& wq, const Vec& wk,
                      const Vec& wv);
Vec position_attention(const Vec& xi, std::size_t n, std::size_t l, double coeff);
Vec velocity_attention(const Vec& omega, std::size_t n, std::size_t l);
Vec adjacency_attention(const Vec& a, std::size_t l, std::size_t n, const Vec& qa, const Vec& ka, const Vec& va);

// Central finite difference of f at x along every coordinate.
Vec numeric_gradient(const std::function<double(const Vec&)>& f, Vec x, double eps);

}  // namespace oracle
