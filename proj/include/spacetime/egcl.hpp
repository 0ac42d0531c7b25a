#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spacetime/nn.hpp"
#include "spacetime/tensor.hpp"

namespace spacetime {

/// Node state of a batch of G graphs with N nodes each: h [G,N,d],
/// x [G,N,n], v [G,N,n].
struct GraphState {
    Tensor h;
    Tensor x;
    Tensor v;
};

// Ordered pairs (i, j), i != j, of a complete graph in i-major order: edge
// e = i*(N-1) + k joins i to j = k + (k >= i).
struct EdgeIndex {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;
    std::vector<std::size_t> flat;  // i*N + j, for gathering from [N,N]

    static const EdgeIndex& complete(std::size_t n_nodes);
    std::size_t size() const { return src.size(); }
};

// Edge attributes (A_ij, |x_i - x_j|^2) of one graph as [N, N-1, 2].
// Throws InvalidArgument unless adjacency is symmetric with a zero diagonal.
Tensor build_edge_attrs(const Tensor& adjacency, const Tensor& positions);

// Batched, unchecked form: adjacency [G,N,N], positions [G,N,n] -> [G,N,N-1,2].
// Used inside the model, where attended adjacencies need not be symmetric.
Tensor edge_attrs(const Tensor& adjacency, const Tensor& positions);

/// One E(n)-equivariant graph convolution with velocity:
///   m_ij = phi_e(h_i, h_j, e_ij)
///   v_i' = phi_v(h_i) v_i + C sum_j (x_i - x_j) phi_x(m_ij)
///   x_i' = x_i + v_i'
///   h_i' = h_i + phi_h(h_i, sum_j m_ij)
/// with C = 1/(N-1). With `equivariant` off the same slots become a plain
/// message-passing layer: phi_e also sees x_i and x_j and phi_x emits the
/// coordinate update directly.
class Egcl {
public:
    Egcl() = default;
    Egcl(std::size_t feature_dim, std::size_t hidden_dim, Rng& rng, bool equivariant = true);

    // edges: [G,N,N-1,2] from edge_attrs().
    GraphState forward(const GraphState& in, const Tensor& edges) const;
    void collect(ParamList& params, const std::string& prefix) const;

    bool equivariant() const { return equivariant_; }
    static std::size_t count(std::size_t feature_dim, std::size_t hidden_dim, bool equivariant = true);

    Mlp phi_e;
    Mlp phi_x;
    Mlp phi_v;
    Mlp phi_h;

private:
    bool equivariant_ = true;
};

// K layers applied in sequence to every graph. Edge attributes are rebuilt
// from the current coordinates before each layer unless recompute_edges is
// false, in which case the input coordinates are used throughout.
GraphState spatial_stack(const std::vector<Egcl>& layers, const GraphState& in, const Tensor& adjacency,
                         bool recompute_edges = true);

}  // namespace spacetime
