#pragma once

#include <cstddef>
#include <string>

#include "spacetime/nn.hpp"
#include "spacetime/tensor.hpp"

namespace spacetime {

// All attention functions work on node-major tensors [..., N, L, k]: every
// leading index selects one node's time series and attention runs over L.
// With causal set, time t attends only to s <= t.

// Logits mask [L, L]: 0 where allowed, a large negative number elsewhere.
Tensor causal_mask(std::size_t seq_len);

// theta~ = softmax(q k^T / sqrt(d)) v with q = theta W_q, k = theta W_k, v = theta W_v.
Tensor feature_attention(const Tensor& theta, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                         bool causal = false);

// beta = softmax(-|xi_t - xi_s|^2 / sqrt(n)) over s.
Tensor position_weights(const Tensor& xi, bool causal = false);
// xi~_t = xi_t + B sum_{s != t} beta_ts (xi_s - xi_t).
Tensor position_attention(const Tensor& xi, double coeff, bool causal = false);

// gamma = softmax(omega omega^T / sqrt(n)) over s.
Tensor velocity_weights(const Tensor& omega, bool causal = false);
// omega~_t = sum_s gamma_ts omega_s.
Tensor velocity_attention(const Tensor& omega, bool causal = false);

// Per time slice A [..., N, N]: q = A Q_A, k = A K_A, v = A V_A and
// A~ = softmax(q k^T / sqrt(N)) v, softmax over the last axis.
Tensor adjacency_attention(const Tensor& adjacency, const Tensor& q_a, const Tensor& k_a, const Tensor& v_a);

// Sinusoid table [L, width]: column 2j holds sin(t / kappa^(2j/width)),
// column 2j+1 the matching cos, for t = 0..L-1. An odd final column is sin.
Tensor sinusoid_table(std::size_t seq_len, std::size_t width, double kappa = 10000.0);

/// Encodings added to the ETAL inputs. W, X, Y are shared by every node and
/// stored as [L, width]; Z is the [L, N^2] table reshaped to [L, N, N].
struct PositionalEncodings {
    Tensor w;
    Tensor x;
    Tensor y;
    Tensor z;

    static PositionalEncodings build(std::size_t seq_len, std::size_t n_nodes, std::size_t feature_dim,
                                     std::size_t spatial_dim, double kappa = 10000.0);
};

inline constexpr double kLayerNormEps = 1e-5;

// Normalises over the feature axis of [..., d].
Tensor layer_norm_features(const Tensor& theta);
// Normalises each [..., N, N] slice over all N^2 entries.
Tensor layer_norm_adjacency(const Tensor& adjacency);

/// Parameters of one temporal attention layer.
struct EtalParams {
    Tensor w_q, w_k, w_v;  // [d, d]
    Tensor q_a, k_a, v_a;  // [N, N], undefined when adjacency attention is off

    EtalParams() = default;
    EtalParams(std::size_t feature_dim, std::size_t n_nodes, bool adjacency, Rng& rng);

    bool has_adjacency() const { return q_a.defined(); }
    void collect(ParamList& params, const std::string& prefix) const;
    static std::size_t count(std::size_t feature_dim, std::size_t n_nodes, bool adjacency) {
        return 3 * feature_dim * feature_dim + (adjacency ? 3 * n_nodes * n_nodes : 0);
    }
};

}  // namespace spacetime
