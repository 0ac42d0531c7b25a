#include "spacetime/etal.hpp"

#include <cmath>
#include <random>

namespace spacetime {

namespace {

constexpr double kMaskedLogit = -1e30;

void require_series(const Tensor& t, const char* op) {
    if (t.rank() < 2) throw ShapeError(std::string(op) + ": expected [..., L, k], got " + shape_to_string(t.shape()));
}

Tensor masked_softmax(Tensor logits, bool causal) {
    if (causal) logits = logits + causal_mask(logits.dim(-1));
    return softmax_last(logits);
}

Tensor off_diagonal(std::size_t seq_len) {
    std::vector<double> m(seq_len * seq_len, 1.0);
    for (std::size_t t = 0; t < seq_len; ++t) m[t * seq_len + t] = 0.0;
    return Tensor::from_vector({seq_len, seq_len}, std::move(m));
}

Tensor square_weight(std::size_t n, Rng& rng) {
    const double bound = std::sqrt(3.0 / static_cast<double>(n));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(n * n);
    for (double& x : w) x = u(rng);
    return Tensor::from_vector({n, n}, std::move(w), true);
}

}  // namespace

Tensor causal_mask(std::size_t seq_len) {
    std::vector<double> m(seq_len * seq_len, 0.0);
    for (std::size_t t = 0; t < seq_len; ++t) {
        for (std::size_t s = t + 1; s < seq_len; ++s) m[t * seq_len + s] = kMaskedLogit;
    }
    return Tensor::from_vector({seq_len, seq_len}, std::move(m));
}

Tensor feature_attention(const Tensor& theta, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v, bool causal) {
    require_series(theta, "feature_attention");
    const std::size_t d = theta.dim(-1);
    const Tensor q = matmul(theta, w_q);
    const Tensor k = matmul(theta, w_k);
    const Tensor v = matmul(theta, w_v);
    const Tensor alpha = masked_softmax(scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(double(d))), causal);
    return matmul(alpha, v);
}

Tensor position_weights(const Tensor& xi, bool causal) {
    require_series(xi, "position_weights");
    const std::size_t n = xi.dim(-1);
    const Tensor diff = unsqueeze(xi, -2) - unsqueeze(xi, -3);  // [..., L(t), L(s), n]
    const Tensor dist2 = sum(square(diff), -1);
    return masked_softmax(scale(dist2, -1.0 / std::sqrt(double(n))), causal);
}

Tensor position_attention(const Tensor& xi, double coeff, bool causal) {
    const Tensor beta = position_weights(xi, causal);
    const Tensor masked = mul(beta, off_diagonal(xi.dim(-2)));
    const Tensor pulled = matmul(masked, xi);
    const Tensor mass = sum(masked, -1, true);
    return xi + scale(pulled - mul(mass, xi), coeff);
}

Tensor velocity_weights(const Tensor& omega, bool causal) {
    require_series(omega, "velocity_weights");
    const std::size_t n = omega.dim(-1);
    return masked_softmax(scale(matmul(omega, transpose_last(omega)), 1.0 / std::sqrt(double(n))), causal);
}

Tensor velocity_attention(const Tensor& omega, bool causal) { return matmul(velocity_weights(omega, causal), omega); }

Tensor adjacency_attention(const Tensor& adjacency, const Tensor& q_a, const Tensor& k_a, const Tensor& v_a) {
    require_series(adjacency, "adjacency_attention");
    const std::size_t n = adjacency.dim(-1);
    if (adjacency.dim(-2) != n) throw ShapeError("adjacency_attention: slices must be square");
    const Tensor q = matmul(adjacency, q_a);
    const Tensor k = matmul(adjacency, k_a);
    const Tensor v = matmul(adjacency, v_a);
    const Tensor pi = softmax_last(scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(double(n))));
    return matmul(pi, v);
}

Tensor sinusoid_table(std::size_t seq_len, std::size_t width, double kappa) {
    std::vector<double> table(seq_len * width);
    for (std::size_t t = 0; t < seq_len; ++t) {
        for (std::size_t c = 0; c < width; ++c) {
            const std::size_t pair = c / 2;
            const double freq = std::pow(kappa, 2.0 * double(pair) / double(width));
            const double arg = double(t) / freq;
            table[t * width + c] = (c % 2 == 0) ? std::sin(arg) : std::cos(arg);
        }
    }
    return Tensor::from_vector({seq_len, width}, std::move(table));
}

PositionalEncodings PositionalEncodings::build(std::size_t seq_len, std::size_t n_nodes, std::size_t feature_dim,
                                               std::size_t spatial_dim, double kappa) {
    PositionalEncodings pe;
    pe.w = sinusoid_table(seq_len, feature_dim, kappa);
    pe.x = sinusoid_table(seq_len, spatial_dim, kappa);
    pe.y = pe.x;
    pe.z = reshape(sinusoid_table(seq_len, n_nodes * n_nodes, kappa), {seq_len, n_nodes, n_nodes});
    return pe;
}

Tensor layer_norm_features(const Tensor& theta) { return layer_norm_last(theta, kLayerNormEps); }

Tensor layer_norm_adjacency(const Tensor& adjacency) {
    if (adjacency.rank() < 2) throw ShapeError("layer_norm_adjacency: expected [..., N, N]");
    Shape flat(adjacency.shape().begin(), adjacency.shape().end() - 2);
    flat.push_back(adjacency.dim(-1) * adjacency.dim(-2));
    return reshape(layer_norm_last(reshape(adjacency, flat), kLayerNormEps), adjacency.shape());
}

EtalParams::EtalParams(std::size_t feature_dim, std::size_t n_nodes, bool adjacency, Rng& rng) {
    w_q = square_weight(feature_dim, rng);
    w_k = square_weight(feature_dim, rng);
    w_v = square_weight(feature_dim, rng);
    if (adjacency) {
        q_a = square_weight(n_nodes, rng);
        k_a = square_weight(n_nodes, rng);
        v_a = square_weight(n_nodes, rng);
    }
}

void EtalParams::collect(ParamList& params, const std::string& prefix) const {
    params.add(prefix + ".w_q", w_q);
    params.add(prefix + ".w_k", w_k);
    params.add(prefix + ".w_v", w_v);
    if (has_adjacency()) {
        params.add(prefix + ".q_a", q_a);
        params.add(prefix + ".k_a", k_a);
        params.add(prefix + ".v_a", v_a);
    }
}

}  // namespace spacetime
