#include "spacetime/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "spacetime/egcl.hpp"
#include "spacetime/etal.hpp"
#include "spacetime/model.hpp"

namespace spacetime::verify {

namespace {

constexpr std::size_t kDim = 3;
constexpr double kSetCoordGain = 1e2;

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    const auto x = a.data();
    const auto y = b.data();
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
    return m;
}

double max_abs_diff(const std::vector<double>& x, const Tensor& b) {
    return max_abs_diff(Tensor::from_vector(b.shape(), x), b);
}

std::array<double, 3> random_translation(Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    return {g(rng), g(rng), g(rng)};
}

Tensor random_charges(std::size_t b, std::size_t n, Rng& rng) {
    std::bernoulli_distribution coin(0.5);
    std::vector<double> c(b * n);
    for (double& x : c) x = coin(rng) ? 1.0 : -1.0;
    return Tensor::from_vector({b, n}, std::move(c));
}

// The coordinate head starts near zero; scale it up so the coordinate path
// contributes visibly to the checks.
void amplify_coordinate_heads(const ParamList& params, double factor) {
    for (const auto& [name, t] : params.items()) {
        if (name.find("phi_x.1.weight") == std::string::npos) continue;
        Tensor w = t;
        for (double& x : w.mutable_data()) x *= factor;
    }
}

std::vector<Egcl> random_egcl_stack(std::size_t layers, std::size_t d, std::size_t h, Rng& rng) {
    std::vector<Egcl> stack;
    ParamList params;
    for (std::size_t k = 0; k < layers; ++k) {
        stack.emplace_back(d, h, rng);
        stack.back().collect(params, "egcl" + std::to_string(k));
    }
    amplify_coordinate_heads(params, 1e3);
    return stack;
}

std::unique_ptr<SetModel> random_set(const SuiteOptions& o, std::uint64_t seed) {
    ModelConfig c;
    c.n_particles = o.n_particles;
    c.seq_len = o.seq_len;
    c.horizon = std::max<std::size_t>(o.seq_len + 1, 10 * o.seq_len);
    c.feature_dim = o.feature_dim;
    c.hidden_dim = o.hidden_dim;
    c.egcl_layers = 2;
    c.blocks = 2;
    c.seed = seed;
    auto model = std::make_unique<SetModel>(c);
    amplify_coordinate_heads(model->params(), kSetCoordGain);
    return model;
}

Batch random_batch(std::size_t b, std::size_t l, std::size_t n, Rng& rng) {
    Batch batch;
    batch.x = random_normal({b, l, n, kDim}, rng);
    batch.v = random_normal({b, l, n, kDim}, rng);
    batch.charges = random_charges(b, n, rng);
    return batch;
}

PropertyResult finish(std::string name, double deviation, double tolerance) {
    return {std::move(name), deviation, tolerance, std::isfinite(deviation) && deviation <= tolerance};
}

double egcl_isometry(const SuiteOptions& o, Rng& rng, int det_sign) {
    double dev = 0.0;
    const std::size_t n = o.n_particles;
    for (std::size_t trial = 0; trial < o.trials; ++trial) {
        const auto stack = random_egcl_stack(2, o.feature_dim, o.hidden_dim, rng);
        const GraphState in{random_normal({1, n, o.feature_dim}, rng), random_normal({1, n, kDim}, rng),
                            random_normal({1, n, kDim}, rng)};
        const Tensor a = charge_adjacency(random_charges(1, n, rng));
        const Mat3 q = random_orthogonal(rng, det_sign);
        const auto b = random_translation(rng);
        const GraphState out = spatial_stack(stack, in, a);
        const GraphState moved = spatial_stack(stack, {in.h, apply_isometry(in.x, q, b), apply_isometry(in.v, q)}, a);
        dev = std::max({dev, max_abs_diff(moved.h, out.h), max_abs_diff(moved.x, apply_isometry(out.x, q, b)),
                        max_abs_diff(moved.v, apply_isometry(out.v, q))});
    }
    return dev;
}

double egcl_permutation(const SuiteOptions& o, Rng& rng) {
    double dev = 0.0;
    const std::size_t n = o.n_particles;
    for (std::size_t trial = 0; trial < o.trials; ++trial) {
        const auto stack = random_egcl_stack(2, o.feature_dim, o.hidden_dim, rng);
        const GraphState in{random_normal({1, n, o.feature_dim}, rng), random_normal({1, n, kDim}, rng),
                            random_normal({1, n, kDim}, rng)};
        const Tensor a = charge_adjacency(random_charges(1, n, rng));
        const auto perm = random_permutation(n, rng);
        const GraphState out = spatial_stack(stack, in, a);
        const GraphState p{permute_axis(in.h, 1, perm), permute_axis(in.x, 1, perm), permute_axis(in.v, 1, perm)};
        const GraphState moved = spatial_stack(stack, p, permute_axis(permute_axis(a, 1, perm), 2, perm));
        dev = std::max({dev, max_abs_diff(moved.h, permute_axis(out.h, 1, perm)),
                        max_abs_diff(moved.x, permute_axis(out.x, 1, perm)),
                        max_abs_diff(moved.v, permute_axis(out.v, 1, perm))});
    }
    return dev;
}

}  // namespace

double determinant(const Mat3& q) {
    return q[0] * (q[4] * q[8] - q[5] * q[7]) - q[1] * (q[3] * q[8] - q[5] * q[6]) + q[2] * (q[3] * q[7] - q[4] * q[6]);
}

Mat3 random_orthogonal(Rng& rng, int det_sign) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat3 q{};
    for (std::size_t r = 0; r < 3; ++r) {
        for (;;) {
            double row[3] = {g(rng), g(rng), g(rng)};
            for (std::size_t p = 0; p < r; ++p) {
                const double dot = row[0] * q[p * 3] + row[1] * q[p * 3 + 1] + row[2] * q[p * 3 + 2];
                for (std::size_t c = 0; c < 3; ++c) row[c] -= dot * q[p * 3 + c];
            }
            const double norm = std::sqrt(row[0] * row[0] + row[1] * row[1] + row[2] * row[2]);
            if (norm < 1e-6) continue;
            for (std::size_t c = 0; c < 3; ++c) q[r * 3 + c] = row[c] / norm;
            break;
        }
    }
    if ((determinant(q) > 0.0) != (det_sign > 0)) {
        for (std::size_t c = 0; c < 3; ++c) q[c] = -q[c];
    }
    return q;
}

Tensor apply_isometry(const Tensor& x, const Mat3& q, const std::array<double, 3>& b) {
    if (x.rank() < 1 || x.dim(-1) != kDim) throw ShapeError("apply_isometry: trailing extent must be 3");
    const Tensor qt = Tensor::from_vector({3, 3}, {q[0], q[3], q[6], q[1], q[4], q[7], q[2], q[5], q[8]});
    Tensor y = matmul(x.rank() == 1 ? reshape(x, {1, kDim}) : x, qt);
    if (x.rank() == 1) y = reshape(y, {kDim});
    if (b[0] != 0.0 || b[1] != 0.0 || b[2] != 0.0) y = y + Tensor::from_vector({kDim}, {b[0], b[1], b[2]});
    return y;
}

std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

Tensor permute_axis(const Tensor& t, int axis, const std::vector<std::size_t>& perm) {
    return index_select(t, axis, perm);
}

Tensor random_normal(Shape shape, Rng& rng, double stddev) {
    std::normal_distribution<double> g(0.0, stddev);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = g(rng);
    return Tensor::from_vector(std::move(shape), std::move(v));
}

std::vector<double> loop_feature_attention(const std::vector<double>& theta, std::size_t n, std::size_t l,
                                           std::size_t d, const std::vector<double>& w_q,
                                           const std::vector<double>& w_k, const std::vector<double>& w_v) {
    std::vector<double> out(n * l * d, 0.0);
    auto project = [&](const std::vector<double>& w, std::size_t i, std::size_t t, std::size_t c) {
        double acc = 0.0;
        for (std::size_t e = 0; e < d; ++e) acc += theta[(i * l + t) * d + e] * w[e * d + c];
        return acc;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < l; ++t) {
            std::vector<double> logits(l);
            for (std::size_t s = 0; s < l; ++s) {
                double dot = 0.0;
                for (std::size_t c = 0; c < d; ++c) dot += project(w_q, i, t, c) * project(w_k, i, s, c);
                logits[s] = dot / std::sqrt(double(d));
            }
            const double top = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& x : logits) z += (x = std::exp(x - top));
            for (std::size_t s = 0; s < l; ++s) {
                for (std::size_t c = 0; c < d; ++c) out[(i * l + t) * d + c] += logits[s] / z * project(w_v, i, s, c);
            }
        }
    }
    return out;
}

std::vector<double> loop_position_attention(const std::vector<double>& xi, std::size_t n, std::size_t l,
                                            std::size_t dim, double coeff) {
    std::vector<double> out(xi);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < l; ++t) {
            std::vector<double> logits(l);
            for (std::size_t s = 0; s < l; ++s) {
                double d2 = 0.0;
                for (std::size_t c = 0; c < dim; ++c) {
                    const double diff = xi[(i * l + t) * dim + c] - xi[(i * l + s) * dim + c];
                    d2 += diff * diff;
                }
                logits[s] = -d2 / std::sqrt(double(dim));
            }
            const double top = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& x : logits) z += (x = std::exp(x - top));
            for (std::size_t s = 0; s < l; ++s) {
                if (s == t) continue;
                for (std::size_t c = 0; c < dim; ++c) {
                    out[(i * l + t) * dim + c] +=
                        coeff * logits[s] / z * (xi[(i * l + s) * dim + c] - xi[(i * l + t) * dim + c]);
                }
            }
        }
    }
    return out;
}

std::vector<double> loop_velocity_attention(const std::vector<double>& omega, std::size_t n, std::size_t l,
                                            std::size_t dim) {
    std::vector<double> out(omega.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < l; ++t) {
            std::vector<double> logits(l);
            for (std::size_t s = 0; s < l; ++s) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dim; ++c) dot += omega[(i * l + t) * dim + c] * omega[(i * l + s) * dim + c];
                logits[s] = dot / std::sqrt(double(dim));
            }
            const double top = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& x : logits) z += (x = std::exp(x - top));
            for (std::size_t s = 0; s < l; ++s) {
                for (std::size_t c = 0; c < dim; ++c) out[(i * l + t) * dim + c] += logits[s] / z * omega[(i * l + s) * dim + c];
            }
        }
    }
    return out;
}

std::vector<double> loop_adjacency_attention(const std::vector<double>& a, std::size_t l, std::size_t n,
                                             const std::vector<double>& q_a, const std::vector<double>& k_a,
                                             const std::vector<double>& v_a) {
    std::vector<double> out(l * n * n, 0.0);
    for (std::size_t t = 0; t < l; ++t) {
        const double* at = a.data() + t * n * n;
        auto product = [&](const std::vector<double>& w, std::size_t r, std::size_t c) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += at[r * n + k] * w[k * n + c];
            return acc;
        };
        for (std::size_t r = 0; r < n; ++r) {
            std::vector<double> logits(n);
            for (std::size_t s = 0; s < n; ++s) {
                double dot = 0.0;
                for (std::size_t c = 0; c < n; ++c) dot += product(q_a, r, c) * product(k_a, s, c);
                logits[s] = dot / std::sqrt(double(n));
            }
            const double top = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& x : logits) z += (x = std::exp(x - top));
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t c = 0; c < n; ++c) out[(t * n + r) * n + c] += logits[s] / z * product(v_a, s, c);
            }
        }
    }
    return out;
}

std::vector<PropertyResult> run_property_suite(const SuiteOptions& o) {
    if (o.trials == 0) throw InvalidArgument("verify: trials must be positive");
    if (o.n_particles < 2 || o.seq_len < 1 || o.feature_dim < 1 || o.hidden_dim < 1) {
        throw InvalidArgument("verify: sizes must be positive with at least two particles");
    }
    const double tol = o.tolerance;
    const std::size_t n = o.n_particles;
    const std::size_t l = o.seq_len;
    std::vector<PropertyResult> results;
    Rng rng(mix_seed(o.seed));

    results.push_back(finish("egcl_rotation_equivariance", egcl_isometry(o, rng, +1), tol));
    results.push_back(finish("egcl_reflection_equivariance", egcl_isometry(o, rng, -1), tol));
    results.push_back(finish("egcl_permutation_equivariance", egcl_permutation(o, rng), tol));

    {
        double pos = 0.0, vel = 0.0, logits = 0.0, rows = 0.0;
        for (std::size_t trial = 0; trial < o.trials; ++trial) {
            const int sign = trial % 2 == 0 ? 1 : -1;
            const Mat3 q = random_orthogonal(rng, sign);
            const auto b = random_translation(rng);
            const Tensor xi = random_normal({n, l, kDim}, rng);
            const Tensor omega = random_normal({n, l, kDim}, rng);
            pos = std::max(pos, max_abs_diff(position_attention(apply_isometry(xi, q, b), 0.5),
                                             apply_isometry(position_attention(xi, 0.5), q, b)));
            vel = std::max(vel, max_abs_diff(velocity_attention(apply_isometry(omega, q)),
                                             apply_isometry(velocity_attention(omega), q)));
            logits = std::max(logits, max_abs_diff(velocity_weights(apply_isometry(omega, q)), velocity_weights(omega)));
            for (const Tensor& w : {position_weights(xi), velocity_weights(omega)}) {
                const Tensor s = sum(w, -1);
                for (double x : s.data()) rows = std::max(rows, std::abs(x - 1.0));
            }
        }
        results.push_back(finish("etal_position_equivariance", pos, tol));
        results.push_back(finish("etal_velocity_equivariance", vel, tol));
        results.push_back(finish("etal_velocity_weight_invariance", logits, tol));
        results.push_back(finish("etal_weight_rows_sum_to_one", rows, tol));
    }

    {
        // Fixed small sizes keep the quadratic loops cheap.
        const std::size_t tn = 4, tl = 5, td = 6;
        double feat = 0.0, pos = 0.0, vel = 0.0, adj = 0.0;
        for (std::size_t trial = 0; trial < o.trials; ++trial) {
            const Tensor theta = random_normal({tn, tl, td}, rng);
            const Tensor wq = random_normal({td, td}, rng, 0.5), wk = random_normal({td, td}, rng, 0.5),
                         wv = random_normal({td, td}, rng, 0.5);
            const Tensor xi = random_normal({tn, tl, kDim}, rng);
            const Tensor omega = random_normal({tn, tl, kDim}, rng);
            const Tensor a = random_normal({tl, tn, tn}, rng);
            const Tensor qa = random_normal({tn, tn}, rng, 0.5), ka = random_normal({tn, tn}, rng, 0.5),
                         va = random_normal({tn, tn}, rng, 0.5);
            feat = std::max(feat, max_abs_diff(loop_feature_attention(theta.to_vector(), tn, tl, td, wq.to_vector(),
                                                                       wk.to_vector(), wv.to_vector()),
                                               feature_attention(theta, wq, wk, wv)));
            pos = std::max(pos, max_abs_diff(loop_position_attention(xi.to_vector(), tn, tl, kDim, 0.5),
                                             position_attention(xi, 0.5)));
            vel = std::max(vel, max_abs_diff(loop_velocity_attention(omega.to_vector(), tn, tl, kDim),
                                             velocity_attention(omega)));
            adj = std::max(adj, max_abs_diff(loop_adjacency_attention(a.to_vector(), tl, tn, qa.to_vector(),
                                                                      ka.to_vector(), va.to_vector()),
                                             adjacency_attention(a, qa, ka, va)));
        }
        results.push_back(finish("etal_feature_matches_loop", feat, tol));
        results.push_back(finish("etal_position_matches_loop", pos, tol));
        results.push_back(finish("etal_velocity_matches_loop", vel, tol));
        results.push_back(finish("etal_adjacency_matches_loop", adj, tol));
    }

    {
        double dev = 0.0;
        for (std::size_t trial = 0; trial < o.trials; ++trial) {
            const auto perm = random_permutation(n, rng);
            const std::size_t d = o.feature_dim;
            const Tensor theta = random_normal({n, l, d}, rng);
            const Tensor wq = random_normal({d, d}, rng, 0.5), wk = random_normal({d, d}, rng, 0.5),
                         wv = random_normal({d, d}, rng, 0.5);
            const Tensor xi = random_normal({n, l, kDim}, rng);
            const Tensor omega = random_normal({n, l, kDim}, rng);
            const Tensor a = random_normal({l, n, n}, rng);
            const Tensor qa = random_normal({n, n}, rng, 0.5), ka = random_normal({n, n}, rng, 0.5),
                         va = random_normal({n, n}, rng, 0.5);
            auto conj = [&](const Tensor& m) { return permute_axis(permute_axis(m, -2, perm), -1, perm); };
            dev = std::max({dev,
                            max_abs_diff(feature_attention(permute_axis(theta, 0, perm), wq, wk, wv),
                                         permute_axis(feature_attention(theta, wq, wk, wv), 0, perm)),
                            max_abs_diff(position_attention(permute_axis(xi, 0, perm), 0.5),
                                         permute_axis(position_attention(xi, 0.5), 0, perm)),
                            max_abs_diff(velocity_attention(permute_axis(omega, 0, perm)),
                                         permute_axis(velocity_attention(omega), 0, perm)),
                            max_abs_diff(adjacency_attention(conj(a), conj(qa), conj(ka), conj(va)),
                                         conj(adjacency_attention(a, qa, ka, va)))});
        }
        results.push_back(finish("etal_permutation_equivariance", dev, tol));
    }

    {
        double equi = 0.0, inv = 0.0, perm_dev = 0.0;
        for (std::size_t trial = 0; trial < o.trials; ++trial) {
            const auto model = random_set(o, rng());
            const Batch batch = random_batch(2, l, n, rng);
            const Mat3 q = random_orthogonal(rng, trial % 2 == 0 ? 1 : -1);
            const auto b = random_translation(rng);
            const BlockOutputs out = model->forward_blocks(batch);
            Batch moved = batch;
            moved.x = apply_isometry(batch.x, q, b);
            moved.v = apply_isometry(batch.v, q);
            const BlockOutputs out2 = model->forward_blocks(moved);
            equi = std::max({equi, max_abs_diff(mean(out2.xi, 1), apply_isometry(mean(out.xi, 1), q, b)),
                             max_abs_diff(mean(out2.omega, 1), apply_isometry(mean(out.omega, 1), q))});
            inv = std::max(inv, max_abs_diff(out2.theta, out.theta));

            const auto perm = random_permutation(n, rng);
            Batch permuted = batch;
            permuted.x = permute_axis(batch.x, 2, perm);
            permuted.v = permute_axis(batch.v, 2, perm);
            permuted.charges = permute_axis(batch.charges, 1, perm);
            const Prediction p = model->forward(batch);
            const Prediction pp = model->forward(permuted);
            perm_dev = std::max({perm_dev, max_abs_diff(pp.x, permute_axis(p.x, 1, perm)),
                                 max_abs_diff(pp.v, permute_axis(p.v, 1, perm))});
        }
        results.push_back(finish("set_isometry_equivariance", equi, tol));
        results.push_back(finish("set_feature_invariance", inv, tol));
        results.push_back(finish("set_permutation_equivariance", perm_dev, tol));
    }

    {
        double spread = 0.0;
        for (ModelKind kind : {ModelKind::Set, ModelKind::Egnn, ModelKind::Mlp, ModelKind::Linear}) {
            ModelConfig c = ModelConfig::defaults(kind);
            const double base = double(closed_form_param_count(c));
            for (std::size_t count_n : {5, 20, 30}) {
                c.n_particles = count_n;
                spread = std::max(spread, std::abs(double(closed_form_param_count(c)) - base));
            }
        }
        results.push_back(finish("param_count_constant_in_n", spread, tol));
    }

    {
        // The four ablation rows, each run once on a random batch.
        double bad = 0.0;
        struct Flags {
            bool equivariant, adjacency, satt, tatt;
        };
        for (const Flags f : {Flags{true, false, true, true}, Flags{false, false, true, true},
                              Flags{true, true, true, true}, Flags{true, false, true, false}}) {
            ModelConfig c;
            c.n_particles = n;
            c.seq_len = l;
            c.feature_dim = o.feature_dim;
            c.hidden_dim = o.hidden_dim;
            c.blocks = 1;
            c.equivariant = f.equivariant;
            c.temporal_adjacency = f.adjacency;
            c.spatial_attention = f.satt;
            c.temporal_attention = f.tatt;
            c.seed = rng();
            const auto model = make_model(c);
            Batch batch = random_batch(2, l, n, rng);
            batch.target_x = random_normal({2, n, kDim}, rng);
            batch.target_v = random_normal({2, n, kDim}, rng);
            NoGradGuard guard;
            const double loss = prediction_loss(model->forward(batch), batch.target_x, batch.target_v, 1.0).total.item();
            if (!std::isfinite(loss)) bad = std::numeric_limits<double>::infinity();
        }
        results.push_back(finish("ablation_rows_finite_loss", bad, tol));
    }
    return results;
}

}  // namespace spacetime::verify
