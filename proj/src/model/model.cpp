#include "spacetime/model.hpp"

#include <cmath>

#include "json.hpp"
#include "spacetime/checkpoint.hpp"
#include "spacetime/error.hpp"
#include "spacetime/nbody.hpp"

namespace spacetime {

namespace {

using nlohmann::json;

constexpr std::size_t kNodeOutputs = 2 * kSpatialDim;

void require_batch(const Batch& batch, const ModelConfig& config) {
    const Tensor& x = batch.x;
    if (x.rank() != 4 || x.dim(1) != config.seq_len || x.dim(2) != config.n_particles || x.dim(3) != kSpatialDim) {
        throw ShapeError("batch positions " + shape_to_string(x.shape()) + " do not match model (L=" +
                         std::to_string(config.seq_len) + ", N=" + std::to_string(config.n_particles) + ")");
    }
    if (batch.v.shape() != x.shape()) throw ShapeError("batch velocities do not match positions");
    if (batch.charges.shape() != Shape{x.dim(0), x.dim(2)}) throw ShapeError("batch charges must be [B,N]");
}

// [B,L,N,k] <-> [B*L,N,k]
Tensor fold_time(const Tensor& t) { return reshape(t, {t.dim(0) * t.dim(1), t.dim(2), t.dim(3)}); }
Tensor unfold_time(const Tensor& t, std::size_t b, std::size_t l) { return reshape(t, {b, l, t.dim(1), t.dim(2)}); }

// [B,L,N,k] <-> [B,N,L,k]
Tensor swap_time_node(const Tensor& t) { return permute(t, {0, 2, 1, 3}); }

Mlp feed_forward(std::size_t width, std::size_t hidden, Rng& rng) {
    Mlp m;
    m.hidden = Activation::ReLU;
    m.dropout_hidden = true;
    m.layers.emplace_back(width, hidden, rng);
    m.layers.emplace_back(hidden, width, rng);
    return m;
}

std::size_t feed_forward_count(std::size_t width, std::size_t hidden) {
    return Linear::count(width, hidden) + Linear::count(hidden, width);
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Set: return "set";
        case ModelKind::Egnn: return "egnn";
        case ModelKind::Mlp: return "mlp";
        case ModelKind::Linear: return "linear";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "set") return ModelKind::Set;
    if (name == "egnn") return ModelKind::Egnn;
    if (name == "mlp") return ModelKind::Mlp;
    if (name == "linear") return ModelKind::Linear;
    throw InvalidArgument("unknown model '" + name + "' (expected set, egnn, mlp or linear)");
}

ModelConfig ModelConfig::defaults(ModelKind kind) {
    ModelConfig c;
    c.kind = kind;
    if (kind == ModelKind::Egnn) {
        c.feature_dim = 64;
        c.hidden_dim = 64;
        c.egcl_layers = 3;
    }
    return c;
}

void ModelConfig::validate() const {
    if (n_particles < 2) throw InvalidArgument("model: n_particles must be at least 2");
    if (seq_len < 1) throw InvalidArgument("model: seq_len must be at least 1");
    if (horizon < 1) throw InvalidArgument("model: horizon must be at least 1");
    if (kind == ModelKind::Set || kind == ModelKind::Egnn) {
        if (feature_dim < 1 || hidden_dim < 1) throw InvalidArgument("model: feature and hidden widths must be positive");
        if (egcl_layers < 1) throw InvalidArgument("model: need at least one EGCL layer");
    }
    if (kind == ModelKind::Set && blocks < 1) throw InvalidArgument("model: need at least one block");
    if (kind == ModelKind::Mlp && (mlp_hidden < 1 || mlp_layers < 1)) {
        throw InvalidArgument("model: MLP needs at least one hidden layer of positive width");
    }
    if (!(loss_alpha > 0.0) || !std::isfinite(loss_alpha)) throw InvalidArgument("model: loss_alpha must be positive");
    if (!std::isfinite(position_coeff)) throw InvalidArgument("model: position_coeff must be finite");
}

void ModelConfig::check_compatible(const DatasetConfig& data) const {
    if (data.n_particles != n_particles || data.seq_len != seq_len || data.horizon != horizon) {
        throw InvalidArgument("model expects N=" + std::to_string(n_particles) + ", L=" + std::to_string(seq_len) +
                              ", H=" + std::to_string(horizon) + " but dataset has N=" +
                              std::to_string(data.n_particles) + ", L=" + std::to_string(data.seq_len) +
                              ", H=" + std::to_string(data.horizon));
    }
}

std::string ModelConfig::to_json() const {
    const json j = {{"model", to_string(kind)},
                    {"n_particles", n_particles},
                    {"seq_len", seq_len},
                    {"horizon", horizon},
                    {"feature_dim", feature_dim},
                    {"hidden_dim", hidden_dim},
                    {"egcl_layers", egcl_layers},
                    {"blocks", blocks},
                    {"equivariant", equivariant},
                    {"temporal_adjacency", temporal_adjacency},
                    {"spatial_attention", spatial_attention},
                    {"temporal_attention", temporal_attention},
                    {"positional_encoding", positional_encoding},
                    {"causal", causal},
                    {"recompute_edges", recompute_edges},
                    {"position_coeff", position_coeff},
                    {"loss_alpha", loss_alpha},
                    {"mlp_hidden", mlp_hidden},
                    {"mlp_layers", mlp_layers},
                    {"seed", seed}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
        ModelConfig c = defaults(model_kind_from_string(j.value("model", std::string("set"))));
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        take("n_particles", c.n_particles);
        take("seq_len", c.seq_len);
        take("horizon", c.horizon);
        take("feature_dim", c.feature_dim);
        take("hidden_dim", c.hidden_dim);
        take("egcl_layers", c.egcl_layers);
        take("blocks", c.blocks);
        take("equivariant", c.equivariant);
        take("temporal_adjacency", c.temporal_adjacency);
        take("spatial_attention", c.spatial_attention);
        take("temporal_attention", c.temporal_attention);
        take("positional_encoding", c.positional_encoding);
        take("causal", c.causal);
        take("recompute_edges", c.recompute_edges);
        take("position_coeff", c.position_coeff);
        take("loss_alpha", c.loss_alpha);
        take("mlp_hidden", c.mlp_hidden);
        take("mlp_layers", c.mlp_layers);
        take("seed", c.seed);
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("model config: ") + e.what());
    }
}

std::size_t closed_form_param_count(const ModelConfig& c) {
    c.validate();
    const std::size_t d = c.feature_dim;
    const std::size_t h = c.hidden_dim;
    switch (c.kind) {
        case ModelKind::Set: {
            const bool adj = c.temporal_attention && c.temporal_adjacency;
            const std::size_t nn = c.n_particles * c.n_particles;
            std::size_t block = feed_forward_count(d, h);
            if (c.spatial_attention) block += c.egcl_layers * Egcl::count(d, h, c.equivariant);
            if (c.temporal_attention) block += EtalParams::count(d, c.n_particles, adj);
            if (adj) block += feed_forward_count(nn, h);
            return Linear::count(1, d) + c.blocks * block;
        }
        case ModelKind::Egnn: return Linear::count(1, d) + c.egcl_layers * Egcl::count(d, h, c.equivariant);
        case ModelKind::Mlp:
            return Linear::count(c.seq_len * kNodeOutputs, c.mlp_hidden) +
                   (c.mlp_layers - 1) * Linear::count(c.mlp_hidden, c.mlp_hidden) +
                   Linear::count(c.mlp_hidden, kNodeOutputs);
        case ModelKind::Linear: return 3;
    }
    return 0;
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices) {
    const DatasetConfig& cfg = dataset.config;
    const std::size_t b = indices.size();
    const std::size_t l = cfg.seq_len;
    const std::size_t n = cfg.n_particles;
    const std::size_t w = n * kSpatialDim;
    if (b == 0) throw InvalidArgument("make_batch: empty index list");
    std::vector<double> x(b * l * w), v(b * l * w), c(b * n), tx(b * w), tv(b * w);
    for (std::size_t k = 0; k < b; ++k) {
        if (indices[k] >= dataset.size()) throw InvalidArgument("make_batch: trajectory index out of range");
        const Trajectory& traj = dataset.trajectories[indices[k]];
        for (std::size_t t = 0; t < l; ++t) {
            const auto xs = traj.positions_at(t + 1);
            const auto vs = traj.velocities_at(t + 1);
            std::copy(xs.begin(), xs.end(), x.begin() + (k * l + t) * w);
            std::copy(vs.begin(), vs.end(), v.begin() + (k * l + t) * w);
        }
        std::copy(traj.charges.begin(), traj.charges.end(), c.begin() + k * n);
        const auto xt = traj.positions_at(l + cfg.horizon);
        const auto vt = traj.velocities_at(l + cfg.horizon);
        std::copy(xt.begin(), xt.end(), tx.begin() + k * w);
        std::copy(vt.begin(), vt.end(), tv.begin() + k * w);
    }
    Batch batch;
    batch.x = Tensor::from_vector({b, l, n, kSpatialDim}, std::move(x));
    batch.v = Tensor::from_vector({b, l, n, kSpatialDim}, std::move(v));
    batch.charges = Tensor::from_vector({b, n}, std::move(c));
    batch.target_x = Tensor::from_vector({b, n, kSpatialDim}, std::move(tx));
    batch.target_v = Tensor::from_vector({b, n, kSpatialDim}, std::move(tv));
    return batch;
}

Tensor charge_adjacency(const Tensor& charges) {
    if (charges.rank() != 2) throw ShapeError("charge_adjacency: charges must be [B,N]");
    const std::size_t b = charges.dim(0);
    const std::size_t n = charges.dim(1);
    const auto c = charges.data();
    std::vector<double> a(b * n * n, 0.0);
    for (std::size_t k = 0; k < b; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) a[(k * n + i) * n + j] = c[k * n + i] * c[k * n + j];
            }
        }
    }
    return Tensor::from_vector({b, n, n}, std::move(a));
}

LossParts prediction_loss(const Prediction& pred, const Tensor& target_x, const Tensor& target_v, double alpha) {
    if (pred.x.shape() != target_x.shape() || pred.v.shape() != target_v.shape()) {
        throw ShapeError("loss: prediction " + shape_to_string(pred.x.shape()) + " vs target " +
                         shape_to_string(target_x.shape()));
    }
    const Tensor pos = mean_all(square(pred.x - target_x));
    const Tensor vel = mean_all(square(pred.v - target_v));
    LossParts parts;
    parts.total = pos + scale(vel, alpha);
    parts.pos_mse = pos.item();
    parts.vel_mse = vel.item();
    return parts;
}

// ---- SET --------------------------------------------------------------------

SetModel::SetModel(ModelConfig config) : Model(std::move(config)) {
    const ModelConfig& c = config_;
    c.validate();
    Rng rng(mix_seed(c.seed));
    const std::size_t d = c.feature_dim;
    const std::size_t nn = c.n_particles * c.n_particles;
    embed = Linear(1, d, rng);
    embed.collect(params_, "embed");
    blocks.resize(c.blocks);
    for (std::size_t m = 0; m < c.blocks; ++m) {
        SetBlock& blk = blocks[m];
        const std::string prefix = "block" + std::to_string(m);
        if (c.spatial_attention) {
            for (std::size_t k = 0; k < c.egcl_layers; ++k) {
                blk.egcl.emplace_back(d, c.hidden_dim, rng, c.equivariant);
                blk.egcl.back().collect(params_, prefix + ".egcl" + std::to_string(k));
            }
        }
        if (c.temporal_attention) {
            blk.etal = EtalParams(d, c.n_particles, adjacency_attention_on(), rng);
            blk.etal.collect(params_, prefix + ".etal");
        }
        blk.f_theta = feed_forward(d, c.hidden_dim, rng);
        blk.f_theta.collect(params_, prefix + ".f_theta");
        if (adjacency_attention_on()) {
            blk.f_adj = feed_forward(nn, c.hidden_dim, rng);
            blk.f_adj.collect(params_, prefix + ".f_adj");
        }
    }
    if (c.positional_encoding) {
        encodings_ = PositionalEncodings::build(c.seq_len, c.n_particles, d, kSpatialDim);
    }
}

Tensor SetModel::embed_features(const Tensor& v) const { return embed(sqrt(sum(square(v), -1, true))); }

BlockOutputs SetModel::block_forward(const SetBlock& block, const BlockOutputs& in, const ForwardContext& ctx) const {
    const ModelConfig& c = config_;
    const std::size_t b = in.xi.dim(0);
    const std::size_t l = in.xi.dim(1);
    BlockOutputs s = in;
    if (c.spatial_attention) {
        const GraphState folded{fold_time(in.theta), fold_time(in.xi), fold_time(in.omega)};
        const GraphState out = spatial_stack(block.egcl, folded, fold_time(in.adjacency), c.recompute_edges);
        s.theta = unfold_time(out.h, b, l);
        s.xi = unfold_time(out.x, b, l);
        s.omega = unfold_time(out.v, b, l);
    }
    if (c.temporal_attention) {
        Tensor theta = swap_time_node(s.theta);
        Tensor xi = swap_time_node(s.xi);
        Tensor omega = swap_time_node(s.omega);
        if (c.positional_encoding) {
            theta = theta + encodings_.w;
            xi = xi + encodings_.x;
            omega = omega + encodings_.y;
        }
        s.theta = swap_time_node(feature_attention(theta, block.etal.w_q, block.etal.w_k, block.etal.w_v, c.causal));
        s.xi = swap_time_node(position_attention(xi, c.position_coeff, c.causal));
        s.omega = swap_time_node(velocity_attention(omega, c.causal));
        if (adjacency_attention_on()) {
            const Tensor a = c.positional_encoding ? s.adjacency + encodings_.z : s.adjacency;
            s.adjacency = adjacency_attention(a, block.etal.q_a, block.etal.k_a, block.etal.v_a);
        }
    }
    s.theta = block.f_theta(layer_norm_features(s.theta), ctx) + s.theta;
    if (adjacency_attention_on()) {
        const std::size_t n = c.n_particles;
        const Tensor flat = reshape(layer_norm_adjacency(s.adjacency), {b, l, n * n});
        s.adjacency = reshape(block.f_adj(flat, ctx), {b, l, n, n}) + s.adjacency;
    }
    return s;
}

BlockOutputs SetModel::forward_blocks(const Batch& batch, const ForwardContext& ctx) const {
    require_batch(batch, config_);
    const std::size_t b = batch.size();
    const std::size_t l = config_.seq_len;
    const std::size_t n = config_.n_particles;
    BlockOutputs s;
    s.theta = embed_features(batch.v);
    s.xi = batch.x;
    s.omega = batch.v;
    const Tensor a = unsqueeze(charge_adjacency(batch.charges), 1);
    s.adjacency = add(Tensor::zeros({b, l, n, n}), a);
    for (const SetBlock& blk : blocks) s = block_forward(blk, s, ctx);
    return s;
}

Prediction SetModel::forward(const Batch& batch, const ForwardContext& ctx) const {
    const BlockOutputs s = forward_blocks(batch, ctx);
    return {mean(s.xi, 1), mean(s.omega, 1)};
}

// ---- baselines --------------------------------------------------------------

EgnnModel::EgnnModel(ModelConfig config) : Model(std::move(config)) {
    const ModelConfig& c = config_;
    c.validate();
    Rng rng(mix_seed(c.seed));
    embed = Linear(1, c.feature_dim, rng);
    embed.collect(params_, "embed");
    for (std::size_t k = 0; k < c.egcl_layers; ++k) {
        layers.emplace_back(c.feature_dim, c.hidden_dim, rng, c.equivariant);
        layers.back().collect(params_, "egcl" + std::to_string(k));
    }
}

Prediction EgnnModel::forward(const Batch& batch, const ForwardContext&) const {
    require_batch(batch, config_);
    const std::size_t b = batch.size();
    const std::size_t l = config_.seq_len;
    const std::size_t n = config_.n_particles;
    const Tensor h = embed(sqrt(sum(square(batch.v), -1, true)));
    const Tensor adj = reshape(add(Tensor::zeros({b, l, n, n}), unsqueeze(charge_adjacency(batch.charges), 1)),
                               {b * l, n, n});
    const GraphState out =
        spatial_stack(layers, GraphState{fold_time(h), fold_time(batch.x), fold_time(batch.v)}, adj,
                      config_.recompute_edges);
    return {mean(unfold_time(out.x, b, l), 1), mean(unfold_time(out.v, b, l), 1)};
}

MlpModel::MlpModel(ModelConfig config) : Model(std::move(config)) {
    const ModelConfig& c = config_;
    c.validate();
    Rng rng(mix_seed(c.seed));
    net.hidden = Activation::ReLU;
    net.layers.emplace_back(c.seq_len * kNodeOutputs, c.mlp_hidden, rng);
    for (std::size_t i = 1; i < c.mlp_layers; ++i) net.layers.emplace_back(c.mlp_hidden, c.mlp_hidden, rng);
    net.layers.emplace_back(c.mlp_hidden, kNodeOutputs, rng);
    net.collect(params_, "mlp");
}

Prediction MlpModel::forward(const Batch& batch, const ForwardContext& ctx) const {
    require_batch(batch, config_);
    const std::size_t b = batch.size();
    const std::size_t l = config_.seq_len;
    const std::size_t n = config_.n_particles;
    const Tensor window = swap_time_node(concat({batch.x, batch.v}, -1));  // [B,N,L,6]
    const Tensor out = net(reshape(window, {b, n, l * kNodeOutputs}), ctx);
    return {slice(out, -1, 0, kSpatialDim), slice(out, -1, kSpatialDim, kSpatialDim)};
}

LinearModel::LinearModel(ModelConfig config) : Model(std::move(config)) {
    config_.validate();
    alpha = Tensor::from_vector({1}, {0.0}, true);
    beta = Tensor::from_vector({1}, {1.0}, true);
    gamma = Tensor::from_vector({1}, {0.0}, true);
    params_.add("alpha", alpha);
    params_.add("beta", beta);
    params_.add("gamma", gamma);
}

Prediction LinearModel::forward(const Batch& batch, const ForwardContext&) const {
    require_batch(batch, config_);
    const std::size_t l = config_.seq_len;
    const Tensor x = reshape(slice(batch.x, 1, l - 1, 1), {batch.size(), config_.n_particles, kSpatialDim});
    const Tensor v = reshape(slice(batch.v, 1, l - 1, 1), {batch.size(), config_.n_particles, kSpatialDim});
    // After k steps v(k) = beta^k v + gamma S_k with S_k = sum_{j<k} beta^j,
    // so x(H) = x + alpha (S_H v + gamma sum_{k<H} S_k).
    Tensor power = Tensor::from_vector({1}, {1.0});
    Tensor s = Tensor::zeros({1});
    Tensor s_sum = Tensor::zeros({1});
    for (std::size_t k = 0; k < config_.horizon; ++k) {
        s_sum = s_sum + s;
        s = s + power;
        power = power * beta;
    }
    Prediction p;
    p.v = power * v + gamma * s;
    p.x = x + alpha * (s * v + gamma * s_sum);
    return p;
}

std::unique_ptr<Model> make_model(const ModelConfig& config) {
    switch (config.kind) {
        case ModelKind::Set: return std::make_unique<SetModel>(config);
        case ModelKind::Egnn: return std::make_unique<EgnnModel>(config);
        case ModelKind::Mlp: return std::make_unique<MlpModel>(config);
        case ModelKind::Linear: return std::make_unique<LinearModel>(config);
    }
    throw InvalidArgument("make_model: unknown kind");
}

std::vector<std::vector<double>> snapshot_params(const Model& model) {
    std::vector<std::vector<double>> out;
    for (const auto& [name, t] : model.params().items()) out.push_back(t.to_vector());
    return out;
}

void restore_params(const Model& model, const std::vector<std::vector<double>>& snapshot) {
    const auto& items = model.params().items();
    if (snapshot.size() != items.size()) throw ShapeError("restore_params: snapshot has wrong parameter count");
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor t = items[i].second;
        auto dst = t.mutable_data();
        if (snapshot[i].size() != dst.size()) throw ShapeError("restore_params: size mismatch for " + items[i].first);
        std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
    }
}

void save_model(const std::filesystem::path& path, const Model& model) {
    Checkpoint ck;
    for (const auto& [name, t] : model.params().items()) ck.arrays.push_back({name, t.detach()});
    ck.metadata = model.config().to_json();
    write_checkpoint(path, ck);
}

std::unique_ptr<Model> load_model(const std::filesystem::path& path) {
    const Checkpoint ck = read_checkpoint(path);
    auto model = make_model(ModelConfig::from_json(ck.metadata));
    for (const auto& [name, param] : model->params().items()) {
        const Tensor* stored = ck.find(name);
        if (stored == nullptr) throw FormatError(path.string() + ": missing parameter " + name);
        if (stored->shape() != param.shape()) {
            throw FormatError(path.string() + ": parameter " + name + " has shape " + shape_to_string(stored->shape()) +
                              ", expected " + shape_to_string(param.shape()));
        }
        Tensor dst = param;
        const auto src = stored->data();
        std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
    if (ck.arrays.size() != model->params().items().size()) {
        throw FormatError(path.string() + ": checkpoint holds parameters the model does not define");
    }
    return model;
}

}  // namespace spacetime
