#include "spacetime/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "spacetime/error.hpp"
#include "spacetime/rng.hpp"

namespace spacetime {

namespace {

using nlohmann::json;

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kDropoutStream = 2;

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

void clip_gradients(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, t] : params.items()) {
        Tensor p = t;
        for (double g : p.mutable_grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (!(norm > max_norm)) return;
    const double factor = max_norm / norm;
    for (const auto& [name, t] : params.items()) {
        Tensor p = t;
        for (double& g : p.mutable_grad()) g *= factor;
    }
}

}  // namespace

Adam::Adam(const ParamList& params, AdamConfig config) : params_(params), config_(config) {
    if (!(config.lr > 0.0)) throw InvalidArgument("adam: learning rate must be positive");
    if (config.weight_decay < 0.0) throw InvalidArgument("adam: weight decay must be non-negative");
    for (const auto& [name, t] : params.items()) {
        m_.emplace_back(t.numel(), 0.0);
        v_.emplace_back(t.numel(), 0.0);
    }
}

void Adam::step() {
    const auto& items = params_.items();
    if (items.size() != m_.size()) throw ShapeError("adam: parameter list changed after construction");
    for (const auto& [name, t] : items) {
        Tensor p = t;
        for (double g : p.mutable_grad()) {
            if (!std::isfinite(g)) {
                throw DivergenceError("non-finite gradient in " + name + " at step " + std::to_string(t_ + 1));
            }
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor p = items[i].second;
        auto w = p.mutable_data();
        auto g = p.mutable_grad();
        auto& m = m_[i];
        auto& v = v_[i];
        if (w.size() != m.size()) throw ShapeError("adam: parameter " + items[i].first + " changed shape");
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] + config_.weight_decay * w[k];
            m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
            v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
            w[k] -= config_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
        }
    }
}

double default_learning_rate(ModelKind kind) {
    switch (kind) {
        case ModelKind::Set: return 4.45e-5;
        case ModelKind::Egnn: return 3.98e-5;
        case ModelKind::Mlp: return 1.75e-5;
        case ModelKind::Linear: return 2.73e-5;
    }
    return 1e-4;
}

double default_weight_decay(ModelKind kind) { return kind == ModelKind::Linear ? 1e-6 : 0.0; }

std::string TrainConfig::to_json() const {
    return json{{"epochs", epochs},   {"batch_size", batch_size}, {"lr", lr},
                {"weight_decay", weight_decay}, {"dropout", dropout}, {"grad_clip", grad_clip},
                {"seed", seed},       {"eval_every", eval_every}, {"checkpoint_path", checkpoint_path.string()}}
        .dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw InvalidArgument("train config must be a JSON object");
        TrainConfig c;
        auto take = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        };
        take("epochs", c.epochs);
        take("batch_size", c.batch_size);
        take("lr", c.lr);
        take("weight_decay", c.weight_decay);
        take("dropout", c.dropout);
        take("grad_clip", c.grad_clip);
        take("seed", c.seed);
        take("eval_every", c.eval_every);
        if (j.contains("checkpoint_path")) c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("train config: ") + e.what());
    }
}

std::string EpochMetrics::to_json() const {
    return json{{"epoch", epoch},           {"train_loss", train_loss}, {"val_pos_mse", val_pos_mse},
                {"val_vel_mse", val_vel_mse}, {"val_mse", val_mse},       {"wall_ms", wall_ms}}
        .dump();
}

EvalMetrics evaluate(const Model& model, const Dataset& dataset, std::size_t batch_size) {
    if (dataset.size() == 0) throw InvalidArgument("evaluate: empty split");
    if (batch_size == 0) throw InvalidArgument("evaluate: batch size must be positive");
    model.config().check_compatible(dataset.config);
    NoGradGuard no_grad;
    double pos = 0.0;
    double vel = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
        const std::size_t end = std::min(dataset.size(), start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch batch = make_batch(dataset, idx);
        const LossParts parts =
            prediction_loss(model.forward(batch), batch.target_x, batch.target_v, model.config().loss_alpha);
        pos += parts.pos_mse * static_cast<double>(idx.size());
        vel += parts.vel_mse * static_cast<double>(idx.size());
    }
    EvalMetrics m;
    m.pos_mse = pos / static_cast<double>(dataset.size());
    m.vel_mse = vel / static_cast<double>(dataset.size());
    m.mse = 0.5 * (m.pos_mse + m.vel_mse);
    m.loss = m.pos_mse + model.config().loss_alpha * m.vel_mse;
    return m;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
    const ModelConfig& mc = model.config();
    mc.check_compatible(train_set.config);
    mc.check_compatible(val_set.config);
    if (train_set.size() == 0) throw InvalidArgument("train: empty training split");
    if (config.batch_size == 0 || config.batch_size > train_set.size()) {
        throw InvalidArgument("train: batch size must lie in [1, " + std::to_string(train_set.size()) + "]");
    }
    if (config.dropout < 0.0 || config.dropout >= 1.0) throw InvalidArgument("train: dropout must lie in [0, 1)");
    if (config.eval_every == 0) throw InvalidArgument("train: eval_every must be positive");

    AdamConfig ac;
    ac.lr = config.lr > 0.0 ? config.lr : default_learning_rate(mc.kind);
    ac.weight_decay = config.weight_decay >= 0.0 ? config.weight_decay : default_weight_decay(mc.kind);
    Adam adam(model.params(), ac);

    Rng dropout_rng(derive_seed(config.seed, kDropoutStream));
    ForwardContext ctx;
    ctx.training = true;
    ctx.dropout = config.dropout;
    ctx.rng = &dropout_rng;

    TrainResult result;
    auto record = [&](EpochMetrics m, const std::chrono::steady_clock::time_point& t0) {
        const EvalMetrics val = evaluate(model, val_set);
        m.val_pos_mse = val.pos_mse;
        m.val_vel_mse = val.vel_mse;
        m.val_mse = val.mse;
        m.wall_ms = elapsed_ms(t0);
        result.history.push_back(m);
        if (on_epoch) on_epoch(m);
        return val.mse;
    };

    auto t0 = std::chrono::steady_clock::now();
    EpochMetrics initial;
    initial.train_loss = evaluate(model, train_set).loss;
    result.best_val_mse = record(initial, t0);
    result.best_epoch = 0;
    auto best = snapshot_params(model);
    if (!config.checkpoint_path.empty()) save_model(config.checkpoint_path, model);

    std::vector<std::size_t> order(train_set.size());
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        t0 = std::chrono::steady_clock::now();
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, kShuffleStream, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const Batch batch = make_batch(train_set, std::span<const std::size_t>(order).subspan(start, end - start));
            const LossParts parts = prediction_loss(model.forward(batch, ctx), batch.target_x, batch.target_v, mc.loss_alpha);
            ++step;
            const double loss = parts.total.item();
            if (!std::isfinite(loss)) {
                throw DivergenceError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                                      std::to_string(epoch) + ")");
            }
            model.params().zero_grad();
            backward(parts.total);
            if (config.grad_clip > 0.0) clip_gradients(model.params(), config.grad_clip);
            adam.step();
            loss_sum += loss * static_cast<double>(end - start);
        }
        if (epoch % config.eval_every != 0 && epoch != config.epochs) continue;
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = loss_sum / static_cast<double>(order.size());
        const double val = record(m, t0);
        if (val < result.best_val_mse) {
            result.best_val_mse = val;
            result.best_epoch = epoch;
            best = snapshot_params(model);
            if (!config.checkpoint_path.empty()) save_model(config.checkpoint_path, model);
        }
    }
    restore_params(model, best);
    return result;
}

}  // namespace spacetime
