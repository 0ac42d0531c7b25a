#include "spacetime/nn.hpp"

#include <cmath>
#include <random>

namespace spacetime {

std::size_t ParamList::numel() const {
    std::size_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

void ParamList::zero_grad() const {
    for (const auto& [name, t] : items_) {
        Tensor copy = t;
        copy.zero_grad();
    }
}

Tensor ForwardContext::apply_dropout(const Tensor& t) const {
    if (!training || dropout <= 0.0) return t;
    if (rng == nullptr) throw InvalidArgument("dropout requested without a random generator");
    return spacetime::dropout(t, dropout, *rng);
}

Tensor activate(const Tensor& t, Activation act) {
    switch (act) {
        case Activation::SiLU: return silu(t);
        case Activation::ReLU: return relu(t);
        case Activation::None: break;
    }
    return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias, double init_scale) {
    if (in == 0 || out == 0) throw InvalidArgument("Linear: zero-sized layer");
    const double bound = init_scale * std::sqrt(3.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (double& x : w) x = u(rng);
    weight = Tensor::from_vector({in, out}, std::move(w), true);
    if (with_bias) bias = Tensor::zeros({out}, true);
}

Tensor Linear::operator()(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add(y, bias) : y;
}

void Linear::collect(ParamList& params, const std::string& prefix) const {
    params.add(prefix + ".weight", weight);
    if (bias.defined()) params.add(prefix + ".bias", bias);
}

Tensor Mlp::operator()(const Tensor& x, const ForwardContext& ctx) const {
    Tensor y = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        y = layers[i](y);
        if (i + 1 < layers.size()) {
            y = activate(y, hidden);
            if (dropout_hidden) y = ctx.apply_dropout(y);
        } else {
            y = activate(y, final_activation);
        }
    }
    return y;
}

void Mlp::collect(ParamList& params, const std::string& prefix) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
        layers[i].collect(params, prefix + "." + std::to_string(i));
    }
}

}  // namespace spacetime
