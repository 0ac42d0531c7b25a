#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "spacetime/rng.hpp"
#include "spacetime/tensor.hpp"

namespace spacetime {

// Ordered (name, parameter) pairs. Names are stable and double as checkpoint
// keys, so the order of registration defines the on-disk layout.
class ParamList {
public:
    void add(std::string name, const Tensor& t) { items_.emplace_back(std::move(name), t); }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::size_t numel() const;
    void zero_grad() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Training-time switches threaded through a forward pass. Dropout draws from
// rng only when training is set and dropout > 0.
struct ForwardContext {
    bool training = false;
    double dropout = 0.0;
    Rng* rng = nullptr;

    Tensor apply_dropout(const Tensor& t) const;
};

enum class Activation { None, SiLU, ReLU };

Tensor activate(const Tensor& t, Activation act);

/// y = x W + b with W: [in, out]. Weights are drawn uniformly with variance
/// 1/in; biases start at zero.
struct Linear {
    Tensor weight;
    Tensor bias;  // undefined when constructed without bias

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true, double init_scale = 1.0);

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    Tensor operator()(const Tensor& x) const;
    void collect(ParamList& params, const std::string& prefix) const;

    static std::size_t count(std::size_t in, std::size_t out, bool with_bias = true) {
        return in * out + (with_bias ? out : 0);
    }
};

/// Stack of Linear layers with an activation between consecutive layers.
/// `final_activation` is applied after the last layer as well when set.
struct Mlp {
    std::vector<Linear> layers;
    Activation hidden = Activation::SiLU;
    Activation final_activation = Activation::None;
    // Dropout (from the context) after every hidden activation.
    bool dropout_hidden = false;

    Tensor operator()(const Tensor& x, const ForwardContext& ctx = {}) const;
    void collect(ParamList& params, const std::string& prefix) const;
};

}  // namespace spacetime
