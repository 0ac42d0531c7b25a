#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spacetime/error.hpp"

namespace spacetime {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

// One value on the autodiff graph. Leaves own parameters or inputs; every
// other node records its operands and a rule that pushes its gradient back
// into them.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Dense row-major f64 array with optional participation in reverse-mode
/// autodiff. Values are immutable once an op has produced them; only leaves
/// may be written through mutable_data() (parameter updates, data loading).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    // Negative axes count from the back.
    std::size_t dim(int axis) const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    std::vector<double> to_vector() const;
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    // Leaves only. Enabling allocates a zeroed gradient buffer.
    void set_requires_grad(bool flag);
    // Zeros when no gradient has been accumulated yet.
    std::vector<double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Copy of the values as a fresh leaf, disconnected from any tape.
    Tensor detach() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

// Disables tape recording on this thread for its lifetime (evaluation).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// ---- elementwise, with trailing-dimension broadcasting ------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor exp(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

// ---- reductions ---------------------------------------------------------
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- shape manipulation -------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor transpose_last(const Tensor& a);
Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices);
Tensor unsqueeze(const Tensor& a, int axis);

// ---- linear algebra / normalisation ------------------------------------
// Batched product over the last two dimensions; leading dimensions broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
// Max-subtracted softmax over the last dimension.
Tensor softmax_last(const Tensor& a);
// (a - mean) / max(std, eps) over the last dimension, population variance.
Tensor layer_norm_last(const Tensor& a, double eps);
// Inverted dropout; identity when p == 0.
Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

// ---- reverse mode -------------------------------------------------------

/// Topologically ordered record of every node that contributes to a root
/// and requires a gradient. Operands always precede their consumers.
class Tape {
public:
    static Tape record(const Tensor& root);

    std::span<detail::Node* const> nodes() const { return nodes_; }
    // Seeds d(root)/d(root) = 1 and runs every backward rule once, in
    // reverse order. Gradients accumulate into leaves.
    void backward();

private:
    std::shared_ptr<detail::Node> root_;
    std::vector<detail::Node*> nodes_;
};

// Throws ShapeError unless loss is a scalar.
void backward(const Tensor& loss);

struct GradCheckOptions {
    double eps = 1e-5;
    // Relative error uses max(|analytic|, |numeric|, floor) as denominator so
    // that vanishing derivatives are compared absolutely.
    double floor = 1e-6;
};

// Largest relative error between tape gradients of f at `at` and central
// finite differences.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                  GradCheckOptions options = {});

}  // namespace spacetime
