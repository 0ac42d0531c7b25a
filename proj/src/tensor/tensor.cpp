#include "spacetime/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace spacetime {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    if (requires_grad) node->grad.assign(node->data.size(), 0.0);
    return node;
}

const Node& checked(const Tensor& t, const char* op) {
    if (!t.defined()) throw InvalidArgument(std::string(op) + ": undefined tensor");
    return *t.node();
}

// Builds an op output. The backward rule is only attached when some operand
// participates in the tape.
Tensor make_result(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                   const char* op, std::function<void(Node&)> rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor* t : inputs) needs = needs || t->requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (const Tensor* t : inputs) node->parents.push_back(t->node_ptr());
        node->backward = std::move(rule);
    }
    return Tensor(std::move(node));
}

Tensor make_result_n(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs, const char* op,
                     std::function<void(Node&)> rule) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor& t : inputs) needs = needs || t.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (const Tensor& t : inputs) node->parents.push_back(t.node_ptr());
        node->backward = std::move(rule);
    }
    return Tensor(std::move(node));
}

std::size_t normalize_axis(int axis, std::size_t rank, const char* op) {
    const int r = static_cast<int>(rank);
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) {
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
    }
    return static_cast<std::size_t>(a);
}

// ---- broadcasting ---------------------------------------------------------

struct Broadcast {
    enum class Kind { Same, SuffixB, SuffixA, General };
    Kind kind = Kind::General;
    Shape out;
    std::vector<std::size_t> a_stride;
    std::vector<std::size_t> b_stride;
    std::size_t na = 0;
    std::size_t nb = 0;
};

std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

Shape strip_leading_ones(const Shape& s) {
    std::size_t i = 0;
    while (i < s.size() && s[i] == 1) ++i;
    return Shape(s.begin() + static_cast<std::ptrdiff_t>(i), s.end());
}

bool is_suffix(const Shape& small, const Shape& big) {
    const Shape s = strip_leading_ones(small);
    if (s.size() > big.size()) return false;
    return std::equal(s.begin(), s.end(), big.end() - static_cast<std::ptrdiff_t>(s.size()));
}

Broadcast plan_broadcast(const Shape& a, const Shape& b, const char* op) {
    Broadcast bc;
    bc.na = shape_numel(a);
    bc.nb = shape_numel(b);
    const std::size_t r = std::max(a.size(), b.size());
    bc.out.assign(r, 1);
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t da = k < r - a.size() ? 1 : a[k - (r - a.size())];
        const std::size_t db = k < r - b.size() ? 1 : b[k - (r - b.size())];
        if (da == db || db == 1) {
            bc.out[k] = da;
        } else if (da == 1) {
            bc.out[k] = db;
        } else {
            throw ShapeError(std::string(op) + ": cannot broadcast shapes " + shape_to_string(a) + " and " +
                             shape_to_string(b));
        }
    }
    if (a == b) {
        bc.kind = Broadcast::Kind::Same;
    } else if (a == bc.out && is_suffix(b, bc.out)) {
        bc.kind = Broadcast::Kind::SuffixB;
    } else if (b == bc.out && is_suffix(a, bc.out)) {
        bc.kind = Broadcast::Kind::SuffixA;
    } else {
        bc.kind = Broadcast::Kind::General;
        auto stride_for = [&](const Shape& s) {
            std::vector<std::size_t> st(r, 0);
            const auto cs = contiguous_strides(s);
            for (std::size_t k = 0; k < s.size(); ++k) {
                const std::size_t ok = k + (r - s.size());
                st[ok] = s[k] == 1 ? 0 : cs[k];
            }
            return st;
        };
        bc.a_stride = stride_for(a);
        bc.b_stride = stride_for(b);
    }
    return bc;
}

template <class F>
void for_each_pair(const Broadcast& bc, F&& f) {
    const std::size_t n = shape_numel(bc.out);
    switch (bc.kind) {
        case Broadcast::Kind::Same:
            for (std::size_t o = 0; o < n; ++o) f(o, o, o);
            return;
        case Broadcast::Kind::SuffixB:
            if (bc.nb == 0) return;
            for (std::size_t base = 0; base < n; base += bc.nb) {
                for (std::size_t j = 0; j < bc.nb; ++j) f(base + j, base + j, j);
            }
            return;
        case Broadcast::Kind::SuffixA:
            if (bc.na == 0) return;
            for (std::size_t base = 0; base < n; base += bc.na) {
                for (std::size_t j = 0; j < bc.na; ++j) f(base + j, j, base + j);
            }
            return;
        case Broadcast::Kind::General: {
            if (n == 0) return;
            const std::size_t r = bc.out.size();
            std::vector<std::size_t> idx(r, 0);
            std::size_t ia = 0;
            std::size_t ib = 0;
            for (std::size_t o = 0; o < n; ++o) {
                f(o, ia, ib);
                for (std::size_t k = r; k-- > 0;) {
                    ++idx[k];
                    ia += bc.a_stride[k];
                    ib += bc.b_stride[k];
                    if (idx[k] < bc.out[k]) break;
                    ia -= bc.a_stride[k] * bc.out[k];
                    ib -= bc.b_stride[k] * bc.out[k];
                    idx[k] = 0;
                }
            }
            return;
        }
    }
}

enum class BinaryOp { Add, Sub, Mul, Div };

Tensor binary(const Tensor& a, const Tensor& b, BinaryOp op, const char* name) {
    const Node& na = checked(a, name);
    const Node& nb = checked(b, name);
    auto bc = std::make_shared<Broadcast>(plan_broadcast(na.shape, nb.shape, name));
    std::vector<double> out(shape_numel(bc->out));
    const double* pa = na.data.data();
    const double* pb = nb.data.data();
    double* po = out.data();
    switch (op) {
        case BinaryOp::Add: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] + pb[j]; }); break;
        case BinaryOp::Sub: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] - pb[j]; }); break;
        case BinaryOp::Mul: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] * pb[j]; }); break;
        case BinaryOp::Div: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = pa[i] / pb[j]; }); break;
    }
    return make_result(bc->out, std::move(out), {&a, &b}, name, [bc, op](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        const double* g = self.grad.data();
        const double* xa = A.data.data();
        const double* xb = B.data.data();
        if (A.requires_grad) {
            double* ga = A.ensure_grad().data();
            switch (op) {
                case BinaryOp::Add:
                case BinaryOp::Sub: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += g[o]; }); break;
                case BinaryOp::Mul: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * xb[j]; }); break;
                case BinaryOp::Div: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] / xb[j]; }); break;
            }
        }
        if (B.requires_grad) {
            double* gb = B.ensure_grad().data();
            switch (op) {
                case BinaryOp::Add: for_each_pair(*bc, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] += g[o]; }); break;
                case BinaryOp::Sub: for_each_pair(*bc, [&](std::size_t o, std::size_t, std::size_t j) { gb[j] -= g[o]; }); break;
                case BinaryOp::Mul: for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * xa[i]; }); break;
                case BinaryOp::Div:
                    for_each_pair(*bc, [&](std::size_t o, std::size_t i, std::size_t j) {
                        gb[j] -= g[o] * xa[i] / (xb[j] * xb[j]);
                    });
                    break;
            }
        }
    });
}

// Unary map whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, const char* name, Fwd fwd, Deriv deriv) {
    const Node& na = checked(a, name);
    std::vector<double> out(na.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(na.data[i]);
    return make_result(na.shape, std::move(out), {&a}, name, [deriv](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * deriv(A.data[i], self.data[i]);
    });
}

// ---- matmul kernels ------------------------------------------------------

// C[p,r] += A[p,q] * B[q,r]
void gemm_nn(std::size_t p, std::size_t q, std::size_t r, const double* A, const double* B, double* C) {
    for (std::size_t i = 0; i < p; ++i) {
        double* __restrict c = C + i * r;
        const double* a = A + i * q;
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = a[k];
            const double* __restrict b = B + k * r;
            for (std::size_t j = 0; j < r; ++j) c[j] += aik * b[j];
        }
    }
}

// dA[p,q] += G[p,r] * B[q,r]^T
void gemm_nt(std::size_t p, std::size_t q, std::size_t r, const double* G, const double* B, double* dA) {
    for (std::size_t i = 0; i < p; ++i) {
        const double* __restrict g = G + i * r;
        double* da = dA + i * q;
        for (std::size_t k = 0; k < q; ++k) {
            const double* __restrict b = B + k * r;
            double s = 0.0;
            for (std::size_t j = 0; j < r; ++j) s += g[j] * b[j];
            da[k] += s;
        }
    }
}

// dB[q,r] += A[p,q]^T * G[p,r]
void gemm_tn(std::size_t p, std::size_t q, std::size_t r, const double* A, const double* G, double* dB) {
    for (std::size_t i = 0; i < p; ++i) {
        const double* a = A + i * q;
        const double* __restrict g = G + i * r;
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = a[k];
            double* __restrict db = dB + k * r;
            for (std::size_t j = 0; j < r; ++j) db[j] += aik * g[j];
        }
    }
}

struct MatmulPlan {
    std::size_t p = 0, q = 0, r = 0;
    std::vector<std::size_t> a_offsets;
    std::vector<std::size_t> b_offsets;
    Shape out;
};

MatmulPlan plan_matmul(const Shape& sa, const Shape& sb) {
    if (sa.size() < 2 || sb.size() < 2) {
        throw ShapeError("matmul: operands must have rank >= 2, got " + shape_to_string(sa) + " and " +
                         shape_to_string(sb));
    }
    MatmulPlan plan;
    plan.p = sa[sa.size() - 2];
    plan.q = sa[sa.size() - 1];
    plan.r = sb[sb.size() - 1];
    if (sb[sb.size() - 2] != plan.q) {
        throw ShapeError("matmul: inner extents differ for " + shape_to_string(sa) + " and " + shape_to_string(sb));
    }
    const Shape ba(sa.begin(), sa.end() - 2);
    const Shape bb(sb.begin(), sb.end() - 2);
    Shape batch;
    if (bb.empty()) {
        // Fold every leading dimension of a into the row count.
        batch = ba;
        plan.p *= shape_numel(ba);
        plan.a_offsets = {0};
        plan.b_offsets = {0};
    } else {
        Broadcast bc;
        try {
            bc = plan_broadcast(ba, bb, "matmul");
        } catch (const ShapeError&) {
            throw ShapeError("matmul: batch extents of " + shape_to_string(sa) + " and " + shape_to_string(sb) +
                             " are not broadcastable");
        }
        batch = bc.out;
        const std::size_t a_mat = plan.p * plan.q;
        const std::size_t b_mat = plan.q * plan.r;
        for_each_pair(bc, [&](std::size_t, std::size_t i, std::size_t j) {
            plan.a_offsets.push_back(i * a_mat);
            plan.b_offsets.push_back(j * b_mat);
        });
        if (shape_numel(batch) == 0) {
            plan.a_offsets.clear();
            plan.b_offsets.clear();
        }
    }
    plan.out = batch;
    plan.out.push_back(sa[sa.size() - 2]);
    plan.out.push_back(plan.r);
    return plan;
}

}  // namespace

// ---- Tensor members --------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("from_vector: shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " + std::to_string(values.size()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw InvalidArgument("from_vector: non-finite value");
    }
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_vector({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(*this, "shape").shape; }

std::size_t Tensor::numel() const { return checked(*this, "numel").data.size(); }

std::size_t Tensor::dim(int axis) const { return shape()[normalize_axis(axis, rank(), "dim")]; }

std::span<const double> Tensor::data() const { return checked(*this, "data").data; }

std::span<double> Tensor::mutable_data() {
    checked(*this, "mutable_data");
    if (!node_->parents.empty()) throw InvalidArgument("mutable_data: only leaves may be written");
    return node_->data;
}

std::vector<double> Tensor::to_vector() const { return checked(*this, "to_vector").data; }

double Tensor::item() const {
    const Node& n = checked(*this, "item");
    if (n.data.size() != 1) throw ShapeError("item: tensor of shape " + shape_to_string(n.shape) + " is not a scalar");
    return n.data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    const Node& n = checked(*this, "at");
    if (index.size() != n.shape.size()) throw ShapeError("at: index rank mismatch");
    std::size_t flat = 0;
    std::size_t k = 0;
    for (std::size_t i : index) {
        if (i >= n.shape[k]) throw ShapeError("at: index out of range");
        flat = flat * n.shape[k] + i;
        ++k;
    }
    return n.data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
    checked(*this, "set_requires_grad");
    if (!node_->parents.empty()) throw InvalidArgument("set_requires_grad: only leaves may change tape participation");
    node_->requires_grad = flag;
    if (flag) {
        node_->ensure_grad();
    } else {
        node_->grad.clear();
    }
}

std::vector<double> Tensor::grad() const {
    const Node& n = checked(*this, "grad");
    if (n.grad.size() != n.data.size()) return std::vector<double>(n.data.size(), 0.0);
    return n.grad;
}

std::span<double> Tensor::mutable_grad() {
    checked(*this, "mutable_grad");
    return node_->ensure_grad();
}

void Tensor::zero_grad() {
    checked(*this, "zero_grad");
    std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    const Node& n = checked(*this, "detach");
    return Tensor(make_leaf(n.shape, n.data, false));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Mul, "mul"); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinaryOp::Div, "div"); }

Tensor neg(const Tensor& a) {
    return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
    return unary(a, "scale", [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
    return unary(a, "add_scalar", [value](double x) { return x + value; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor silu(const Tensor& a) {
    return unary(
        a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
        [](double x, double) {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 + x * (1.0 - s));
        });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

// ---- reductions -------------------------------------------------------------

Tensor sum(const Tensor& a, int axis, bool keepdim) {
    const Node& na = checked(a, "sum");
    const std::size_t ax = normalize_axis(axis, na.shape.size(), "sum");
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t k = 0; k < ax; ++k) outer *= na.shape[k];
    for (std::size_t k = ax + 1; k < na.shape.size(); ++k) inner *= na.shape[k];
    const std::size_t n = na.shape[ax];
    Shape out_shape = na.shape;
    if (keepdim) {
        out_shape[ax] = 1;
    } else {
        out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
    }
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
            const double* src = na.data.data() + (o * n + k) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    return make_result(std::move(out_shape), std::move(out), {&a}, "sum", [outer, inner, n](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + o * inner;
            for (std::size_t k = 0; k < n; ++k) {
                double* dst = ga + (o * n + k) * inner;
                for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
            }
        }
    });
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
    const std::size_t n = a.dim(axis);
    if (n == 0) throw ShapeError("mean: empty axis");
    return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(n));
}

Tensor sum_all(const Tensor& a) {
    const Node& na = checked(a, "sum_all");
    double s = 0.0;
    for (double v : na.data) s += v;
    return make_result({}, {s}, {&a}, "sum_all", [](Node& self) {
        Node& A = *self.parents[0];
        auto& ga = A.ensure_grad();
        for (double& g : ga) g += self.grad[0];
    });
}

Tensor mean_all(const Tensor& a) {
    const std::size_t n = a.numel();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

// ---- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    const Node& na = checked(a, "reshape");
    if (shape_numel(shape) != na.data.size()) {
        throw ShapeError("reshape: cannot view " + shape_to_string(na.shape) + " as " + shape_to_string(shape));
    }
    return make_result(std::move(shape), na.data, {&a}, "reshape", [](Node& self) {
        Node& A = *self.parents[0];
        auto& ga = A.ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
}

Tensor unsqueeze(const Tensor& a, int axis) {
    Shape s = a.shape();
    const int r = static_cast<int>(s.size()) + 1;
    const int ax = axis < 0 ? axis + r : axis;
    if (ax < 0 || ax >= r) throw ShapeError("unsqueeze: axis out of range");
    s.insert(s.begin() + ax, 1);
    return reshape(a, std::move(s));
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
    const Node& na = checked(a, "permute");
    const std::size_t r = na.shape.size();
    if (axes.size() != r) throw ShapeError("permute: axis list does not match rank");
    std::vector<bool> seen(r, false);
    for (std::size_t ax : axes) {
        if (ax >= r || seen[ax]) throw ShapeError("permute: invalid axis permutation");
        seen[ax] = true;
    }
    Shape out_shape(r);
    const auto in_stride = contiguous_strides(na.shape);
    std::vector<std::size_t> stride(r);
    for (std::size_t k = 0; k < r; ++k) {
        out_shape[k] = na.shape[axes[k]];
        stride[k] = in_stride[axes[k]];
    }
    const std::size_t n = na.data.size();
    // Source index for every output position.
    auto src = std::make_shared<std::vector<std::size_t>>(n);
    if (n > 0) {
        std::vector<std::size_t> idx(r, 0);
        std::size_t s = 0;
        for (std::size_t o = 0; o < n; ++o) {
            (*src)[o] = s;
            for (std::size_t k = r; k-- > 0;) {
                ++idx[k];
                s += stride[k];
                if (idx[k] < out_shape[k]) break;
                s -= stride[k] * out_shape[k];
                idx[k] = 0;
            }
        }
    }
    std::vector<double> out(n);
    for (std::size_t o = 0; o < n; ++o) out[o] = na.data[(*src)[o]];
    return make_result(std::move(out_shape), std::move(out), {&a}, "permute", [src](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t o = 0; o < self.grad.size(); ++o) ga[(*src)[o]] += self.grad[o];
    });
}

Tensor transpose_last(const Tensor& a) {
    const std::size_t r = a.rank();
    if (r < 2) throw ShapeError("transpose_last: rank must be >= 2");
    std::vector<std::size_t> axes(r);
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    std::swap(axes[r - 1], axes[r - 2]);
    return permute(a, axes);
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t length) {
    const Node& na = checked(a, "slice");
    const std::size_t ax = normalize_axis(axis, na.shape.size(), "slice");
    const std::size_t n = na.shape[ax];
    if (start + length > n) throw ShapeError("slice: range exceeds extent of " + shape_to_string(na.shape));
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t k = 0; k < ax; ++k) outer *= na.shape[k];
    for (std::size_t k = ax + 1; k < na.shape.size(); ++k) inner *= na.shape[k];
    Shape out_shape = na.shape;
    out_shape[ax] = length;
    std::vector<double> out(outer * length * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(na.data.data() + (o * n + start) * inner, length * inner, out.data() + o * length * inner);
    }
    return make_result(std::move(out_shape), std::move(out), {&a}, "slice", [outer, inner, n, start, length](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t o = 0; o < outer; ++o) {
            const double* g = self.grad.data() + o * length * inner;
            double* dst = ga + (o * n + start) * inner;
            for (std::size_t i = 0; i < length * inner; ++i) dst[i] += g[i];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw InvalidArgument("concat: no inputs");
    const Shape& first = checked(parts[0], "concat").shape;
    const std::size_t ax = normalize_axis(axis, first.size(), "concat");
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t k = 0; k < ax; ++k) outer *= first[k];
    for (std::size_t k = ax + 1; k < first.size(); ++k) inner *= first[k];
    auto extents = std::make_shared<std::vector<std::size_t>>();
    std::size_t total = 0;
    for (const Tensor& t : parts) {
        const Shape& s = checked(t, "concat").shape;
        if (s.size() != first.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (k != ax && s[k] != first[k]) {
                throw ShapeError("concat: shapes " + shape_to_string(first) + " and " + shape_to_string(s) +
                                 " differ outside the concatenation axis");
            }
        }
        extents->push_back(s[ax]);
        total += s[ax];
    }
    Shape out_shape = first;
    out_shape[ax] = total;
    std::vector<double> out(outer * total * inner);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const std::size_t len = (*extents)[p] * inner;
        const double* src = parts[p].node()->data.data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(src + o * len, len, out.data() + o * total * inner + offset);
        }
        offset += len;
    }
    return make_result_n(std::move(out_shape), std::move(out), parts, "concat", [extents, outer, inner, total](Node& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            Node& P = *self.parents[p];
            const std::size_t len = (*extents)[p] * inner;
            if (P.requires_grad) {
                double* gp = P.ensure_grad().data();
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* g = self.grad.data() + o * total * inner + off;
                    for (std::size_t i = 0; i < len; ++i) gp[o * len + i] += g[i];
                }
            }
            off += len;
        }
    });
}

Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices) {
    const Node& na = checked(a, "index_select");
    const std::size_t ax = normalize_axis(axis, na.shape.size(), "index_select");
    const std::size_t n = na.shape[ax];
    for (std::size_t i : indices) {
        if (i >= n) throw ShapeError("index_select: index " + std::to_string(i) + " out of range");
    }
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t k = 0; k < ax; ++k) outer *= na.shape[k];
    for (std::size_t k = ax + 1; k < na.shape.size(); ++k) inner *= na.shape[k];
    const std::size_t m = indices.size();
    Shape out_shape = na.shape;
    out_shape[ax] = m;
    std::vector<double> out(outer * m * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < m; ++k) {
            std::copy_n(na.data.data() + (o * n + indices[k]) * inner, inner, out.data() + (o * m + k) * inner);
        }
    }
    auto idx = std::make_shared<std::vector<std::size_t>>(indices);
    return make_result(std::move(out_shape), std::move(out), {&a}, "index_select", [idx, outer, inner, n](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        const std::size_t m = idx->size();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t k = 0; k < m; ++k) {
                const double* g = self.grad.data() + (o * m + k) * inner;
                double* dst = ga + (o * n + (*idx)[k]) * inner;
                for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
            }
        }
    });
}

// ---- matmul / softmax / layer norm / dropout ------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Node& na = checked(a, "matmul");
    const Node& nb = checked(b, "matmul");
    auto plan = std::make_shared<MatmulPlan>(plan_matmul(na.shape, nb.shape));
    const std::size_t out_mat = plan->p * plan->r;
    std::vector<double> out(shape_numel(plan->out), 0.0);
    for (std::size_t k = 0; k < plan->a_offsets.size(); ++k) {
        gemm_nn(plan->p, plan->q, plan->r, na.data.data() + plan->a_offsets[k], nb.data.data() + plan->b_offsets[k],
                out.data() + k * out_mat);
    }
    Shape out_shape = plan->out;
    return make_result(std::move(out_shape), std::move(out), {&a, &b}, "matmul", [plan](Node& self) {
        Node& A = *self.parents[0];
        Node& B = *self.parents[1];
        const std::size_t out_mat = plan->p * plan->r;
        for (std::size_t k = 0; k < plan->a_offsets.size(); ++k) {
            const double* g = self.grad.data() + k * out_mat;
            if (A.requires_grad) {
                gemm_nt(plan->p, plan->q, plan->r, g, B.data.data() + plan->b_offsets[k],
                        A.ensure_grad().data() + plan->a_offsets[k]);
            }
            if (B.requires_grad) {
                gemm_tn(plan->p, plan->q, plan->r, A.data.data() + plan->a_offsets[k], g,
                        B.ensure_grad().data() + plan->b_offsets[k]);
            }
        }
    });
}

Tensor softmax_last(const Tensor& a) {
    const Node& na = checked(a, "softmax_last");
    if (na.shape.empty()) throw ShapeError("softmax_last: scalar input");
    const std::size_t k = na.shape.back();
    if (k == 0) throw ShapeError("softmax_last: empty last dimension");
    const std::size_t rows = na.data.size() / k;
    std::vector<double> out(na.data.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = na.data.data() + r * k;
        double* y = out.data() + r * k;
        const double mx = *std::max_element(x, x + k);
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (std::size_t j = 0; j < k; ++j) y[j] /= z;
    }
    return make_result(na.shape, std::move(out), {&a}, "softmax_last", [k, rows](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * k;
            const double* g = self.grad.data() + r * k;
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
            for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor layer_norm_last(const Tensor& a, double eps) {
    const Node& na = checked(a, "layer_norm_last");
    if (na.shape.empty()) throw ShapeError("layer_norm_last: scalar input");
    const std::size_t k = na.shape.back();
    if (k == 0) throw ShapeError("layer_norm_last: empty last dimension");
    const std::size_t rows = na.data.size() / k;
    std::vector<double> out(na.data.size());
    auto sigma = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = na.data.data() + r * k;
        double mu = 0.0;
        for (std::size_t j = 0; j < k; ++j) mu += x[j];
        mu /= static_cast<double>(k);
        double var = 0.0;
        for (std::size_t j = 0; j < k; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= static_cast<double>(k);
        const double s = std::sqrt(var);
        (*sigma)[r] = s;
        const double denom = std::max(s, eps);
        for (std::size_t j = 0; j < k; ++j) out[r * k + j] = (x[j] - mu) / denom;
    }
    return make_result(na.shape, std::move(out), {&a}, "layer_norm_last", [k, rows, eps, sigma](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        const double inv_k = 1.0 / static_cast<double>(k);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* y = self.data.data() + r * k;
            const double* g = self.grad.data() + r * k;
            double gm = 0.0;
            double gy = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                gm += g[j];
                gy += g[j] * y[j];
            }
            gm *= inv_k;
            gy *= inv_k;
            const double s = (*sigma)[r];
            if (s > eps) {
                for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += (g[j] - gm - y[j] * gy) / s;
            } else {
                for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += (g[j] - gm) / eps;
            }
        }
    });
}

Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw InvalidArgument("dropout: rate must lie in [0, 1)");
    if (p == 0.0) return a;
    const Node& na = checked(a, "dropout");
    std::bernoulli_distribution keep(1.0 - p);
    const double inv = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(na.data.size());
    std::vector<double> out(na.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        (*mask)[i] = keep(rng) ? inv : 0.0;
        out[i] = na.data[i] * (*mask)[i];
    }
    return make_result(na.shape, std::move(out), {&a}, "dropout", [mask](Node& self) {
        Node& A = *self.parents[0];
        double* ga = A.ensure_grad().data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * (*mask)[i];
    });
}

// ---- reverse mode -----------------------------------------------------------

Tape Tape::record(const Tensor& root) {
    Tape tape;
    tape.root_ = root.node_ptr();
    if (!root.requires_grad()) return tape;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS; deep chains (long rollouts) must not recurse.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    visited.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

void Tape::backward() {
    if (nodes_.empty()) return;
    Node* root = nodes_.back();
    root->ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
    // Interior gradients are scratch; only leaves keep theirs.
    for (Node* node : nodes_) {
        if (!node->parents.empty()) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw InvalidArgument("backward: undefined loss");
    if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
    Tape::record(loss).backward();
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& at, GradCheckOptions options) {
    Tensor x = at.detach();
    x.set_requires_grad(true);
    Tensor y = f(x);
    backward(y);
    const std::vector<double> analytic = x.grad();
    const std::vector<double> base = at.to_vector();
    double worst = 0.0;
    NoGradGuard guard;
    for (std::size_t i = 0; i < base.size(); ++i) {
        std::vector<double> plus = base;
        std::vector<double> minus = base;
        plus[i] += options.eps;
        minus[i] -= options.eps;
        const double fp = f(Tensor::from_vector(at.shape(), std::move(plus))).item();
        const double fm = f(Tensor::from_vector(at.shape(), std::move(minus))).item();
        const double numeric = (fp - fm) / (2.0 * options.eps);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
        worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace spacetime
