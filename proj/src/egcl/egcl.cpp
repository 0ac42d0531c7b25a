#include "spacetime/egcl.hpp"

#include <map>
#include <memory>
#include <mutex>

#include "spacetime/nbody.hpp"

namespace spacetime {

namespace {

constexpr double kCoordInitScale = 1e-3;

Mlp two_layer(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, Activation final_act = Activation::None,
              bool final_bias = true, double final_scale = 1.0) {
    Mlp m;
    m.hidden = Activation::SiLU;
    m.final_activation = final_act;
    m.layers.emplace_back(in, hidden, rng);
    m.layers.emplace_back(hidden, out, rng, final_bias, final_scale);
    return m;
}

void require_graph_shape(const Tensor& t, std::size_t g, std::size_t n, const char* what) {
    if (t.rank() != 3 || t.dim(0) != g || t.dim(1) != n) {
        throw ShapeError(std::string("egcl: ") + what + " has shape " + shape_to_string(t.shape()));
    }
}

}  // namespace

const EdgeIndex& EdgeIndex::complete(std::size_t n_nodes) {
    static std::mutex mutex;
    static std::map<std::size_t, std::unique_ptr<EdgeIndex>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n_nodes];
    if (!slot) {
        slot = std::make_unique<EdgeIndex>();
        slot->n_nodes = n_nodes;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            for (std::size_t j = 0; j < n_nodes; ++j) {
                if (i == j) continue;
                slot->src.push_back(i);
                slot->dst.push_back(j);
                slot->flat.push_back(i * n_nodes + j);
            }
        }
    }
    return *slot;
}

Tensor edge_attrs(const Tensor& adjacency, const Tensor& positions) {
    if (positions.rank() != 3) throw ShapeError("edge_attrs: positions must be [G,N,n]");
    const std::size_t g = positions.dim(0);
    const std::size_t n = positions.dim(1);
    if (adjacency.rank() != 3 || adjacency.dim(0) != g || adjacency.dim(1) != n || adjacency.dim(2) != n) {
        throw ShapeError("edge_attrs: adjacency " + shape_to_string(adjacency.shape()) + " does not match positions " +
                         shape_to_string(positions.shape()));
    }
    const EdgeIndex& idx = EdgeIndex::complete(n);
    const Tensor a = index_select(reshape(adjacency, {g, n * n}), 1, idx.flat);
    const Tensor diff = index_select(positions, 1, idx.src) - index_select(positions, 1, idx.dst);
    const Tensor dist2 = sum(square(diff), -1);
    const Tensor attrs = concat({unsqueeze(a, -1), unsqueeze(dist2, -1)}, -1);
    return reshape(attrs, {g, n, n == 0 ? 0 : n - 1, 2});
}

Tensor build_edge_attrs(const Tensor& adjacency, const Tensor& positions) {
    if (positions.rank() != 2 || adjacency.rank() != 2) {
        throw ShapeError("build_edge_attrs: expected adjacency [N,N] and positions [N,n]");
    }
    const std::size_t n = positions.dim(0);
    if (n < 2) throw InvalidArgument("build_edge_attrs: need at least two nodes");
    if (adjacency.dim(0) != n || adjacency.dim(1) != n) {
        throw ShapeError("build_edge_attrs: adjacency must be [" + std::to_string(n) + "," + std::to_string(n) + "]");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (adjacency.at({i, i}) != 0.0) throw InvalidArgument("build_edge_attrs: adjacency diagonal must be zero");
        for (std::size_t j = i + 1; j < n; ++j) {
            if (adjacency.at({i, j}) != adjacency.at({j, i})) {
                throw InvalidArgument("build_edge_attrs: adjacency must be symmetric");
            }
        }
    }
    const Tensor e = edge_attrs(unsqueeze(adjacency, 0), unsqueeze(positions, 0));
    return reshape(e, {n, n - 1, 2});
}

Egcl::Egcl(std::size_t d, std::size_t hdim, Rng& rng, bool equivariant) : equivariant_(equivariant) {
    const std::size_t edge_in = equivariant ? 2 * d + 2 : 2 * d + 2 * kSpatialDim + 2;
    const std::size_t coord_out = equivariant ? 1 : kSpatialDim;
    phi_e = two_layer(edge_in, hdim, hdim, rng, Activation::SiLU);
    phi_x = two_layer(hdim, hdim, coord_out, rng, Activation::None, false, kCoordInitScale);
    phi_v = two_layer(d, hdim, 1, rng, Activation::None, true, kCoordInitScale);
    // Start as the identity on velocities: phi_v(h) ~= 1.
    Tensor bias = phi_v.layers.back().bias;
    bias.mutable_data()[0] = 1.0;
    phi_h = two_layer(d + hdim, hdim, d, rng);
}

std::size_t Egcl::count(std::size_t d, std::size_t h, bool equivariant) {
    const std::size_t edge_in = equivariant ? 2 * d + 2 : 2 * d + 2 * kSpatialDim + 2;
    const std::size_t coord_out = equivariant ? 1 : kSpatialDim;
    return Linear::count(edge_in, h) + Linear::count(h, h) +     // phi_e
           Linear::count(h, h) + Linear::count(h, coord_out, false) +  // phi_x
           Linear::count(d, h) + Linear::count(h, 1) +            // phi_v
           Linear::count(d + h, h) + Linear::count(h, d);         // phi_h
}

GraphState Egcl::forward(const GraphState& in, const Tensor& edges) const {
    if (in.x.rank() != 3) throw ShapeError("egcl: positions must be [G,N,n]");
    const std::size_t g = in.x.dim(0);
    const std::size_t n = in.x.dim(1);
    const std::size_t sdim = in.x.dim(2);
    require_graph_shape(in.h, g, n, "features");
    require_graph_shape(in.v, g, n, "velocities");
    if (in.v.dim(2) != sdim) throw ShapeError("egcl: velocities and positions differ in spatial dimension");
    if (in.h.dim(2) != phi_v.layers.front().in_features()) throw ShapeError("egcl: feature width mismatch");
    if (!equivariant_ && sdim != kSpatialDim) throw ShapeError("egcl: non-equivariant variant is fixed to 3-D");

    const std::size_t hdim = phi_e.layers.back().out_features();
    Tensor velocity_term;
    Tensor messages;
    if (n < 2) {
        velocity_term = Tensor::zeros({g, n, sdim});
        messages = Tensor::zeros({g, n, hdim});
    } else {
        if (edges.rank() != 4 || edges.dim(0) != g || edges.dim(1) != n || edges.dim(2) != n - 1 || edges.dim(3) != 2) {
            throw ShapeError("egcl: edge attributes have shape " + shape_to_string(edges.shape()));
        }
        const EdgeIndex& idx = EdgeIndex::complete(n);
        const std::size_t ne = idx.size();
        const Tensor e = reshape(edges, {g, ne, 2});
        const Tensor hi = index_select(in.h, 1, idx.src);
        const Tensor hj = index_select(in.h, 1, idx.dst);
        const Tensor xi = index_select(in.x, 1, idx.src);
        const Tensor xj = index_select(in.x, 1, idx.dst);
        const Tensor m = phi_e(equivariant_ ? concat({hi, hj, e}, -1) : concat({hi, hj, xi, xj, e}, -1));
        const Tensor coord = phi_x(m);
        const Tensor trans = equivariant_ ? mul(xi - xj, coord) : coord;
        const double c = 1.0 / static_cast<double>(n - 1);
        velocity_term = scale(sum(reshape(trans, {g, n, n - 1, sdim}), 2), c);
        messages = sum(reshape(m, {g, n, n - 1, hdim}), 2);
    }
    GraphState out;
    out.v = mul(phi_v(in.h), in.v) + velocity_term;
    out.x = in.x + out.v;
    out.h = in.h + phi_h(concat({in.h, messages}, -1));
    return out;
}

void Egcl::collect(ParamList& params, const std::string& prefix) const {
    phi_e.collect(params, prefix + ".phi_e");
    phi_x.collect(params, prefix + ".phi_x");
    phi_v.collect(params, prefix + ".phi_v");
    phi_h.collect(params, prefix + ".phi_h");
}

GraphState spatial_stack(const std::vector<Egcl>& layers, const GraphState& in, const Tensor& adjacency,
                         bool recompute_edges) {
    if (layers.empty()) throw InvalidArgument("spatial_stack: need at least one layer");
    const bool has_edges = in.x.rank() == 3 && in.x.dim(1) >= 2;
    Tensor edges = has_edges ? edge_attrs(adjacency, in.x) : Tensor();
    GraphState state = in;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        if (k > 0 && recompute_edges && has_edges) edges = edge_attrs(adjacency, state.x);
        state = layers[k].forward(state, edges);
    }
    return state;
}

}  // namespace spacetime
