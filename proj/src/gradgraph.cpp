#include "flowlab/gradgraph.hpp"

#include <cmath>

namespace flowlab {

GradGraph::GradGraph(const NetParams& params) : params_(params) {
    params_.validate();
    NodeData leaf;
    leaf.op = Op::params;
    leaf.value = params_.values;
    nodes_.push_back(std::move(leaf));
}

GradGraph::Node GradGraph::push(NodeData nd) {
    nodes_.push_back(std::move(nd));
    return Node{static_cast<int>(nodes_.size()) - 1};
}

const GradGraph::NodeData& GradGraph::at(Node n) const {
    if (n.id < 0 || n.id >= static_cast<int>(nodes_.size()))
        throw ShapeError("invalid graph node");
    return nodes_[static_cast<std::size_t>(n.id)];
}

GradGraph::Node GradGraph::params() { return Node{0}; }

GradGraph::Node GradGraph::constant(Array v) {
    NodeData nd;
    nd.op = Op::constant;
    nd.value = std::move(v);
    return push(std::move(nd));
}

GradGraph::Node GradGraph::mlp(Node p, const Array& x, const std::vector<double>& times) {
    if (at(p).op != Op::params) throw ShapeError("mlp node requires the parameter leaf");
    NodeData nd;
    nd.op = Op::mlp;
    nd.a = p.id;
    nd.mlp_x = x;
    nd.mlp_times = times;
    nd.value = mlp_forward(params_, x, times);
    return push(std::move(nd));
}

GradGraph::Node GradGraph::add(Node a, Node b) {
    NodeData nd;
    nd.op = Op::add;
    nd.a = a.id;
    nd.b = b.id;
    nd.value = at(a).value + at(b).value;
    return push(std::move(nd));
}

GradGraph::Node GradGraph::sub(Node a, Node b) {
    NodeData nd;
    nd.op = Op::sub;
    nd.a = a.id;
    nd.b = b.id;
    nd.value = at(a).value - at(b).value;
    return push(std::move(nd));
}

GradGraph::Node GradGraph::scale(Node a, double c) {
    NodeData nd;
    nd.op = Op::scale;
    nd.a = a.id;
    nd.c = c;
    nd.value = c * at(a).value;
    return push(std::move(nd));
}

GradGraph::Node GradGraph::affine(Node a, double c, Array shift) {
    check_same_size(at(a).value, shift, "affine");
    NodeData nd;
    nd.op = Op::affine;
    nd.a = a.id;
    nd.c = c;
    nd.value = c * at(a).value + shift;
    nd.shift = std::move(shift);
    return push(std::move(nd));
}

GradGraph::Node GradGraph::sum_sq(Node a) {
    NodeData nd;
    nd.op = Op::sum_sq;
    nd.a = a.id;
    nd.value = Array{squared_norm(at(a).value)};
    return push(std::move(nd));
}

GradGraph::Node GradGraph::dot(Node a, Node b) {
    NodeData nd;
    nd.op = Op::dot;
    nd.a = a.id;
    nd.b = b.id;
    nd.value = Array{flowlab::dot(at(a).value, at(b).value)};
    return push(std::move(nd));
}

GradGraph::Node GradGraph::mean(const std::vector<Node>& scalars) {
    if (scalars.empty()) throw DomainError("mean of empty node list");
    NodeData nd;
    nd.op = Op::mean;
    double s = 0.0;
    for (Node n : scalars) {
        if (at(n).value.size() != 1) throw ShapeError("mean expects scalar nodes");
        nd.list.push_back(n.id);
        s += at(n).value.data[0];
    }
    nd.value = Array{s / static_cast<double>(scalars.size())};
    return push(std::move(nd));
}

const Array& GradGraph::value(Node n) const { return at(n).value; }

double GradGraph::scalar_value(Node n) const {
    const Array& v = at(n).value;
    if (v.size() != 1) throw ShapeError("node is not scalar");
    return v.data[0];
}

Array GradGraph::gradient(Node scalar) {
    double loss = scalar_value(scalar);
    if (!std::isfinite(loss)) throw NumericError("loss is not finite");

    std::vector<Array> adj(nodes_.size());
    auto accumulate = [&](int id, const Array& g) {
        if (adj[static_cast<std::size_t>(id)].size() == 0)
            adj[static_cast<std::size_t>(id)] = g;
        else
            axpy(1.0, g, adj[static_cast<std::size_t>(id)]);
    };
    adj[static_cast<std::size_t>(scalar.id)] = Array{1.0};

    for (int id = scalar.id; id >= 0; --id) {
        const NodeData& nd = nodes_[static_cast<std::size_t>(id)];
        const Array& g = adj[static_cast<std::size_t>(id)];
        if (g.size() == 0) continue;  // node not on the path to the loss
        switch (nd.op) {
            case Op::params:
            case Op::constant:
                break;
            case Op::mlp: {
                MlpVjpResult v = mlp_vjp(params_, nd.mlp_x, nd.mlp_times, g);
                accumulate(nd.a, v.wrt_params);
                break;
            }
            case Op::add:
                accumulate(nd.a, g);
                accumulate(nd.b, g);
                break;
            case Op::sub: {
                accumulate(nd.a, g);
                accumulate(nd.b, -1.0 * g);
                break;
            }
            case Op::scale:
            case Op::affine:
                accumulate(nd.a, nd.c * g);
                break;
            case Op::sum_sq:
                accumulate(nd.a, (2.0 * g.data[0]) * nodes_[static_cast<std::size_t>(nd.a)].value);
                break;
            case Op::dot: {
                accumulate(nd.a, g.data[0] * nodes_[static_cast<std::size_t>(nd.b)].value);
                accumulate(nd.b, g.data[0] * nodes_[static_cast<std::size_t>(nd.a)].value);
                break;
            }
            case Op::mean: {
                double w = g.data[0] / static_cast<double>(nd.list.size());
                for (int src : nd.list) accumulate(src, Array{w});
                break;
            }
        }
    }

    Array grad = adj[0].size() ? adj[0] : Array(params_.values.size());
    long bad = grad.first_nonfinite();
    if (bad >= 0) throw NumericError("gradient is not finite", bad);
    return grad;
}

Array grad_reverse(const NetParams& params, const LossBuilder& loss, double* loss_value) {
    GradGraph g(params);
    GradGraph::Node scalar = loss(g);
    if (loss_value) *loss_value = g.scalar_value(scalar);
    return g.gradient(scalar);
}

}  // namespace flowlab
