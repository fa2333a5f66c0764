#pragma once

#include <functional>
#include <vector>

#include "flowlab/mlp.hpp"

namespace flowlab {

// Reverse-mode gradients of scalar losses w.r.t. one flat parameter vector.
// A loss is built as an expression tree over vector-valued nodes; the only
// differentiable leaf is the parameter vector, everything else enters as a
// constant. This matches the losses in this library: squared distances
// between network outputs and stop-gradient targets.
class GradGraph {
  public:
    struct Node {
        int id = -1;
    };

    explicit GradGraph(const NetParams& params);

    const NetParams& net_params() const { return params_; }

    Node params();                     // the flat parameter vector as a node
    Node constant(Array v);
    // raw MLP applied with parameters taken from `p`; x and times are constants
    Node mlp(Node p, const Array& x, const std::vector<double>& times);
    Node add(Node a, Node b);
    Node sub(Node a, Node b);
    Node scale(Node a, double c);
    Node affine(Node a, double c, Array shift);  // c*a + shift
    Node sum_sq(Node a);                         // scalar node
    Node dot(Node a, Node b);                    // scalar node
    Node mean(const std::vector<Node>& scalars);

    const Array& value(Node n) const;
    double scalar_value(Node n) const;

    // d(scalar)/d(params); throws NumericError on non-finite loss or gradient
    Array gradient(Node scalar);

  private:
    enum class Op { params, constant, mlp, add, sub, scale, affine, sum_sq, dot, mean };
    struct NodeData {
        Op op;
        Array value;
        int a = -1, b = -1;
        std::vector<int> list;
        double c = 0.0;
        Array shift;
        Array mlp_x;
        std::vector<double> mlp_times;
    };

    Node push(NodeData nd);
    const NodeData& at(Node n) const;

    NetParams params_;
    std::vector<NodeData> nodes_;
};

using LossBuilder = std::function<GradGraph::Node(GradGraph&)>;

// dL/dtheta for a scalar loss expressed as a graph over the parameters.
// Optionally reports the loss value through `loss_value`.
Array grad_reverse(const NetParams& params, const LossBuilder& loss, double* loss_value = nullptr);

}  // namespace flowlab
