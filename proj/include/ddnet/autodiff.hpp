#pragma once

#include <functional>
#include <vector>

#include "ddnet/tensor.hpp"

namespace ddnet {

class Tape;

/// Handle to a node on a Tape.
struct Var {
    int id = -1;
};

/// Reverse-mode differentiation tape. Operations record their value and a
/// backward rule; gradients() replays the tape once per loss and returns one
/// gradient per requested leaf (same shape as the leaf, zero if unreachable).
///
/// Conventions: ReLU and |.| use subgradient 0 at the kink; max_const passes
/// gradient only where the input is strictly above the floor.
class Tape {
public:
    Var leaf(Tensor value);
    Var constant(Tensor value) { return leaf(std::move(value)); }

    const Tensor& val(Var v) const { return nodes_[v.id].value; }

    // Elementwise, same-shape operands.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);

    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var concat(const std::vector<Var>& parts);  // rank-1 operands

    Var relu(Var a);
    Var sigmoid(Var a);
    Var tanh_(Var a);
    Var log_(Var a);
    Var abs_(Var a);
    Var softmax(Var a);  // rank-1

    Var scale_const(Var a, double c);
    Var add_const(Var a, double c);
    Var max_const(Var a, double floor);

    // Broadcast a {1}-shaped scalar over a tensor.
    Var add_scalar(Var a, Var s);
    Var mul_scalar(Var a, Var s);

    // Reductions to a {1}-shaped scalar.
    Var sum(Var a);
    Var norm1(Var a);
    Var norm2sq(Var a);
    Var trace(Var a);

    Var inverse(Var a);

    /// Gradients of a scalar loss with respect to the given leaves.
    std::vector<Tensor> gradients(Var loss, const std::vector<Var>& leaves);

    void clear();
    std::size_t node_count() const { return nodes_.size(); }

private:
    using BackFn = std::function<void(Tape&, const Tensor& gout, std::vector<Tensor>& adj)>;
    struct Node {
        Tensor value;
        BackFn back;  // empty for leaves
    };

    Var push(Tensor value, BackFn back);
    static void accumulate(std::vector<Tensor>& adj, int id, const Tensor& g);

    std::vector<Node> nodes_;
};

}  // namespace ddnet
