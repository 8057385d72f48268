#pragma once

#include "mragnn/matrix.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace mragnn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

/// Gradient of a scalar with respect to each named parameter leaf.
using GradientMap = std::map<std::string, Matrix>;

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so ids form a topological order and
/// backward simply walks them in reverse. A tape is single-threaded and may be
/// differentiated once; record a fresh tape for another pass.
class Tape {
public:
    /// Receives the gradient of the node's output and pushes contributions to its inputs.
    using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

    /// With `gradients` false, parameters are recorded as constants and no backward state is kept.
    explicit Tape(bool gradients = true) : gradients_(gradients) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives gradient.
    Var constant(Matrix value);
    /// Leaf that receives gradient (readable with grad()) but is not a named parameter.
    Var input(Matrix value);
    /// Named learnable leaf. The tape keeps a pointer: `value` must outlive the tape.
    Var parameter(const std::string& name, const Matrix& value);

    /// Appends an operation node. `backward` may be empty when no input needs gradient.
    Var record(const char* op, Matrix value, std::vector<Var> inputs, BackwardFn backward);

    const Matrix& value(Var v) const;
    bool requires_grad(Var v) const;
    const char* op_name(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Adds `g` into the gradient slot of node `id` (no-op for nodes without gradient).
    void accumulate(std::size_t id, const Matrix& g);
    /// Mutable gradient slot, zero-initialised on first access.
    Matrix& grad_slot(std::size_t id);

    /// Differentiates a 1x1 output. Rejects non-scalars and repeated calls.
    GradientMap backward(Var loss);
    /// Propagates an explicit upstream gradient from `output` (same shape as its value).
    GradientMap backward(Var output, const Matrix& seed);

    /// Gradient accumulated at any node after backward; null when it received none.
    const Matrix* grad(Var v) const;

private:
    struct Node {
        const char* op = "";
        Matrix owned;
        const Matrix* external = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        std::string param_name;
    };

    Var push(Node node);
    const Node& node(Var v) const;

    std::deque<Node> nodes_;
    std::vector<Matrix> grads_;
    std::vector<bool> has_grad_;
    bool gradients_ = true;
    bool differentiated_ = false;
};

} // namespace mragnn
