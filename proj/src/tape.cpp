#include "mragnn/tape.hpp"

#include "mragnn/error.hpp"

namespace mragnn {

const Matrix& Var::value() const {
    if (tape == nullptr) throw ValidationError("Var: not bound to a tape");
    return tape->value(*this);
}

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) throw ValidationError("Tape: variable belongs to another tape");
    return nodes_[v.id];
}

Var Tape::constant(Matrix value) {
    Node n;
    n.op = "constant";
    n.owned = std::move(value);
    return push(std::move(n));
}

Var Tape::input(Matrix value) {
    Node n;
    n.op = "input";
    n.owned = std::move(value);
    n.requires_grad = gradients_;
    return push(std::move(n));
}

Var Tape::parameter(const std::string& name, const Matrix& value) {
    Node n;
    n.op = "parameter";
    n.external = &value;
    n.requires_grad = gradients_;
    n.param_name = name;
    return push(std::move(n));
}

Var Tape::record(const char* op, Matrix value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.op = op;
    n.owned = std::move(value);
    n.inputs.reserve(inputs.size());
    for (const Var& in : inputs) {
        const Node& src = node(in);
        n.inputs.push_back(in.id);
        n.requires_grad = n.requires_grad || src.requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
}

const Matrix& Tape::value(Var v) const {
    const Node& n = node(v);
    return n.external != nullptr ? *n.external : n.owned;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const char* Tape::op_name(Var v) const { return node(v).op; }

Matrix& Tape::grad_slot(std::size_t id) {
    if (!has_grad_[id]) {
        const Node& n = nodes_[id];
        const Matrix& v = n.external != nullptr ? *n.external : n.owned;
        grads_[id] = Matrix(v.rows(), v.cols());
        has_grad_[id] = true;
    }
    return grads_[id];
}

void Tape::accumulate(std::size_t id, const Matrix& g) {
    if (!nodes_[id].requires_grad) return;
    grad_slot(id) += g;
}

GradientMap Tape::backward(Var loss) {
    const Matrix& v = value(loss);
    if (v.rows() != 1 || v.cols() != 1) {
        throw ShapeError("backward: loss must be 1x1, got " + v.shape_string());
    }
    return backward(loss, Matrix(1, 1, 1.0));
}

GradientMap Tape::backward(Var output, const Matrix& seed) {
    if (differentiated_) throw ValidationError("backward: tape already differentiated; record a new computation");
    const Matrix& out_value = value(output);
    if (!seed.same_shape(out_value)) {
        throw ShapeError("backward: seed " + seed.shape_string() + " does not match output " + out_value.shape_string());
    }
    differentiated_ = true;
    grads_.assign(nodes_.size(), Matrix());
    has_grad_.assign(nodes_.size(), false);
    accumulate(output.id, seed);

    for (std::size_t id = output.id + 1; id-- > 0;) {
        if (!has_grad_[id]) continue;
        Node& n = nodes_[id];
        if (n.backward) n.backward(*this, grads_[id]);
    }

    GradientMap out;
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (n.param_name.empty()) continue;
        const Matrix& pv = *n.external;
        auto [it, inserted] = out.try_emplace(n.param_name, pv.rows(), pv.cols());
        if (!inserted && !it->second.same_shape(pv)) {
            throw ShapeError("backward: parameter '" + n.param_name + "' bound with two shapes");
        }
        if (has_grad_[id]) it->second += grads_[id];
    }
    return out;
}

const Matrix* Tape::grad(Var v) const {
    node(v);
    if (v.id >= has_grad_.size() || !has_grad_[v.id]) return nullptr;
    return &grads_[v.id];
}

} // namespace mragnn
