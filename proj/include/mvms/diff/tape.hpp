#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "mvms/diff/tensor.hpp"

namespace mvms::diff {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records one forward pass. Nodes are appended in evaluation order, so the
/// node list is already a topological order and backward() walks it in
/// reverse exactly once.
///
/// Single writer; build a separate Tape per thread.
class Tape {
public:
    /// Vector-Jacobian product of node `self`: reads grad(self) and the parent
    /// values, accumulates into the parents that need gradients.
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true) {
        nodes_.push_back({std::move(value), {}, requires_grad, nullptr});
        return {this, nodes_.size() - 1};
    }

    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends an op result. requires_grad is inherited from the parents.
    Var record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
        bool needs = false;
        for (const Var& p : parents) needs = needs || nodes_.at(p.id()).requires_grad;
        return push(std::move(value), needs, std::move(backward));
    }

    Var record(Tensor value, const std::vector<Var>& parents, Backward backward) {
        bool needs = false;
        for (const Var& p : parents) needs = needs || nodes_.at(p.id()).requires_grad;
        return push(std::move(value), needs, std::move(backward));
    }

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient of node `id`; zeros if nothing flowed into it.
    const Tensor& grad(std::size_t id) const {
        const Node& n = nodes_.at(id);
        if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
        return n.grad;
    }

    /// Accumulation buffer for a parent's gradient, allocated on first use.
    Tensor& grad_accumulator(std::size_t id) {
        Node& n = nodes_.at(id);
        if (n.grad.size() != n.value.size()) n.grad = Tensor::zeros_like(n.value);
        return n.grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    bool backward_done() const noexcept { return backward_done_; }

    /// Reverse sweep from a scalar root. A tape can be swept once.
    void backward(const Var& root) {
        if (&root.tape() != this) throw TapeError("backward: root belongs to a different tape");
        if (backward_done_) throw TapeError("backward: tape already swept; record a new forward pass");
        if (nodes_.at(root.id()).value.size() != 1) throw TapeError("backward: root must be a scalar");
        backward_done_ = true;
        grad_accumulator(root.id())[0] = 1.0;
        for (std::size_t i = root.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || !n.backward || n.grad.size() != n.value.size()) continue;
            n.backward(*this, i);
        }
    }

private:
    struct Node {
        Tensor value;
        mutable Tensor grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var push(Tensor value, bool needs, Backward backward) {
        nodes_.push_back({std::move(value), {}, needs, needs ? std::move(backward) : Backward{}});
        return {this, nodes_.size() - 1};
    }

    std::deque<Node> nodes_; // deque: references to values stay valid while recording
    bool backward_done_ = false;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

} // namespace mvms::diff
