#ifndef HMC_NN_TAPE_HPP
#define HMC_NN_TAPE_HPP

#include <deque>
#include <functional>
#include <string>
#include <utility>

#include "hmc/error.hpp"
#include "hmc/mesh.hpp"

namespace hmc::nn {

using hmc::Matrix;

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int id() const { return id_; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    int id_ = -1;
};

/// Linear record of 2-D operations for reverse-mode differentiation.
/// Nodes are appended in evaluation order, so a reverse sweep over ids is a
/// valid topological order.
class Tape {
public:
    using Backprop = std::function<void(const Matrix& upstream)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value) { return push(std::move(value), false, nullptr); }
    Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

    /// Records an op result. `backprop` runs only when some input needs a
    /// gradient; it must route `upstream` into its inputs via accumulate().
    template <typename... Inputs>
    Var record(Matrix value, Backprop backprop, const Inputs&... inputs) {
        const bool needs = (... || requires_grad(inputs));
        return push(std::move(value), needs, needs ? std::move(backprop) : Backprop{});
    }

    bool requires_grad(const Var& v) const { return node(v).requires_grad; }

    void accumulate(const Var& v, const Matrix& g) {
        Node& n = node(v);
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    template <typename Expr>
    void accumulate_expr(const Var& v, const Expr& g) {
        Node& n = node(v);
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    /// Reverse sweep from a scalar output.
    void backward(const Var& output) {
        if (!output.valid() || output.tape_ != this) {
            throw MisuseError("backward called on a value that was not recorded on this tape");
        }
        const Node& out = node(output);
        if (out.value.rows() != 1 || out.value.cols() != 1) {
            throw MisuseError("backward needs a scalar output");
        }
        if (backward_done_) {
            throw MisuseError("backward already ran on this tape");
        }
        backward_done_ = true;
        node(output).grad = Matrix::Ones(1, 1);
        for (int id = output.id_; id >= 0; --id) {
            Node& n = nodes_[static_cast<std::size_t>(id)];
            if (n.grad.size() == 0 || !n.backprop) continue;
            n.backprop(n.grad);
        }
    }

    /// Gradient of the last backward() output with respect to `v`.
    Matrix grad(const Var& v) const {
        if (!backward_done_) {
            throw MisuseError("gradient requested before backward");
        }
        const Node& n = node(v);
        if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
        return n.grad;
    }

    const Matrix& value(const Var& v) const { return node(v).value; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        Backprop backprop;
    };

    Var push(Matrix value, bool requires_grad, Backprop backprop) {
        if (backward_done_) {
            throw MisuseError("cannot record on a tape after backward");
        }
        nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backprop)});
        return Var(this, static_cast<int>(nodes_.size()) - 1);
    }

    Node& node(const Var& v) {
        check(v);
        return nodes_[static_cast<std::size_t>(v.id_)];
    }
    const Node& node(const Var& v) const {
        check(v);
        return nodes_[static_cast<std::size_t>(v.id_)];
    }
    void check(const Var& v) const {
        if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size()) {
            throw MisuseError("value belongs to a different tape");
        }
    }

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

inline const Matrix& Var::value() const {
    if (tape_ == nullptr) throw MisuseError("use of an unrecorded value");
    return tape_->value(*this);
}

}  // namespace hmc::nn

#endif  // HMC_NN_TAPE_HPP
