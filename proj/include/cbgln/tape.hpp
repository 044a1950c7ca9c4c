#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cbgln/matrix.hpp"

namespace cbgln {

/// Learnable weight with an additively accumulating gradient buffer.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter(std::string name_, Matrix value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.rows(), value.cols()) {}

    void reset_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to one node of a tape. Cheap to copy; valid until the tape is
/// cleared (which backward() does).
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Receives this node's output gradient and accumulates into its parents'
/// gradients via Tape::accumulate_grad.
using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

/// Ordered record of forward primitives. backward() replays the record in
/// exact reverse order, deposits gradients into bound Parameters, and clears
/// the tape. Single-threaded per instance.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf holding a fixed value; gradients reaching it are dropped.
    Var constant(Matrix value);

    /// Leaf bound to a Parameter; backward() adds into p.grad.
    Var leaf(Parameter& p);

    /// Generic op node. `backward` may be empty for non-differentiable
    /// results. Public so modules (and test fixtures) can extend the
    /// primitive set.
    Var record(Matrix value, std::vector<Var> parents, BackwardFn backward);

    const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }

    /// Adds `g` into the gradient slot of `v` (allocating it on first use).
    /// Only meaningful inside a backward sweep.
    void accumulate_grad(const Var& v, const Matrix& g);

    /// Reverse sweep from a scalar (1x1) loss node. Throws ContractError on a
    /// non-scalar loss. Parameter gradients accumulate additively; call
    /// reset_grad() on the parameters to start a fresh accumulation.
    void backward(const Var& loss);

    std::size_t node_count() const { return nodes_.size(); }
    void clear();

private:
    struct Node {
        Matrix value;
        Matrix grad;  // empty until first accumulation
        std::vector<std::size_t> parents;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

// Taped primitives. Every op validates shapes up front and records the
// matching reverse-mode rule.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);                        // same shape
Var add_row(Var a, Var row);                  // NxC + 1xC broadcast over rows
Var add_const(Var a, const Matrix& c);
Var scale(Var a, double c);
Var hadamard(Var a, Var b);
Var hadamard_const(Var a, const Matrix& mask);  // constant mask, no grad through it
Var mul_row(Var a, Var row);                  // NxC * 1xC broadcast over rows
Var relu(Var a);                              // gradient at exactly 0 is 0
Var abs(Var a);                               // subgradient at 0 is 0
Var tanh(Var a);
Var sigmoid(Var a);
Var row_normalize(Var a);                     // divide each row by its row sum
Var layer_norm_rows(Var a, double epsilon);   // per-row zero mean / unit population variance
Var mean_rows(Var a);                         // NxM -> 1xM column means
Var sum_all(Var a);                           // -> 1x1
Var slice_rows(Var a, std::size_t start, std::size_t end);

}  // namespace cbgln
