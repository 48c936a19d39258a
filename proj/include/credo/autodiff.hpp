#pragma once

// Scalar expression tape with reverse-mode differentiation.
//
// Every arithmetic operation on a Var appends one node to its Tape. Nodes are
// stored in creation order, so parents always precede children and a single
// reverse sweep over the arena is a valid reverse-mode pass.
//
// Higher-order derivatives use the same tape: record_gradient() replays the
// reverse pass as new nodes, and the resulting derivative nodes can be
// differentiated again like any other expression.

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace credo {

enum class Op : std::uint8_t {
    constant,
    parameter,
    input,
    add,
    sub,
    mul,
    neg,
    recip,
    exp,
    log,
    tanh,
    relu,
    max,
    abs,
    // Piecewise-constant helpers emitted by recorded reverse passes. Their
    // derivative is zero everywhere.
    step,  // 1 if x > 0 else 0
    sign,  // -1, 0, +1
    ge,    // 1 if a >= b else 0
};

const char* op_name(Op op);

using NodeId = std::uint32_t;
inline constexpr NodeId kNoParent = 0xffffffffu;

struct Node {
    Op op;
    NodeId lhs = kNoParent;
    NodeId rhs = kNoParent;
    double value = 0.0;
};

class MissingBindingError : public std::runtime_error {
public:
    explicit MissingBindingError(NodeId leaf);
    NodeId leaf() const { return leaf_; }

private:
    NodeId leaf_;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives
// and has not been cleared.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    NodeId id() const { return id_; }
    Tape* tape() const { return tape_; }
    double value() const;

private:
    Tape* tape_ = nullptr;
    NodeId id_ = kNoParent;
};

// Leaf partial derivatives keyed by node id.
class GradientVector {
public:
    void set(NodeId leaf, double value) { entries_[leaf] = value; }
    bool contains(NodeId leaf) const { return entries_.count(leaf) != 0; }
    double at(NodeId leaf) const;
    double operator[](const Var& v) const { return at(v.id()); }
    std::size_t size() const { return entries_.size(); }
    const std::map<NodeId, double>& entries() const { return entries_; }

private:
    std::map<NodeId, double> entries_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(double v);
    Var parameter(double v);
    Var input(double v);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var neg(Var a);
    Var recip(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var max(Var a, Var b);
    Var abs(Var a);
    Var step(Var a);
    Var sign(Var a);
    Var ge(Var a, Var b);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[id]; }
    double value(NodeId id) const { return nodes_[id].value; }
    bool is_leaf(NodeId id) const;

    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    // Re-evaluates the graph below `root` with new leaf values. Every input
    // or parameter leaf reachable from root must appear in `bindings`;
    // constants keep their recorded value. The tape itself is not modified.
    double evaluate(Var root, const std::map<NodeId, double>& bindings) const;

    // Numeric reverse pass: adjoint of every node with id <= root.
    std::vector<double> adjoints(Var root) const;

    // Exact partials of root. The result holds an entry for every input and
    // parameter leaf reachable from root plus every leaf in `wrt` (zero when
    // unreachable).
    GradientVector gradient(Var root, std::span<const Var> wrt = {}) const;

    // Records d(root)/d(wrt[k]) as new nodes on this tape. Adjoints are only
    // propagated through nodes that depend on some leaf in `wrt`.
    std::vector<Var> record_gradient(Var root, std::span<const Var> wrt);

    // d^2 root / (d first_wrt d second_wrt[k]), via a recorded first pass.
    GradientVector second_order(Var root, Var first_wrt, std::span<const Var> second_wrt);

    // Symmetrised matrix of second partials with respect to `inputs`.
    Eigen::MatrixXd input_hessian(Var root, std::span<const Var> inputs);

private:
    Var push(Op op, NodeId lhs, NodeId rhs, double value);
    Var unary(Op op, Var a);
    Var binary(Op op, Var a, Var b);

    std::vector<Node> nodes_;
};

inline double Var::value() const { return tape_->value(id_); }

inline Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
inline Var operator-(Var a) { return a.tape()->neg(a); }
inline Var operator+(Var a, double b) { return a + a.tape()->constant(b); }
inline Var operator+(double a, Var b) { return b.tape()->constant(a) + b; }
inline Var operator-(Var a, double b) { return a - a.tape()->constant(b); }
inline Var operator-(double a, Var b) { return b.tape()->constant(a) - b; }
inline Var operator*(Var a, double b) { return a * a.tape()->constant(b); }
inline Var operator*(double a, Var b) { return b.tape()->constant(a) * b; }
inline Var operator/(Var a, Var b) { return a * a.tape()->recip(b); }
inline Var operator/(Var a, double b) { return a * (1.0 / b); }

inline Var exp(Var a) { return a.tape()->exp(a); }
inline Var log(Var a) { return a.tape()->log(a); }
inline Var tanh(Var a) { return a.tape()->tanh(a); }
inline Var relu(Var a) { return a.tape()->relu(a); }
inline Var abs(Var a) { return a.tape()->abs(a); }
inline Var max(Var a, Var b) { return a.tape()->max(a, b); }

// Double overloads so numeric code can share templates with tape code.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

template <class S>
S lift(Tape* tape, double v);

template <>
inline double lift<double>(Tape*, double v) { return v; }

template <>
inline Var lift<Var>(Tape* tape, double v) { return tape->constant(v); }

}  // namespace credo
