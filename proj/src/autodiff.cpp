#include "credo/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace credo {

const char* op_name(Op op) {
    switch (op) {
        case Op::constant: return "constant";
        case Op::parameter: return "parameter";
        case Op::input: return "input";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::neg: return "neg";
        case Op::recip: return "recip";
        case Op::exp: return "exp";
        case Op::log: return "log";
        case Op::tanh: return "tanh";
        case Op::relu: return "relu";
        case Op::max: return "max";
        case Op::abs: return "abs";
        case Op::step: return "step";
        case Op::sign: return "sign";
        case Op::ge: return "ge";
    }
    return "?";
}

MissingBindingError::MissingBindingError(NodeId leaf)
    : std::runtime_error("unbound leaf node " + std::to_string(leaf)), leaf_(leaf) {}

double GradientVector::at(NodeId leaf) const {
    auto it = entries_.find(leaf);
    if (it == entries_.end()) {
        throw std::out_of_range("no gradient entry for node " + std::to_string(leaf));
    }
    return it->second;
}

namespace {

double apply(Op op, double a, double b) {
    switch (op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        case Op::mul: return a * b;
        case Op::neg: return -a;
        case Op::recip: return 1.0 / a;
        case Op::exp: return std::exp(a);
        case Op::log: return std::log(a);
        case Op::tanh: return std::tanh(a);
        case Op::relu: return a > 0.0 ? a : 0.0;
        case Op::max: return a >= b ? a : b;
        case Op::abs: return std::fabs(a);
        case Op::step: return a > 0.0 ? 1.0 : 0.0;
        case Op::sign: return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0);
        case Op::ge: return a >= b ? 1.0 : 0.0;
        default: break;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

bool is_leaf_op(Op op) {
    return op == Op::constant || op == Op::parameter || op == Op::input;
}

}  // namespace

bool Tape::is_leaf(NodeId id) const { return is_leaf_op(nodes_[id].op); }

Var Tape::push(Op op, NodeId lhs, NodeId rhs, double value) {
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(Node{op, lhs, rhs, value});
    return Var(this, id);
}

Var Tape::constant(double v) { return push(Op::constant, kNoParent, kNoParent, v); }
Var Tape::parameter(double v) { return push(Op::parameter, kNoParent, kNoParent, v); }
Var Tape::input(double v) { return push(Op::input, kNoParent, kNoParent, v); }

Var Tape::unary(Op op, Var a) {
    return push(op, a.id(), kNoParent, apply(op, nodes_[a.id()].value, 0.0));
}

Var Tape::binary(Op op, Var a, Var b) {
    return push(op, a.id(), b.id(), apply(op, nodes_[a.id()].value, nodes_[b.id()].value));
}

Var Tape::add(Var a, Var b) { return binary(Op::add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::mul, a, b); }
Var Tape::neg(Var a) { return unary(Op::neg, a); }
Var Tape::recip(Var a) { return unary(Op::recip, a); }
Var Tape::exp(Var a) { return unary(Op::exp, a); }
Var Tape::log(Var a) { return unary(Op::log, a); }
Var Tape::tanh(Var a) { return unary(Op::tanh, a); }
Var Tape::relu(Var a) { return unary(Op::relu, a); }
Var Tape::max(Var a, Var b) { return binary(Op::max, a, b); }
Var Tape::abs(Var a) { return unary(Op::abs, a); }
Var Tape::step(Var a) { return unary(Op::step, a); }
Var Tape::sign(Var a) { return unary(Op::sign, a); }
Var Tape::ge(Var a, Var b) { return binary(Op::ge, a, b); }

double Tape::evaluate(Var root, const std::map<NodeId, double>& bindings) const {
    const NodeId n = root.id() + 1;
    std::vector<char> reachable(n, 0);
    reachable[root.id()] = 1;
    for (NodeId i = n; i-- > 0;) {
        if (!reachable[i]) continue;
        const Node& node = nodes_[i];
        if (node.lhs != kNoParent) reachable[node.lhs] = 1;
        if (node.rhs != kNoParent) reachable[node.rhs] = 1;
    }

    std::vector<double> values(n, 0.0);
    for (NodeId i = 0; i < n; ++i) {
        if (!reachable[i]) continue;
        const Node& node = nodes_[i];
        switch (node.op) {
            case Op::constant:
                values[i] = node.value;
                break;
            case Op::parameter:
            case Op::input: {
                auto it = bindings.find(i);
                if (it == bindings.end()) throw MissingBindingError(i);
                values[i] = it->second;
                break;
            }
            default:
                values[i] = apply(node.op, values[node.lhs],
                                  node.rhs == kNoParent ? 0.0 : values[node.rhs]);
        }
    }
    return values[root.id()];
}

std::vector<double> Tape::adjoints(Var root) const {
    const NodeId n = root.id() + 1;
    std::vector<double> adj(n, 0.0);
    adj[root.id()] = 1.0;
    for (NodeId i = n; i-- > 0;) {
        const double a = adj[i];
        if (a == 0.0) continue;
        const Node& node = nodes_[i];
        switch (node.op) {
            case Op::add:
                adj[node.lhs] += a;
                adj[node.rhs] += a;
                break;
            case Op::sub:
                adj[node.lhs] += a;
                adj[node.rhs] -= a;
                break;
            case Op::mul:
                adj[node.lhs] += a * nodes_[node.rhs].value;
                adj[node.rhs] += a * nodes_[node.lhs].value;
                break;
            case Op::neg:
                adj[node.lhs] -= a;
                break;
            case Op::recip:
                adj[node.lhs] -= a * node.value * node.value;
                break;
            case Op::exp:
                adj[node.lhs] += a * node.value;
                break;
            case Op::log:
                adj[node.lhs] += a / nodes_[node.lhs].value;
                break;
            case Op::tanh:
                adj[node.lhs] += a * (1.0 - node.value * node.value);
                break;
            case Op::relu:
                if (nodes_[node.lhs].value > 0.0) adj[node.lhs] += a;
                break;
            case Op::max:
                if (nodes_[node.lhs].value >= nodes_[node.rhs].value) {
                    adj[node.lhs] += a;
                } else {
                    adj[node.rhs] += a;
                }
                break;
            case Op::abs: {
                const double x = nodes_[node.lhs].value;
                if (x > 0.0) adj[node.lhs] += a;
                else if (x < 0.0) adj[node.lhs] -= a;
                break;
            }
            default:
                break;
        }
    }
    return adj;
}

GradientVector Tape::gradient(Var root, std::span<const Var> wrt) const {
    const auto adj = adjoints(root);
    const NodeId n = root.id() + 1;

    std::vector<char> reachable(n, 0);
    reachable[root.id()] = 1;
    for (NodeId i = n; i-- > 0;) {
        if (!reachable[i]) continue;
        const Node& node = nodes_[i];
        if (node.lhs != kNoParent) reachable[node.lhs] = 1;
        if (node.rhs != kNoParent) reachable[node.rhs] = 1;
    }

    GradientVector out;
    for (NodeId i = 0; i < n; ++i) {
        if (reachable[i] && (nodes_[i].op == Op::input || nodes_[i].op == Op::parameter)) {
            out.set(i, adj[i]);
        }
    }
    for (const Var& v : wrt) {
        if (v.id() < n) {
            out.set(v.id(), adj[v.id()]);
        } else {
            out.set(v.id(), 0.0);
        }
    }
    return out;
}

std::vector<Var> Tape::record_gradient(Var root, std::span<const Var> wrt) {
    const NodeId n = root.id() + 1;
    // Nothing recorded before the earliest wrt leaf can depend on it, so the
    // scans below start there; this keeps per-sample calls on a long tape cheap.
    NodeId base = n;
    for (const Var& v : wrt) base = std::min(base, v.id());
    const NodeId span_len = n - base;

    // Forward dependency mask: which nodes are functions of some wrt leaf.
    std::vector<char> depends(span_len, 0);
    auto dep = [&](NodeId id) { return id != kNoParent && id >= base && depends[id - base]; };
    for (const Var& v : wrt) {
        if (v.id() < n) depends[v.id() - base] = 1;
    }
    for (NodeId i = base; i < n; ++i) {
        const Node& node = nodes_[i];
        if (is_leaf_op(node.op)) continue;
        if (dep(node.lhs) || dep(node.rhs)) depends[i - base] = 1;
    }

    constexpr NodeId kNone = kNoParent;
    std::vector<NodeId> adj(span_len, kNone);
    const Var one = constant(1.0);
    if (span_len > 0) adj[root.id() - base] = one.id();

    auto accumulate = [&](NodeId target, Var contribution) {
        if (!dep(target)) return;
        NodeId& slot = adj[target - base];
        if (slot == kNone) {
            slot = contribution.id();
        } else {
            slot = add(Var(this, slot), contribution).id();
        }
    };
    // Multiplies by the adjoint, skipping the seed's unit factor.
    auto scaled = [&](Var a, Var factor) { return a.id() == one.id() ? factor : mul(a, factor); };

    for (NodeId i = n; i-- > base;) {
        if (adj[i - base] == kNone || !depends[i - base]) continue;
        // Copy: the node vector may reallocate as contributions are pushed.
        const Node node = nodes_[i];
        if (is_leaf_op(node.op)) continue;
        const Var a(this, adj[i - base]);
        const Var self(this, i);
        const Var lhs(this, node.lhs);
        const Var rhs(this, node.rhs);
        switch (node.op) {
            case Op::add:
                accumulate(node.lhs, a);
                accumulate(node.rhs, a);
                break;
            case Op::sub:
                accumulate(node.lhs, a);
                if (dep(node.rhs)) accumulate(node.rhs, neg(a));
                break;
            case Op::mul:
                if (dep(node.lhs)) accumulate(node.lhs, scaled(a, rhs));
                if (dep(node.rhs)) accumulate(node.rhs, scaled(a, lhs));
                break;
            case Op::neg:
                accumulate(node.lhs, neg(a));
                break;
            case Op::recip:
                accumulate(node.lhs, neg(scaled(a, mul(self, self))));
                break;
            case Op::exp:
                accumulate(node.lhs, scaled(a, self));
                break;
            case Op::log:
                accumulate(node.lhs, scaled(a, recip(lhs)));
                break;
            case Op::tanh:
                accumulate(node.lhs, scaled(a, sub(constant(1.0), mul(self, self))));
                break;
            case Op::relu:
                accumulate(node.lhs, scaled(a, step(lhs)));
                break;
            case Op::max: {
                const Var first = ge(lhs, rhs);
                if (dep(node.lhs)) accumulate(node.lhs, scaled(a, first));
                if (dep(node.rhs)) accumulate(node.rhs, scaled(a, sub(constant(1.0), first)));
                break;
            }
            case Op::abs:
                accumulate(node.lhs, scaled(a, sign(lhs)));
                break;
            default:
                // step, sign, ge: zero derivative.
                break;
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& v : wrt) {
        if (v.id() < n && adj[v.id() - base] != kNone) {
            out.emplace_back(this, adj[v.id() - base]);
        } else {
            out.push_back(constant(0.0));
        }
    }
    return out;
}

GradientVector Tape::second_order(Var root, Var first_wrt, std::span<const Var> second_wrt) {
    const Var first[] = {first_wrt};
    const Var d1 = record_gradient(root, first).front();
    return gradient(d1, second_wrt);
}

Eigen::MatrixXd Tape::input_hessian(Var root, std::span<const Var> inputs) {
    const auto d = static_cast<Eigen::Index>(inputs.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
    const auto first = record_gradient(root, inputs);
    for (Eigen::Index i = 0; i < d; ++i) {
        const auto adj = adjoints(first[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < d; ++j) {
            const NodeId leaf = inputs[static_cast<std::size_t>(j)].id();
            h(i, j) = leaf < adj.size() ? adj[leaf] : 0.0;
        }
    }
    return 0.5 * (h + h.transpose());
}

}  // namespace credo
