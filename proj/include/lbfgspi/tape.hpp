#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "lbfgspi/vec.hpp"

namespace lbfgspi {

/// Append-only reverse-mode tape over vector values. Scalars are stored as
/// length-1 vectors so one node type covers both. Recording is forward
/// evaluation; backward() replays the tape once in reverse, accumulating
/// adjoints additively, and leaves the tape untouched so it can be re-run.
///
/// Clip and the feature floor use the subgradient that is 1 strictly inside
/// the interval and 0 at or beyond the bounds. An Objective node carries an
/// externally evaluated function value together with a constant gradient;
/// its backward rule never differentiates through the objective itself.
class Tape {
public:
    using NodeId = std::int32_t;

    enum class Op : std::uint8_t {
        Constant,
        Add,
        Sub,
        Scale,   // parents: (scalar s, any v); value = s * v
        Dot,
        Norm,
        Log,     // elementwise ln
        Exp,     // elementwise exp
        Clip,    // elementwise clamp to constant [lo, hi]
        Recip,   // elementwise 1/x
        Affine,  // parents: (w_flat, b, x); value = W x + b, W row-major rows x cols
        Pack,    // concatenation of parents
        Objective // parents: (x); value = [f], aux = constant gradient
    };

    struct Node {
        Op op = Op::Constant;
        std::vector<NodeId> parents;
        DenseVector value;
        double lo = 0.0, hi = 0.0;
        std::size_t rows = 0, cols = 0;
        DenseVector aux;
    };

    NodeId constant(DenseVector v) { return push(Op::Constant, {}, std::move(v)); }
    NodeId constant(double s) {
        DenseVector v(1);
        v[0] = s;
        return push(Op::Constant, {}, std::move(v));
    }

    NodeId add(NodeId a, NodeId b) {
        value(a).check_same_size(value(b), "Tape::add");
        return push(Op::Add, {a, b}, value(a) + value(b));
    }

    NodeId sub(NodeId a, NodeId b) {
        value(a).check_same_size(value(b), "Tape::sub");
        return push(Op::Sub, {a, b}, value(a) - value(b));
    }

    NodeId scale(NodeId s, NodeId v) {
        require_scalar(s, "Tape::scale");
        return push(Op::Scale, {s, v}, scalar(s) * value(v));
    }

    NodeId dot(NodeId a, NodeId b) {
        DenseVector out(1);
        out[0] = lbfgspi::dot(value(a), value(b));
        return push(Op::Dot, {a, b}, std::move(out));
    }

    NodeId norm(NodeId a) {
        DenseVector out(1);
        out[0] = norm2(value(a));
        return push(Op::Norm, {a}, std::move(out));
    }

    NodeId log_(NodeId a) {
        DenseVector out = value(a);
        for (auto& x : out) x = std::log(x);
        return push(Op::Log, {a}, std::move(out));
    }

    NodeId exp_(NodeId a) {
        DenseVector out = value(a);
        for (auto& x : out) x = std::exp(x);
        return push(Op::Exp, {a}, std::move(out));
    }

    NodeId clip(NodeId a, double lo, double hi) {
        if (!(lo <= hi)) throw std::invalid_argument("Tape::clip: lo > hi");
        DenseVector out = value(a);
        for (auto& x : out) x = std::min(hi, std::max(lo, x));
        const NodeId id = push(Op::Clip, {a}, std::move(out));
        nodes_.back().lo = lo;
        nodes_.back().hi = hi;
        return id;
    }

    NodeId recip(NodeId a) {
        DenseVector out = value(a);
        for (auto& x : out) x = 1.0 / x;
        return push(Op::Recip, {a}, std::move(out));
    }

    NodeId affine(NodeId w_flat, NodeId b, NodeId x, std::size_t rows, std::size_t cols) {
        const NodeId id = push(Op::Affine, {w_flat, b, x},
                               affine_apply(value(w_flat), value(b), value(x), rows, cols));
        nodes_.back().rows = rows;
        nodes_.back().cols = cols;
        return id;
    }

    NodeId pack(std::span<const NodeId> parts) {
        std::size_t total = 0;
        for (NodeId p : parts) total += value(p).size();
        DenseVector out(total);
        std::size_t off = 0;
        for (NodeId p : parts)
            for (double x : value(p)) out[off++] = x;
        return push(Op::Pack, {parts.begin(), parts.end()}, std::move(out));
    }

    /// Externally evaluated objective: value f at the iterate held by node x,
    /// with the gradient entering as a constant (the external-input contract).
    NodeId objective(NodeId x, double f, DenseVector grad) {
        value(x).check_same_size(grad, "Tape::objective");
        DenseVector out(1);
        out[0] = f;
        const NodeId id = push(Op::Objective, {x}, std::move(out));
        nodes_.back().aux = std::move(grad);
        return id;
    }

    const DenseVector& value(NodeId id) const { return nodes_[check(id)].value; }

    double scalar(NodeId id) const {
        require_scalar(id, "Tape::scalar");
        return nodes_[id].value[0];
    }

    std::size_t size() const { return nodes_.size(); }
    const Node& node(NodeId id) const { return nodes_[check(id)]; }

    /// Adjoints d(root)/d(node) for every node on the tape. The root must be
    /// scalar. Pure with respect to the tape: repeated calls give identical
    /// results.
    std::vector<DenseVector> backward(NodeId root) const {
        require_scalar(root, "Tape::backward (root)");
        std::vector<DenseVector> adj(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            adj[i] = DenseVector(nodes_[i].value.size());
        adj[root][0] = 1.0;

        for (NodeId i = root; i >= 0; --i) {
            const Node& n = nodes_[i];
            const DenseVector& a = adj[i];
            switch (n.op) {
            case Op::Constant:
                break;
            case Op::Add:
                adj[n.parents[0]] += a;
                adj[n.parents[1]] += a;
                break;
            case Op::Sub:
                adj[n.parents[0]] += a;
                adj[n.parents[1]] -= a;
                break;
            case Op::Scale: {
                const DenseVector& v = nodes_[n.parents[1]].value;
                adj[n.parents[0]][0] += lbfgspi::dot(a, v);
                axpy(nodes_[n.parents[0]].value[0], a, adj[n.parents[1]]);
                break;
            }
            case Op::Dot: {
                axpy(a[0], nodes_[n.parents[1]].value, adj[n.parents[0]]);
                axpy(a[0], nodes_[n.parents[0]].value, adj[n.parents[1]]);
                break;
            }
            case Op::Norm: {
                const double nv = n.value[0];
                if (nv > 0.0)
                    axpy(a[0] / nv, nodes_[n.parents[0]].value, adj[n.parents[0]]);
                break;
            }
            case Op::Log: {
                const DenseVector& x = nodes_[n.parents[0]].value;
                DenseVector& pa = adj[n.parents[0]];
                for (std::size_t j = 0; j < x.size(); ++j) pa[j] += a[j] / x[j];
                break;
            }
            case Op::Exp: {
                DenseVector& pa = adj[n.parents[0]];
                for (std::size_t j = 0; j < n.value.size(); ++j) pa[j] += a[j] * n.value[j];
                break;
            }
            case Op::Clip: {
                const DenseVector& x = nodes_[n.parents[0]].value;
                DenseVector& pa = adj[n.parents[0]];
                for (std::size_t j = 0; j < x.size(); ++j)
                    if (x[j] > n.lo && x[j] < n.hi) pa[j] += a[j];
                break;
            }
            case Op::Recip: {
                DenseVector& pa = adj[n.parents[0]];
                for (std::size_t j = 0; j < n.value.size(); ++j)
                    pa[j] -= a[j] * n.value[j] * n.value[j];
                break;
            }
            case Op::Affine: {
                const DenseVector& x = nodes_[n.parents[2]].value;
                const DenseVector& w = nodes_[n.parents[0]].value;
                DenseVector& wa = adj[n.parents[0]];
                DenseVector& ba = adj[n.parents[1]];
                DenseVector& xa = adj[n.parents[2]];
                for (std::size_t r = 0; r < n.rows; ++r) {
                    const double ar = a[r];
                    if (ar == 0.0) continue;
                    ba[r] += ar;
                    for (std::size_t c = 0; c < n.cols; ++c) {
                        wa[r * n.cols + c] += ar * x[c];
                        xa[c] += ar * w[r * n.cols + c];
                    }
                }
                break;
            }
            case Op::Pack: {
                std::size_t off = 0;
                for (NodeId p : n.parents) {
                    DenseVector& pa = adj[p];
                    for (std::size_t j = 0; j < pa.size(); ++j) pa[j] += a[off + j];
                    off += pa.size();
                }
                break;
            }
            case Op::Objective:
                axpy(a[0], n.aux, adj[n.parents[0]]);
                break;
            }
        }
        return adj;
    }

private:
    NodeId push(Op op, std::vector<NodeId> parents, DenseVector value) {
        Node n;
        n.op = op;
        n.parents = std::move(parents);
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size() - 1);
    }

    NodeId check(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
            throw std::invalid_argument("Tape: node id out of range");
        return id;
    }

    void require_scalar(NodeId id, const char* where) const {
        if (nodes_[check(id)].value.size() != 1)
            throw std::invalid_argument(std::string(where) + ": node is not scalar");
    }

    // deque keeps references from value() valid while recording continues
    std::deque<Node> nodes_;
};

inline constexpr double kNoBound = std::numeric_limits<double>::infinity();

} // namespace lbfgspi
