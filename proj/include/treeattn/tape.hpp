#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "treeattn/parameter.hpp"
#include "treeattn/tensor.hpp"

namespace treeattn {

// Reverse-mode autodiff over a per-example tape. Graphs are rebuilt for every
// example because tree topologies differ; parents always precede their node in
// construction order, so backward is a single reverse sweep.
//
// Primitives: leaf/param, add, add_n (sum over a set), sub, mul (elementwise),
// matvec, tanh, sigmoid, softmax (max-subtracted), log (input clamped to
// >= 1e-12), abs, dot, stack, select, scalar_mul, scale.

enum class Op {
    Leaf,
    Param,
    Add,
    AddN,
    Sub,
    Mul,
    MatVec,
    Tanh,
    Sigmoid,
    Softmax,
    Log,
    Abs,
    Dot,
    Stack,
    Select,
    ScalarMul,
    Scale,
};

struct Value {
    int id = -1;
    bool valid() const { return id >= 0; }
};

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVec = Eigen::VectorXd;
constexpr double kLogClamp = 1e-12;
}  // namespace detail

class Tape {
public:
    Value leaf(Tensor v) {
        Node n;
        n.op = Op::Leaf;
        n.val = std::move(v);
        return push(std::move(n));
    }

    // Leaf that accumulates its adjoint into p.grad during backward.
    Value param(Parameter& p) {
        Node n;
        n.op = Op::Param;
        n.val = p.value;
        n.par = &p;
        return push(std::move(n));
    }

    Value add(Value a, Value b) {
        require_same("add", a, b);
        Node n = binary(Op::Add, a, b);
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        n.val = Tensor::zeros_like(x);
        for (int i = 0; i < x.size(); ++i) n.val[i] = x[i] + y[i];
        return push(std::move(n));
    }

    // Sum over a set of same-shaped tensors, accumulated in argument order.
    Value add_n(const std::vector<Value>& xs) {
        if (xs.empty()) throw std::invalid_argument("add_n: empty operand set");
        for (const Value& v : xs) require_same("add_n", xs[0], v);
        Node n;
        n.op = Op::AddN;
        for (const Value& v : xs) n.parents.push_back(v.id);
        n.val = Tensor::zeros_like(val(xs[0]));
        for (const Value& v : xs) {
            const Tensor& x = val(v);
            for (int i = 0; i < x.size(); ++i) n.val[i] += x[i];
        }
        return push(std::move(n));
    }

    Value sub(Value a, Value b) {
        require_same("sub", a, b);
        Node n = binary(Op::Sub, a, b);
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        n.val = Tensor::zeros_like(x);
        for (int i = 0; i < x.size(); ++i) n.val[i] = x[i] - y[i];
        return push(std::move(n));
    }

    // Elementwise product.
    Value mul(Value a, Value b) {
        require_same("mul", a, b);
        Node n = binary(Op::Mul, a, b);
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        n.val = Tensor::zeros_like(x);
        for (int i = 0; i < x.size(); ++i) n.val[i] = x[i] * y[i];
        return push(std::move(n));
    }

    Value matvec(Value m, Value x) {
        const Tensor& a = val(m);
        const Tensor& v = val(x);
        if (a.shape().size() != 2 || v.shape().size() != 1 || a.cols() != v.rows())
            throw std::invalid_argument("matvec: shape mismatch " + a.shape_str() + " vs " + v.shape_str());
        Node n = binary(Op::MatVec, m, x);
        n.val = Tensor({a.rows()});
        Eigen::Map<const detail::EMat> em(a.data(), a.rows(), a.cols());
        Eigen::Map<const detail::EVec> ev(v.data(), v.size());
        Eigen::Map<detail::EVec>(n.val.data(), a.rows()).noalias() = em * ev;
        return push(std::move(n));
    }

    Value tanh(Value a) { return unary_map(Op::Tanh, "tanh", a, [](double x) { return std::tanh(x); }); }

    Value sigmoid(Value a) {
        return unary_map(Op::Sigmoid, "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    }

    // log with the input clamped to >= 1e-12
    Value log(Value a) {
        return unary_map(Op::Log, "log", a,
                         [](double x) { return std::log(x < detail::kLogClamp ? detail::kLogClamp : x); });
    }

    Value abs(Value a) { return unary_map(Op::Abs, "abs", a, [](double x) { return std::fabs(x); }); }

    // Max-subtracted softmax over a vector.
    Value softmax(Value a) {
        const Tensor& x = val(a);
        if (x.shape().size() != 1)
            throw std::invalid_argument("softmax: expected a vector, got " + x.shape_str());
        Node n;
        n.op = Op::Softmax;
        n.parents = {a.id};
        n.val = Tensor::zeros_like(x);
        double mx = x[0];
        for (int i = 1; i < x.size(); ++i) mx = std::max(mx, x[i]);
        double z = 0.0;
        for (int i = 0; i < x.size(); ++i) {
            n.val[i] = std::exp(x[i] - mx);
            z += n.val[i];
        }
        for (int i = 0; i < x.size(); ++i) n.val[i] /= z;
        return push(std::move(n));
    }

    Value dot(Value a, Value b) {
        require_same("dot", a, b);
        Node n = binary(Op::Dot, a, b);
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        double s = 0.0;
        for (int i = 0; i < x.size(); ++i) s += x[i] * y[i];
        n.val = Tensor::scalar(s);
        return push(std::move(n));
    }

    // n scalars -> n-vector
    Value stack(const std::vector<Value>& scalars) {
        if (scalars.empty()) throw std::invalid_argument("stack: empty operand set");
        Node n;
        n.op = Op::Stack;
        n.val = Tensor({static_cast<int>(scalars.size())});
        for (size_t i = 0; i < scalars.size(); ++i) {
            if (!val(scalars[i]).is_scalar())
                throw std::invalid_argument("stack: operand " + std::to_string(i) + " has shape " +
                                            val(scalars[i]).shape_str() + ", expected a scalar");
            n.parents.push_back(scalars[i].id);
            n.val[static_cast<int>(i)] = val(scalars[i])[0];
        }
        return push(std::move(n));
    }

    // Pick one component of a vector as a scalar.
    Value select(Value a, int index) {
        const Tensor& x = val(a);
        if (index < 0 || index >= x.size())
            throw std::invalid_argument("select: index " + std::to_string(index) + " out of range for " +
                                        x.shape_str());
        Node n;
        n.op = Op::Select;
        n.parents = {a.id};
        n.index = index;
        n.val = Tensor::scalar(x[index]);
        return push(std::move(n));
    }

    // scalar node * tensor node
    Value scalar_mul(Value s, Value x) {
        if (!val(s).is_scalar())
            throw std::invalid_argument("scalar_mul: scale has shape " + val(s).shape_str() +
                                        ", expected a scalar");
        Node n = binary(Op::ScalarMul, s, x);
        const double c = val(s)[0];
        const Tensor& v = val(x);
        n.val = Tensor::zeros_like(v);
        for (int i = 0; i < v.size(); ++i) n.val[i] = c * v[i];
        return push(std::move(n));
    }

    // constant * tensor node
    Value scale(Value x, double c) {
        Node n;
        n.op = Op::Scale;
        n.parents = {x.id};
        n.coeff = c;
        const Tensor& v = val(x);
        n.val = Tensor::zeros_like(v);
        for (int i = 0; i < v.size(); ++i) n.val[i] = c * v[i];
        return push(std::move(n));
    }

    const Tensor& value(Value v) const { return nodes_[check(v)].val; }
    const Tensor& adjoint(Value v) const { return nodes_[check(v)].adj; }

    int size() const { return static_cast<int>(nodes_.size()); }

    void clear() { nodes_.clear(); }

    // Reverse sweep from a scalar root. Adjoints of every reachable node are
    // (re)computed; Parameter gradients accumulate (+=) across calls/examples.
    void backward(Value root, double seed = 1.0) {
        const int r = check(root);
        if (!nodes_[r].val.is_scalar())
            throw std::invalid_argument("backward: root has shape " + nodes_[r].val.shape_str() +
                                        ", expected a scalar");
        for (Node& n : nodes_) n.adj = Tensor::zeros_like(n.val);
        nodes_[r].adj[0] = seed;
        for (int id = r; id >= 0; --id) propagate(id);
    }

private:
    struct Node {
        Op op = Op::Leaf;
        std::vector<int> parents;
        Tensor val;
        Tensor adj;
        Parameter* par = nullptr;
        int index = 0;     // Select
        double coeff = 0;  // Scale
    };

    Value push(Node n) {
        nodes_.push_back(std::move(n));
        return Value{static_cast<int>(nodes_.size()) - 1};
    }

    Node binary(Op op, Value a, Value b) {
        Node n;
        n.op = op;
        n.parents = {check(a), check(b)};
        return n;
    }

    int check(Value v) const {
        if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
            throw std::invalid_argument("tape: invalid value handle");
        return v.id;
    }

    const Tensor& val(Value v) const { return nodes_[check(v)].val; }

    template <typename F>
    Value unary_map(Op op, const char*, Value a, F f) {
        Node n;
        n.op = op;
        n.parents = {check(a)};
        const Tensor& x = val(a);
        n.val = Tensor::zeros_like(x);
        for (int i = 0; i < x.size(); ++i) n.val[i] = f(x[i]);
        return push(std::move(n));
    }

    void require_same(const char* prim, Value a, Value b) const {
        const Tensor& x = val(a);
        const Tensor& y = val(b);
        if (!x.same_shape(y))
            throw std::invalid_argument(std::string(prim) + ": shape mismatch " + x.shape_str() + " vs " +
                                        y.shape_str());
    }

    void propagate(int id) {
        Node& n = nodes_[id];
        const Tensor& adj = n.adj;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Param:
                for (int i = 0; i < adj.size(); ++i) n.par->grad[i] += adj[i];
                break;
            case Op::Add: {
                Tensor& ga = nodes_[n.parents[0]].adj;
                Tensor& gb = nodes_[n.parents[1]].adj;
                for (int i = 0; i < adj.size(); ++i) {
                    ga[i] += adj[i];
                    gb[i] += adj[i];
                }
                break;
            }
            case Op::AddN:
                for (int p : n.parents) {
                    Tensor& g = nodes_[p].adj;
                    for (int i = 0; i < adj.size(); ++i) g[i] += adj[i];
                }
                break;
            case Op::Sub: {
                Tensor& ga = nodes_[n.parents[0]].adj;
                Tensor& gb = nodes_[n.parents[1]].adj;
                for (int i = 0; i < adj.size(); ++i) {
                    ga[i] += adj[i];
                    gb[i] -= adj[i];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& a = nodes_[n.parents[0]].val;
                const Tensor& b = nodes_[n.parents[1]].val;
                Tensor& ga = nodes_[n.parents[0]].adj;
                Tensor& gb = nodes_[n.parents[1]].adj;
                for (int i = 0; i < adj.size(); ++i) {
                    ga[i] += adj[i] * b[i];
                    gb[i] += adj[i] * a[i];
                }
                break;
            }
            case Op::MatVec: {
                const Tensor& m = nodes_[n.parents[0]].val;
                const Tensor& x = nodes_[n.parents[1]].val;
                Tensor& gm = nodes_[n.parents[0]].adj;
                Tensor& gx = nodes_[n.parents[1]].adj;
                Eigen::Map<const detail::EMat> em(m.data(), m.rows(), m.cols());
                Eigen::Map<const detail::EVec> ex(x.data(), x.size());
                Eigen::Map<const detail::EVec> ea(adj.data(), adj.size());
                Eigen::Map<detail::EMat>(gm.data(), m.rows(), m.cols()).noalias() += ea * ex.transpose();
                Eigen::Map<detail::EVec>(gx.data(), x.size()).noalias() += em.transpose() * ea;
                break;
            }
            case Op::Tanh: {
                Tensor& g = nodes_[n.parents[0]].adj;
                for (int i = 0; i < adj.size(); ++i) g[i] += adj[i] * (1.0 - n.val[i] * n.val[i]);
                break;
            }
            case Op::Sigmoid: {
                Tensor& g = nodes_[n.parents[0]].adj;
                for (int i = 0; i < adj.size(); ++i) g[i] += adj[i] * n.val[i] * (1.0 - n.val[i]);
                break;
            }
            case Op::Softmax: {
                Tensor& g = nodes_[n.parents[0]].adj;
                double s = 0.0;
                for (int i = 0; i < adj.size(); ++i) s += adj[i] * n.val[i];
                for (int i = 0; i < adj.size(); ++i) g[i] += n.val[i] * (adj[i] - s);
                break;
            }
            case Op::Log: {
                const Tensor& x = nodes_[n.parents[0]].val;
                Tensor& g = nodes_[n.parents[0]].adj;
                for (int i = 0; i < adj.size(); ++i)
                    g[i] += adj[i] / (x[i] < detail::kLogClamp ? detail::kLogClamp : x[i]);
                break;
            }
            case Op::Abs: {
                const Tensor& x = nodes_[n.parents[0]].val;
                Tensor& g = nodes_[n.parents[0]].adj;
                for (int i = 0; i < adj.size(); ++i)
                    g[i] += adj[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
                break;
            }
            case Op::Dot: {
                const Tensor& a = nodes_[n.parents[0]].val;
                const Tensor& b = nodes_[n.parents[1]].val;
                Tensor& ga = nodes_[n.parents[0]].adj;
                Tensor& gb = nodes_[n.parents[1]].adj;
                const double d = adj[0];
                for (int i = 0; i < a.size(); ++i) {
                    ga[i] += d * b[i];
                    gb[i] += d * a[i];
                }
                break;
            }
            case Op::Stack:
                for (size_t k = 0; k < n.parents.size(); ++k)
                    nodes_[n.parents[k]].adj[0] += adj[static_cast<int>(k)];
                break;
            case Op::Select:
                nodes_[n.parents[0]].adj[n.index] += adj[0];
                break;
            case Op::ScalarMul: {
                const Tensor& x = nodes_[n.parents[1]].val;
                const double c = nodes_[n.parents[0]].val[0];
                Tensor& gs = nodes_[n.parents[0]].adj;
                Tensor& gx = nodes_[n.parents[1]].adj;
                for (int i = 0; i < adj.size(); ++i) {
                    gs[0] += adj[i] * x[i];
                    gx[i] += adj[i] * c;
                }
                break;
            }
            case Op::Scale: {
                Tensor& g = nodes_[n.parents[0]].adj;
                for (int i = 0; i < adj.size(); ++i) g[i] += adj[i] * n.coeff;
                break;
            }
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace treeattn
