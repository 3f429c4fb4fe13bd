#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ds3m/tensor.hpp"

namespace ds3m {

class GradTape;

/// Handle to a node on a GradTape. Cheap to copy; valid as long as the tape lives.
struct Var {
    GradTape* tape = nullptr;
    int id = -1;

    const Tensor& value() const;
    const Tensor& grad() const;
    std::size_t size() const { return value().size(); }
    double item() const { return value().item(); }
};

/// Records a computation graph from leaves to a scalar loss for reverse-mode
/// differentiation. Single-use per backward pass; nodes are owned by the tape.
class GradTape {
  public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(GradTape&)> back;  // empty for leaves
    };

    Var emplace(Tensor value, std::function<void(GradTape&)> back = {}) {
        nodes_.push_back(Node{std::move(value), {}, std::move(back)});
        Node& n = nodes_.back();
        n.grad = Tensor(n.value.shape);
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    Var leaf(Tensor value) { return emplace(std::move(value)); }
    Var constant(Tensor value) { return emplace(std::move(value)); }

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Tensor& grad_of(Var v) { return node(v.id).grad; }

    std::size_t node_count() const { return nodes_.size(); }

    /// Reverse pass from a scalar loss. Gradients accumulate into every node;
    /// previous gradients are cleared first so repeated calls are identical.
    void backward(Var loss) {
        if (loss.tape != this) throw std::logic_error("backward: loss from another tape");
        if (node(loss.id).value.size() != 1)
            throw std::invalid_argument("backward: loss must be scalar");
        for (Node& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
        node(loss.id).grad.data[0] = 1.0;
        for (int i = loss.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back) n.back(*this);
        }
    }

  private:
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->node(id).value; }
inline const Tensor& Var::grad() const { return tape->node(id).grad; }

// ---------------------------------------------------------------------------
// Parameter sets
// ---------------------------------------------------------------------------

/// Named collection of parameter tensors, each flagged trainable or frozen.
struct ParamSet {
    struct Entry {
        Tensor value;
        bool trainable = true;
    };
    std::map<std::string, Entry> entries;

    void add(const std::string& name, Tensor value, bool trainable = true) {
        if (entries.count(name))
            throw std::invalid_argument("ParamSet: duplicate parameter " + name);
        entries.emplace(name, Entry{std::move(value), trainable});
    }

    Tensor& at(const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end())
            throw std::out_of_range("ParamSet: missing parameter " + name);
        return it->second.value;
    }
    const Tensor& at(const std::string& name) const {
        auto it = entries.find(name);
        if (it == entries.end())
            throw std::out_of_range("ParamSet: missing parameter " + name);
        return it->second.value;
    }
    bool has(const std::string& name) const { return entries.count(name) != 0; }
    std::size_t size() const { return entries.size(); }
};

using GradMap = std::map<std::string, Tensor>;

/// Parameters materialized as leaves on one tape.
struct BoundParams {
    GradTape* tape = nullptr;
    std::map<std::string, Var> vars;

    Var at(const std::string& name) const {
        auto it = vars.find(name);
        if (it == vars.end())
            throw std::out_of_range("BoundParams: missing parameter " + name);
        return it->second;
    }
};

inline BoundParams bind(GradTape& tape, const ParamSet& params) {
    BoundParams bp;
    bp.tape = &tape;
    for (const auto& [name, entry] : params.entries)
        bp.vars.emplace(name, tape.leaf(entry.value));
    return bp;
}

/// Gradient mapping with the same keys and shapes as the parameter set.
inline GradMap collect_grads(const BoundParams& bound, const ParamSet& params) {
    GradMap grads;
    for (const auto& [name, entry] : params.entries) {
        (void)entry;
        grads.emplace(name, bound.at(name).grad());
    }
    return grads;
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

namespace detail {
inline void check_tapes(Var a, Var b, const char* op) {
    if (a.tape != b.tape || a.tape == nullptr)
        throw std::logic_error(std::string(op) + ": operands on different tapes");
}
}  // namespace detail

inline Var add(Var a, Var b) {
    detail::check_tapes(a, b, "add");
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
    return a.tape->emplace(std::move(out), [a, b, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

inline Var sub(Var a, Var b) {
    detail::check_tapes(a, b, "sub");
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
    return a.tape->emplace(std::move(out), [a, b, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

inline Var mul(Var a, Var b) {
    detail::check_tapes(a, b, "mul");
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    return a.tape->emplace(std::move(out), [a, b, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& ga = t.grad_of(a);
        Tensor& gb = t.grad_of(b);
        const Tensor& av = t.node(a.id).value;
        const Tensor& bv = t.node(b.id).value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * bv[i];
            gb[i] += g[i] * av[i];
        }
    });
}

inline Var scale(Var a, double c) {
    Tensor out = a.value();
    for (double& v : out.data) v *= c;
    return a.tape->emplace(std::move(out), [a, c, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

inline Var add_const(Var a, double c) {
    Tensor out = a.value();
    for (double& v : out.data) v += c;
    return a.tape->emplace(std::move(out), [a, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

inline Var neg(Var a) { return scale(a, -1.0); }

/// weight (m x n) times x (n) -> (m)
inline Var matvec(Var weight, Var x) {
    detail::check_tapes(weight, x, "matvec");
    const Tensor& W = weight.value();
    const Tensor& v = x.value();
    if (W.rank() != 2 || v.rank() != 1 || W.cols() != v.shape[0])
        throw std::invalid_argument("matvec: shape mismatch " + W.shape_str() + " * " +
                                    v.shape_str());
    std::size_t m = W.rows(), n = W.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = W.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    return weight.tape->emplace(
        std::move(out), [weight, x, m, n, id = (int)weight.tape->node_count()](GradTape& t) {
            const Tensor& g = t.node(id).grad;
            const Tensor& W = t.node(weight.id).value;
            const Tensor& v = t.node(x.id).value;
            Tensor& gW = t.grad_of(weight);
            Tensor& gx = t.grad_of(x);
            for (std::size_t i = 0; i < m; ++i) {
                double gi = g[i];
                double* gWrow = gW.data.data() + i * n;
                const double* Wrow = W.data.data() + i * n;
                for (std::size_t j = 0; j < n; ++j) {
                    gWrow[j] += gi * v[j];
                    gx[j] += gi * Wrow[j];
                }
            }
        });
}

inline Var concat(Var a, Var b) {
    detail::check_tapes(a, b, "concat");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 1 || bv.rank() != 1)
        throw std::invalid_argument("concat: vectors expected");
    Tensor out({av.size() + bv.size()});
    std::copy(av.data.begin(), av.data.end(), out.data.begin());
    std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + (std::ptrdiff_t)av.size());
    std::size_t na = av.size();
    return a.tape->emplace(std::move(out),
                           [a, b, na, id = (int)a.tape->node_count()](GradTape& t) {
                               const Tensor& g = t.node(id).grad;
                               Tensor& ga = t.grad_of(a);
                               Tensor& gb = t.grad_of(b);
                               for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                               for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
                           });
}

inline Var slice(Var a, std::size_t start, std::size_t len) {
    const Tensor& av = a.value();
    // flat indexing; a rank-2 input yields a contiguous row when sliced on K-boundaries
    if (start + len > av.size()) throw std::invalid_argument("slice: out of range");
    Tensor out({len});
    std::copy(av.data.begin() + (std::ptrdiff_t)start,
              av.data.begin() + (std::ptrdiff_t)(start + len), out.data.begin());
    return a.tape->emplace(std::move(out),
                           [a, start, len, id = (int)a.tape->node_count()](GradTape& t) {
                               const Tensor& g = t.node(id).grad;
                               Tensor& ga = t.grad_of(a);
                               for (std::size_t i = 0; i < len; ++i) ga[start + i] += g[i];
                           });
}

/// Select one component of a vector as a scalar.
inline Var pick(Var a, std::size_t index) {
    const Tensor& av = a.value();
    if (index >= av.size()) throw std::out_of_range("pick: index out of range");
    Tensor out = Tensor::scalar(av[index]);
    return a.tape->emplace(std::move(out),
                           [a, index, id = (int)a.tape->node_count()](GradTape& t) {
                               t.grad_of(a)[index] += t.node(id).grad[0];
                           });
}

namespace detail {
template <typename F, typename DF>
Var unary_elementwise(Var a, F f, DF df) {
    Tensor out = a.value();
    for (double& v : out.data) v = f(v);
    return a.tape->emplace(std::move(out), [a, df, id = (int)a.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        const Tensor& x = t.node(a.id).value;
        const Tensor& y = t.node(id).value;
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}
}  // namespace detail

inline Var vtanh(Var a) {
    return detail::unary_elementwise(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var a) {
    return detail::unary_elementwise(
        a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Var vsin(Var a) {
    return detail::unary_elementwise(
        a, [](double x) { return std::sin(x); },
        [](double x, double) { return std::cos(x); });
}

inline Var vexp(Var a) {
    return detail::unary_elementwise(
        a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

inline Var vlog(Var a) {
    return detail::unary_elementwise(
        a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

/// Clamp with zero gradient outside [lo, hi].
inline Var clamp(Var a, double lo, double hi) {
    Tensor out = a.value();
    for (double& v : out.data) v = std::min(hi, std::max(lo, v));
    return a.tape->emplace(std::move(out),
                           [a, lo, hi, id = (int)a.tape->node_count()](GradTape& t) {
                               const Tensor& g = t.node(id).grad;
                               const Tensor& x = t.node(a.id).value;
                               Tensor& ga = t.grad_of(a);
                               for (std::size_t i = 0; i < g.size(); ++i)
                                   if (x[i] > lo && x[i] < hi) ga[i] += g[i];
                           });
}

inline Var sum(Var a) {
    double acc = 0.0;
    for (double v : a.value().data) acc += v;
    return a.tape->emplace(Tensor::scalar(acc), [a, id = (int)a.tape->node_count()](GradTape& t) {
        double g = t.node(id).grad[0];
        Tensor& ga = t.grad_of(a);
        for (double& v : ga.data) v += g;
    });
}

inline Var dot(Var a, Var b) { return sum(mul(a, b)); }

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace ds3m
