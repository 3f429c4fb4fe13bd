#pragma once

#include <limits>

#include "ds3m/autodiff.hpp"
#include "ds3m/rng.hpp"

namespace ds3m {

inline constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)

/// Raised when an optimization or sampling step produces non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

// ---------------------------------------------------------------------------
// Layer primitives
// ---------------------------------------------------------------------------

/// weight * x + bias
inline Var affine(Var x, Var weight, Var bias) { return add(matvec(weight, x), bias); }

/// Parameter names for a single GRU cell with input width `in` and hidden
/// width `hidden`. Gate equations:
///   u = sigmoid(W_u x + U_u h + b_u)         (update)
///   r = sigmoid(W_r x + U_r h + b_r)         (reset)
///   c = tanh(W_c x + U_c (r .* h) + b_c)     (candidate)
///   h' = (1 - u) .* h + u .* c
inline void init_gru_params(ParamSet& ps, const std::string& prefix, std::size_t in,
                            std::size_t hidden, Rng& rng) {
    for (const char* gate : {"u", "r", "c"}) {
        ps.add(prefix + ".W_" + gate, rng.init_weights({hidden, in}, in));
        ps.add(prefix + ".U_" + gate, rng.init_weights({hidden, hidden}, hidden));
        ps.add(prefix + ".b_" + gate, Tensor({hidden}));
    }
}

inline Var gru_cell(Var h_prev, Var x, const BoundParams& params, const std::string& prefix) {
    Var u = sigmoid(add(add(matvec(params.at(prefix + ".W_u"), x),
                            matvec(params.at(prefix + ".U_u"), h_prev)),
                        params.at(prefix + ".b_u")));
    Var r = sigmoid(add(add(matvec(params.at(prefix + ".W_r"), x),
                            matvec(params.at(prefix + ".U_r"), h_prev)),
                        params.at(prefix + ".b_r")));
    Var c = vtanh(add(add(matvec(params.at(prefix + ".W_c"), x),
                          matvec(params.at(prefix + ".U_c"), mul(r, h_prev))),
                      params.at(prefix + ".b_c")));
    // h' = h + u .* (c - h)
    return add(h_prev, mul(u, sub(c, h_prev)));
}

/// Two-layer perceptron: affine -> tanh -> affine.
inline void init_mlp2_params(ParamSet& ps, const std::string& prefix, std::size_t in,
                             std::size_t hidden, std::size_t out, Rng& rng) {
    ps.add(prefix + ".W1", rng.init_weights({hidden, in}, in));
    ps.add(prefix + ".b1", Tensor({hidden}));
    ps.add(prefix + ".W2", rng.init_weights({out, hidden}, hidden));
    ps.add(prefix + ".b2", Tensor({out}));
}

inline Var mlp2(Var x, const BoundParams& params, const std::string& prefix) {
    Var h = vtanh(affine(x, params.at(prefix + ".W1"), params.at(prefix + ".b1")));
    return affine(h, params.at(prefix + ".W2"), params.at(prefix + ".b2"));
}

// ---------------------------------------------------------------------------
// Numeric (tape-free) evaluation of the same layers, for sampling loops
// ---------------------------------------------------------------------------

inline Tensor nmatvec(const Tensor& W, const Tensor& x) {
    if (W.rank() != 2 || x.rank() != 1 || W.cols() != x.shape[0])
        throw std::invalid_argument("matvec: shape mismatch " + W.shape_str() + " * " +
                                    x.shape_str());
    Tensor out({W.rows()});
    for (std::size_t i = 0; i < W.rows(); ++i) {
        double acc = 0.0;
        const double* row = W.data.data() + i * W.cols();
        for (std::size_t j = 0; j < W.cols(); ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
    return out;
}

inline Tensor naffine(const Tensor& x, const Tensor& W, const Tensor& b) {
    Tensor out = nmatvec(W, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

inline Tensor nmlp2(const ParamSet& ps, const std::string& prefix, const Tensor& x) {
    Tensor h = naffine(x, ps.at(prefix + ".W1"), ps.at(prefix + ".b1"));
    for (double& v : h.data) v = std::tanh(v);
    return naffine(h, ps.at(prefix + ".W2"), ps.at(prefix + ".b2"));
}

inline Tensor ngru_cell(const ParamSet& ps, const std::string& prefix, const Tensor& h_prev,
                        const Tensor& x) {
    auto gate = [&](const char* g) {
        Tensor v = nmatvec(ps.at(prefix + ".W_" + g), x);
        Tensor rec = nmatvec(ps.at(prefix + ".U_" + g), h_prev);
        const Tensor& b = ps.at(prefix + ".b_" + g);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += rec[i] + b[i];
        return v;
    };
    Tensor u = gate("u"), r = gate("r");
    for (double& v : u.data) v = 1.0 / (1.0 + std::exp(-v));
    for (double& v : r.data) v = 1.0 / (1.0 + std::exp(-v));
    Tensor rh = h_prev;
    for (std::size_t i = 0; i < rh.size(); ++i) rh[i] *= r[i];
    Tensor c = nmatvec(ps.at(prefix + ".W_c"), x);
    Tensor crec = nmatvec(ps.at(prefix + ".U_c"), rh);
    const Tensor& bc = ps.at(prefix + ".b_c");
    Tensor out = h_prev;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double cand = std::tanh(c[i] + crec[i] + bc[i]);
        out[i] = h_prev[i] + u[i] * (cand - h_prev[i]);
    }
    return out;
}

inline Tensor nclamp_logvar(Tensor v) {
    for (double& e : v.data) e = std::min(kLogVarMax, std::max(kLogVarMin, e));
    return v;
}

inline Tensor nconcat(const Tensor& a, const Tensor& b) {
    Tensor out({a.size() + b.size()});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + (std::ptrdiff_t)a.size());
    return out;
}

// ---------------------------------------------------------------------------
// Probability kernels
// ---------------------------------------------------------------------------

/// Max-subtracted softmax of a vector.
inline Var softmax(Var v) {
    const Tensor& x = v.value();
    if (x.rank() != 1 || x.size() == 0)
        throw std::invalid_argument("softmax: nonempty vector expected");
    double m = x[0];
    for (double e : x.data) m = std::max(m, e);
    Tensor out({x.size()});
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        z += out[i];
    }
    for (double& e : out.data) e /= z;
    return v.tape->emplace(std::move(out), [v, id = (int)v.tape->node_count()](GradTape& t) {
        const Tensor& g = t.node(id).grad;
        const Tensor& y = t.node(id).value;
        Tensor& gv = t.grad_of(v);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i) gv[i] += y[i] * (g[i] - gy);
    });
}

/// Numeric softmax (no tape).
inline Tensor softmax(const Tensor& x) {
    if (x.rank() != 1 || x.size() == 0)
        throw std::invalid_argument("softmax: nonempty vector expected");
    double m = x[0];
    for (double e : x.data) m = std::max(m, e);
    Tensor out({x.size()});
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        z += out[i];
    }
    for (double& e : out.data) e /= z;
    return out;
}

/// Sum over dimensions of the diagonal-Gaussian log density.
inline Var gaussian_log_pdf(Var y, Var mu, Var logvar) {
    check_same_shape(y.value(), mu.value(), "gaussian_log_pdf");
    check_same_shape(y.value(), logvar.value(), "gaussian_log_pdf");
    if (!y.value().all_finite() || !mu.value().all_finite() || !logvar.value().all_finite())
        throw std::domain_error("gaussian_log_pdf: non-finite input");
    Var d = sub(y, mu);
    Var quad = mul(mul(d, d), vexp(neg(logvar)));
    return scale(sum(add(add_const(logvar, kLog2Pi), quad)), -0.5);
}

inline double gaussian_log_pdf(const Tensor& y, const Tensor& mu, const Tensor& logvar) {
    check_same_shape(y, mu, "gaussian_log_pdf");
    check_same_shape(y, logvar, "gaussian_log_pdf");
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!std::isfinite(y[i]) || !std::isfinite(mu[i]) || !std::isfinite(logvar[i]))
            throw std::domain_error("gaussian_log_pdf: non-finite input");
        double d = y[i] - mu[i];
        acc += -0.5 * (kLog2Pi + logvar[i] + d * d * std::exp(-logvar[i]));
    }
    return acc;
}

/// KL(N(mu_q, var_q) || N(mu_p, var_p)) for diagonal Gaussians, summed over dims.
inline Var gaussian_kl(Var mu_q, Var logvar_q, Var mu_p, Var logvar_p) {
    check_same_shape(mu_q.value(), logvar_q.value(), "gaussian_kl");
    check_same_shape(mu_q.value(), mu_p.value(), "gaussian_kl");
    check_same_shape(mu_q.value(), logvar_p.value(), "gaussian_kl");
    Var d = sub(mu_q, mu_p);
    Var ratio = mul(add(vexp(logvar_q), mul(d, d)), vexp(neg(logvar_p)));
    return scale(sum(add_const(add(sub(logvar_p, logvar_q), ratio), -1.0)), 0.5);
}

inline double gaussian_kl(const Tensor& mu_q, const Tensor& logvar_q, const Tensor& mu_p,
                          const Tensor& logvar_p) {
    check_same_shape(mu_q, logvar_q, "gaussian_kl");
    check_same_shape(mu_q, mu_p, "gaussian_kl");
    check_same_shape(mu_q, logvar_p, "gaussian_kl");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_q.size(); ++i) {
        double d = mu_q[i] - mu_p[i];
        acc += 0.5 * (logvar_p[i] - logvar_q[i] +
                      (std::exp(logvar_q[i]) + d * d) * std::exp(-logvar_p[i]) - 1.0);
    }
    return acc;
}

/// KL(q || p) for probability vectors. Requires strictly positive q (as
/// produced by softmax); used inside the differentiable objective.
inline Var categorical_kl(Var q_probs, Var p_probs) {
    check_same_shape(q_probs.value(), p_probs.value(), "categorical_kl");
    return dot(q_probs, sub(vlog(q_probs), vlog(p_probs)));
}

/// Numeric KL with the 0*ln(0/p) = 0 convention. q > 0 where p = 0 is a
/// support violation and yields +infinity.
inline double categorical_kl(const Tensor& q_probs, const Tensor& p_probs) {
    check_same_shape(q_probs, p_probs, "categorical_kl");
    double acc = 0.0;
    for (std::size_t i = 0; i < q_probs.size(); ++i) {
        double q = q_probs[i], p = p_probs[i];
        if (q == 0.0) continue;
        if (p == 0.0) return std::numeric_limits<double>::infinity();
        acc += q * std::log(q / p);
    }
    return acc;
}

}  // namespace ds3m
