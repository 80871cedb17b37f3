#pragma once

// Cross coding twice module: fuses a backbone feature B into an encoder
// feature E in two gated steps. All features are [batch, channels, tokens].
//
//   E'     = sigmoid(gelu(LN(FC(E))))
//   X      = E + B * (1 - E')
//   G      = sigmoid(MLP_e(GRN(X))) * sigmoid(MLP_b(GRN(B)))
//   E_cf   = 2 X * G + B * (1 - G)
//
// FC, LN and the MLPs act along the channel axis of every token.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "crossdino/ops.hpp"
#include "crossdino/rng.hpp"
#include "crossdino/tensor.hpp"

namespace crossdino::cctm {

inline constexpr double kGrnEps = 1e-6;

/// Learnable weights. The same struct carries parameter gradients.
struct Params {
    Tensor fc1_w, fc1_b;
    Tensor ln1_gamma, ln1_beta;
    Tensor grn_gamma, grn_beta;
    Tensor mlp_e_w1, mlp_e_b1, mlp_e_w2, mlp_e_b2;
    Tensor mlp_b_w1, mlp_b_b1, mlp_b_w2, mlp_b_b2;
    double ln_eps = kLayerNormEps;
    double grn_eps = kGrnEps;

    std::size_t channels() const { return fc1_b.size(); }

    /// Visits every learnable tensor with its name, in a fixed order.
    template <typename F>
    void for_each(F&& f) {
        f("fc1_w", fc1_w), f("fc1_b", fc1_b), f("ln1_gamma", ln1_gamma), f("ln1_beta", ln1_beta);
        f("grn_gamma", grn_gamma), f("grn_beta", grn_beta);
        f("mlp_e_w1", mlp_e_w1), f("mlp_e_b1", mlp_e_b1), f("mlp_e_w2", mlp_e_w2), f("mlp_e_b2", mlp_e_b2);
        f("mlp_b_w1", mlp_b_w1), f("mlp_b_b1", mlp_b_b1), f("mlp_b_w2", mlp_b_w2), f("mlp_b_b2", mlp_b_b2);
    }
    template <typename F>
    void for_each(F&& f) const {
        const_cast<Params&>(*this).for_each([&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }

    /// All-zero parameters of the right extents (LN gamma included).
    static Params zeros(std::size_t channels) {
        const Tensor mat({channels, channels}), vec({channels});
        Params p{mat, vec, vec, vec, vec, vec, mat, vec, mat, vec, mat, vec, mat, vec};
        return p;
    }

    /// Standard initialization: weights uniform in +-1/sqrt(C), biases zero,
    /// LN affine identity, GRN affine zero (the GRN starts as a residual).
    static Params init(std::size_t channels, Rng& rng) {
        Params p = zeros(channels);
        const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
        for (auto* w : {&p.fc1_w, &p.mlp_e_w1, &p.mlp_e_w2, &p.mlp_b_w1, &p.mlp_b_w2}) {
            for (auto& v : w->data()) v = rng.uniform(-bound, bound);
        }
        for (auto& v : p.ln1_gamma.data()) v = 1.0;
        return p;
    }

    void validate() const {
        const std::size_t c = channels();
        if (c == 0) throw DimensionError("cctm: parameters have no channels");
        for_each([&](const char* name, const Tensor& t) {
            const bool matrix = t.rank() == 2;
            const bool ok = matrix ? (t.dim(0) == c && t.dim(1) == c) : (t.rank() == 1 && t.dim(0) == c);
            if (!ok) {
                throw DimensionError(std::string("cctm: parameter ") + name + " has shape " + shape_string(t.shape()) +
                                     " for " + std::to_string(c) + " channels");
            }
        });
        if (!(grn_eps > 0.0)) throw DomainError("cctm: grn_eps must be positive");
    }
};

/// Everything the forward pass computes. The first four fields are the
/// named features; the rest is cached for the backward pass.
struct Activations {
    Tensor e_prime;   // first-step gate E'
    Tensor e_cross1;  // first cross feature X
    Tensor gate;      // crossing gate map
    Tensor e_cf;      // output

    Tensor e, b;
    Tensor fc1_out, ln1_out;
    Tensor grn_e, grn_b;
    Tensor mlp_e_hidden, mlp_b_hidden;
    Tensor gate_e, gate_b;
};

// ---------------------------------------------------------------------------
// Channel-axis building blocks

inline void check_feature(const Tensor& x, const char* what) {
    if (x.rank() != 3) throw DimensionError(std::string(what) + ": expected [B,C,L], got " + shape_string(x.shape()));
}

/// y[b,o,l] = sum_i w[o,i] x[b,i,l] + bias[o]
inline Tensor channel_linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    check_feature(x, "channel_linear");
    const std::size_t nb = x.dim(0), ci = x.dim(1), nl = x.dim(2);
    if (w.rank() != 2 || w.dim(1) != ci || bias.size() != w.dim(0)) {
        throw DimensionError("channel_linear: weight " + shape_string(w.shape()) + " / bias " +
                             shape_string(bias.shape()) + " do not fit input " + shape_string(x.shape()));
    }
    const std::size_t co = w.dim(0);
    Tensor y({nb, co, nl});
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t l = 0; l < nl; ++l) y(b, o, l) = bias[o];
            for (std::size_t i = 0; i < ci; ++i) {
                const double wi = w(o, i);
                for (std::size_t l = 0; l < nl; ++l) y(b, o, l) += wi * x(b, i, l);
            }
        }
    }
    return y;
}

struct LinearGrads {
    Tensor dx, dw, dbias;
};

inline LinearGrads channel_linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
    const std::size_t nb = x.dim(0), ci = x.dim(1), nl = x.dim(2), co = w.dim(0);
    LinearGrads g{Tensor(x.shape()), Tensor(w.shape()), Tensor({co})};
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t o = 0; o < co; ++o) {
            for (std::size_t l = 0; l < nl; ++l) g.dbias[o] += dy(b, o, l);
            for (std::size_t i = 0; i < ci; ++i) {
                double acc = 0.0;
                const double wi = w(o, i);
                for (std::size_t l = 0; l < nl; ++l) {
                    acc += dy(b, o, l) * x(b, i, l);
                    g.dx(b, i, l) += wi * dy(b, o, l);
                }
                g.dw(o, i) += acc;
            }
        }
    }
    return g;
}

/// Global response normalization: per sample, g_c = ||x[b,c,:]||_2,
/// n_c = g_c / (mean_c g + eps), y = gamma_c * x * n_c + beta_c + x.
inline Tensor grn(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kGrnEps) {
    check_feature(x, "grn");
    const std::size_t nb = x.dim(0), nc = x.dim(1), nl = x.dim(2);
    if (gamma.size() != nc || beta.size() != nc) throw DimensionError("grn: affine extent mismatch");
    if (!(eps > 0.0)) throw DomainError("grn: eps must be positive");
    Tensor y(x.shape());
    std::vector<double> norms(nc);
    for (std::size_t b = 0; b < nb; ++b) {
        double mean = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            double ss = 0.0;
            for (std::size_t l = 0; l < nl; ++l) ss += x(b, c, l) * x(b, c, l);
            norms[c] = std::sqrt(ss);
            mean += norms[c];
        }
        mean /= static_cast<double>(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            const double n = norms[c] / (mean + eps);
            for (std::size_t l = 0; l < nl; ++l) y(b, c, l) = gamma[c] * x(b, c, l) * n + beta[c] + x(b, c, l);
        }
    }
    return y;
}

struct GrnGrads {
    Tensor dx, dgamma, dbeta;
};

/// The L2 norm has no derivative at a zero channel; that channel's norm
/// contributes no gradient.
inline GrnGrads grn_backward(const Tensor& x, const Tensor& gamma, const Tensor& dy, double eps = kGrnEps) {
    const std::size_t nb = x.dim(0), nc = x.dim(1), nl = x.dim(2);
    GrnGrads g{Tensor(x.shape()), Tensor({nc}), Tensor({nc})};
    std::vector<double> norms(nc), dnorm_n(nc);
    for (std::size_t b = 0; b < nb; ++b) {
        double mean = 0.0;
        for (std::size_t c = 0; c < nc; ++c) {
            double ss = 0.0;
            for (std::size_t l = 0; l < nl; ++l) ss += x(b, c, l) * x(b, c, l);
            norms[c] = std::sqrt(ss);
            mean += norms[c];
        }
        mean /= static_cast<double>(nc);
        const double denom = mean + eps;

        double weighted = 0.0;  // sum_c dL/dn_c * g_c
        for (std::size_t c = 0; c < nc; ++c) {
            const double n = norms[c] / denom;
            double dn = 0.0;
            for (std::size_t l = 0; l < nl; ++l) {
                const double d = dy(b, c, l);
                g.dgamma[c] += d * x(b, c, l) * n;
                g.dbeta[c] += d;
                g.dx(b, c, l) = d * (1.0 + gamma[c] * n);
                dn += d * gamma[c] * x(b, c, l);
            }
            dnorm_n[c] = dn;
            weighted += dn * norms[c];
        }
        const double shared = weighted / (denom * denom * static_cast<double>(nc));
        for (std::size_t c = 0; c < nc; ++c) {
            if (norms[c] == 0.0) continue;
            const double dg = dnorm_n[c] / denom - shared;
            for (std::size_t l = 0; l < nl; ++l) g.dx(b, c, l) += dg * x(b, c, l) / norms[c];
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// The module

/// E' = sigmoid(gelu(LN(FC(E)))), LN over channels.
inline Tensor gate_first(const Tensor& e, const Params& p) {
    const Tensor z = channel_linear(e, p.fc1_w, p.fc1_b);
    return sigmoid(gelu(layer_norm(z, p.ln1_gamma, p.ln1_beta, p.ln_eps, 1)));
}

inline Tensor cross_first(const Tensor& e, const Tensor& b, const Tensor& e_prime) {
    require_same_shape(e, b, "cross_first");
    require_same_shape(e, e_prime, "cross_first");
    Tensor out(e.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = e[i] + b[i] * (1.0 - e_prime[i]);
    return out;
}

inline Tensor mlp_logits(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    return channel_linear(gelu(channel_linear(x, w1, b1)), w2, b2);
}

/// Crossing gate map: sigmoid(MLP_e(GRN(E))) * sigmoid(MLP_b(GRN(B))).
inline Tensor cross_gate(const Tensor& e, const Tensor& b, const Params& p) {
    require_same_shape(e, b, "cross_gate");
    const Tensor se = sigmoid(mlp_logits(grn(e, p.grn_gamma, p.grn_beta, p.grn_eps), p.mlp_e_w1, p.mlp_e_b1,
                                         p.mlp_e_w2, p.mlp_e_b2));
    const Tensor sb = sigmoid(mlp_logits(grn(b, p.grn_gamma, p.grn_beta, p.grn_eps), p.mlp_b_w1, p.mlp_b_b1,
                                         p.mlp_b_w2, p.mlp_b_b2));
    Tensor gate(e.shape());
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = se[i] * sb[i];
    return gate;
}

/// E_cf = 2 E * gate + B * (1 - gate); the encoder side carries weight 2.
inline Tensor cross_second(const Tensor& e, const Tensor& b, const Tensor& gate) {
    require_same_shape(e, b, "cross_second");
    require_same_shape(e, gate, "cross_second");
    Tensor out(e.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 2.0 * e[i] * gate[i] + b[i] * (1.0 - gate[i]);
    return out;
}

inline Activations forward(const Tensor& e, const Tensor& b, const Params& p) {
    check_feature(e, "cctm forward");
    require_same_shape(e, b, "cctm forward");
    p.validate();
    if (e.dim(1) != p.channels()) {
        throw DimensionError("cctm forward: input " + shape_string(e.shape()) + " has " + std::to_string(e.dim(1)) +
                             " channels, parameters have " + std::to_string(p.channels()));
    }

    Activations a;
    a.e = e;
    a.b = b;
    a.fc1_out = channel_linear(e, p.fc1_w, p.fc1_b);
    a.ln1_out = layer_norm(a.fc1_out, p.ln1_gamma, p.ln1_beta, p.ln_eps, 1);
    a.e_prime = sigmoid(gelu(a.ln1_out));
    a.e_cross1 = cross_first(e, b, a.e_prime);

    a.grn_e = grn(a.e_cross1, p.grn_gamma, p.grn_beta, p.grn_eps);
    a.grn_b = grn(b, p.grn_gamma, p.grn_beta, p.grn_eps);
    a.mlp_e_hidden = channel_linear(a.grn_e, p.mlp_e_w1, p.mlp_e_b1);
    a.mlp_b_hidden = channel_linear(a.grn_b, p.mlp_b_w1, p.mlp_b_b1);
    a.gate_e = sigmoid(channel_linear(gelu(a.mlp_e_hidden), p.mlp_e_w2, p.mlp_e_b2));
    a.gate_b = sigmoid(channel_linear(gelu(a.mlp_b_hidden), p.mlp_b_w2, p.mlp_b_b2));
    a.gate = Tensor(e.shape());
    for (std::size_t i = 0; i < a.gate.size(); ++i) a.gate[i] = a.gate_e[i] * a.gate_b[i];

    a.e_cf = cross_second(a.e_cross1, b, a.gate);
    return a;
}

struct Gradients {
    Tensor de, db;
    Params dparams;
};

namespace detail {

/// Backward through sigmoid(W2 gelu(W1 x + b1) + b2) given d(output).
inline Tensor mlp_gate_backward(const Tensor& x, const Tensor& hidden, const Tensor& gate, const Tensor& dgate,
                                const Tensor& w1, const Tensor& w2, Tensor& dw1, Tensor& db1, Tensor& dw2,
                                Tensor& db2) {
    Tensor dlogit(gate.shape());
    for (std::size_t i = 0; i < dlogit.size(); ++i) dlogit[i] = dgate[i] * gate[i] * (1.0 - gate[i]);
    const Tensor act = gelu(hidden);
    auto l2 = channel_linear_backward(act, w2, dlogit);
    dw2 = std::move(l2.dw);
    db2 = std::move(l2.dbias);
    Tensor dhidden = std::move(l2.dx);
    for (std::size_t i = 0; i < dhidden.size(); ++i) dhidden[i] *= gelu_grad(hidden[i]);
    auto l1 = channel_linear_backward(x, w1, dhidden);
    dw1 = std::move(l1.dw);
    db1 = std::move(l1.dbias);
    return std::move(l1.dx);
}

} // namespace detail

/// Exact gradients of a loss with upstream gradient d_out = dL/dE_cf.
inline Gradients backward(const Activations& a, const Params& p, const Tensor& d_out) {
    p.validate();
    const Shape& shape = a.e.shape();
    const bool consistent = a.e.rank() == 3 && a.e.dim(1) == p.channels() && d_out.shape() == shape &&
                            a.b.shape() == shape && a.e_prime.shape() == shape && a.e_cross1.shape() == shape &&
                            a.gate.shape() == shape && a.fc1_out.shape() == shape && a.grn_e.shape() == shape &&
                            a.grn_b.shape() == shape && a.mlp_e_hidden.shape() == shape &&
                            a.mlp_b_hidden.shape() == shape && a.gate_e.shape() == shape && a.gate_b.shape() == shape;
    if (!consistent) {
        throw DimensionError("cctm backward: activations are inconsistent with parameters or gradient " +
                             shape_string(d_out.shape()));
    }

    Gradients g{Tensor(shape), Tensor(shape), Params::zeros(p.channels())};
    g.dparams.ln_eps = p.ln_eps;
    g.dparams.grn_eps = p.grn_eps;
    const std::size_t n = a.e.size();

    // second step
    Tensor dx(shape), dgate_e(shape), dgate_b(shape);
    for (std::size_t i = 0; i < n; ++i) {
        const double dy = d_out[i];
        dx[i] = 2.0 * a.gate[i] * dy;
        g.db[i] = (1.0 - a.gate[i]) * dy;
        const double dgate = (2.0 * a.e_cross1[i] - a.b[i]) * dy;
        dgate_e[i] = dgate * a.gate_b[i];
        dgate_b[i] = dgate * a.gate_e[i];
    }

    auto& dp = g.dparams;
    const Tensor dgrn_e = detail::mlp_gate_backward(a.grn_e, a.mlp_e_hidden, a.gate_e, dgate_e, p.mlp_e_w1,
                                                    p.mlp_e_w2, dp.mlp_e_w1, dp.mlp_e_b1, dp.mlp_e_w2, dp.mlp_e_b2);
    const Tensor dgrn_b = detail::mlp_gate_backward(a.grn_b, a.mlp_b_hidden, a.gate_b, dgate_b, p.mlp_b_w1,
                                                    p.mlp_b_w2, dp.mlp_b_w1, dp.mlp_b_b1, dp.mlp_b_w2, dp.mlp_b_b2);
    const auto ge = grn_backward(a.e_cross1, p.grn_gamma, dgrn_e, p.grn_eps);
    const auto gb = grn_backward(a.b, p.grn_gamma, dgrn_b, p.grn_eps);
    dp.grn_gamma = ge.dgamma + gb.dgamma;
    dp.grn_beta = ge.dbeta + gb.dbeta;
    dx = dx + ge.dx;
    g.db = g.db + gb.dx;

    // first step: X = E + B (1 - E')
    Tensor dln(shape);
    for (std::size_t i = 0; i < n; ++i) {
        g.de[i] = dx[i];
        g.db[i] += dx[i] * (1.0 - a.e_prime[i]);
        const double de_prime = -dx[i] * a.b[i];
        const double s = a.e_prime[i];
        dln[i] = de_prime * s * (1.0 - s) * gelu_grad(a.ln1_out[i]);
    }
    auto ln = layer_norm_backward(a.fc1_out, p.ln1_gamma, dln, p.ln_eps, 1);
    dp.ln1_gamma = std::move(ln.dgamma);
    dp.ln1_beta = std::move(ln.dbeta);
    auto fc = channel_linear_backward(a.e, p.fc1_w, ln.dx);
    dp.fc1_w = std::move(fc.dw);
    dp.fc1_b = std::move(fc.dbias);
    g.de = g.de + fc.dx;
    return g;
}

} // namespace crossdino::cctm
