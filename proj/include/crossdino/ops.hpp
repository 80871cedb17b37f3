#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "crossdino/tensor.hpp"

namespace crossdino {

inline constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) noexcept { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) noexcept {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

/// Branch on sign so exp never overflows.
inline double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor gelu(const Tensor& x) { return map(x, [](double v) { return gelu(v); }); }
inline Tensor sigmoid(const Tensor& x) { return map(x, [](double v) { return sigmoid(v); }); }

namespace detail {

/// Splits a shape around one axis into (outer, extent, inner) so element
/// (o, c, i) lives at (o * extent + c) * inner + i.
struct AxisView {
    std::size_t outer = 1, extent = 1, inner = 1;

    AxisView(const Shape& shape, std::size_t axis) {
        for (std::size_t a = 0; a < shape.size(); ++a) {
            if (a < axis) outer *= shape[a];
            else if (a == axis) extent = shape[a];
            else inner *= shape[a];
        }
    }
    std::size_t at(std::size_t o, std::size_t c, std::size_t i) const noexcept { return (o * extent + c) * inner + i; }
};

inline std::size_t resolve_axis(const Tensor& x, int axis) {
    const int rank = static_cast<int>(x.rank());
    const int a = axis < 0 ? rank + axis : axis;
    if (rank == 0 || a < 0 || a >= rank) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(x.shape()));
    }
    return static_cast<std::size_t>(a);
}

} // namespace detail

/// Layer normalization along one axis (the last by default): population
/// variance, eps inside the square root, then gamma * xhat + beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps,
                         int axis = -1) {
    if (x.size() == 0) throw DimensionError("layer_norm: empty axis");
    const auto ax = detail::resolve_axis(x, axis);
    const detail::AxisView v(x.shape(), ax);
    if (gamma.size() != v.extent || beta.size() != v.extent) {
        throw DimensionError("layer_norm: affine extents " + shape_string(gamma.shape()) + "/" +
                             shape_string(beta.shape()) + " do not match axis extent " + std::to_string(v.extent));
    }
    if (!(eps >= 0.0)) throw DomainError("layer_norm: eps must be non-negative");

    Tensor out(x.shape());
    const double n = static_cast<double>(v.extent);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            double mean = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) mean += x[v.at(o, c, i)];
            mean /= n;
            double var = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) {
                const double d = x[v.at(o, c, i)] - mean;
                var += d * d;
            }
            var /= n;
            const double denom = std::sqrt(var + eps);
            for (std::size_t c = 0; c < v.extent; ++c) {
                const auto k = v.at(o, c, i);
                const double xhat = denom > 0.0 ? (x[k] - mean) / denom : 0.0;
                out[k] = gamma[c] * xhat + beta[c];
            }
        }
    }
    return out;
}

struct LayerNormGrads {
    Tensor dx;
    Tensor dgamma;
    Tensor dbeta;
};

/// Gradient of layer_norm given the upstream gradient dy.
inline LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gamma, const Tensor& dy,
                                          double eps = kLayerNormEps, int axis = -1) {
    require_same_shape(x, dy, "layer_norm_backward");
    const auto ax = detail::resolve_axis(x, axis);
    const detail::AxisView v(x.shape(), ax);
    if (gamma.size() != v.extent) throw DimensionError("layer_norm_backward: gamma extent mismatch");

    LayerNormGrads g{Tensor(x.shape()), Tensor({v.extent}), Tensor({v.extent})};
    const double n = static_cast<double>(v.extent);
    std::vector<double> xhat(v.extent), dxhat(v.extent);
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            double mean = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) mean += x[v.at(o, c, i)];
            mean /= n;
            double var = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) {
                const double d = x[v.at(o, c, i)] - mean;
                var += d * d;
            }
            var /= n;
            const double inv_std = 1.0 / std::sqrt(var + eps);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t c = 0; c < v.extent; ++c) {
                const auto k = v.at(o, c, i);
                xhat[c] = (x[k] - mean) * inv_std;
                dxhat[c] = dy[k] * gamma[c];
                g.dgamma[c] += dy[k] * xhat[c];
                g.dbeta[c] += dy[k];
                mean_dxhat += dxhat[c];
                mean_dxhat_xhat += dxhat[c] * xhat[c];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            for (std::size_t c = 0; c < v.extent; ++c) {
                g.dx[v.at(o, c, i)] = inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
            }
        }
    }
    return g;
}

/// Central finite-difference gradient of a scalar function. Throws
/// EvaluationError when f returns a non-finite value.
template <typename F>
Tensor finite_diff_grad(F&& f, const Tensor& x, double h = 1e-5) {
    if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
    Tensor probe = x;
    Tensor grad(x.shape());
    auto eval = [&](std::size_t i) {
        const double value = f(static_cast<const Tensor&>(probe));
        if (!std::isfinite(value)) {
            throw EvaluationError("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
        }
        return value;
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = eval(i);
        probe[i] = orig - h;
        const double down = eval(i);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

} // namespace crossdino
