#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crossdino/cctm.hpp"

namespace crossdino::cctm {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;  // tensor name and flat index of the worst entry
};

/// Relative error with the denominator floored so that entries where both
/// gradients vanish do not divide by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Random parameters with every tensor (GRN affine included) away from its
/// warm-start value, so no path of the backward pass is trivially zero.
inline Params random_params(std::size_t channels, Rng& rng) {
    Params p = Params::init(channels, rng);
    for (auto* t : {&p.fc1_b, &p.ln1_beta, &p.grn_gamma, &p.grn_beta, &p.mlp_e_b1, &p.mlp_e_b2, &p.mlp_b_b1,
                    &p.mlp_b_b2}) {
        for (auto& v : t->data()) v = rng.uniform(-0.5, 0.5);
    }
    for (auto& v : p.ln1_gamma.data()) v = rng.uniform(0.5, 1.5);
    return p;
}

/// Compares backward() against central finite differences of
/// L = sum(R * E_cf) for random E, B, R and parameters drawn from the seed.
inline GradCheckResult gradient_check(std::uint64_t seed, const Shape& shape, double h = 1e-5) {
    if (shape.size() != 3) throw DimensionError("gradient_check: shape must be B,C,L");
    Rng rng(seed);
    const Params params = random_params(shape[1], rng);
    Tensor e(shape), b(shape), r(shape);
    for (auto* t : {&e, &b, &r}) {
        for (auto& v : t->data()) v = rng.normal();
    }

    const auto acts = forward(e, b, params);
    auto grads = backward(acts, params, r);

    GradCheckResult result;
    auto compare = [&](const std::string& name, const Tensor& analytic, const Tensor& numeric) {
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            const double err = relative_error(analytic[i], numeric[i]);
            if (err > result.max_rel_err || result.worst.empty()) {
                result.max_rel_err = std::max(result.max_rel_err, err);
                result.worst = name + "[" + std::to_string(i) + "]";
            }
        }
    };

    compare("E", grads.de, finite_diff_grad([&](const Tensor& x) { return dot(r, forward(x, b, params).e_cf); }, e, h));
    compare("B", grads.db, finite_diff_grad([&](const Tensor& x) { return dot(r, forward(e, x, params).e_cf); }, b, h));

    Params probe = params;
    std::vector<std::pair<std::string, Tensor*>> analytic;
    grads.dparams.for_each([&](const char* name, Tensor& t) { analytic.emplace_back(name, &t); });
    std::size_t index = 0;
    probe.for_each([&](const char* name, Tensor& slot) {
        const Tensor original = slot;
        const Tensor numeric = finite_diff_grad(
            [&](const Tensor& x) {
                slot = x;
                return dot(r, forward(e, b, probe).e_cf);
            },
            original, h);
        slot = original;
        compare(name, *analytic[index++].second, numeric);
    });
    return result;
}

} // namespace crossdino::cctm
