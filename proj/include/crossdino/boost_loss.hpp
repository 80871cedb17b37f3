#pragma once

// Category-size soft labels and the size-reweighted classification loss
//
//   cs_i  = sqrt(h_i / H * w_i / W) * y_i
//   L     = -1/N sum_i { a (1 - cs_hat_i^b)^g cs_i^b log p_i
//                        + (1 - a) p_i^g (1 - y_i) log(1 - p_i) }
//
// with cs_hat the same geometric factor of the predicted box. cs_hat is a
// per-sample weight: no gradient flows into predicted box extents.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crossdino/error.hpp"

namespace crossdino::boost {

inline constexpr double kProbClamp = 1e-12;

struct BoxSample {
    double image_h = 0, image_w = 0;
    double h = 0, w = 0;          // ground truth box
    int y = 0;                    // 1 for the positive class, 0 otherwise
    double p = 0.5;               // predicted probability of the positive class
    double h_hat = 0, w_hat = 0;  // predicted box
};

struct BoostConfig {
    double alpha = 0.25;
    double beta = 1.0;
    double gamma = 2.0;
    /// Reduction count. Unset means the number of positives (at least 1).
    std::optional<std::size_t> n;
};

/// sqrt((h / H) * (w / W)); invariant under a common rescaling.
inline double size_factor(double h, double w, double image_h, double image_w) {
    if (!(h > 0) || !(w > 0) || !(image_h > 0) || !(image_w > 0)) {
        throw DomainError("size_factor: extents must be positive (box " + std::to_string(h) + "x" +
                          std::to_string(w) + ", image " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                          ")");
    }
    if (h > image_h || w > image_w) {
        throw DomainError("size_factor: box " + std::to_string(h) + "x" + std::to_string(w) +
                          " exceeds image " + std::to_string(image_h) + "x" + std::to_string(image_w));
    }
    return std::sqrt((h / image_h) * (w / image_w));
}

/// Ground-truth category-size label.
inline double cs_label(const BoxSample& s) {
    const double f = size_factor(s.h, s.w, s.image_h, s.image_w);
    return s.y ? f : 0.0;
}

/// Size factor of the predicted box.
inline double cs_hat(const BoxSample& s) { return size_factor(s.h_hat, s.w_hat, s.image_h, s.image_w); }

inline double positive_weight(double cs_hat_value, double cs_value, const BoostConfig& cfg) {
    return cfg.alpha * std::pow(1.0 - std::pow(cs_hat_value, cfg.beta), cfg.gamma) * std::pow(cs_value, cfg.beta);
}

inline double clamp_probability(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

namespace detail {

inline double reduction_count(std::span<const BoxSample> samples, std::optional<std::size_t> n) {
    if (n) {
        if (*n == 0) throw DomainError("loss: reduction count N must be at least 1");
        return static_cast<double>(*n);
    }
    if (samples.empty()) throw DomainError("loss: empty batch without a reduction count");
    const auto positives = std::count_if(samples.begin(), samples.end(), [](const BoxSample& s) { return s.y != 0; });
    return static_cast<double>(std::max<std::ptrdiff_t>(1, positives));
}

inline void check_label(const BoxSample& s, std::size_t i) {
    if (s.y != 0 && s.y != 1) throw DomainError("loss: sample " + std::to_string(i) + " has label outside {0,1}");
    if (!std::isfinite(s.p)) throw DomainError("loss: sample " + std::to_string(i) + " has non-finite probability");
}

/// (1 - a) p^g log(1 - p), the background term shared with focal loss.
inline double negative_term(double p, double alpha, double gamma) {
    return (1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

inline double negative_term_grad(double p, double alpha, double gamma) {
    return (1.0 - alpha) * (gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p) - std::pow(p, gamma) / (1.0 - p));
}

} // namespace detail

inline double boost_loss(std::span<const BoxSample> samples, const BoostConfig& cfg) {
    const double n = detail::reduction_count(samples, cfg.n);
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        detail::check_label(s, i);
        const double p = clamp_probability(s.p);
        if (s.y) total += positive_weight(cs_hat(s), cs_label(s), cfg) * std::log(p);
        else total += detail::negative_term(p, cfg.alpha, cfg.gamma);
    }
    return -total / n;
}

/// dL/dp_i for every sample, evaluated at the clamped probability.
inline std::vector<double> boost_loss_grad(std::span<const BoxSample> samples, const BoostConfig& cfg) {
    const double n = detail::reduction_count(samples, cfg.n);
    std::vector<double> grad(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        detail::check_label(s, i);
        const double p = clamp_probability(s.p);
        if (s.y) grad[i] = -positive_weight(cs_hat(s), cs_label(s), cfg) / (p * n);
        else grad[i] = -detail::negative_term_grad(p, cfg.alpha, cfg.gamma) / n;
    }
    return grad;
}

/// Alpha-balanced focal loss with the same reduction as boost_loss. Box
/// extents are ignored.
inline double focal_loss(std::span<const BoxSample> samples, double alpha, double gamma,
                         std::optional<std::size_t> n_override = std::nullopt) {
    const double n = detail::reduction_count(samples, n_override);
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        detail::check_label(s, i);
        const double p = clamp_probability(s.p);
        if (s.y) total += alpha * std::pow(1.0 - p, gamma) * std::log(p);
        else total += detail::negative_term(p, alpha, gamma);
    }
    return -total / n;
}

inline std::vector<double> focal_loss_grad(std::span<const BoxSample> samples, double alpha, double gamma,
                                           std::optional<std::size_t> n_override = std::nullopt) {
    const double n = detail::reduction_count(samples, n_override);
    std::vector<double> grad(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        detail::check_label(s, i);
        const double p = clamp_probability(s.p);
        if (s.y) {
            const double d = alpha * (-gamma * std::pow(1.0 - p, gamma - 1.0) * std::log(p) + std::pow(1.0 - p, gamma) / p);
            grad[i] = -d / n;
        } else {
            grad[i] = -detail::negative_term_grad(p, alpha, gamma) / n;
        }
    }
    return grad;
}

// ---------------------------------------------------------------------------
// Weight table: (1 - cs_hat^beta)^gamma across object sizes and betas.

/// Rounds half away from zero to the given number of decimals.
inline double round_to(double x, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(x * scale) / scale;
}

struct ObjectSize {
    double h = 0, w = 0;
};

struct WeightRow {
    ObjectSize size;
    double cs_hat = 0;
    double base = 0;                    // (1 - cs_hat)^gamma
    std::vector<double> beta_weights;   // (1 - cs_hat^beta)^gamma per beta
};

struct RelativeDistance {
    std::size_t smaller = 0, larger = 0;  // row indices
    double base = 0;
    std::vector<double> beta_values;
    std::vector<double> amplification;  // beta_values[k] / base
};

struct WeightTable {
    double gamma = 0;
    std::vector<double> betas;
    std::vector<WeightRow> rows;
    std::vector<RelativeDistance> distances;  // consecutive row pairs
};

inline double relative_distance(double a, double b) { return std::abs(a - b) / std::min(a, b); }

/// Builds the table column by column from the previous column's printed
/// value: cs_hat is rounded to `decimals` before the weights are evaluated,
/// weights are rounded before relative distances are taken, and distances
/// are rounded before their amplification ratios. decimals < 0 keeps full
/// precision throughout.
inline WeightTable weight_table(std::span<const ObjectSize> sizes, double image_h, double image_w, double gamma,
                                std::span<const double> betas, int decimals = 4) {
    auto shown = [decimals](double v) { return decimals < 0 ? v : round_to(v, decimals); };
    WeightTable table;
    table.gamma = gamma;
    table.betas.assign(betas.begin(), betas.end());
    for (const auto& size : sizes) {
        WeightRow row;
        row.size = size;
        row.cs_hat = shown(size_factor(size.h, size.w, image_h, image_w));
        row.base = shown(std::pow(1.0 - row.cs_hat, gamma));
        for (double beta : betas) row.beta_weights.push_back(shown(std::pow(1.0 - std::pow(row.cs_hat, beta), gamma)));
        table.rows.push_back(std::move(row));
    }
    for (std::size_t i = 0; i + 1 < table.rows.size(); ++i) {
        const auto& a = table.rows[i];
        const auto& b = table.rows[i + 1];
        RelativeDistance rd;
        rd.smaller = i;
        rd.larger = i + 1;
        rd.base = shown(relative_distance(a.base, b.base));
        for (std::size_t k = 0; k < betas.size(); ++k) {
            const double v = shown(relative_distance(a.beta_weights[k], b.beta_weights[k]));
            rd.beta_values.push_back(v);
            rd.amplification.push_back(rd.base > 0 ? v / rd.base : 0.0);
        }
        table.distances.push_back(std::move(rd));
    }
    return table;
}

} // namespace crossdino::boost
