#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "crossdino/boost_loss.hpp"
#include "crossdino/harness/csv.hpp"
#include "crossdino/harness/synth.hpp"
#include "crossdino/ops.hpp"
#include "crossdino/rng.hpp"

namespace crossdino::harness {

enum class LossKind { boost, focal };

inline std::string_view loss_name(LossKind k) { return k == LossKind::boost ? "boost" : "focal"; }

struct RunConfig {
    LossKind loss = LossKind::boost;
    double alpha = 0.25;
    double beta = 1.0;
    double gamma = 2.0;
    int epochs = 200;
    double lr = 0.5;
    std::uint64_t seed = 42;
    std::size_t n = 5000;
    std::string out;

    void validate() const {
        if (epochs < 0) throw DomainError("run config: epochs must be non-negative");
        if (!(lr > 0.0)) throw DomainError("run config: learning rate must be positive");
        if (n == 0) throw DomainError("run config: dataset size must be at least 1");
        if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("run config: beta must lie in (0, 1]");
    }
};

struct BucketMetrics {
    std::size_t samples = 0;
    std::size_t positives = 0;
    double recall = std::numeric_limits<double>::quiet_NaN();                // at score >= 0.5
    double mean_positive_weight = std::numeric_limits<double>::quiet_NaN();  // boost positive term weight
};

struct TrainMetrics {
    int epochs = 0;
    double final_loss = 0;  // classification loss of the trained kind
    double box_loss = 0;    // auxiliary size regression
    std::array<BucketMetrics, kAllBuckets.size()> buckets{};

    const BucketMetrics& bucket(SizeBucket b) const { return buckets[static_cast<std::size_t>(b)]; }
};

namespace detail {

inline constexpr std::size_t kHidden = 32;

/// D -> 32 (gelu) -> {class logit, log box height / 1024, log box width / 1024}.
struct ToyModel {
    Tensor w1{{kHidden, kFeatureDim}}, b1{{kHidden}};
    Tensor wc{{kHidden}};
    double bc = 0.0;
    Tensor wb{{2, kHidden}}, bb{{2}};

    explicit ToyModel(Rng& rng) {
        const double b_in = 1.0 / std::sqrt(static_cast<double>(kFeatureDim));
        const double b_hid = 1.0 / std::sqrt(static_cast<double>(kHidden));
        for (auto& v : w1.data()) v = rng.uniform(-b_in, b_in);
        for (auto& v : wc.data()) v = rng.uniform(-b_hid, b_hid);
        for (auto& v : wb.data()) v = rng.uniform(-b_hid, b_hid);
    }
};

struct ForwardPass {
    std::vector<std::array<double, kHidden>> pre;  // hidden pre-activations
    std::vector<std::array<double, kHidden>> act;
    std::vector<double> prob;
    std::vector<std::array<double, 2>> log_box;
    std::vector<boost::BoxSample> boxes;
};

/// Pixel side length from a log normalized side, limited to one pixel .. full image.
inline double box_side(double log_norm) {
    const double lo = std::log(1.0 / kVirtualImage);
    return kVirtualImage * std::exp(std::clamp(log_norm, lo, 0.0));
}

inline ForwardPass run_forward(const ToyModel& m, std::span<const SynthSample> data) {
    ForwardPass f;
    const std::size_t n = data.size();
    f.pre.resize(n);
    f.act.resize(n);
    f.prob.resize(n);
    f.log_box.resize(n);
    f.boxes.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto& x = data[s].features;
        double logit = m.bc;
        std::array<double, 2> box{m.bb[0], m.bb[1]};
        for (std::size_t j = 0; j < kHidden; ++j) {
            double z = m.b1[j];
            for (std::size_t d = 0; d < kFeatureDim; ++d) z += m.w1(j, d) * x[d];
            f.pre[s][j] = z;
            const double a = gelu(z);
            f.act[s][j] = a;
            logit += m.wc[j] * a;
            box[0] += m.wb(0, j) * a;
            box[1] += m.wb(1, j) * a;
        }
        f.prob[s] = sigmoid(logit);
        f.log_box[s] = box;
        f.boxes[s] = boost::BoxSample{kVirtualImage, kVirtualImage, data[s].h, data[s].w, data[s].y, f.prob[s],
                                      box_side(box[0]), box_side(box[1])};
    }
    return f;
}

inline bool finite(const ForwardPass& f) {
    for (std::size_t s = 0; s < f.prob.size(); ++s) {
        if (!std::isfinite(f.prob[s]) || !std::isfinite(f.log_box[s][0]) || !std::isfinite(f.log_box[s][1])) return false;
    }
    return true;
}

inline double classification_loss(const ForwardPass& f, const RunConfig& cfg) {
    if (cfg.loss == LossKind::boost) return boost::boost_loss(f.boxes, {cfg.alpha, cfg.beta, cfg.gamma, {}});
    return boost::focal_loss(f.boxes, cfg.alpha, cfg.gamma);
}

inline double box_loss(const ForwardPass& f, std::span<const SynthSample> data) {
    double total = 0.0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const double th = std::log(data[s].h / kVirtualImage), tw = std::log(data[s].w / kVirtualImage);
        total += 0.5 * ((f.log_box[s][0] - th) * (f.log_box[s][0] - th) + (f.log_box[s][1] - tw) * (f.log_box[s][1] - tw));
    }
    return total / static_cast<double>(data.size());
}

} // namespace detail

/// Full-batch gradient descent on a small perceptron with a classification
/// head trained by boost or focal loss and a box-size head trained by L2 on
/// log extents. Deterministic for a given config.
inline TrainMetrics train_toy(std::span<const SynthSample> data, const RunConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw DomainError("train_toy: empty dataset");
    using detail::kHidden;

    Rng rng(cfg.seed);
    detail::ToyModel m(rng);
    const std::size_t n = data.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto f = detail::run_forward(m, data);
        const double loss = detail::finite(f) ? detail::classification_loss(f, cfg) + detail::box_loss(f, data)
                                             : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(loss)) throw TrainingError("train_toy: non-finite loss at epoch " + std::to_string(epoch), epoch);

        const auto dprob = cfg.loss == LossKind::boost
                               ? boost::boost_loss_grad(f.boxes, {cfg.alpha, cfg.beta, cfg.gamma, {}})
                               : boost::focal_loss_grad(f.boxes, cfg.alpha, cfg.gamma);

        Tensor gw1({kHidden, kFeatureDim}), gb1({kHidden}), gwc({kHidden}), gwb({2, kHidden}), gbb({2});
        double gbc = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double p = f.prob[s];
            const double dlogit = dprob[s] * p * (1.0 - p);
            const double dh = (f.log_box[s][0] - std::log(data[s].h / kVirtualImage)) * inv_n;
            const double dw = (f.log_box[s][1] - std::log(data[s].w / kVirtualImage)) * inv_n;
            gbc += dlogit;
            gbb[0] += dh;
            gbb[1] += dw;
            for (std::size_t j = 0; j < kHidden; ++j) {
                const double a = f.act[s][j];
                gwc[j] += dlogit * a;
                gwb(0, j) += dh * a;
                gwb(1, j) += dw * a;
                const double dact = dlogit * m.wc[j] + dh * m.wb(0, j) + dw * m.wb(1, j);
                const double dpre = dact * gelu_grad(f.pre[s][j]);
                gb1[j] += dpre;
                for (std::size_t d = 0; d < kFeatureDim; ++d) gw1(j, d) += dpre * data[s].features[d];
            }
        }

        auto step = [&](Tensor& w, const Tensor& g) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.lr * g[i];
        };
        step(m.w1, gw1);
        step(m.b1, gb1);
        step(m.wc, gwc);
        step(m.wb, gwb);
        step(m.bb, gbb);
        m.bc -= cfg.lr * gbc;
    }

    const auto f = detail::run_forward(m, data);
    if (!detail::finite(f)) throw TrainingError("train_toy: non-finite model output after training", cfg.epochs);
    TrainMetrics metrics;
    metrics.epochs = cfg.epochs;
    metrics.final_loss = detail::classification_loss(f, cfg);
    metrics.box_loss = detail::box_loss(f, data);
    if (!std::isfinite(metrics.final_loss) || !std::isfinite(metrics.box_loss)) {
        throw TrainingError("train_toy: non-finite loss after training", cfg.epochs);
    }

    const boost::BoostConfig weight_cfg{cfg.alpha, cfg.beta, cfg.gamma, {}};
    std::array<std::size_t, kAllBuckets.size()> hits{};
    std::array<double, kAllBuckets.size()> weight_sum{};
    for (std::size_t s = 0; s < n; ++s) {
        const auto k = static_cast<std::size_t>(data[s].bucket);
        auto& b = metrics.buckets[k];
        ++b.samples;
        if (!data[s].y) continue;
        ++b.positives;
        if (f.prob[s] >= 0.5) ++hits[k];
        weight_sum[k] += boost::positive_weight(boost::cs_hat(f.boxes[s]), boost::cs_label(f.boxes[s]), weight_cfg);
    }
    for (std::size_t k = 0; k < metrics.buckets.size(); ++k) {
        auto& b = metrics.buckets[k];
        if (b.positives) {
            b.recall = static_cast<double>(hits[k]) / static_cast<double>(b.positives);
            b.mean_positive_weight = weight_sum[k] / static_cast<double>(b.positives);
        }
    }
    return metrics;
}

inline constexpr std::string_view kMetricsHeader =
    "loss,bucket,samples,positives,recall,mean_positive_weight,final_loss,box_loss";
inline constexpr std::string_view kMetricsSchema =
    "loss:string,bucket:string,samples:int,positives:int,recall:float6|NA,mean_positive_weight:float6|NA,"
    "final_loss:float6,box_loss:float6";

inline void write_metrics_csv(std::ostream& os, const TrainMetrics& m, const RunConfig& cfg) {
    os << kMetricsHeader << '\n';
    for (auto bucket : kAllBuckets) {
        const auto& b = m.bucket(bucket);
        os << loss_name(cfg.loss) << ',' << bucket_name(bucket) << ',' << b.samples << ',' << b.positives << ','
           << fixed(b.recall) << ',' << fixed(b.mean_positive_weight) << ',' << fixed(m.final_loss) << ','
           << fixed(m.box_loss) << '\n';
    }
}

} // namespace crossdino::harness
