#pragma once

#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "crossdino/harness/coco.hpp"
#include "crossdino/harness/csv.hpp"

namespace crossdino::harness {

inline const std::vector<double> kDefaultScoreEdges{0, 16, 32, 64, 128, 256};

struct ScoreBucket {
    double lo = 0;
    double hi = std::numeric_limits<double>::infinity();
    std::size_t count = 0;
    double mean_score = std::numeric_limits<double>::quiet_NaN();  // NaN when empty
};

/// Mean confidence per size bucket over detections scoring at least
/// `threshold`. Size is sqrt(w * h); bucket k is [edges[k], edges[k+1]) and
/// the last bucket is unbounded. Detections smaller than edges[0] fall in
/// no bucket.
inline std::vector<ScoreBucket> score_stats(std::span<const Detection> dets, double threshold,
                                            std::span<const double> edges) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("score_stats: threshold must lie in [0, 1]");
    if (edges.empty()) throw DomainError("score_stats: at least one bucket edge is required");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) throw DomainError("score_stats: bucket edges must be strictly increasing");
    }

    std::vector<ScoreBucket> buckets(edges.size());
    std::vector<double> sums(edges.size(), 0.0);
    for (std::size_t k = 0; k < edges.size(); ++k) {
        buckets[k].lo = edges[k];
        if (k + 1 < edges.size()) buckets[k].hi = edges[k + 1];
    }
    for (const auto& d : dets) {
        if (d.score < threshold) continue;
        const double size = std::sqrt(d.w * d.h);
        for (std::size_t k = edges.size(); k-- > 0;) {
            if (size >= edges[k]) {
                ++buckets[k].count;
                sums[k] += d.score;
                break;
            }
        }
    }
    for (std::size_t k = 0; k < buckets.size(); ++k) {
        if (buckets[k].count) buckets[k].mean_score = sums[k] / static_cast<double>(buckets[k].count);
    }
    return buckets;
}

inline constexpr std::string_view kScoreStatsHeader = "bucket_lo,bucket_hi,count,mean_score";
inline constexpr std::string_view kScoreStatsSchema = "bucket_lo:float6,bucket_hi:float6|inf,count:int,mean_score:float6|NA";

inline void write_score_stats_csv(std::ostream& os, std::span<const ScoreBucket> buckets) {
    os << kScoreStatsHeader << '\n';
    for (const auto& b : buckets) {
        os << fixed(b.lo) << ',' << fixed(b.hi) << ',' << b.count << ',' << fixed(b.mean_score) << '\n';
    }
}

} // namespace crossdino::harness
