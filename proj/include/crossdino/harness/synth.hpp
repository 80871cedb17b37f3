#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "crossdino/boost_loss.hpp"
#include "crossdino/rng.hpp"
#include "crossdino/tensor.hpp"

namespace crossdino::harness {

inline constexpr std::size_t kFeatureDim = 16;
inline constexpr double kVirtualImage = 1024.0;

enum class SizeBucket { very_tiny, tiny, small, medium, large };
inline constexpr std::array kAllBuckets{SizeBucket::very_tiny, SizeBucket::tiny, SizeBucket::small,
                                        SizeBucket::medium, SizeBucket::large};

inline std::string_view bucket_name(SizeBucket b) {
    switch (b) {
    case SizeBucket::very_tiny: return "very_tiny";
    case SizeBucket::tiny: return "tiny";
    case SizeBucket::small: return "small";
    case SizeBucket::medium: return "medium";
    case SizeBucket::large: return "large";
    }
    return "?";
}

/// Buckets on sqrt(h * w): [.., 8) [8, 16) [16, 32) [32, 96) [96, ..).
inline SizeBucket bucket_of(double h, double w) {
    const double s = std::sqrt(h * w);
    if (s < 8) return SizeBucket::very_tiny;
    if (s < 16) return SizeBucket::tiny;
    if (s < 32) return SizeBucket::small;
    if (s < 96) return SizeBucket::medium;
    return SizeBucket::large;
}

struct SynthSample {
    Tensor features;  // [kFeatureDim]
    int y = 0;
    double h = 0, w = 0;  // ground-truth box in the virtual 1024 x 1024 image
    SizeBucket bucket = SizeBucket::very_tiny;
};

namespace detail {

/// Fixed embedding of (h / 1024, w / 1024); independent of any run seed.
inline const Tensor& size_embedding() {
    static const Tensor embedding = [] {
        Rng rng(0x0C5B005FULL);
        Tensor t({kFeatureDim, 2});
        for (auto& v : t.data()) v = 4.0 * rng.normal();
        return t;
    }();
    return embedding;
}

} // namespace detail

/// Size-stratified synthetic detections. Box sides are log-uniform in
/// [2, 512]; features embed the normalized box size. Background samples get
/// their embedding cyclically shifted by half the feature width. Gaussian
/// noise of sigma 0.25 / size_factor^0.1 makes small objects harder.
inline std::vector<SynthSample> synth_dataset(std::uint64_t seed, std::size_t n) {
    if (n == 0) throw DomainError("synth_dataset: n must be at least 1");
    Rng rng(seed);
    const auto& embed = detail::size_embedding();
    const double lo = std::log(2.0), hi = std::log(512.0);

    std::vector<SynthSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SynthSample s;
        s.h = std::exp(rng.uniform(lo, hi));
        s.w = std::exp(rng.uniform(lo, hi));
        s.y = rng.bernoulli(0.5) ? 1 : 0;
        s.bucket = bucket_of(s.h, s.w);

        const double nh = s.h / kVirtualImage, nw = s.w / kVirtualImage;
        const double sigma = 0.25 / std::pow(boost::size_factor(s.h, s.w, kVirtualImage, kVirtualImage), 0.1);
        s.features = Tensor({kFeatureDim});
        for (std::size_t d = 0; d < kFeatureDim; ++d) {
            const std::size_t src = s.y ? d : (d + kFeatureDim / 2) % kFeatureDim;
            s.features[d] = embed(src, 0) * nh + embed(src, 1) * nw + sigma * rng.normal();
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace crossdino::harness
