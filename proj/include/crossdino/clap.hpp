#pragma once

// Cropping with adaptive overlap: tile an arbitrary H x W map into fixed
// H_o x W_o patches, run a fixed-size operator on each, and average the
// results back over the overlap regions.

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <string>
#include <vector>

#include "crossdino/tensor.hpp"

namespace crossdino::clap {

/// Tiling of one spatial axis.
struct AxisPlan {
    std::size_t extent = 0;  // W (or H)
    std::size_t patch = 0;   // W_o (or H_o)
    std::size_t count = 0;   // n_w
    long overlap = 0;        // l_w; 0 when count == 1
    std::vector<std::size_t> starts;
    std::size_t pad = 0;     // zero padding after the input when extent < patch

    bool operator==(const AxisPlan&) const = default;
};

struct PatchGrid {
    AxisPlan x;
    AxisPlan y;

    std::size_t width() const noexcept { return x.extent; }
    std::size_t height() const noexcept { return y.extent; }
    std::size_t patch_w() const noexcept { return x.patch; }
    std::size_t patch_h() const noexcept { return y.patch; }
    std::size_t n_w() const noexcept { return x.count; }
    std::size_t n_h() const noexcept { return y.count; }
    long l_w() const noexcept { return x.overlap; }
    long l_h() const noexcept { return y.overlap; }
    std::size_t patch_count() const noexcept { return x.count * y.count; }

    bool operator==(const PatchGrid&) const = default;
};

/// Plans one axis.
///
/// The patch count is floor(extent / patch + 0.5), clamped to at least 1.
/// When that rounds down far enough that count * patch < extent the patches
/// cannot cover the axis, so the count is raised to ceil(extent / patch).
/// For count >= 2 the overlap is floor((count * patch - extent) / (count - 1.5)),
/// patches start at i * (patch - overlap) and the last patch is placed flush
/// with the far edge. A single patch starts at 0 and is zero-padded.
inline AxisPlan plan_axis(std::size_t extent, std::size_t patch) {
    if (extent == 0 || patch == 0) throw TilingError("plan_grid: extents must be positive");

    AxisPlan plan;
    plan.extent = extent;
    plan.patch = patch;
    // floor(extent / patch + 0.5) in integer arithmetic
    std::size_t count = std::max<std::size_t>(1, (2 * extent + patch) / (2 * patch));
    if (count * patch < extent) count = (extent + patch - 1) / patch;
    plan.count = count;

    if (count == 1) {
        plan.starts = {0};
        plan.pad = patch > extent ? patch - extent : 0;
        return plan;
    }

    // floor(D / (n - 1.5)) == floor(2D / (2n - 3)); both operands non-negative.
    const auto deficit = static_cast<long>(count * patch - extent);
    const auto overlap = (2 * deficit) / (2 * static_cast<long>(count) - 3);
    const long stride = static_cast<long>(patch) - overlap;
    plan.overlap = overlap;
    if (stride <= 0) {
        throw TilingError("plan_grid: non-positive stride for extent " + std::to_string(extent) + " with patch " +
                          std::to_string(patch) + " (overlap " + std::to_string(overlap) + ")");
    }

    const std::size_t last = extent - patch;
    plan.starts.reserve(count);
    for (std::size_t i = 0; i + 1 < count; ++i) {
        plan.starts.push_back(std::min(i * static_cast<std::size_t>(stride), last));
    }
    plan.starts.push_back(last);
    for (std::size_t i = 1; i < count; ++i) {
        if (plan.starts[i] <= plan.starts[i - 1]) {
            throw TilingError("plan_grid: duplicate patch offsets for extent " + std::to_string(extent) +
                              " with patch " + std::to_string(patch));
        }
    }
    return plan;
}

inline PatchGrid plan_grid(std::size_t width, std::size_t height, std::size_t patch_w, std::size_t patch_h) {
    return PatchGrid{plan_axis(width, patch_w), plan_axis(height, patch_h)};
}

namespace detail {

inline void check_map(const Tensor& x, const PatchGrid& grid, const char* what) {
    if (x.rank() != 3 || x.dim(1) != grid.height() || x.dim(2) != grid.width()) {
        throw DimensionError(std::string(what) + ": input " + shape_string(x.shape()) + " does not match grid " +
                             std::to_string(grid.height()) + "x" + std::to_string(grid.width()));
    }
}

} // namespace detail

/// Crops the patches in row-major (y, x) order. Positions beyond the input
/// (only possible for a padded single-patch axis) are zero.
inline std::vector<Tensor> split(const Tensor& x, const PatchGrid& grid) {
    detail::check_map(x, grid, "split");
    const std::size_t channels = x.dim(0), height = grid.height(), width = grid.width();
    const std::size_t ph = grid.patch_h(), pw = grid.patch_w();

    std::vector<Tensor> patches;
    patches.reserve(grid.patch_count());
    for (std::size_t sy : grid.y.starts) {
        for (std::size_t sx : grid.x.starts) {
            Tensor patch({channels, ph, pw});
            for (std::size_t c = 0; c < channels; ++c) {
                for (std::size_t r = 0; r < ph && sy + r < height; ++r) {
                    for (std::size_t q = 0; q < pw && sx + q < width; ++q) {
                        patch(c, r, q) = x(c, sy + r, sx + q);
                    }
                }
            }
            patches.push_back(std::move(patch));
        }
    }
    return patches;
}

/// Inverse of split: every output position is the mean of all patch values
/// covering it; padding is dropped. The mean is accumulated as
/// first + sum(v - first) / k in patch order, so identical copies reassemble
/// to exactly the original value and results are bit-reproducible.
inline Tensor reassemble(const std::vector<Tensor>& patches, const PatchGrid& grid) {
    if (patches.size() != grid.patch_count()) {
        throw DimensionError("reassemble: expected " + std::to_string(grid.patch_count()) + " patches, got " +
                             std::to_string(patches.size()));
    }
    const std::size_t ph = grid.patch_h(), pw = grid.patch_w();
    const std::size_t channels = patches.front().rank() == 3 ? patches.front().dim(0) : 0;
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto& p = patches[i];
        if (p.rank() != 3 || p.dim(0) != channels || p.dim(1) != ph || p.dim(2) != pw) {
            throw DimensionError("reassemble: patch " + std::to_string(i) + " has shape " + shape_string(p.shape()) +
                                 ", expected " + shape_string({channels, ph, pw}));
        }
    }

    const std::size_t height = grid.height(), width = grid.width();
    Tensor first({channels, height, width});
    Tensor delta({channels, height, width});
    std::vector<std::size_t> coverage(height * width, 0);

    std::size_t index = 0;
    for (std::size_t sy : grid.y.starts) {
        for (std::size_t sx : grid.x.starts) {
            const Tensor& p = patches[index++];
            for (std::size_t r = 0; r < ph && sy + r < height; ++r) {
                for (std::size_t q = 0; q < pw && sx + q < width; ++q) {
                    auto& k = coverage[(sy + r) * width + sx + q];
                    for (std::size_t c = 0; c < channels; ++c) {
                        if (k == 0) first(c, sy + r, sx + q) = p(c, r, q);
                        else delta(c, sy + r, sx + q) += p(c, r, q) - first(c, sy + r, sx + q);
                    }
                    ++k;
                }
            }
        }
    }

    Tensor out({channels, height, width});
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t r = 0; r < height; ++r) {
            for (std::size_t q = 0; q < width; ++q) {
                const auto k = coverage[r * width + q];
                if (k == 0) throw TilingError("reassemble: position not covered by any patch");
                out(c, r, q) = first(c, r, q) + delta(c, r, q) / static_cast<double>(k);
            }
        }
    }
    return out;
}

/// Number of patches covering each (row, column) position.
inline std::vector<std::size_t> coverage_counts(const PatchGrid& grid) {
    std::vector<std::size_t> counts(grid.height() * grid.width(), 0);
    for (std::size_t sy : grid.y.starts) {
        for (std::size_t sx : grid.x.starts) {
            for (std::size_t r = sy; r < std::min(sy + grid.patch_h(), grid.height()); ++r) {
                for (std::size_t q = sx; q < std::min(sx + grid.patch_w(), grid.width()); ++q) {
                    ++counts[r * grid.width() + q];
                }
            }
        }
    }
    return counts;
}

/// A shape-preserving operator on [C, H_o, W_o] patches.
template <typename Op>
concept FixedSizeOp = std::invocable<Op&, const Tensor&> &&
                      std::convertible_to<std::invoke_result_t<Op&, const Tensor&>, Tensor>;

template <FixedSizeOp Op>
Tensor clap_apply(const Tensor& x, Op&& op, std::size_t patch_w, std::size_t patch_h) {
    if (x.rank() != 3) throw DimensionError("clap_apply: expected [C,H,W], got " + shape_string(x.shape()));
    const auto grid = plan_grid(x.dim(2), x.dim(1), patch_w, patch_h);
    auto patches = split(x, grid);
    for (auto& p : patches) {
        Tensor y = op(static_cast<const Tensor&>(p));
        if (!y.same_shape(p)) {
            throw DimensionError("clap_apply: operator changed patch shape " + shape_string(p.shape()) + " to " +
                                 shape_string(y.shape()));
        }
        p = std::move(y);
    }
    return reassemble(patches, grid);
}

} // namespace crossdino::clap
