#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "crossdino/rng.hpp"
#include "crossdino/tensor.hpp"

namespace crossdino::harness {

/// Spatial MLP with weights tied to one patch size: a linear map along the
/// width of every row, then along the height of every column. It rejects
/// any other spatial size, which is what clap::clap_apply works around.
class FixedSizeMlp {
public:
    FixedSizeMlp(Tensor row_w, Tensor row_b, Tensor col_w, Tensor col_b)
        : row_w_(std::move(row_w)), row_b_(std::move(row_b)), col_w_(std::move(col_w)), col_b_(std::move(col_b)) {
        const bool ok = row_w_.rank() == 2 && row_w_.dim(0) == row_w_.dim(1) && row_b_.size() == row_w_.dim(0) &&
                        col_w_.rank() == 2 && col_w_.dim(0) == col_w_.dim(1) && col_b_.size() == col_w_.dim(0);
        if (!ok) throw DimensionError("FixedSizeMlp: weights must be square with matching biases");
    }

    static FixedSizeMlp identity(std::size_t height, std::size_t width) {
        return FixedSizeMlp(eye(width), Tensor({width}), eye(height), Tensor({height}));
    }

    static FixedSizeMlp random(std::size_t height, std::size_t width, Rng& rng) {
        auto fill = [&rng](Shape shape, double bound) {
            Tensor t(std::move(shape));
            for (auto& v : t.data()) v = rng.uniform(-bound, bound);
            return t;
        };
        const double bw = 1.0 / std::sqrt(static_cast<double>(width));
        const double bh = 1.0 / std::sqrt(static_cast<double>(height));
        auto rw = fill({width, width}, bw);
        auto rb = fill({width}, bw);
        auto cw = fill({height, height}, bh);
        auto cb = fill({height}, bh);
        return FixedSizeMlp(std::move(rw), std::move(rb), std::move(cw), std::move(cb));
    }

    std::size_t width() const noexcept { return row_w_.dim(0); }
    std::size_t height() const noexcept { return col_w_.dim(0); }

    Tensor operator()(const Tensor& x) const {
        const std::size_t h = height(), w = width();
        if (x.rank() != 3 || x.dim(1) != h || x.dim(2) != w) {
            throw DimensionError("FixedSizeMlp: input " + shape_string(x.shape()) + " does not match fixed size " +
                                 std::to_string(h) + "x" + std::to_string(w));
        }
        const std::size_t channels = x.dim(0);
        Tensor rows(x.shape());
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t r = 0; r < h; ++r) {
                for (std::size_t o = 0; o < w; ++o) {
                    double acc = row_b_[o];
                    for (std::size_t i = 0; i < w; ++i) acc += row_w_(o, i) * x(c, r, i);
                    rows(c, r, o) = acc;
                }
            }
        }
        Tensor out(x.shape());
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t q = 0; q < w; ++q) {
                for (std::size_t o = 0; o < h; ++o) {
                    double acc = col_b_[o];
                    for (std::size_t i = 0; i < h; ++i) acc += col_w_(o, i) * rows(c, i, q);
                    out(c, o, q) = acc;
                }
            }
        }
        return out;
    }

private:
    static Tensor eye(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    Tensor row_w_, row_b_, col_w_, col_b_;
};

} // namespace crossdino::harness
