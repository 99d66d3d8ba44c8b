#pragma once

// Whole-volume prediction by tiling overlapping patches and blending the
// per-window softmax outputs. Blend weights are normalized per voxel before
// accumulation, so the result is an exact convex combination of window
// outputs: channel sums stay at 1 to float precision, and a voxel covered by
// a single window reproduces the direct forward bitwise.

#include <cmath>
#include <vector>

#include "banet/core/volume.hpp"
#include "banet/model/banet.hpp"

namespace banet {

enum class BlendMode { kUniform, kGaussian };

struct WindowPlan {
    Shape3 patch{0, 0, 0};
    double step_fraction = 0.5;
    BlendMode blend = BlendMode::kGaussian;
    double sigma_scale = 0.125;  // sigma = patch_dim * sigma_scale
    Shape3 padded_shape{0, 0, 0};
    std::vector<Shape3> origins;

    void validate() const {
        if (origins.empty()) throw Error("window plan has no origins");
        for (const auto& o : origins)
            if (o.d < 0 || o.h < 0 || o.w < 0 || o.d + patch.d > padded_shape.d ||
                o.h + patch.h > padded_shape.h || o.w + patch.w > padded_shape.w)
                throw Error("window origin outside padded bounds");
    }
};

namespace detail {

inline std::vector<std::int64_t> axis_origins(std::int64_t extent,
                                              std::int64_t patch,
                                              double step_fraction) {
    std::vector<std::int64_t> out;
    const std::int64_t span = extent - patch;
    if (span <= 0) return {0};
    const std::int64_t step = std::max<std::int64_t>(
        1, std::llround(double(patch) * step_fraction));
    for (std::int64_t o = 0; o < span; o += step) out.push_back(o);
    out.push_back(span);  // final window flush with the end
    return out;
}

// Mirror index into [0, n); period 2n-2 (no edge duplication).
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
    if (n == 1) return 0;
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
}

}  // namespace detail

inline WindowPlan make_window_plan(Shape3 volume_shape, Shape3 patch,
                                   double step_fraction = 0.5,
                                   BlendMode blend = BlendMode::kGaussian,
                                   double sigma_scale = 0.125) {
    if (step_fraction <= 0 || step_fraction > 1)
        throw Error("step_fraction must be in (0, 1]");
    WindowPlan plan;
    plan.patch = patch;
    plan.step_fraction = step_fraction;
    plan.blend = blend;
    plan.sigma_scale = sigma_scale;
    plan.padded_shape = Shape3{std::max(volume_shape.d, patch.d),
                               std::max(volume_shape.h, patch.h),
                               std::max(volume_shape.w, patch.w)};
    auto zs = detail::axis_origins(plan.padded_shape.d, patch.d, step_fraction);
    auto ys = detail::axis_origins(plan.padded_shape.h, patch.h, step_fraction);
    auto xs = detail::axis_origins(plan.padded_shape.w, patch.w, step_fraction);
    for (auto z : zs)
        for (auto y : ys)
            for (auto x : xs) plan.origins.push_back(Shape3{z, y, x});
    plan.validate();
    return plan;
}

/// Per-window blend weight map (shared by all windows).
inline std::vector<float> window_blend_weights(const WindowPlan& plan) {
    const Shape3 p = plan.patch;
    std::vector<float> w(static_cast<std::size_t>(p.numel()), 1.f);
    if (plan.blend == BlendMode::kUniform) return w;
    auto axis = [&](std::int64_t n) {
        std::vector<double> g(static_cast<std::size_t>(n));
        const double c = 0.5 * double(n - 1);
        const double sigma = std::max(1e-6, double(n) * plan.sigma_scale);
        for (std::int64_t i = 0; i < n; ++i) {
            const double d = (double(i) - c) / sigma;
            g[static_cast<std::size_t>(i)] = std::exp(-0.5 * d * d);
        }
        return g;
    };
    auto gz = axis(p.d), gy = axis(p.h), gx = axis(p.w);
    std::size_t idx = 0;
    for (std::int64_t z = 0; z < p.d; ++z)
        for (std::int64_t y = 0; y < p.h; ++y)
            for (std::int64_t x = 0; x < p.w; ++x)
                w[idx++] = static_cast<float>(
                    std::max(1e-12, gz[static_cast<std::size_t>(z)] *
                                        gy[static_cast<std::size_t>(y)] *
                                        gx[static_cast<std::size_t>(x)]));
    return w;
}

template <typename T>
ProbabilityVolume sliding_window_predict(const BANet<T>& net, const Volume& v,
                                         const WindowPlan& plan) {
    plan.validate();
    const Shape3 ps = plan.padded_shape;
    if (ps.d < v.shape.d || ps.h < v.shape.h || ps.w < v.shape.w ||
        ps.d < plan.patch.d || ps.h < plan.patch.h || ps.w < plan.patch.w)
        throw Error("window plan does not match volume");

    // Reflect-pad (centered) when the volume is smaller than the patch.
    const std::int64_t oz = (ps.d - v.shape.d) / 2;
    const std::int64_t oy = (ps.h - v.shape.h) / 2;
    const std::int64_t ox = (ps.w - v.shape.w) / 2;
    Volume padded(ps, v.spacing);
    if (ps == v.shape) {
        padded.data = v.data;
    } else {
        for (std::int64_t z = 0; z < ps.d; ++z)
            for (std::int64_t y = 0; y < ps.h; ++y)
                for (std::int64_t x = 0; x < ps.w; ++x)
                    padded.at(z, y, x) =
                        v.at(detail::reflect_index(z - oz, v.shape.d),
                             detail::reflect_index(y - oy, v.shape.h),
                             detail::reflect_index(x - ox, v.shape.w));
    }

    const auto weights = window_blend_weights(plan);
    const Shape3 p = plan.patch;
    const std::int64_t pn = p.numel();

    // Pass 1: accumulate the total blend weight per voxel (data independent).
    std::vector<double> wsum(static_cast<std::size_t>(ps.numel()), 0.0);
    for (const auto& org : plan.origins) {
        std::size_t widx = 0;
        for (std::int64_t z = 0; z < p.d; ++z)
            for (std::int64_t y = 0; y < p.h; ++y) {
                const std::int64_t base =
                    ((org.d + z) * ps.h + (org.h + y)) * ps.w + org.w;
                for (std::int64_t x = 0; x < p.w; ++x)
                    wsum[static_cast<std::size_t>(base + x)] +=
                        double(weights[widx++]);
            }
    }
    for (double s : wsum)
        if (!(s > 0)) throw Error("window plan does not cover every voxel");

    const int C = net.config().num_classes;
    ProbabilityVolume out(C, ps, v.spacing);

    Tensor<T> patch_in(1, 1, p.d, p.h, p.w);
    for (const auto& org : plan.origins) {
        // Extract window.
        std::size_t idx = 0;
        for (std::int64_t z = 0; z < p.d; ++z)
            for (std::int64_t y = 0; y < p.h; ++y)
                for (std::int64_t x = 0; x < p.w; ++x)
                    patch_in.data[idx++] = static_cast<T>(
                        padded.at(org.d + z, org.h + y, org.w + x));
        Tensor<T> probs = net.predict(patch_in);
        // Accumulate normalized contribution.
        for (int c = 0; c < C; ++c) {
            const T* pc = probs.at(0, c);
            float* oc = out.channel_ptr(c);
            std::size_t widx = 0;
            std::int64_t pidx = 0;
            for (std::int64_t z = 0; z < p.d; ++z)
                for (std::int64_t y = 0; y < p.h; ++y) {
                    const std::int64_t base =
                        ((org.d + z) * ps.h + (org.h + y)) * ps.w + org.w;
                    for (std::int64_t x = 0; x < p.w; ++x, ++widx, ++pidx) {
                        const double wn =
                            double(weights[widx]) /
                            wsum[static_cast<std::size_t>(base + x)];
                        oc[base + x] += static_cast<float>(wn * double(pc[pidx]));
                    }
                }
        }
    }

    if (ps == v.shape) return out;
    ProbabilityVolume cropped(C, v.shape, v.spacing);
    for (int c = 0; c < C; ++c)
        for (std::int64_t z = 0; z < v.shape.d; ++z)
            for (std::int64_t y = 0; y < v.shape.h; ++y)
                for (std::int64_t x = 0; x < v.shape.w; ++x)
                    cropped.at(c, z, y, x) = out.at(c, z + oz, y + oy, x + ox);
    return cropped;
}

}  // namespace banet
