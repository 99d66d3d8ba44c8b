#pragma once

// Data pipeline pieces: spacing resampling, intensity clip+normalize, and
// nearest-neighbor label decimation for deep supervision targets.

#include <algorithm>
#include <cmath>
#include <optional>

#include "banet/core/types.hpp"
#include "banet/core/volume.hpp"

namespace banet {

struct PreprocessConfig {
    Spacing target_spacing{3.0, 0.6, 0.6};
    double clip_lo = 918.0;
    double clip_hi = 1396.0;
    // Dataset-level statistics; unset means "compute from the volume itself".
    std::optional<double> norm_mean;
    std::optional<double> norm_std;
    Shape3 patch_shape{112, 128, 128};
    double fg_prob = 0.5;  // foreground-centered crop probability

    void validate() const {
        check_spacing(target_spacing);
        if (!(clip_lo < clip_hi))
            throw Error("clip_lo must be < clip_hi");
        if (norm_std && *norm_std <= 0)
            throw Error("norm_std must be > 0");
        if (patch_shape.d < 1 || patch_shape.h < 1 || patch_shape.w < 1)
            throw Error("patch_shape dims must be >= 1");
        if (fg_prob < 0 || fg_prob > 1)
            throw Error("fg_prob must be in [0,1]");
    }
};

namespace detail {

inline Shape3 resampled_shape(Shape3 in, Spacing from, Spacing to) {
    auto axis = [](std::int64_t n, double a, double b) {
        return std::max<std::int64_t>(1, std::llround(double(n) * a / b));
    };
    return Shape3{axis(in.d, from.dz, to.dz), axis(in.h, from.dy, to.dy),
                  axis(in.w, from.dx, to.dx)};
}

// Continuous source index for output voxel center i (voxel-center aligned).
inline double src_coord(std::int64_t i, double ratio) {
    return (double(i) + 0.5) * ratio - 0.5;
}

}  // namespace detail

/// Trilinear resampling of an intensity volume to `target` spacing.
/// Output shape per axis is round(n * spacing / target), at least 1.
inline Volume resample(const Volume& v, Spacing target) {
    check_spacing(target);
    Shape3 out_shape = detail::resampled_shape(v.shape, v.spacing, target);
    Volume out(out_shape, target);
    const double rz = target.dz / v.spacing.dz;
    const double ry = target.dy / v.spacing.dy;
    const double rx = target.dx / v.spacing.dx;
    const std::int64_t D = v.shape.d, H = v.shape.h, W = v.shape.w;
    auto clampi = [](std::int64_t i, std::int64_t n) {
        return std::clamp<std::int64_t>(i, 0, n - 1);
    };
    for (std::int64_t z = 0; z < out_shape.d; ++z) {
        double fz = detail::src_coord(z, rz);
        std::int64_t z0 = static_cast<std::int64_t>(std::floor(fz));
        double wz = fz - double(z0);
        std::int64_t za = clampi(z0, D), zb = clampi(z0 + 1, D);
        for (std::int64_t y = 0; y < out_shape.h; ++y) {
            double fy = detail::src_coord(y, ry);
            std::int64_t y0 = static_cast<std::int64_t>(std::floor(fy));
            double wy = fy - double(y0);
            std::int64_t ya = clampi(y0, H), yb = clampi(y0 + 1, H);
            for (std::int64_t x = 0; x < out_shape.w; ++x) {
                double fx = detail::src_coord(x, rx);
                std::int64_t x0 = static_cast<std::int64_t>(std::floor(fx));
                double wx = fx - double(x0);
                std::int64_t xa = clampi(x0, W), xb = clampi(x0 + 1, W);
                double c00 = v.at(za, ya, xa) * (1 - wx) + v.at(za, ya, xb) * wx;
                double c01 = v.at(za, yb, xa) * (1 - wx) + v.at(za, yb, xb) * wx;
                double c10 = v.at(zb, ya, xa) * (1 - wx) + v.at(zb, ya, xb) * wx;
                double c11 = v.at(zb, yb, xa) * (1 - wx) + v.at(zb, yb, xb) * wx;
                double c0 = c00 * (1 - wy) + c01 * wy;
                double c1 = c10 * (1 - wy) + c11 * wy;
                out.at(z, y, x) = static_cast<float>(c0 * (1 - wz) + c1 * wz);
            }
        }
    }
    return out;
}

/// Nearest-neighbor resampling of labels to `target` spacing.
inline LabelVolume resample(const LabelVolume& l, Spacing target) {
    check_spacing(target);
    Shape3 out_shape = detail::resampled_shape(l.shape, l.spacing, target);
    LabelVolume out(out_shape, target, l.num_classes);
    const double rz = target.dz / l.spacing.dz;
    const double ry = target.dy / l.spacing.dy;
    const double rx = target.dx / l.spacing.dx;
    auto nearest = [](std::int64_t i, double r, std::int64_t n) {
        return std::clamp<std::int64_t>(
            std::llround(detail::src_coord(i, r)), 0, n - 1);
    };
    for (std::int64_t z = 0; z < out_shape.d; ++z) {
        std::int64_t sz = nearest(z, rz, l.shape.d);
        for (std::int64_t y = 0; y < out_shape.h; ++y) {
            std::int64_t sy = nearest(y, ry, l.shape.h);
            for (std::int64_t x = 0; x < out_shape.w; ++x)
                out.at(z, y, x) = l.at(sz, sy, nearest(x, rx, l.shape.w));
        }
    }
    return out;
}

/// Mean/std of the clipped volume; the per-volume normalization fallback.
inline std::pair<double, double> volume_norm_stats(const Volume& v,
                                                   double clip_lo,
                                                   double clip_hi) {
    double sum = 0, sum2 = 0;
    for (float f : v.data) {
        double c = std::clamp(double(f), clip_lo, clip_hi);
        sum += c;
        sum2 += c * c;
    }
    double n = double(v.data.size());
    double mean = sum / n;
    double var = std::max(0.0, sum2 / n - mean * mean);
    return {mean, std::sqrt(var)};
}

/// out = (clip(in, lo, hi) - mean) / std. Statistics come from the config
/// when present, otherwise from the clipped volume itself.
inline Volume normalize_intensity(const Volume& v,
                                  const PreprocessConfig& cfg) {
    cfg.validate();
    double mean, sd;
    if (cfg.norm_mean && cfg.norm_std) {
        mean = *cfg.norm_mean;
        sd = *cfg.norm_std;
    } else {
        std::tie(mean, sd) = volume_norm_stats(v, cfg.clip_lo, cfg.clip_hi);
        if (sd <= 0) sd = 1.0;  // constant volume
    }
    if (sd <= 0) throw Error("normalization std must be > 0");
    Volume out(v.shape, v.spacing);
    const float lo = static_cast<float>(cfg.clip_lo);
    const float hi = static_cast<float>(cfg.clip_hi);
    const float m = static_cast<float>(mean);
    const float inv = static_cast<float>(1.0 / sd);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        out.data[i] = (std::clamp(v.data[i], lo, hi) - m) * inv;
    return out;
}

/// Image pad value used outside the body: the normalized clip floor.
inline float normalized_floor(const PreprocessConfig& cfg) {
    if (cfg.norm_mean && cfg.norm_std)
        return static_cast<float>((cfg.clip_lo - *cfg.norm_mean) /
                                  *cfg.norm_std);
    return 0.f;
}

/// Nearest-neighbor decimation: out(z,y,x) = in(z*fz, y*fy, x*fx),
/// output shape = ceil(shape / factor). Spacing scales by the factor.
inline LabelVolume downsample_labels(const LabelVolume& l, Shape3 factor) {
    if (factor.d < 1 || factor.h < 1 || factor.w < 1)
        throw Error("downsample factors must be positive integers");
    Shape3 out_shape{(l.shape.d + factor.d - 1) / factor.d,
                     (l.shape.h + factor.h - 1) / factor.h,
                     (l.shape.w + factor.w - 1) / factor.w};
    Spacing sp{l.spacing.dz * double(factor.d), l.spacing.dy * double(factor.h),
               l.spacing.dx * double(factor.w)};
    LabelVolume out(out_shape, sp, l.num_classes);
    for (std::int64_t z = 0; z < out_shape.d; ++z)
        for (std::int64_t y = 0; y < out_shape.h; ++y)
            for (std::int64_t x = 0; x < out_shape.w; ++x)
                out.at(z, y, x) = l.at(z * factor.d, y * factor.h, x * factor.w);
    return out;
}

inline LabelVolume downsample_labels(const LabelVolume& l, std::int64_t f) {
    return downsample_labels(l, Shape3{f, f, f});
}

/// Nearest-neighbor resample onto an explicit output grid (used to map
/// predictions back to a case's original geometry).
inline LabelVolume resample_labels_to(const LabelVolume& l, Shape3 out_shape,
                                      Spacing out_spacing) {
    check_spacing(out_spacing);
    if (l.shape == out_shape && l.spacing == out_spacing) return l;
    LabelVolume out(out_shape, out_spacing, l.num_classes);
    const double rz = out_spacing.dz / l.spacing.dz;
    const double ry = out_spacing.dy / l.spacing.dy;
    const double rx = out_spacing.dx / l.spacing.dx;
    auto nearest = [](std::int64_t i, double r, std::int64_t n) {
        return std::clamp<std::int64_t>(
            std::llround(detail::src_coord(i, r)), 0, n - 1);
    };
    for (std::int64_t z = 0; z < out_shape.d; ++z) {
        std::int64_t sz = nearest(z, rz, l.shape.d);
        for (std::int64_t y = 0; y < out_shape.h; ++y) {
            std::int64_t sy = nearest(y, ry, l.shape.h);
            for (std::int64_t x = 0; x < out_shape.w; ++x)
                out.at(z, y, x) = l.at(sz, sy, nearest(x, rx, l.shape.w));
        }
    }
    return out;
}

/// Trilinear per-channel resample of a probability stack onto an explicit
/// grid; channels renormalized to sum 1.
inline ProbabilityVolume resample_probability_to(const ProbabilityVolume& p,
                                                 Shape3 out_shape,
                                                 Spacing out_spacing) {
    check_spacing(out_spacing);
    if (p.shape == out_shape && p.spacing == out_spacing) return p;
    ProbabilityVolume out(p.channels, out_shape, out_spacing);
    for (std::int64_t c = 0; c < p.channels; ++c) {
        Volume ch(p.shape, p.spacing);
        std::copy(p.channel_ptr(c), p.channel_ptr(c) + p.shape.numel(),
                  ch.data.begin());
        // reuse the shape-matched trilinear core via explicit coordinates
        const double rz = out_spacing.dz / p.spacing.dz;
        const double ry = out_spacing.dy / p.spacing.dy;
        const double rx = out_spacing.dx / p.spacing.dx;
        for (std::int64_t z = 0; z < out_shape.d; ++z)
            for (std::int64_t y = 0; y < out_shape.h; ++y)
                for (std::int64_t x = 0; x < out_shape.w; ++x) {
                    const double sz = detail::src_coord(z, rz);
                    const double sy = detail::src_coord(y, ry);
                    const double sx = detail::src_coord(x, rx);
                    auto clampi = [](std::int64_t i, std::int64_t n) {
                        return std::clamp<std::int64_t>(i, 0, n - 1);
                    };
                    const std::int64_t z0 = static_cast<std::int64_t>(std::floor(sz));
                    const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
                    const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
                    const double fz = sz - double(z0), fy = sy - double(y0),
                                 fx = sx - double(x0);
                    const std::int64_t za = clampi(z0, p.shape.d),
                                       zb = clampi(z0 + 1, p.shape.d);
                    const std::int64_t ya = clampi(y0, p.shape.h),
                                       yb = clampi(y0 + 1, p.shape.h);
                    const std::int64_t xa = clampi(x0, p.shape.w),
                                       xb = clampi(x0 + 1, p.shape.w);
                    const double c00 = ch.at(za, ya, xa) * (1 - fx) + ch.at(za, ya, xb) * fx;
                    const double c01 = ch.at(za, yb, xa) * (1 - fx) + ch.at(za, yb, xb) * fx;
                    const double c10 = ch.at(zb, ya, xa) * (1 - fx) + ch.at(zb, ya, xb) * fx;
                    const double c11 = ch.at(zb, yb, xa) * (1 - fx) + ch.at(zb, yb, xb) * fx;
                    const double c0 = c00 * (1 - fy) + c01 * fy;
                    const double c1 = c10 * (1 - fy) + c11 * fy;
                    out.at(c, z, y, x) =
                        static_cast<float>(c0 * (1 - fz) + c1 * fz);
                }
    }
    // renormalize channel sums
    const std::int64_t sp = out_shape.numel();
    for (std::int64_t v = 0; v < sp; ++v) {
        double s = 0;
        for (std::int64_t c = 0; c < out.channels; ++c)
            s += out.data[static_cast<std::size_t>(c * sp + v)];
        if (s > 0)
            for (std::int64_t c = 0; c < out.channels; ++c)
                out.data[static_cast<std::size_t>(c * sp + v)] =
                    static_cast<float>(out.data[static_cast<std::size_t>(c * sp + v)] / s);
    }
    return out;
}

}  // namespace banet
