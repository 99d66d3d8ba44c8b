#pragma once

// Training-time augmentation: rotation + scaling + elastic deformation in one
// resampling pass, per-axis flips, random crop, Gaussian intensity noise.
// Every draw comes from a single seeded generator, so outputs are a pure
// function of (inputs, spec).

#include <array>
#include <random>

#include "banet/core/volume.hpp"
#include "banet/preprocess/preprocess.hpp"

namespace banet {

struct AugmentSpec {
    bool enable_crop = false;
    Shape3 crop_shape{0, 0, 0};

    bool enable_rotation = false;
    double max_rotation_deg = 15.0;

    bool enable_scaling = false;
    double scale_lo = 0.9, scale_hi = 1.1;

    bool enable_flips = false;
    std::array<bool, 3> flip_axes{true, true, true};  // (D, H, W)

    bool enable_noise = false;
    double noise_sigma_lo = 0.0, noise_sigma_hi = 0.1;

    bool enable_elastic = false;
    double elastic_alpha = 2.0;            // node displacement std, voxels
    std::int64_t elastic_grid_spacing = 8; // control node spacing, voxels

    std::uint64_t seed = 0;

    bool any_geometric() const {
        return enable_rotation || enable_scaling || enable_elastic;
    }

    void validate() const {
        if (enable_crop && (crop_shape.d < 1 || crop_shape.h < 1 || crop_shape.w < 1))
            throw Error("crop enabled but crop_shape not set");
        if (enable_rotation && max_rotation_deg <= 0)
            throw Error("rotation enabled with degenerate range");
        if (enable_scaling && !(scale_lo > 0 && scale_lo < scale_hi))
            throw Error("scaling enabled with degenerate range");
        if (enable_noise && !(noise_sigma_hi > 0 && noise_sigma_lo <= noise_sigma_hi))
            throw Error("noise enabled with degenerate range");
        if (enable_elastic && (elastic_alpha <= 0 || elastic_grid_spacing < 2))
            throw Error("elastic enabled with degenerate parameters");
    }
};

/// Reverses one axis of a volume; applying it twice is the identity.
template <typename V>
inline V flip_axis(const V& v, int axis) {
    V out = v;
    const Shape3 s = v.shape;
    for (std::int64_t z = 0; z < s.d; ++z)
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                std::int64_t sz = axis == 0 ? s.d - 1 - z : z;
                std::int64_t sy = axis == 1 ? s.h - 1 - y : y;
                std::int64_t sx = axis == 2 ? s.w - 1 - x : x;
                out.at(z, y, x) = v.at(sz, sy, sx);
            }
    return out;
}

namespace detail {

struct Mat3 {
    double m[3][3];
    std::array<double, 3> apply(double a, double b, double c) const {
        return {m[0][0] * a + m[0][1] * b + m[0][2] * c,
                m[1][0] * a + m[1][1] * b + m[1][2] * c,
                m[2][0] * a + m[2][1] * b + m[2][2] * c};
    }
};

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            r.m[i][j] = 0;
            for (int k = 0; k < 3; ++k) r.m[i][j] += a.m[i][k] * b.m[k][j];
        }
    return r;
}

// Rotation about one grid axis (0 = z/slice, 1 = y/row, 2 = x/col).
inline Mat3 axis_rotation(int axis, double rad) {
    double c = std::cos(rad), s = std::sin(rad);
    switch (axis) {
        case 0: return Mat3{{{1, 0, 0}, {0, c, -s}, {0, s, c}}};
        case 1: return Mat3{{{c, 0, s}, {0, 1, 0}, {-s, 0, c}}};
        default: return Mat3{{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
    }
}

// Coarse control grid of displacements, trilinearly upsampled at query time.
struct ElasticField {
    Shape3 nodes{0, 0, 0};
    std::int64_t spacing = 1;
    std::vector<std::array<float, 3>> disp;

    std::array<double, 3> at(double z, double y, double x) const {
        auto comp = [&](double v, std::int64_t n) {
            double g = v / double(spacing);
            std::int64_t i0 = static_cast<std::int64_t>(std::floor(g));
            double f = g - double(i0);
            std::int64_t a = std::clamp<std::int64_t>(i0, 0, n - 1);
            std::int64_t b = std::clamp<std::int64_t>(i0 + 1, 0, n - 1);
            return std::tuple<std::int64_t, std::int64_t, double>(a, b, f);
        };
        auto [za, zb, fz] = comp(z, nodes.d);
        auto [ya, yb, fy] = comp(y, nodes.h);
        auto [xa, xb, fx] = comp(x, nodes.w);
        std::array<double, 3> out{0, 0, 0};
        for (int k = 0; k < 3; ++k) {
            auto g = [&](std::int64_t i, std::int64_t j, std::int64_t l) {
                return double(
                    disp[static_cast<std::size_t>((i * nodes.h + j) * nodes.w + l)][k]);
            };
            double c00 = g(za, ya, xa) * (1 - fx) + g(za, ya, xb) * fx;
            double c01 = g(za, yb, xa) * (1 - fx) + g(za, yb, xb) * fx;
            double c10 = g(zb, ya, xa) * (1 - fx) + g(zb, ya, xb) * fx;
            double c11 = g(zb, yb, xa) * (1 - fx) + g(zb, yb, xb) * fx;
            double c0 = c00 * (1 - fy) + c01 * fy;
            double c1 = c10 * (1 - fy) + c11 * fy;
            out[k] = c0 * (1 - fz) + c1 * fz;
        }
        return out;
    }
};

inline float sample_trilinear(const Volume& v, double z, double y, double x,
                              float fill) {
    const Shape3 s = v.shape;
    if (z < -0.5 || y < -0.5 || x < -0.5 || z > double(s.d) - 0.5 ||
        y > double(s.h) - 0.5 || x > double(s.w) - 0.5)
        return fill;
    auto clampi = [](std::int64_t i, std::int64_t n) {
        return std::clamp<std::int64_t>(i, 0, n - 1);
    };
    std::int64_t z0 = static_cast<std::int64_t>(std::floor(z));
    std::int64_t y0 = static_cast<std::int64_t>(std::floor(y));
    std::int64_t x0 = static_cast<std::int64_t>(std::floor(x));
    double fz = z - double(z0), fy = y - double(y0), fx = x - double(x0);
    std::int64_t za = clampi(z0, s.d), zb = clampi(z0 + 1, s.d);
    std::int64_t ya = clampi(y0, s.h), yb = clampi(y0 + 1, s.h);
    std::int64_t xa = clampi(x0, s.w), xb = clampi(x0 + 1, s.w);
    double c00 = v.at(za, ya, xa) * (1 - fx) + v.at(za, ya, xb) * fx;
    double c01 = v.at(za, yb, xa) * (1 - fx) + v.at(za, yb, xb) * fx;
    double c10 = v.at(zb, ya, xa) * (1 - fx) + v.at(zb, ya, xb) * fx;
    double c11 = v.at(zb, yb, xa) * (1 - fx) + v.at(zb, yb, xb) * fx;
    double c0 = c00 * (1 - fy) + c01 * fy;
    double c1 = c10 * (1 - fy) + c11 * fy;
    return static_cast<float>(c0 * (1 - fz) + c1 * fz);
}

inline std::uint8_t sample_nearest(const LabelVolume& l, double z, double y,
                                   double x) {
    std::int64_t zi = std::llround(z), yi = std::llround(y), xi = std::llround(x);
    if (zi < 0 || yi < 0 || xi < 0 || zi >= l.shape.d || yi >= l.shape.h ||
        xi >= l.shape.w)
        return 0;
    return l.at(zi, yi, xi);
}

}  // namespace detail

/// Applies the spec's transforms: one combined geometric warp
/// (rotation/scale in physical space + elastic displacement, image trilinear,
/// labels nearest), then flips, crop, and image-only Gaussian noise.
inline std::pair<Volume, LabelVolume> augment(const Volume& img,
                                              const LabelVolume& lab,
                                              const AugmentSpec& spec) {
    spec.validate();
    if (!(img.shape == lab.shape))
        throw Error("augment: image/label shape mismatch");
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Volume v = img;
    LabelVolume l = lab;

    if (spec.any_geometric()) {
        detail::Mat3 rot{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
        if (spec.enable_rotation) {
            double lim = spec.max_rotation_deg * M_PI / 180.0;
            std::uniform_real_distribution<double> ang(-lim, lim);
            double az = ang(rng), ay = ang(rng), ax = ang(rng);
            rot = detail::matmul(detail::axis_rotation(0, az),
                                 detail::matmul(detail::axis_rotation(1, ay),
                                                detail::axis_rotation(2, ax)));
        }
        double scale = 1.0;
        if (spec.enable_scaling)
            scale = std::uniform_real_distribution<double>(spec.scale_lo,
                                                           spec.scale_hi)(rng);
        detail::ElasticField field;
        bool has_elastic = spec.enable_elastic;
        if (has_elastic) {
            field.spacing = spec.elastic_grid_spacing;
            field.nodes = Shape3{img.shape.d / field.spacing + 2,
                                 img.shape.h / field.spacing + 2,
                                 img.shape.w / field.spacing + 2};
            std::normal_distribution<double> nd(0.0, spec.elastic_alpha);
            field.disp.resize(static_cast<std::size_t>(field.nodes.numel()));
            for (auto& d : field.disp)
                d = {float(nd(rng)), float(nd(rng)), float(nd(rng))};
        }

        float fill = *std::min_element(img.data.begin(), img.data.end());
        const Spacing sp = img.spacing;
        const double cz = 0.5 * double(img.shape.d - 1);
        const double cy = 0.5 * double(img.shape.h - 1);
        const double cx = 0.5 * double(img.shape.w - 1);
        Volume nv(img.shape, sp);
        LabelVolume nl(lab.shape, sp, lab.num_classes);
        // rot is the forward rotation; pull coordinates back via its
        // transpose and the inverse scale, in physical units.
        for (std::int64_t z = 0; z < img.shape.d; ++z)
            for (std::int64_t y = 0; y < img.shape.h; ++y)
                for (std::int64_t x = 0; x < img.shape.w; ++x) {
                    double pz = (double(z) - cz) * sp.dz;
                    double py = (double(y) - cy) * sp.dy;
                    double px = (double(x) - cx) * sp.dx;
                    double qz = (rot.m[0][0] * pz + rot.m[1][0] * py +
                                 rot.m[2][0] * px) / scale;
                    double qy = (rot.m[0][1] * pz + rot.m[1][1] * py +
                                 rot.m[2][1] * px) / scale;
                    double qx = (rot.m[0][2] * pz + rot.m[1][2] * py +
                                 rot.m[2][2] * px) / scale;
                    double sz = qz / sp.dz + cz;
                    double sy = qy / sp.dy + cy;
                    double sx = qx / sp.dx + cx;
                    if (has_elastic) {
                        auto d = field.at(double(z), double(y), double(x));
                        sz += d[0];
                        sy += d[1];
                        sx += d[2];
                    }
                    nv.at(z, y, x) = detail::sample_trilinear(v, sz, sy, sx, fill);
                    nl.at(z, y, x) = detail::sample_nearest(l, sz, sy, sx);
                }
        v = std::move(nv);
        l = std::move(nl);
    }

    if (spec.enable_flips) {
        for (int axis = 0; axis < 3; ++axis) {
            if (!spec.flip_axes[static_cast<std::size_t>(axis)]) continue;
            if (unit(rng) < 0.5) {
                v = flip_axis(v, axis);
                l = flip_axis(l, axis);
            }
        }
    }

    if (spec.enable_crop) {
        const Shape3 c = spec.crop_shape;
        if (c.d > v.shape.d || c.h > v.shape.h || c.w > v.shape.w)
            throw Error("crop_shape larger than volume");
        auto draw = [&](std::int64_t lim) -> std::int64_t {
            if (lim <= 0) return 0;
            return std::uniform_int_distribution<std::int64_t>(0, lim)(rng);
        };
        std::int64_t oz = draw(v.shape.d - c.d);
        std::int64_t oy = draw(v.shape.h - c.h);
        std::int64_t ox = draw(v.shape.w - c.w);
        Volume nv(c, v.spacing);
        LabelVolume nl(c, l.spacing, l.num_classes);
        for (std::int64_t z = 0; z < c.d; ++z)
            for (std::int64_t y = 0; y < c.h; ++y)
                for (std::int64_t x = 0; x < c.w; ++x) {
                    nv.at(z, y, x) = v.at(z + oz, y + oy, x + ox);
                    nl.at(z, y, x) = l.at(z + oz, y + oy, x + ox);
                }
        v = std::move(nv);
        l = std::move(nl);
    }

    if (spec.enable_noise) {
        double sigma = std::uniform_real_distribution<double>(
            spec.noise_sigma_lo, spec.noise_sigma_hi)(rng);
        if (sigma > 0) {
            std::normal_distribution<double> nd(0.0, sigma);
            for (auto& f : v.data) f += static_cast<float>(nd(rng));
        }
    }

    return {std::move(v), std::move(l)};
}

}  // namespace banet
