#pragma once

// Synthetic kidney-scene generator for desk-scale end-to-end runs: a kidney
// ellipsoid with a tumor sphere straddling its surface, plus artery/vein
// tubes rasterized from smoothed random polylines. Intensities sit inside
// the CT clip window so the real preprocessing path runs unmodified.

#include <array>
#include <random>
#include <string>
#include <vector>

#include "banet/core/volume.hpp"

namespace banet {

// Class ids: 0 background, 1 kidney, 2 tumor, 3 artery, 4 vein.
constexpr int kPhantomClasses = 5;

struct PhantomSpec {
    Shape3 shape{64, 64, 64};
    Spacing spacing{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;

    // Kidney ellipsoid semi-axes as fractions of each dimension.
    double kidney_semi_lo = 0.18, kidney_semi_hi = 0.28;
    // Tumor sphere radius in voxels (attached to the kidney surface).
    double tumor_radius_lo = 5.0, tumor_radius_hi = 12.0;
    double artery_radius = 1.8;
    double vein_radius = 2.6;
    int vessel_waypoints = 4;

    // Per-structure intensity (bg, kidney, tumor, artery, vein), inside the
    // [918, 1396] clip window, plus additive Gaussian noise.
    std::array<double, 5> intensity{950.0, 1150.0, 1250.0, 1350.0, 1050.0};
    double noise_sigma = 10.0;

    void validate() const {
        check_spacing(spacing);
        if (shape.d < 16 || shape.h < 16 || shape.w < 16)
            throw Error("phantom shape too small (need >= 16 per axis)");
        if (!(kidney_semi_lo > 0 && kidney_semi_lo <= kidney_semi_hi &&
              kidney_semi_hi < 0.5))
            throw Error("kidney semi-axis range invalid");
        if (!(tumor_radius_lo > 0 && tumor_radius_lo <= tumor_radius_hi))
            throw Error("tumor radius range invalid");
        if (artery_radius <= 0 || vein_radius <= 0)
            throw Error("vessel radii must be positive");
        if (vessel_waypoints < 2) throw Error("need >= 2 vessel waypoints");
        if (noise_sigma < 0) throw Error("noise sigma must be >= 0");
    }
};

struct PhantomCase {
    std::string id;
    Volume image;
    LabelVolume labels;
};

namespace detail {

struct Vec3 {
    double z, y, x;
};

inline void paint_ball(LabelVolume& l, Vec3 c, double r, std::uint8_t cls) {
    const std::int64_t z0 = std::max<std::int64_t>(0, std::int64_t(c.z - r) - 1);
    const std::int64_t z1 = std::min(l.shape.d - 1, std::int64_t(c.z + r) + 1);
    const std::int64_t y0 = std::max<std::int64_t>(0, std::int64_t(c.y - r) - 1);
    const std::int64_t y1 = std::min(l.shape.h - 1, std::int64_t(c.y + r) + 1);
    const std::int64_t x0 = std::max<std::int64_t>(0, std::int64_t(c.x - r) - 1);
    const std::int64_t x1 = std::min(l.shape.w - 1, std::int64_t(c.x + r) + 1);
    const double r2 = r * r;
    for (std::int64_t z = z0; z <= z1; ++z)
        for (std::int64_t y = y0; y <= y1; ++y)
            for (std::int64_t x = x0; x <= x1; ++x) {
                const double dz = double(z) - c.z;
                const double dy = double(y) - c.y;
                const double dx = double(x) - c.x;
                if (dz * dz + dy * dy + dx * dx <= r2)
                    l.at(z, y, x) = cls;
            }
}

// Dense samples along a Catmull-Rom-smoothed polyline.
inline std::vector<Vec3> smooth_path(const std::vector<Vec3>& pts,
                                     int samples_per_segment) {
    std::vector<Vec3> out;
    const auto n = static_cast<std::int64_t>(pts.size());
    auto at = [&](std::int64_t i) {
        return pts[static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, n - 1))];
    };
    for (std::int64_t i = 0; i + 1 < n; ++i) {
        Vec3 p0 = at(i - 1), p1 = at(i), p2 = at(i + 1), p3 = at(i + 2);
        for (int s = 0; s < samples_per_segment; ++s) {
            const double t = double(s) / double(samples_per_segment);
            const double t2 = t * t, t3 = t2 * t;
            auto cr = [&](double a, double b, double c, double d) {
                return 0.5 * ((2 * b) + (-a + c) * t +
                              (2 * a - 5 * b + 4 * c - d) * t2 +
                              (-a + 3 * b - 3 * c + d) * t3);
            };
            out.push_back(Vec3{cr(p0.z, p1.z, p2.z, p3.z),
                               cr(p0.y, p1.y, p2.y, p3.y),
                               cr(p0.x, p1.x, p2.x, p3.x)});
        }
    }
    out.push_back(pts.back());
    return out;
}

inline void paint_tube(LabelVolume& l, const std::vector<Vec3>& waypoints,
                       double radius, std::uint8_t cls) {
    auto path = smooth_path(waypoints, 12);
    for (const auto& p : path) paint_ball(l, p, radius, cls);
}

}  // namespace detail

inline std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const Shape3 s = spec.shape;
    LabelVolume labels(s, spec.spacing, kPhantomClasses, 0);

    // Kidney ellipsoid, jittered center.
    const detail::Vec3 kc{0.5 * double(s.d - 1) + uni(-0.05, 0.05) * double(s.d),
                          0.5 * double(s.h - 1) + uni(-0.05, 0.05) * double(s.h),
                          0.5 * double(s.w - 1) + uni(-0.05, 0.05) * double(s.w)};
    const double az = uni(spec.kidney_semi_lo, spec.kidney_semi_hi) * double(s.d);
    const double ay = uni(spec.kidney_semi_lo, spec.kidney_semi_hi) * double(s.h);
    const double ax = uni(spec.kidney_semi_lo, spec.kidney_semi_hi) * double(s.w);
    for (std::int64_t z = 0; z < s.d; ++z)
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                const double dz = (double(z) - kc.z) / az;
                const double dy = (double(y) - kc.y) / ay;
                const double dx = (double(x) - kc.x) / ax;
                if (dz * dz + dy * dy + dx * dx <= 1.0) labels.at(z, y, x) = 1;
            }

    // Vessels: paint in ascending priority (kidney < vein < artery < tumor),
    // later classes overwrite at overlaps. Both tubes run from the volume
    // border toward the kidney hilum region.
    auto vessel_waypoints = [&](double side_sign) {
        std::vector<detail::Vec3> wps;
        const double entry_y = side_sign > 0 ? 2.0 : double(s.h - 3);
        wps.push_back(detail::Vec3{kc.z + uni(-0.15, 0.15) * double(s.d),
                                   entry_y,
                                   kc.x + uni(-0.25, 0.25) * double(s.w)});
        for (int i = 1; i < spec.vessel_waypoints; ++i) {
            const double t =
                double(i) / double(spec.vessel_waypoints);
            wps.push_back(detail::Vec3{
                kc.z + uni(-0.12, 0.12) * double(s.d),
                entry_y + (kc.y - entry_y) * t + uni(-3.0, 3.0),
                kc.x + uni(-0.18, 0.18) * double(s.w)});
        }
        wps.push_back(detail::Vec3{kc.z, kc.y, kc.x});
        return wps;
    };
    detail::paint_tube(labels, vessel_waypoints(-1.0), spec.vein_radius, 4);
    detail::paint_tube(labels, vessel_waypoints(+1.0), spec.artery_radius, 3);

    // Tumor sphere centered on the kidney surface along a random direction.
    const double tumor_r = uni(spec.tumor_radius_lo, spec.tumor_radius_hi);
    {
        std::normal_distribution<double> nd(0.0, 1.0);
        double uz = nd(rng), uy = nd(rng), ux = nd(rng);
        const double norm = std::sqrt(uz * uz + uy * uy + ux * ux) + 1e-12;
        uz /= norm;
        uy /= norm;
        ux /= norm;
        // Scale to the ellipsoid surface point in direction u.
        const double k = 1.0 / std::sqrt(uz * uz / (az * az) +
                                         uy * uy / (ay * ay) +
                                         ux * ux / (ax * ax));
        detail::Vec3 tc{kc.z + k * uz, kc.y + k * uy, kc.x + k * ux};
        tc.z = std::clamp(tc.z, tumor_r * 0.5, double(s.d - 1) - tumor_r * 0.5);
        tc.y = std::clamp(tc.y, tumor_r * 0.5, double(s.h - 1) - tumor_r * 0.5);
        tc.x = std::clamp(tc.x, tumor_r * 0.5, double(s.w - 1) - tumor_r * 0.5);
        detail::paint_ball(labels, tc, tumor_r, 2);
    }

    // Every foreground class must be present.
    std::array<std::int64_t, 5> counts{};
    for (auto v : labels.data) ++counts[v];
    for (int c = 1; c < kPhantomClasses; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw Error(std::string("phantom geometry left class ") +
                        std::to_string(c) + " empty; adjust spec ranges");
    // Tumor must straddle the kidney boundary: it needs both a kidney
    // neighbor and a background/vessel neighbor somewhere.
    bool touches_kidney = false;
    for (std::int64_t z = 0; z < s.d && !touches_kidney; ++z)
        for (std::int64_t y = 0; y < s.h && !touches_kidney; ++y)
            for (std::int64_t x = 0; x < s.w && !touches_kidney; ++x) {
                if (labels.at(z, y, x) != 2) continue;
                const std::int64_t dz[6] = {-1, 1, 0, 0, 0, 0};
                const std::int64_t dy[6] = {0, 0, -1, 1, 0, 0};
                const std::int64_t dx[6] = {0, 0, 0, 0, -1, 1};
                for (int k = 0; k < 6; ++k) {
                    const std::int64_t nz = z + dz[k], ny = y + dy[k],
                                       nx = x + dx[k];
                    if (nz < 0 || ny < 0 || nx < 0 || nz >= s.d || ny >= s.h ||
                        nx >= s.w)
                        continue;
                    if (labels.at(nz, ny, nx) == 1) touches_kidney = true;
                }
            }
    if (!touches_kidney)
        throw Error("phantom tumor does not touch the kidney; adjust spec");

    Volume image(s, spec.spacing);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < image.data.size(); ++i) {
        double v = spec.intensity[labels.data[i]];
        if (spec.noise_sigma > 0) v += spec.noise_sigma * noise(rng);
        image.data[i] = static_cast<float>(v);
    }
    return {std::move(image), std::move(labels)};
}

/// n cases with per-case jittered geometry; tumor radii sweep the configured
/// range so cohort tumor volumes span a wide ratio.
inline std::vector<PhantomCase> generate_cohort(int n,
                                                const PhantomSpec& base,
                                                std::uint64_t seed) {
    if (n < 1) throw Error("cohort size must be >= 1");
    std::vector<PhantomCase> out;
    for (int i = 0; i < n; ++i) {
        PhantomSpec spec = base;
        spec.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        const double t = n == 1 ? 0.5 : double(i) / double(n - 1);
        spec.tumor_radius_lo = spec.tumor_radius_hi =
            base.tumor_radius_lo +
            t * (base.tumor_radius_hi - base.tumor_radius_lo);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "case_%03d", i);
        auto [img, lab] = generate_phantom(spec);
        out.push_back(PhantomCase{buf, std::move(img), std::move(lab)});
    }
    return out;
}

}  // namespace banet
