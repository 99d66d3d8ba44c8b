#pragma once

// Per-class Dice and exact (100th percentile) Hausdorff distance.
//
// HD distances are Euclidean between boundary-voxel centers scaled by
// spacing: unit spacing gives voxel units, physical spacing gives mm. The
// directed distances come from an exact anisotropic squared Euclidean
// distance transform (per-axis lower-envelope passes), which matches the
// brute-force all-pairs oracle to floating point roundoff.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "banet/boundary/boundary.hpp"
#include "banet/core/volume.hpp"

namespace banet {

constexpr double kHdInfinity = std::numeric_limits<double>::infinity();

inline double dsc(const LabelVolume& pred, const LabelVolume& gt,
                  int class_id) {
    if (!(pred.shape == gt.shape)) throw Error("dsc: shape mismatch");
    std::int64_t a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool pa = pred.data[i] == class_id;
        const bool pb = gt.data[i] == class_id;
        a += pa;
        b += pb;
        inter += pa && pb;
    }
    if (a == 0 && b == 0) return 1.0;  // both empty: identical
    if (a == 0 || b == 0) return 0.0;
    return 2.0 * double(inter) / double(a + b);
}

namespace detail {

// 1D squared-distance lower envelope (Felzenszwalb & Huttenlocher) with an
// anisotropic axis weight: f_out(x) = min_p f(p) + w2 * (x - p)^2.
inline void edt_pass_1d(std::vector<double>& f, double w2,
                        std::vector<int>& v, std::vector<double>& z,
                        std::vector<double>& scratch) {
    const int n = static_cast<int>(f.size());
    if (n == 1) return;
    v.assign(static_cast<std::size_t>(n), 0);
    z.assign(static_cast<std::size_t>(n + 1), 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -kHdInfinity;
    z[1] = kHdInfinity;
    auto sq = [](double d) { return d * d; };
    for (int q = 1; q < n; ++q) {
        if (f[static_cast<std::size_t>(q)] == kHdInfinity) continue;
        while (true) {
            const int p = v[static_cast<std::size_t>(k)];
            if (f[static_cast<std::size_t>(p)] == kHdInfinity) {
                // envelope currently headed by an unreachable parabola
                if (k == 0) {
                    v[0] = q;
                    z[0] = -kHdInfinity;
                    z[1] = kHdInfinity;
                    break;
                }
                --k;
                continue;
            }
            const double s =
                (f[static_cast<std::size_t>(q)] - f[static_cast<std::size_t>(p)] +
                 w2 * (sq(double(q)) - sq(double(p)))) /
                (2.0 * w2 * (double(q) - double(p)));
            if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
                --k;
                continue;
            }
            if (s <= z[static_cast<std::size_t>(k)] && k == 0) {
                v[0] = q;
                z[0] = -kHdInfinity;
                z[1] = kHdInfinity;
                break;
            }
            ++k;
            v[static_cast<std::size_t>(k)] = q;
            z[static_cast<std::size_t>(k)] = s;
            z[static_cast<std::size_t>(k + 1)] = kHdInfinity;
            break;
        }
    }
    scratch.assign(static_cast<std::size_t>(n), kHdInfinity);
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[static_cast<std::size_t>(j + 1)] < double(q)) ++j;
        const int p = v[static_cast<std::size_t>(j)];
        if (f[static_cast<std::size_t>(p)] != kHdInfinity)
            scratch[static_cast<std::size_t>(q)] =
                f[static_cast<std::size_t>(p)] + w2 * sq(double(q) - double(p));
    }
    f = scratch;
}

// Exact squared EDT to the set marked in `seeds`, axis weights = spacing^2.
inline std::vector<double> squared_edt(const std::vector<std::uint8_t>& seeds,
                                       Shape3 s, Spacing sp) {
    std::vector<double> d(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i)
        d[i] = seeds[i] ? 0.0 : kHdInfinity;
    std::vector<double> line, scratch;
    std::vector<int> v;
    std::vector<double> z;
    // x axis
    line.resize(static_cast<std::size_t>(s.w));
    for (std::int64_t zi = 0; zi < s.d; ++zi)
        for (std::int64_t yi = 0; yi < s.h; ++yi) {
            const std::int64_t base = (zi * s.h + yi) * s.w;
            for (std::int64_t x = 0; x < s.w; ++x)
                line[static_cast<std::size_t>(x)] =
                    d[static_cast<std::size_t>(base + x)];
            edt_pass_1d(line, sp.dx * sp.dx, v, z, scratch);
            for (std::int64_t x = 0; x < s.w; ++x)
                d[static_cast<std::size_t>(base + x)] =
                    line[static_cast<std::size_t>(x)];
        }
    // y axis
    line.resize(static_cast<std::size_t>(s.h));
    for (std::int64_t zi = 0; zi < s.d; ++zi)
        for (std::int64_t x = 0; x < s.w; ++x) {
            for (std::int64_t y = 0; y < s.h; ++y)
                line[static_cast<std::size_t>(y)] =
                    d[static_cast<std::size_t>((zi * s.h + y) * s.w + x)];
            edt_pass_1d(line, sp.dy * sp.dy, v, z, scratch);
            for (std::int64_t y = 0; y < s.h; ++y)
                d[static_cast<std::size_t>((zi * s.h + y) * s.w + x)] =
                    line[static_cast<std::size_t>(y)];
        }
    // z axis
    line.resize(static_cast<std::size_t>(s.d));
    for (std::int64_t yi = 0; yi < s.h; ++yi)
        for (std::int64_t x = 0; x < s.w; ++x) {
            for (std::int64_t zi = 0; zi < s.d; ++zi)
                line[static_cast<std::size_t>(zi)] =
                    d[static_cast<std::size_t>((zi * s.h + yi) * s.w + x)];
            edt_pass_1d(line, sp.dz * sp.dz, v, z, scratch);
            for (std::int64_t zi = 0; zi < s.d; ++zi)
                d[static_cast<std::size_t>((zi * s.h + yi) * s.w + x)] =
                    line[static_cast<std::size_t>(zi)];
        }
    return d;
}

inline std::vector<std::uint8_t> class_boundary(const LabelVolume& l,
                                                int class_id) {
    LabelVolume mask(l.shape, l.spacing, 2);
    for (std::size_t i = 0; i < l.data.size(); ++i)
        mask.data[i] = l.data[i] == class_id;
    return extract_boundary(mask, Connectivity::k6).data;
}

}  // namespace detail

/// Exact symmetric Hausdorff distance between the class boundaries of two
/// label maps, in units of `spacing` (pass unit spacing for voxels).
/// Both-empty -> 0; exactly one empty -> +infinity sentinel.
inline double hausdorff(const LabelVolume& pred, const LabelVolume& gt,
                        int class_id, Spacing spacing) {
    if (!(pred.shape == gt.shape)) throw Error("hausdorff: shape mismatch");
    auto ba = detail::class_boundary(pred, class_id);
    auto bb = detail::class_boundary(gt, class_id);
    bool any_a = false, any_b = false;
    for (auto v : ba) any_a = any_a || v;
    for (auto v : bb) any_b = any_b || v;
    if (!any_a && !any_b) return 0.0;
    if (!any_a || !any_b) return kHdInfinity;
    auto directed = [&](const std::vector<std::uint8_t>& from,
                        const std::vector<std::uint8_t>& to) {
        auto d2 = detail::squared_edt(to, pred.shape, spacing);
        double worst = 0.0;
        for (std::size_t i = 0; i < from.size(); ++i)
            if (from[i]) worst = std::max(worst, d2[i]);
        return worst;
    };
    return std::sqrt(std::max(directed(ba, bb), directed(bb, ba)));
}

struct ClassMetric {
    int class_id = 0;
    double dsc = 0.0;
    double hd = 0.0;
    bool pred_empty = false;
    bool gt_empty = false;
    bool hd_valid = true;  // false when exactly one side is empty
};

struct CaseMetrics {
    std::vector<ClassMetric> classes;  // foreground classes, ascending id
    double mean_dsc = 0.0;  // arithmetic mean over foreground classes
    double mean_hd = 0.0;   // over classes with valid HD
    int hd_excluded = 0;
};

/// DSC + HD for every foreground class plus macro averages.
inline CaseMetrics evaluate_case(const LabelVolume& pred, const LabelVolume& gt,
                                 Spacing spacing) {
    if (!(pred.shape == gt.shape)) throw Error("evaluate_case: shape mismatch");
    if (pred.num_classes != gt.num_classes)
        throw Error("evaluate_case: class alphabet mismatch");
    CaseMetrics cm;
    double dsum = 0, hsum = 0;
    int hcount = 0;
    for (int c = 1; c < gt.num_classes; ++c) {
        ClassMetric m;
        m.class_id = c;
        std::int64_t na = 0, nb = 0;
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            na += pred.data[i] == c;
            nb += gt.data[i] == c;
        }
        m.pred_empty = na == 0;
        m.gt_empty = nb == 0;
        m.dsc = dsc(pred, gt, c);
        m.hd = hausdorff(pred, gt, c, spacing);
        m.hd_valid = std::isfinite(m.hd);
        dsum += m.dsc;
        if (m.hd_valid) {
            hsum += m.hd;
            ++hcount;
        } else {
            ++cm.hd_excluded;
        }
        cm.classes.push_back(m);
    }
    cm.mean_dsc = cm.classes.empty() ? 0.0 : dsum / double(cm.classes.size());
    cm.mean_hd = hcount ? hsum / double(hcount) : 0.0;
    return cm;
}

inline const char* kipa_class_name(int class_id) {
    switch (class_id) {
        case 1: return "kidney";
        case 2: return "tumor";
        case 3: return "artery";
        case 4: return "vein";
        default: return "class";
    }
}

}  // namespace banet
