#pragma once

#include <random>

#include "banet/preprocess/preprocess.hpp"

namespace banet {

namespace detail {

// Symmetric pad up to at least `target`; image padded with `fill`,
// labels with background.
inline void pad_to(Volume& v, LabelVolume& l, Shape3 target, float fill) {
    Shape3 s = v.shape;
    if (s.d >= target.d && s.h >= target.h && s.w >= target.w) return;
    Shape3 ns{std::max(s.d, target.d), std::max(s.h, target.h),
              std::max(s.w, target.w)};
    std::int64_t oz = (ns.d - s.d) / 2, oy = (ns.h - s.h) / 2,
                 ox = (ns.w - s.w) / 2;
    Volume nv(ns, v.spacing, fill);
    LabelVolume nl(ns, l.spacing, l.num_classes, 0);
    for (std::int64_t z = 0; z < s.d; ++z)
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                nv.at(z + oz, y + oy, x + ox) = v.at(z, y, x);
                nl.at(z + oz, y + oy, x + ox) = l.at(z, y, x);
            }
    v = std::move(nv);
    l = std::move(nl);
}

}  // namespace detail

/// Draws an aligned (image, label) crop of exactly cfg.patch_shape. With
/// probability cfg.fg_prob the crop is centered on a uniformly chosen
/// foreground voxel (when any exists); otherwise the origin is uniform.
/// Volumes smaller than the patch are padded first (image: normalized clip
/// floor, labels: background). Deterministic in (inputs, seed).
inline std::pair<Volume, LabelVolume> sample_patch(const Volume& v,
                                                   const LabelVolume& l,
                                                   const PreprocessConfig& cfg,
                                                   std::uint64_t seed) {
    cfg.validate();
    if (!(v.shape == l.shape))
        throw Error("sample_patch: image/label shape mismatch");
    Volume img = v;
    LabelVolume lab = l;
    detail::pad_to(img, lab, cfg.patch_shape, normalized_floor(cfg));

    const Shape3 s = img.shape, p = cfg.patch_shape;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::int64_t oz = 0, oy = 0, ox = 0;
    bool want_fg = unit(rng) < cfg.fg_prob;
    std::int64_t fg_count = 0;
    if (want_fg)
        for (auto lv : lab.data) fg_count += lv != 0;

    if (want_fg && fg_count > 0) {
        std::uniform_int_distribution<std::int64_t> pick(0, fg_count - 1);
        std::int64_t k = pick(rng), seen = 0, idx = 0;
        for (std::int64_t i = 0; i < std::int64_t(lab.data.size()); ++i) {
            if (lab.data[i] != 0 && seen++ == k) {
                idx = i;
                break;
            }
        }
        std::int64_t cz = idx / (s.h * s.w);
        std::int64_t cy = (idx / s.w) % s.h;
        std::int64_t cx = idx % s.w;
        oz = std::clamp<std::int64_t>(cz - p.d / 2, 0, s.d - p.d);
        oy = std::clamp<std::int64_t>(cy - p.h / 2, 0, s.h - p.h);
        ox = std::clamp<std::int64_t>(cx - p.w / 2, 0, s.w - p.w);
    } else {
        auto draw = [&](std::int64_t lim) -> std::int64_t {
            if (lim <= 0) return 0;
            return std::uniform_int_distribution<std::int64_t>(0, lim)(rng);
        };
        oz = draw(s.d - p.d);
        oy = draw(s.h - p.h);
        ox = draw(s.w - p.w);
    }

    Volume pv(p, img.spacing);
    LabelVolume pl(p, lab.spacing, lab.num_classes);
    for (std::int64_t z = 0; z < p.d; ++z)
        for (std::int64_t y = 0; y < p.h; ++y)
            for (std::int64_t x = 0; x < p.w; ++x) {
                pv.at(z, y, x) = img.at(z + oz, y + oy, x + ox);
                pl.at(z, y, x) = lab.at(z + oz, y + oy, x + ox);
            }
    return {std::move(pv), std::move(pl)};
}

}  // namespace banet
