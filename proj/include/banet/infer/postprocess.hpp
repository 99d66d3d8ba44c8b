#pragma once

// Connected-component postprocessing (26-connectivity): keep the largest
// component, either per foreground class or of the foreground union.

#include <vector>

#include "banet/core/volume.hpp"

namespace banet {

enum class ComponentPolicy { kLargestPerClass, kLargestForegroundUnion };

namespace detail {

// Labels 26-connected components of `mask` (nonzero entries); returns
// component id per voxel (-1 outside) and fills `sizes`.
inline std::vector<std::int32_t> label_components(
    const std::vector<std::uint8_t>& mask, Shape3 s,
    std::vector<std::int64_t>& sizes) {
    std::vector<std::int32_t> comp(mask.size(), -1);
    sizes.clear();
    std::vector<std::int64_t> stack;
    for (std::int64_t start = 0; start < std::int64_t(mask.size()); ++start) {
        if (!mask[static_cast<std::size_t>(start)] ||
            comp[static_cast<std::size_t>(start)] >= 0)
            continue;
        const auto id = static_cast<std::int32_t>(sizes.size());
        sizes.push_back(0);
        stack.clear();
        stack.push_back(start);
        comp[static_cast<std::size_t>(start)] = id;
        while (!stack.empty()) {
            const std::int64_t cur = stack.back();
            stack.pop_back();
            ++sizes[static_cast<std::size_t>(id)];
            const std::int64_t z = cur / (s.h * s.w);
            const std::int64_t y = (cur / s.w) % s.h;
            const std::int64_t x = cur % s.w;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (!dz && !dy && !dx) continue;
                        const std::int64_t nz = z + dz, ny = y + dy,
                                           nx = x + dx;
                        if (nz < 0 || ny < 0 || nx < 0 || nz >= s.d ||
                            ny >= s.h || nx >= s.w)
                            continue;
                        const std::int64_t ni = (nz * s.h + ny) * s.w + nx;
                        if (mask[static_cast<std::size_t>(ni)] &&
                            comp[static_cast<std::size_t>(ni)] < 0) {
                            comp[static_cast<std::size_t>(ni)] = id;
                            stack.push_back(ni);
                        }
                    }
        }
    }
    return comp;
}

}  // namespace detail

inline LabelVolume postprocess_components(
    const LabelVolume& l,
    ComponentPolicy policy = ComponentPolicy::kLargestPerClass) {
    LabelVolume out = l;
    const std::size_t n = l.data.size();
    std::vector<std::uint8_t> mask(n, 0);
    std::vector<std::int64_t> sizes;
    if (policy == ComponentPolicy::kLargestForegroundUnion) {
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = l.data[i] != 0;
            any = any || mask[i];
        }
        if (!any) return out;
        auto comp = detail::label_components(mask, l.shape, sizes);
        std::int32_t best = 0;
        for (std::size_t i = 1; i < sizes.size(); ++i)
            if (sizes[i] > sizes[static_cast<std::size_t>(best)])
                best = static_cast<std::int32_t>(i);
        for (std::size_t i = 0; i < n; ++i)
            if (l.data[i] != 0 && comp[i] != best) out.data[i] = 0;
        return out;
    }
    for (int cls = 1; cls < l.num_classes; ++cls) {
        bool any = false;
        for (std::size_t i = 0; i < n; ++i) {
            mask[i] = l.data[i] == cls;
            any = any || mask[i];
        }
        if (!any) continue;
        auto comp = detail::label_components(mask, l.shape, sizes);
        std::int32_t best = 0;
        for (std::size_t i = 1; i < sizes.size(); ++i)
            if (sizes[i] > sizes[static_cast<std::size_t>(best)])
                best = static_cast<std::int32_t>(i);
        for (std::size_t i = 0; i < n; ++i)
            if (mask[i] && comp[i] != best) out.data[i] = 0;
    }
    return out;
}

/// Voxelwise arithmetic mean of two probability stacks.
inline ProbabilityVolume ensemble_average(const ProbabilityVolume& a,
                                          const ProbabilityVolume& b) {
    if (a.channels != b.channels || !(a.shape == b.shape))
        throw Error("ensemble: shape/channel mismatch");
    ProbabilityVolume out(a.channels, a.shape, a.spacing);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        out.data[i] = (a.data[i] + b.data[i]) * 0.5f;
    return out;
}

}  // namespace banet
