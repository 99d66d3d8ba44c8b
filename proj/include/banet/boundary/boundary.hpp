#pragma once

// Boundary ground truth derived from label maps. A voxel is boundary iff it
// is foreground and at least one neighbor (out-of-bounds counts as
// background) carries a different label, so inter-class interfaces are
// boundaries too. Pyramids downsample labels first and extract afterwards,
// which keeps boundaries one voxel thin at every scale.

#include <vector>

#include "banet/core/volume.hpp"
#include "banet/preprocess/preprocess.hpp"

namespace banet {

enum class Connectivity { k6 = 6, k26 = 26 };

/// Binary boundary mask (1 = boundary). Boundary voxels are a subset of the
/// source foreground.
struct BoundaryVolume {
    std::vector<std::uint8_t> data;
    Shape3 shape;
    Spacing spacing;

    BoundaryVolume() = default;
    BoundaryVolume(Shape3 s, Spacing sp)
        : data(static_cast<std::size_t>(s.numel()), 0), shape(s), spacing(sp) {}

    std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }
    std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>((z * shape.h + y) * shape.w + x)];
    }
};

inline BoundaryVolume extract_boundary(const LabelVolume& l,
                                       Connectivity conn = Connectivity::k6) {
    BoundaryVolume b(l.shape, l.spacing);
    const Shape3 s = l.shape;
    const bool full = conn == Connectivity::k26;
    for (std::int64_t z = 0; z < s.d; ++z)
        for (std::int64_t y = 0; y < s.h; ++y)
            for (std::int64_t x = 0; x < s.w; ++x) {
                std::uint8_t c = l.at(z, y, x);
                if (c == 0) continue;
                bool edge = false;
                for (int dz = -1; dz <= 1 && !edge; ++dz)
                    for (int dy = -1; dy <= 1 && !edge; ++dy)
                        for (int dx = -1; dx <= 1 && !edge; ++dx) {
                            if (dz == 0 && dy == 0 && dx == 0) continue;
                            int manhattan =
                                std::abs(dz) + std::abs(dy) + std::abs(dx);
                            if (!full && manhattan != 1) continue;
                            std::int64_t nz = z + dz, ny = y + dy, nx = x + dx;
                            std::uint8_t n = 0;  // out of bounds = background
                            if (nz >= 0 && ny >= 0 && nx >= 0 && nz < s.d &&
                                ny < s.h && nx < s.w)
                                n = l.at(nz, ny, nx);
                            if (n != c) edge = true;
                        }
                if (edge) b.at(z, y, x) = 1;
            }
    return b;
}

/// Per-scale label ground truth for deep supervision: element i (0-based,
/// coarse to fine) is the labels decimated by 2^(num_scales-1-i); the last
/// element is the original labels.
inline std::vector<LabelVolume> build_label_pyramid(const LabelVolume& l,
                                                    int num_scales) {
    if (num_scales < 1) throw Error("num_scales must be >= 1");
    std::vector<LabelVolume> out;
    out.reserve(static_cast<std::size_t>(num_scales));
    for (int i = 0; i < num_scales; ++i) {
        std::int64_t factor = std::int64_t(1) << (num_scales - 1 - i);
        out.push_back(factor == 1 ? l : downsample_labels(l, factor));
    }
    return out;
}

/// Boundary ground truth at every supervision scale: boundaries of the
/// decimated labels, coarse to fine.
inline std::vector<BoundaryVolume> build_boundary_pyramid(
    const LabelVolume& l, int num_scales,
    Connectivity conn = Connectivity::k6) {
    auto labels = build_label_pyramid(l, num_scales);
    std::vector<BoundaryVolume> out;
    out.reserve(labels.size());
    for (const auto& lv : labels) out.push_back(extract_boundary(lv, conn));
    return out;
}

}  // namespace banet
