#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace banet {

/// Error type thrown for all invariant/contract violations in this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Physical voxel edge lengths in millimetres. Axis order is (slice, row,
/// column) = (z, y, x), matching the array axis order (D, H, W) used
/// throughout.
struct Spacing {
    double dz = 1.0;
    double dy = 1.0;
    double dx = 1.0;

    bool valid() const {
        return dz > 0 && dy > 0 && dx > 0 && std::isfinite(dz) &&
               std::isfinite(dy) && std::isfinite(dx);
    }
    bool operator==(const Spacing& o) const {
        return dz == o.dz && dy == o.dy && dx == o.dx;
    }
    double operator[](int axis) const {
        return axis == 0 ? dz : (axis == 1 ? dy : dx);
    }
};

inline void check_spacing(const Spacing& s) {
    if (!s.valid())
        throw Error("spacing must be strictly positive and finite, got (" +
                    std::to_string(s.dz) + ", " + std::to_string(s.dy) + ", " +
                    std::to_string(s.dx) + ")");
}

/// Grid extent in voxels, axis order (D, H, W).
struct Shape3 {
    std::int64_t d = 0;
    std::int64_t h = 0;
    std::int64_t w = 0;

    std::int64_t numel() const { return d * h * w; }
    bool operator==(const Shape3& o) const {
        return d == o.d && h == o.h && w == o.w;
    }
    std::int64_t operator[](int axis) const {
        return axis == 0 ? d : (axis == 1 ? h : w);
    }
    std::string str() const {
        return "(" + std::to_string(d) + ", " + std::to_string(h) + ", " +
               std::to_string(w) + ")";
    }
};

/// 64-bit FNV-1a, used for config/cache fingerprints.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(s.data(), s.size());
}

/// Derives a stream seed from (base seed, stream ids); splitmix-style mixing
/// so that per-case / per-epoch worker seeds are decorrelated.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (a + 1) +
                      0xbf58476d1ce4e5b9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace banet
