#pragma once

// Volume file I/O. Two formats, chosen by extension:
//   *.raw          little-endian raw array + JSON sidecar (same basename,
//                  .json extension). Test-friendly, bit-exact.
//   *.nii, *.nii.gz  minimal NIfTI-1 for interoperability with real data.
//
// Raw sidecar schema:
//   { "format": "banet-raw", "version": 1,
//     "kind": "image" | "labels" | "probability",
//     "dtype": "float32" | "uint8",
//     "shape": [D,H,W] ([C,D,H,W] for probability),
//     "spacing": [dz,dy,dx],
//     "num_classes": <int, labels only> }
// Data bytes are C-order with W fastest (C slowest for probability),
// little-endian.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "banet/core/types.hpp"
#include "banet/core/volume.hpp"

namespace banet {

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() &&
           s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

inline bool is_nifti_path(const std::string& p) {
    return ends_with(p, ".nii") || ends_with(p, ".nii.gz");
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& raw) {
    auto p = raw;
    p.replace_extension(".json");
    return p;
}

// Whole-file read, transparently gunzipping (gzread passes plain files
// through unchanged).
inline std::vector<char> read_file_maybe_gz(const std::string& path) {
    if (!std::filesystem::exists(path))
        throw Error("file not found: " + path);
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw Error("cannot open: " + path);
    std::vector<char> out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0)
        out.insert(out.end(), buf, buf + n);
    bool bad = n < 0;
    gzclose(f);
    if (bad) throw Error("read/decompress failed: " + path);
    return out;
}

inline void write_file_maybe_gz(const std::string& path, const void* hdr,
                                std::size_t hdr_len, const void* data,
                                std::size_t data_len) {
    if (ends_with(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw Error("cannot write: " + path);
        bool ok = gzwrite(f, hdr, static_cast<unsigned>(hdr_len)) ==
                      static_cast<int>(hdr_len) &&
                  (data_len == 0 ||
                   gzwrite(f, data, static_cast<unsigned>(data_len)) ==
                       static_cast<int>(data_len));
        gzclose(f);
        if (!ok) throw Error("write failed: " + path);
    } else {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write: " + path);
        f.write(static_cast<const char*>(hdr),
                static_cast<std::streamsize>(hdr_len));
        if (data_len)
            f.write(static_cast<const char*>(data),
                    static_cast<std::streamsize>(data_len));
        if (!f) throw Error("write failed: " + path);
    }
}

// ---------------------------------------------------------------------------
// NIfTI-1 (348-byte header, single file, data at vox_offset)

#pragma pack(push, 1)
struct Nifti1Header {
    std::int32_t sizeof_hdr;     // must be 348
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];         // dim[0]=rank, dim[1]=nx ... x fastest
    float intent_p1;
    float intent_p2;
    float intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max;
    float cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax;
    std::int32_t glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code;
    std::int16_t sform_code;
    float quatern_b;
    float quatern_c;
    float quatern_d;
    float qoffset_x;
    float qoffset_y;
    float qoffset_z;
    float srow_x[4];
    float srow_y[4];
    float srow_z[4];
    char intent_name[16];
    char magic[4];               // "n+1\0"
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

enum NiftiDatatype : std::int16_t {
    kDtUint8 = 2,
    kDtInt16 = 4,
    kDtInt32 = 8,
    kDtFloat32 = 16,
    kDtFloat64 = 64,
};

// intent_code for label volumes; intent_p1 carries num_classes.
constexpr std::int16_t kNiftiIntentLabel = 1002;

inline Nifti1Header make_nifti_header(std::int16_t rank, Shape3 shape,
                                      std::int64_t channels, Spacing sp,
                                      std::int16_t dtype, std::int16_t bitpix) {
    Nifti1Header h;
    std::memset(&h, 0, sizeof(h));
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = rank;
    h.dim[1] = static_cast<std::int16_t>(shape.w);
    h.dim[2] = static_cast<std::int16_t>(shape.h);
    h.dim[3] = static_cast<std::int16_t>(shape.d);
    h.dim[4] = rank == 4 ? static_cast<std::int16_t>(channels) : 1;
    for (int i = rank + 1; i < 8; ++i) h.dim[i] = 1;
    h.datatype = dtype;
    h.bitpix = bitpix;
    h.pixdim[0] = 1.f;
    h.pixdim[1] = static_cast<float>(sp.dx);
    h.pixdim[2] = static_cast<float>(sp.dy);
    h.pixdim[3] = static_cast<float>(sp.dz);
    h.pixdim[4] = 1.f;
    h.vox_offset = 352.f;
    h.scl_slope = 1.f;
    h.scl_inter = 0.f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    h.sform_code = 1;
    h.srow_x[0] = static_cast<float>(sp.dx);
    h.srow_y[1] = static_cast<float>(sp.dy);
    h.srow_z[2] = static_cast<float>(sp.dz);
    std::memcpy(h.magic, "n+1", 4);
    return h;
}

struct NiftiData {
    Shape3 shape;
    std::int64_t channels = 1;
    int rank = 3;
    Spacing spacing;
    std::vector<float> values;  // scaled, converted to float
    std::int16_t datatype = 0;
    std::int16_t intent_code = 0;
    float intent_p1 = 0.f;
};

inline NiftiData read_nifti(const std::string& path) {
    auto bytes = read_file_maybe_gz(path);
    if (bytes.size() < sizeof(Nifti1Header))
        throw Error("malformed NIfTI (file shorter than header): " + path);
    Nifti1Header h;
    std::memcpy(&h, bytes.data(), sizeof(h));
    if (h.sizeof_hdr != 348)
        throw Error("malformed or byte-swapped NIfTI header (sizeof_hdr=" +
                    std::to_string(h.sizeof_hdr) + "): " + path);
    if (std::strncmp(h.magic, "n+1", 3) != 0 &&
        std::strncmp(h.magic, "ni1", 3) != 0)
        throw Error("not a NIfTI-1 file (bad magic): " + path);

    NiftiData out;
    out.rank = h.dim[0];
    if (out.rank != 3 && out.rank != 4)
        throw Error("unsupported NIfTI rank " + std::to_string(out.rank) +
                    ": " + path);
    out.shape = Shape3{h.dim[3], h.dim[2], h.dim[1]};
    out.channels = out.rank == 4 ? h.dim[4] : 1;
    out.spacing = Spacing{h.pixdim[3], h.pixdim[2], h.pixdim[1]};
    out.datatype = h.datatype;
    out.intent_code = h.intent_code;
    out.intent_p1 = h.intent_p1;

    const std::int64_t n = out.shape.numel() * out.channels;
    if (n <= 0) throw Error("malformed NIfTI dims: " + path);
    const std::size_t offset = static_cast<std::size_t>(h.vox_offset);
    auto need = [&](std::size_t elem) {
        if (bytes.size() < offset + elem * static_cast<std::size_t>(n))
            throw Error("NIfTI data truncated: " + path);
    };
    out.values.resize(static_cast<std::size_t>(n));
    const char* src = bytes.data() + offset;
    switch (h.datatype) {
        case kDtUint8: {
            need(1);
            for (std::int64_t i = 0; i < n; ++i)
                out.values[i] = static_cast<float>(
                    static_cast<const std::uint8_t*>(
                        static_cast<const void*>(src))[i]);
            break;
        }
        case kDtInt16: {
            need(2);
            const std::int16_t* p =
                static_cast<const std::int16_t*>(static_cast<const void*>(src));
            for (std::int64_t i = 0; i < n; ++i)
                out.values[i] = static_cast<float>(p[i]);
            break;
        }
        case kDtInt32: {
            need(4);
            const std::int32_t* p =
                static_cast<const std::int32_t*>(static_cast<const void*>(src));
            for (std::int64_t i = 0; i < n; ++i)
                out.values[i] = static_cast<float>(p[i]);
            break;
        }
        case kDtFloat32: {
            need(4);
            std::memcpy(out.values.data(), src,
                        static_cast<std::size_t>(n) * 4);
            break;
        }
        case kDtFloat64: {
            need(8);
            const double* p =
                static_cast<const double*>(static_cast<const void*>(src));
            for (std::int64_t i = 0; i < n; ++i)
                out.values[i] = static_cast<float>(p[i]);
            break;
        }
        default:
            throw Error("unsupported NIfTI datatype " +
                        std::to_string(h.datatype) + ": " + path);
    }
    if (h.scl_slope != 0.f && (h.scl_slope != 1.f || h.scl_inter != 0.f)) {
        for (auto& v : out.values) v = v * h.scl_slope + h.scl_inter;
    }
    return out;
}

inline const char* dtype_name(bool u8) { return u8 ? "uint8" : "float32"; }

inline void write_raw(const std::string& path, const nlohmann::json& meta,
                      const void* data, std::size_t len) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write: " + path);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    if (!f) throw Error("write failed: " + path);
    std::ofstream js(sidecar_path(path), std::ios::trunc);
    if (!js) throw Error("cannot write sidecar for: " + path);
    js << meta.dump(2) << "\n";
}

inline nlohmann::json read_sidecar(const std::string& path) {
    auto sp = sidecar_path(path);
    if (!std::filesystem::exists(sp))
        throw Error("missing sidecar: " + sp.string());
    std::ifstream f(sp);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error("malformed sidecar " + sp.string() + ": " + e.what());
    }
    if (j.value("format", "") != "banet-raw")
        throw Error("not a banet-raw sidecar: " + sp.string());
    return j;
}

inline std::vector<char> read_raw_payload(const std::string& path,
                                          std::size_t expect) {
    if (!std::filesystem::exists(path)) throw Error("file not found: " + path);
    std::ifstream f(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(f)),
                            std::istreambuf_iterator<char>());
    if (bytes.size() != expect)
        throw Error("raw payload size mismatch for " + path + ": got " +
                    std::to_string(bytes.size()) + ", want " +
                    std::to_string(expect));
    return bytes;
}

inline Spacing spacing_from_json(const nlohmann::json& j) {
    auto v = j.at("spacing");
    Spacing s{v.at(0).get<double>(), v.at(1).get<double>(),
              v.at(2).get<double>()};
    check_spacing(s);
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public API

inline void save_volume(const Volume& v, const std::string& path) {
    using namespace detail;
    if (is_nifti_path(path)) {
        auto h = make_nifti_header(3, v.shape, 1, v.spacing, kDtFloat32, 32);
        const char pad[4] = {0, 0, 0, 0};
        std::vector<char> hdr(sizeof(h) + 4);
        std::memcpy(hdr.data(), &h, sizeof(h));
        std::memcpy(hdr.data() + sizeof(h), pad, 4);
        write_file_maybe_gz(path, hdr.data(), hdr.size(), v.data.data(),
                            v.data.size() * 4);
        return;
    }
    nlohmann::json meta{{"format", "banet-raw"},
                        {"version", 1},
                        {"kind", "image"},
                        {"dtype", "float32"},
                        {"shape", {v.shape.d, v.shape.h, v.shape.w}},
                        {"spacing", {v.spacing.dz, v.spacing.dy, v.spacing.dx}}};
    write_raw(path, meta, v.data.data(), v.data.size() * 4);
}

inline void save_labels(const LabelVolume& l, const std::string& path) {
    using namespace detail;
    if (is_nifti_path(path)) {
        auto h = make_nifti_header(3, l.shape, 1, l.spacing, kDtUint8, 8);
        h.intent_code = kNiftiIntentLabel;
        h.intent_p1 = static_cast<float>(l.num_classes);
        const char pad[4] = {0, 0, 0, 0};
        std::vector<char> hdr(sizeof(h) + 4);
        std::memcpy(hdr.data(), &h, sizeof(h));
        std::memcpy(hdr.data() + sizeof(h), pad, 4);
        write_file_maybe_gz(path, hdr.data(), hdr.size(), l.data.data(),
                            l.data.size());
        return;
    }
    nlohmann::json meta{{"format", "banet-raw"},
                        {"version", 1},
                        {"kind", "labels"},
                        {"dtype", "uint8"},
                        {"shape", {l.shape.d, l.shape.h, l.shape.w}},
                        {"spacing", {l.spacing.dz, l.spacing.dy, l.spacing.dx}},
                        {"num_classes", l.num_classes}};
    write_raw(path, meta, l.data.data(), l.data.size());
}

inline void save_probability(const ProbabilityVolume& p,
                             const std::string& path) {
    using namespace detail;
    if (is_nifti_path(path)) {
        auto h = make_nifti_header(4, p.shape, p.channels, p.spacing,
                                   kDtFloat32, 32);
        const char pad[4] = {0, 0, 0, 0};
        std::vector<char> hdr(sizeof(h) + 4);
        std::memcpy(hdr.data(), &h, sizeof(h));
        std::memcpy(hdr.data() + sizeof(h), pad, 4);
        write_file_maybe_gz(path, hdr.data(), hdr.size(), p.data.data(),
                            p.data.size() * 4);
        return;
    }
    nlohmann::json meta{
        {"format", "banet-raw"},
        {"version", 1},
        {"kind", "probability"},
        {"dtype", "float32"},
        {"shape", {p.channels, p.shape.d, p.shape.h, p.shape.w}},
        {"spacing", {p.spacing.dz, p.spacing.dy, p.spacing.dx}}};
    write_raw(path, meta, p.data.data(), p.data.size() * 4);
}

inline Volume load_volume(const std::string& path) {
    using namespace detail;
    if (is_nifti_path(path)) {
        auto nd = read_nifti(path);
        if (nd.rank != 3)
            throw Error("expected 3D image, got rank " +
                        std::to_string(nd.rank) + ": " + path);
        Volume v(nd.shape, nd.spacing);
        v.data = std::move(nd.values);
        return v;
    }
    auto meta = read_sidecar(path);
    if (meta.value("kind", "") != "image")
        throw Error("sidecar kind is not 'image': " + path);
    auto sh = meta.at("shape");
    Shape3 shape{sh.at(0).get<std::int64_t>(), sh.at(1).get<std::int64_t>(),
                 sh.at(2).get<std::int64_t>()};
    Volume v(shape, spacing_from_json(meta));
    if (meta.value("dtype", "") != "float32")
        throw Error("unsupported image dtype '" +
                    meta.value("dtype", std::string()) + "': " + path);
    auto bytes =
        read_raw_payload(path, static_cast<std::size_t>(shape.numel()) * 4);
    std::memcpy(v.data.data(), bytes.data(), bytes.size());
    return v;
}

/// Loads labels and validates the value range. `expected_classes` < 0 takes
/// num_classes from the file metadata (required for raw; NIfTI label files
/// written by this library carry it in intent_p1).
inline LabelVolume load_labels(const std::string& path,
                               int expected_classes = -1) {
    using namespace detail;
    Shape3 shape;
    Spacing spacing;
    std::vector<std::uint8_t> vals;
    int file_classes = -1;
    if (is_nifti_path(path)) {
        auto nd = read_nifti(path);
        if (nd.rank != 3)
            throw Error("expected 3D labels, got rank " +
                        std::to_string(nd.rank) + ": " + path);
        shape = nd.shape;
        spacing = nd.spacing;
        if (nd.intent_code == kNiftiIntentLabel && nd.intent_p1 > 0)
            file_classes = static_cast<int>(nd.intent_p1);
        vals.resize(nd.values.size());
        for (std::size_t i = 0; i < vals.size(); ++i) {
            float f = nd.values[i];
            if (f < 0 || f > 255 || f != std::floor(f))
                throw Error("non-integer label value " + std::to_string(f) +
                            ": " + path);
            vals[i] = static_cast<std::uint8_t>(f);
        }
    } else {
        auto meta = read_sidecar(path);
        if (meta.value("kind", "") != "labels")
            throw Error("sidecar kind is not 'labels': " + path);
        auto sh = meta.at("shape");
        shape = Shape3{sh.at(0).get<std::int64_t>(),
                       sh.at(1).get<std::int64_t>(),
                       sh.at(2).get<std::int64_t>()};
        spacing = spacing_from_json(meta);
        file_classes = meta.value("num_classes", -1);
        if (meta.value("dtype", "") != "uint8")
            throw Error("unsupported label dtype: " + path);
        auto bytes =
            read_raw_payload(path, static_cast<std::size_t>(shape.numel()));
        vals.assign(bytes.begin(), bytes.end());
    }
    int classes = expected_classes > 0 ? expected_classes : file_classes;
    if (classes < 2)
        throw Error("num_classes unknown for label file: " + path);
    LabelVolume l(shape, spacing, classes);
    l.data = std::move(vals);
    l.validate();
    return l;
}

inline ProbabilityVolume load_probability(const std::string& path) {
    using namespace detail;
    if (is_nifti_path(path)) {
        auto nd = read_nifti(path);
        if (nd.rank != 4)
            throw Error("expected 4D probability stack: " + path);
        ProbabilityVolume p(nd.channels, nd.shape, nd.spacing);
        p.data = std::move(nd.values);
        return p;
    }
    auto meta = read_sidecar(path);
    if (meta.value("kind", "") != "probability")
        throw Error("sidecar kind is not 'probability': " + path);
    auto sh = meta.at("shape");
    std::int64_t c = sh.at(0).get<std::int64_t>();
    Shape3 shape{sh.at(1).get<std::int64_t>(), sh.at(2).get<std::int64_t>(),
                 sh.at(3).get<std::int64_t>()};
    ProbabilityVolume p(c, shape, spacing_from_json(meta));
    auto bytes = read_raw_payload(
        path, static_cast<std::size_t>(c * shape.numel()) * 4);
    std::memcpy(p.data.data(), bytes.data(), bytes.size());
    return p;
}

}  // namespace banet
