#pragma once

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "triview/errors.hpp"
#include "triview/volume.hpp"

namespace triview {
namespace nifti {

// NIfTI-1 single-file (.nii / .nii.gz) header, 348 bytes.
struct Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope, scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration, toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Header) == 348, "NIfTI-1 header must be 348 bytes");

enum DataType : std::int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
    DT_INT8 = 256,
    DT_UINT16 = 512,
    DT_UINT32 = 768,
};

namespace detail {

class GzFile {
public:
    GzFile(const std::string& path, const char* mode) : path_(path) {
        f_ = gzopen(path.c_str(), mode);
        if (!f_) throw IoError("cannot open '" + path + "'");
    }
    ~GzFile() {
        if (f_) gzclose(f_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    void read_exact(void* dst, std::size_t n) {
        std::size_t got = 0;
        auto* p = static_cast<char*>(dst);
        while (got < n) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
            const int r = gzread(f_, p + got, chunk);
            if (r <= 0) throw IoError("'" + path_ + "': truncated or unreadable");
            got += static_cast<std::size_t>(r);
        }
    }

    void write_all(const void* src, std::size_t n) {
        std::size_t put = 0;
        const auto* p = static_cast<const char*>(src);
        while (put < n) {
            const unsigned chunk =
                static_cast<unsigned>(std::min<std::size_t>(n - put, 1u << 30));
            const int r = gzwrite(f_, p + put, chunk);
            if (r <= 0) throw IoError("'" + path_ + "': write failed");
            put += static_cast<std::size_t>(r);
        }
    }

private:
    std::string path_;
    gzFile f_ = nullptr;
};

inline bool has_gz_suffix(const std::string& path) {
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

// Direction matrix column -> dominant canonical world axis. NIfTI world
// axes are already R/A/S, matching the library's canonical frame.
inline AxisCode dominant_axis(const std::array<double, 3>& col, const std::string& path) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(col[static_cast<std::size_t>(i)]) >
            std::abs(col[static_cast<std::size_t>(best)]))
            best = i;
    const double v = col[static_cast<std::size_t>(best)];
    if (v == 0.0) throw IoError("'" + path + "': degenerate direction matrix");
    return AxisCode{best, v > 0.0 ? 1 : -1};
}

// 3x3 direction matrix, columns indexed by file axis (x,y,z).
inline std::array<std::array<double, 3>, 3> direction_matrix(const Header& h,
                                                             const std::string& path) {
    std::array<std::array<double, 3>, 3> m{};  // m[world][file]
    if (h.sform_code > 0) {
        for (int j = 0; j < 3; ++j) {
            m[0][static_cast<std::size_t>(j)] = h.srow_x[j];
            m[1][static_cast<std::size_t>(j)] = h.srow_y[j];
            m[2][static_cast<std::size_t>(j)] = h.srow_z[j];
        }
        return m;
    }
    if (h.qform_code > 0) {
        const double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
        double a2 = 1.0 - (b * b + c * c + d * d);
        const double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
        const double qfac = h.pixdim[0] < 0.0f ? -1.0 : 1.0;
        m[0] = {a * a + b * b - c * c - d * d, 2 * b * c - 2 * a * d,
                qfac * (2 * b * d + 2 * a * c)};
        m[1] = {2 * b * c + 2 * a * d, a * a + c * c - b * b - d * d,
                qfac * (2 * c * d - 2 * a * b)};
        m[2] = {2 * b * d - 2 * a * c, 2 * c * d + 2 * a * b,
                qfac * (a * a + d * d - c * c - b * b)};
        return m;
    }
    // No geometry recorded; assume identity (RAS).
    m[0] = {1, 0, 0};
    m[1] = {0, 1, 0};
    m[2] = {0, 0, 1};
    (void)path;
    return m;
}

template <class Src, class T>
void convert(const std::vector<char>& raw, tensor<T>& out, float slope, float inter) {
    const auto* src = reinterpret_cast<const Src*>(raw.data());
    T* dst = out.data();
    const index_t n = out.size();
    const bool scaled = slope != 0.0f && !(slope == 1.0f && inter == 0.0f);
    for (index_t i = 0; i < n; ++i) {
        float v = static_cast<float>(src[i]);
        if (scaled) v = v * slope + inter;
        dst[i] = static_cast<T>(v);
    }
}

inline Header read_header(GzFile& f, const std::string& path) {
    Header h{};
    f.read_exact(&h, sizeof(Header));
    if (h.sizeof_hdr != 348) {
        std::int32_t swapped = h.sizeof_hdr;
        swapped = static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(swapped)));
        if (swapped == 348)
            throw IoError("'" + path + "': byte-swapped NIfTI files are not supported");
        throw IoError("'" + path + "': not a NIfTI-1 file (bad sizeof_hdr)");
    }
    if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
        throw IoError("'" + path + "': not a NIfTI-1 file (bad magic)");
    if (std::strncmp(h.magic, "ni1", 3) == 0)
        throw IoError("'" + path + "': two-file NIfTI (.hdr/.img) is not supported");
    return h;
}

template <class T>
VolumeT<T> load_impl(const std::string& path) {
    GzFile f(path, "rb");
    const Header h = read_header(f, path);

    int ndim = h.dim[0];
    for (int d = ndim; d >= 4; --d) {
        if (h.dim[d] > 1)
            throw IoError("'" + path + "': expected 3D volume, got " +
                          std::to_string(ndim) + "D payload");
        ndim = d - 1;
    }
    if (ndim != 3)
        throw IoError("'" + path + "': expected 3D volume, got " +
                      std::to_string(h.dim[0]) + "D payload");

    const index_t nx = h.dim[1], ny = h.dim[2], nz = h.dim[3];
    if (nx < 1 || ny < 1 || nz < 1)
        throw IoError("'" + path + "': non-positive dimension");
    for (int d = 1; d <= 3; ++d)
        if (!(h.pixdim[d] > 0.0f))
            throw IoError("'" + path + "': missing geometry (non-positive pixdim)");

    // Skip to the data. vox_offset counts from the start of the file.
    const auto off = static_cast<long>(h.vox_offset);
    if (off < 348) throw IoError("'" + path + "': bad vox_offset");
    {
        std::vector<char> pad(static_cast<std::size_t>(off) - sizeof(Header));
        if (!pad.empty()) f.read_exact(pad.data(), pad.size());
    }

    const index_t n = nx * ny * nz;
    std::size_t elem = 0;
    switch (h.datatype) {
        case DT_UINT8:
        case DT_INT8: elem = 1; break;
        case DT_INT16:
        case DT_UINT16: elem = 2; break;
        case DT_INT32:
        case DT_UINT32:
        case DT_FLOAT32: elem = 4; break;
        case DT_FLOAT64: elem = 8; break;
        default:
            throw IoError("'" + path + "': unsupported datatype code " +
                          std::to_string(h.datatype));
    }
    std::vector<char> raw(static_cast<std::size_t>(n) * elem);
    f.read_exact(raw.data(), raw.size());

    // File order is x-fastest; store as row-major (z, y, x).
    VolumeT<T> vol;
    vol.data = tensor<T>({nz, ny, nx});
    switch (h.datatype) {
        case DT_UINT8: convert<std::uint8_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_INT8: convert<std::int8_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_INT16: convert<std::int16_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_UINT16: convert<std::uint16_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_INT32: convert<std::int32_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_UINT32: convert<std::uint32_t>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_FLOAT32: convert<float>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        case DT_FLOAT64: convert<double>(raw, vol.data, h.scl_slope, h.scl_inter); break;
        default: break;
    }

    const auto m = direction_matrix(h, path);
    AxisCodes codes{};
    for (int d = 0; d < 3; ++d) {
        const int file_axis = 2 - d;  // data axis 0 is file z
        codes[static_cast<std::size_t>(d)] = dominant_axis(
            {m[0][static_cast<std::size_t>(file_axis)],
             m[1][static_cast<std::size_t>(file_axis)],
             m[2][static_cast<std::size_t>(file_axis)]},
            path);
        vol.spacing[static_cast<std::size_t>(d)] =
            static_cast<double>(h.pixdim[file_axis + 1]);
    }
    try {
        validate_codes(codes);
    } catch (const Error&) {
        throw IoError("'" + path + "': ambiguous direction matrix");
    }
    vol.axis_codes = codes;
    return vol;
}

template <class T>
void save_impl(const VolumeT<T>& vol, const std::string& path, std::int16_t dtype) {
    validate_codes(vol.axis_codes);
    Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(vol.data.dim(2));  // x
    h.dim[2] = static_cast<std::int16_t>(vol.data.dim(1));  // y
    h.dim[3] = static_cast<std::int16_t>(vol.data.dim(0));  // z
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.datatype = dtype;
    h.bitpix = dtype == DT_UINT8 ? 8 : 32;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(vol.spacing[2]);
    h.pixdim[2] = static_cast<float>(vol.spacing[1]);
    h.pixdim[3] = static_cast<float>(vol.spacing[0]);
    for (int d = 4; d < 8; ++d) h.pixdim[d] = 1.0f;
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    h.xyzt_units = 2;  // NIFTI_UNITS_MM
    h.sform_code = 1;
    h.qform_code = 0;
    // srow column j = direction of file axis j (= data axis 2-j).
    float* rows[3] = {h.srow_x, h.srow_y, h.srow_z};
    for (int j = 0; j < 3; ++j) {
        const auto d = static_cast<std::size_t>(2 - j);
        const AxisCode& c = vol.axis_codes[d];
        rows[c.axis][j] = static_cast<float>(c.sign) * static_cast<float>(vol.spacing[d]);
    }
    std::memcpy(h.magic, "n+1", 4);

    GzFile f(path, has_gz_suffix(path) ? "wb6" : "wbT");
    f.write_all(&h, sizeof(Header));
    const std::uint32_t pad = 0;  // no extensions
    f.write_all(&pad, 4);
    f.write_all(vol.data.data(), static_cast<std::size_t>(vol.data.size()) * sizeof(T));
}

}  // namespace detail
}  // namespace nifti

// Load a 3D NIfTI-1 file (.nii or .nii.gz); data cast to float, spacing and
// axis codes taken from the header (sform preferred, then qform, else RAS).
inline Volume load_volume(const std::string& path) {
    return nifti::detail::load_impl<float>(path);
}

// Load a binary mask; values must be exactly 0 or 1.
inline LabelVolume load_label_volume(const std::string& path) {
    auto v = nifti::detail::load_impl<float>(path);
    LabelVolume lab;
    lab.data = tensor<std::uint8_t>({v.data.dim(0), v.data.dim(1), v.data.dim(2)});
    lab.spacing = v.spacing;
    lab.axis_codes = v.axis_codes;
    for (index_t i = 0; i < v.data.size(); ++i) {
        const float x = v.data(i);
        if (x != 0.0f && x != 1.0f)
            throw IoError("'" + path + "': mask value " + std::to_string(x) +
                          " is not in {0,1}");
        lab.data(i) = static_cast<std::uint8_t>(x);
    }
    return lab;
}

inline void save_volume(const Volume& vol, const std::string& path) {
    nifti::detail::save_impl(vol, path, nifti::DT_FLOAT32);
}

inline void save_volume(const LabelVolume& vol, const std::string& path) {
    nifti::detail::save_impl(vol, path, nifti::DT_UINT8);
}

}  // namespace triview
