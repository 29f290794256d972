#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "triview/errors.hpp"
#include "triview/tensor.hpp"

namespace triview {

// Canonical anatomical frame: axis 0 = left->right (R), axis 1 =
// posterior->anterior (A), axis 2 = inferior->superior (S). Every volume
// carries a signed permutation (axis_codes) mapping its data axes onto
// this frame.
//
// Slices are always read along data axis 0. The canonical memory layout
// per orientation (all positive direction) is:
//   sagittal: (R, S, A)   coronal: (A, S, R)   axial: (S, A, R)
// so a slice is a contiguous (dim1, dim2) plane.
enum class Orientation { axial = 0, coronal = 1, sagittal = 2 };

inline const char* to_string(Orientation r) {
    switch (r) {
        case Orientation::axial: return "axial";
        case Orientation::coronal: return "coronal";
        case Orientation::sagittal: return "sagittal";
    }
    return "?";
}

inline Orientation orientation_from_string(const std::string& s) {
    if (s == "axial") return Orientation::axial;
    if (s == "coronal") return Orientation::coronal;
    if (s == "sagittal") return Orientation::sagittal;
    throw ArgumentError("unknown orientation '" + s + "'");
}

constexpr std::array<Orientation, 3> all_orientations() {
    return {Orientation::axial, Orientation::coronal, Orientation::sagittal};
}

struct AxisCode {
    int axis = 0;  // canonical axis 0..2
    int sign = 1;  // +1 or -1
    bool operator==(const AxisCode&) const = default;
};

using AxisCodes = std::array<AxisCode, 3>;

inline void validate_codes(const AxisCodes& codes) {
    std::array<int, 3> seen{0, 0, 0};
    for (const auto& c : codes) {
        if (c.axis < 0 || c.axis > 2 || (c.sign != 1 && c.sign != -1))
            throw ArgumentError("axis_codes: not a signed permutation");
        seen[static_cast<std::size_t>(c.axis)]++;
    }
    if (seen[0] != 1 || seen[1] != 1 || seen[2] != 1)
        throw ArgumentError("axis_codes: not a signed permutation");
}

inline AxisCodes canonical_codes(Orientation r) {
    switch (r) {
        case Orientation::sagittal: return {{{0, 1}, {2, 1}, {1, 1}}};
        case Orientation::coronal: return {{{1, 1}, {2, 1}, {0, 1}}};
        case Orientation::axial: return {{{2, 1}, {1, 1}, {0, 1}}};
    }
    throw ArgumentError("bad orientation");
}

// Slicing convention is determined by what data axis 0 runs along.
inline Orientation orientation_of(const AxisCodes& codes) {
    switch (codes[0].axis) {
        case 0: return Orientation::sagittal;
        case 1: return Orientation::coronal;
        case 2: return Orientation::axial;
    }
    throw ArgumentError("bad axis code");
}

template <class T>
struct VolumeT {
    tensor<T> data;  // (s0, s1, s2), row major
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    AxisCodes axis_codes = canonical_codes(Orientation::coronal);

    Orientation orientation() const { return orientation_of(axis_codes); }
    std::array<index_t, 3> shape() const {
        return {data.dim(0), data.dim(1), data.dim(2)};
    }
};

using Volume = VolumeT<float>;
using LabelVolume = VolumeT<std::uint8_t>;

template <class T>
struct ProbabilityVolumeT {
    tensor<T> data;  // (s0, s1, s2, channels)
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    AxisCodes axis_codes = canonical_codes(Orientation::coronal);

    Orientation orientation() const { return orientation_of(axis_codes); }
    index_t channels() const { return data.dim(3); }
    std::array<index_t, 3> shape() const {
        return {data.dim(0), data.dim(1), data.dim(2)};
    }
};

using ProbabilityVolume = ProbabilityVolumeT<float>;

template <class A, class B>
bool same_grid(const A& a, const B& b) {
    return a.shape() == b.shape() && a.spacing == b.spacing &&
           a.axis_codes == b.axis_codes;
}

namespace detail {

struct AxisMap {
    std::array<int, 3> src_axis;  // out axis d reads from src axis src_axis[d]
    std::array<bool, 3> flip;
};

inline AxisMap make_axis_map(const AxisCodes& src, const AxisCodes& dst) {
    validate_codes(src);
    validate_codes(dst);
    AxisMap m{};
    for (int d = 0; d < 3; ++d) {
        int found = -1;
        for (int s = 0; s < 3; ++s)
            if (src[static_cast<std::size_t>(s)].axis == dst[static_cast<std::size_t>(d)].axis)
                found = s;
        m.src_axis[static_cast<std::size_t>(d)] = found;
        m.flip[static_cast<std::size_t>(d)] =
            src[static_cast<std::size_t>(found)].sign != dst[static_cast<std::size_t>(d)].sign;
    }
    return m;
}

// Pure index shuffle: exactly invertible, never touches sample values.
template <class T>
tensor<T> permute_grid(const tensor<T>& in, const AxisMap& m, index_t elem) {
    const std::array<index_t, 3> ss{in.dim(0), in.dim(1), in.dim(2)};
    const std::array<index_t, 3> st{in.dim(1) * in.dim(2), in.dim(2), 1};

    std::array<index_t, 3> os{}, coef{};
    index_t base = 0;
    for (int d = 0; d < 3; ++d) {
        const auto s = static_cast<std::size_t>(m.src_axis[static_cast<std::size_t>(d)]);
        os[static_cast<std::size_t>(d)] = ss[s];
        if (m.flip[static_cast<std::size_t>(d)]) {
            coef[static_cast<std::size_t>(d)] = -st[s];
            base += st[s] * (ss[s] - 1);
        } else {
            coef[static_cast<std::size_t>(d)] = st[s];
        }
    }

    std::vector<index_t> out_shape{os[0], os[1], os[2]};
    if (elem > 1) out_shape.push_back(elem);
    tensor<T> out(out_shape);
    T* op = out.data();
    const T* ip = in.data();
    for (index_t i0 = 0; i0 < os[0]; ++i0) {
        const index_t b0 = base + coef[0] * i0;
        for (index_t i1 = 0; i1 < os[1]; ++i1) {
            const index_t b1 = b0 + coef[1] * i1;
            for (index_t i2 = 0; i2 < os[2]; ++i2) {
                const T* src = ip + (b1 + coef[2] * i2) * elem;
                for (index_t c = 0; c < elem; ++c) *op++ = src[c];
            }
        }
    }
    return out;
}

template <class V>
void permute_metadata(const V& in, const AxisMap& m, const AxisCodes& dst, V& out) {
    for (int d = 0; d < 3; ++d)
        out.spacing[static_cast<std::size_t>(d)] =
            in.spacing[static_cast<std::size_t>(m.src_axis[static_cast<std::size_t>(d)])];
    out.axis_codes = dst;
}

}  // namespace detail

// Reorder a volume's grid onto an arbitrary target axis-code layout.
// Signed permutation only; bit-exact and exactly invertible.
template <class T>
VolumeT<T> reorient_to(const VolumeT<T>& vol, const AxisCodes& target) {
    const auto m = detail::make_axis_map(vol.axis_codes, target);
    VolumeT<T> out;
    out.data = detail::permute_grid(vol.data, m, 1);
    detail::permute_metadata(vol, m, target, out);
    return out;
}

// Reorient into the canonical memory layout of orientation `target`.
template <class T>
VolumeT<T> reorient(const VolumeT<T>& vol, Orientation target) {
    return reorient_to(vol, canonical_codes(target));
}

template <class T>
ProbabilityVolumeT<T> reorient(const ProbabilityVolumeT<T>& vol, Orientation target) {
    const auto dst = canonical_codes(target);
    const auto m = detail::make_axis_map(vol.axis_codes, dst);
    ProbabilityVolumeT<T> out;
    out.data = detail::permute_grid(vol.data, m, vol.channels());
    detail::permute_metadata(vol, m, dst, out);
    return out;
}

struct SlicePair {
    tensor<float> image;                        // (H, W)
    std::optional<tensor<std::uint8_t>> label;  // (H, W), values {0,1}
    Orientation orientation = Orientation::coronal;
    index_t index = 0;
    std::string subject_id;
};

// One SlicePair per index along r's slicing axis, in order. The volume is
// first brought into r's canonical layout, so slice z is exactly the plane
// data[z,:,:] of reorient(vol, r).
inline std::vector<SlicePair> extract_slices(const Volume& vol,
                                             const LabelVolume* label,
                                             Orientation r,
                                             const std::string& subject_id = {}) {
    if (label && !same_grid(vol, *label))
        throw ArgumentError("extract_slices: volume/label geometry mismatch");

    const Volume v = reorient(vol, r);
    std::optional<LabelVolume> lab;
    if (label) lab = reorient(*label, r);

    const index_t n = v.data.dim(0), h = v.data.dim(1), w = v.data.dim(2);
    std::vector<SlicePair> out;
    out.reserve(static_cast<std::size_t>(n));
    for (index_t z = 0; z < n; ++z) {
        SlicePair p;
        p.image = tensor<float>({h, w});
        std::copy_n(v.data.data() + z * h * w, h * w, p.image.data());
        if (lab) {
            p.label = tensor<std::uint8_t>({h, w});
            std::copy_n(lab->data.data() + z * h * w, h * w, p.label->data());
        }
        p.orientation = r;
        p.index = z;
        p.subject_id = subject_id;
        out.push_back(std::move(p));
    }
    return out;
}

// Inverse of extract_slices on the image channel: stacking along axis 0
// reproduces the reoriented grid.
inline tensor<float> stack_slices(const std::vector<SlicePair>& slices) {
    if (slices.empty()) throw ArgumentError("stack_slices: empty slice list");
    const index_t h = slices.front().image.dim(0);
    const index_t w = slices.front().image.dim(1);
    tensor<float> out({static_cast<index_t>(slices.size()), h, w});
    for (std::size_t z = 0; z < slices.size(); ++z) {
        const auto& img = slices[z].image;
        if (img.dim(0) != h || img.dim(1) != w)
            throw ArgumentError("stack_slices: inconsistent slice shapes");
        std::copy_n(img.data(), h * w, out.data() + static_cast<index_t>(z) * h * w);
    }
    return out;
}

}  // namespace triview
