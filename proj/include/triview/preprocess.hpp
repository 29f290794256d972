#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "triview/errors.hpp"
#include "triview/volume.hpp"

namespace triview {

inline constexpr std::array<index_t, 3> kConformShape{256, 256, 256};
inline constexpr std::array<double, 3> kConformSpacing{1.0, 1.0, 1.0};

namespace detail {

// Center-aligned grid mapping: output voxel centers and input voxel centers
// share the same physical midpoint, axes kept in the volume's current order.
struct AxisResample {
    double scale;   // output index -> input index
    double offset;
    double map(index_t o) const { return (static_cast<double>(o) - offset) * scale; }
};

inline AxisResample axis_map(index_t in_n, double in_sp, index_t out_n, double out_sp) {
    AxisResample m{};
    m.scale = out_sp / in_sp;
    // Solve (o - (out_n-1)/2) * out_sp = (i - (in_n-1)/2) * in_sp for i,
    // folded into i = (o - offset) * scale with a shifted offset.
    m.offset = (static_cast<double>(out_n) - 1.0) / 2.0 -
               ((static_cast<double>(in_n) - 1.0) / 2.0) * (in_sp / out_sp);
    return m;
}

inline float lerp(float a, float b, float w) { return a + w * (b - a); }

}  // namespace detail

// Resample onto a target grid with trilinear interpolation, zero outside
// the input extent. Aligned identical grids reproduce the input bit-exactly.
inline Volume conform(const Volume& vol,
                      std::array<index_t, 3> target_shape = kConformShape,
                      std::array<double, 3> target_spacing = kConformSpacing) {
    for (int d = 0; d < 3; ++d) {
        if (target_shape[static_cast<std::size_t>(d)] < 1)
            throw ArgumentError("conform: non-positive target shape");
        if (!(target_spacing[static_cast<std::size_t>(d)] > 0.0))
            throw ArgumentError("conform: non-positive target spacing");
    }
    const auto ss = vol.shape();
    std::array<detail::AxisResample, 3> map{};
    for (int d = 0; d < 3; ++d)
        map[static_cast<std::size_t>(d)] = detail::axis_map(
            ss[static_cast<std::size_t>(d)], vol.spacing[static_cast<std::size_t>(d)],
            target_shape[static_cast<std::size_t>(d)],
            target_spacing[static_cast<std::size_t>(d)]);

    Volume out;
    out.data = tensor<float>({target_shape[0], target_shape[1], target_shape[2]});
    out.spacing = target_spacing;
    out.axis_codes = vol.axis_codes;

    const float* src = vol.data.data();
    const index_t s1 = ss[1] * ss[2], s2 = ss[2];
    auto at = [&](index_t i, index_t j, index_t k) -> float {
        if (i < 0 || j < 0 || k < 0 || i >= ss[0] || j >= ss[1] || k >= ss[2])
            return 0.0f;
        return src[i * s1 + j * s2 + k];
    };

    float* dst = out.data.data();
    for (index_t o0 = 0; o0 < target_shape[0]; ++o0) {
        const double p0 = map[0].map(o0);
        const auto f0 = static_cast<index_t>(std::floor(p0));
        const float w0 = static_cast<float>(p0 - static_cast<double>(f0));
        for (index_t o1 = 0; o1 < target_shape[1]; ++o1) {
            const double p1 = map[1].map(o1);
            const auto f1 = static_cast<index_t>(std::floor(p1));
            const float w1 = static_cast<float>(p1 - static_cast<double>(f1));
            for (index_t o2 = 0; o2 < target_shape[2]; ++o2) {
                const double p2 = map[2].map(o2);
                const auto f2 = static_cast<index_t>(std::floor(p2));
                const float w2 = static_cast<float>(p2 - static_cast<double>(f2));
                const float c00 = detail::lerp(at(f0, f1, f2), at(f0, f1, f2 + 1), w2);
                const float c01 = detail::lerp(at(f0, f1 + 1, f2), at(f0, f1 + 1, f2 + 1), w2);
                const float c10 = detail::lerp(at(f0 + 1, f1, f2), at(f0 + 1, f1, f2 + 1), w2);
                const float c11 =
                    detail::lerp(at(f0 + 1, f1 + 1, f2), at(f0 + 1, f1 + 1, f2 + 1), w2);
                *dst++ = detail::lerp(detail::lerp(c00, c01, w1),
                                      detail::lerp(c10, c11, w1), w0);
            }
        }
    }
    return out;
}

// Nearest-neighbor resample; used for labels and for mapping masks back to a
// caller's native grid. Outside the input extent maps to 0.
template <class T>
VolumeT<T> resample_nearest(const VolumeT<T>& vol,
                            std::array<index_t, 3> target_shape,
                            std::array<double, 3> target_spacing) {
    for (int d = 0; d < 3; ++d) {
        if (target_shape[static_cast<std::size_t>(d)] < 1)
            throw ArgumentError("resample: non-positive target shape");
        if (!(target_spacing[static_cast<std::size_t>(d)] > 0.0))
            throw ArgumentError("resample: non-positive target spacing");
    }
    const auto ss = vol.shape();
    std::array<detail::AxisResample, 3> map{};
    for (int d = 0; d < 3; ++d)
        map[static_cast<std::size_t>(d)] = detail::axis_map(
            ss[static_cast<std::size_t>(d)], vol.spacing[static_cast<std::size_t>(d)],
            target_shape[static_cast<std::size_t>(d)],
            target_spacing[static_cast<std::size_t>(d)]);

    VolumeT<T> out;
    out.data = tensor<T>({target_shape[0], target_shape[1], target_shape[2]});
    out.spacing = target_spacing;
    out.axis_codes = vol.axis_codes;

    const T* src = vol.data.data();
    const index_t s1 = ss[1] * ss[2], s2 = ss[2];
    T* dst = out.data.data();
    for (index_t o0 = 0; o0 < target_shape[0]; ++o0) {
        const auto i0 = static_cast<index_t>(std::llround(map[0].map(o0)));
        for (index_t o1 = 0; o1 < target_shape[1]; ++o1) {
            const auto i1 = static_cast<index_t>(std::llround(map[1].map(o1)));
            for (index_t o2 = 0; o2 < target_shape[2]; ++o2) {
                const auto i2 = static_cast<index_t>(std::llround(map[2].map(o2)));
                const bool inside = i0 >= 0 && i1 >= 0 && i2 >= 0 && i0 < ss[0] &&
                                    i1 < ss[1] && i2 < ss[2];
                *dst++ = inside ? src[i0 * s1 + i1 * s2 + i2] : T{};
            }
        }
    }
    return out;
}

inline LabelVolume conform(const LabelVolume& vol,
                           std::array<index_t, 3> target_shape = kConformShape,
                           std::array<double, 3> target_spacing = kConformSpacing) {
    return resample_nearest(vol, target_shape, target_spacing);
}

// Percentile with linear interpolation between order statistics (the
// convention replayed at inference must match training exactly).
inline double percentile(std::vector<float>& values, double p) {
    if (values.empty()) throw ArgumentError("percentile: empty sample");
    const auto n = static_cast<index_t>(values.size());
    if (n == 1) return static_cast<double>(values.front());
    const double rank = (p / 100.0) * static_cast<double>(n - 1);
    auto k = static_cast<index_t>(std::floor(rank));
    k = std::max<index_t>(0, std::min(k, n - 2));
    const double frac = rank - static_cast<double>(k);
    std::nth_element(values.begin(), values.begin() + k, values.end());
    const double vk = static_cast<double>(values[static_cast<std::size_t>(k)]);
    if (frac <= 0.0) return vk;
    const double vk1 = static_cast<double>(
        *std::min_element(values.begin() + k + 1, values.end()));
    return vk + frac * (vk1 - vk);
}

struct NormParams {
    double lo = 0.0;  // intensity mapped to 0 (1st percentile at training)
    double hi = 1.0;  // intensity mapped to 1 (99th percentile)
};

// Same convention used at training assembly and at inference.
struct NormConvention {
    double lo_pct = 1.0;
    double hi_pct = 99.0;
};

inline Volume apply_normalization(const Volume& vol, const NormParams& params) {
    if (!(params.hi > params.lo))
        throw DegenerateInputError("normalize: degenerate percentile window");
    Volume out;
    out.data = tensor<float>({vol.data.dim(0), vol.data.dim(1), vol.data.dim(2)});
    out.spacing = vol.spacing;
    out.axis_codes = vol.axis_codes;
    const auto lo = static_cast<float>(params.lo);
    const auto inv = static_cast<float>(1.0 / (params.hi - params.lo));
    const float* src = vol.data.data();
    float* dst = out.data.data();
    for (index_t i = 0; i < vol.data.size(); ++i)
        dst[i] = std::clamp((src[i] - lo) * inv, 0.0f, 1.0f);
    return out;
}

// Robust per-volume rescale: 1st percentile -> 0, 99th -> 1, clamped.
inline std::pair<Volume, NormParams> normalize_intensity(
    const Volume& vol, const NormConvention& conv = {}) {
    if (vol.data.size() < 2)
        throw DegenerateInputError("normalize: volume has fewer than 2 voxels");
    const float first = vol.data(0);
    bool distinct = false;
    for (index_t i = 1; i < vol.data.size() && !distinct; ++i)
        distinct = vol.data(i) != first;
    if (!distinct)
        throw DegenerateInputError("normalize: constant volume cannot be normalized");

    std::vector<float> sample(vol.data.data(), vol.data.data() + vol.data.size());
    NormParams params;
    params.lo = percentile(sample, conv.lo_pct);
    params.hi = percentile(sample, conv.hi_pct);
    if (!(params.hi > params.lo))
        throw DegenerateInputError(
            "normalize: percentile window is empty (near-constant volume)");
    return {apply_normalization(vol, params), params};
}

}  // namespace triview
