#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "triview/volume.hpp"

namespace triview {

namespace detail {

// Central slice of each orientation with the mask contour burned in red;
// PPM keeps the writer dependency-free.
inline void write_overlay_ppm(const tensor<float>& slice, const tensor<std::uint8_t>& mask,
                              const std::string& path) {
    const index_t h = slice.dim(0), w = slice.dim(1);
    float lo = slice(0), hi = slice(0);
    for (index_t i = 0; i < slice.size(); ++i) {
        lo = std::min(lo, slice(i));
        hi = std::max(hi, slice(i));
    }
    const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;

    auto is_contour = [&](index_t y, index_t x) {
        if (!mask(y, x)) return false;
        if (y == 0 || x == 0 || y == h - 1 || x == w - 1) return true;
        return !mask(y - 1, x) || !mask(y + 1, x) || !mask(y, x - 1) || !mask(y, x + 1);
    };

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write overlay '" + path + "'");
    f << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (index_t y = 0; y < h; ++y) {
        for (index_t x = 0; x < w; ++x) {
            const auto g =
                static_cast<unsigned char>(std::clamp((slice(y, x) - lo) * scale, 0.0f, 255.0f));
            unsigned char* px = row.data() + static_cast<std::size_t>(x) * 3;
            if (is_contour(y, x)) {
                px[0] = 255;
                px[1] = 32;
                px[2] = 32;
            } else {
                px[0] = px[1] = px[2] = g;
            }
        }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
}

}  // namespace detail

// Writes qc_axial.ppm / qc_coronal.ppm / qc_sagittal.ppm under `dir`.
inline void write_qc_overlays(const Volume& image, const LabelVolume& mask,
                              const std::string& dir) {
    if (!same_grid(image, mask)) throw ArgumentError("qc: image/mask geometry mismatch");
    std::filesystem::create_directories(dir);
    for (Orientation r : all_orientations()) {
        const Volume v = reorient(image, r);
        const LabelVolume m = reorient(mask, r);
        const index_t z = v.data.dim(0) / 2;
        tensor<float> slice({v.data.dim(1), v.data.dim(2)});
        tensor<std::uint8_t> mslice({m.data.dim(1), m.data.dim(2)});
        std::copy_n(v.data.data() + z * slice.size(), slice.size(), slice.data());
        std::copy_n(m.data.data() + z * mslice.size(), mslice.size(), mslice.data());
        const auto path =
            std::filesystem::path(dir) / (std::string("qc_") + to_string(r) + ".ppm");
        detail::write_overlay_ppm(slice, mslice, path.string());
    }
}

}  // namespace triview
