#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "triview/dataset.hpp"
#include "triview/rng.hpp"
#include "triview/volume.hpp"

namespace triview {

// Synthetic head phantom: concentric randomized ellipsoids (brain, a dark
// skull/CSF shell, a bright scalp shell) over a low-intensity background,
// modulated by a smooth multiplicative bias field plus additive Gaussian
// noise. The ground-truth mask is exactly the brain ellipsoid. The two
// contrast modes swap the brain/scalp intensity ordering, mimicking how
// tissue contrast inverts across early development.
struct PhantomSpec {
    index_t size = 64;
    std::uint64_t seed = 0;
    enum class Contrast { newborn_like, older_infant_like };
    Contrast contrast = Contrast::newborn_like;
    double noise_sigma = 0.02;
    double bias_strength = 0.2;

    void validate() const {
        if (size < 8) throw ArgumentError("phantom: size must be >= 8");
        if (noise_sigma < 0.0) throw ArgumentError("phantom: noise_sigma must be >= 0");
        if (bias_strength < 0.0 || bias_strength > 0.9)
            throw ArgumentError("phantom: bias_strength must be in [0, 0.9]");
    }
};

namespace detail {

struct Ellipsoid {
    std::array<double, 3> center;
    std::array<double, 3> semi;
    std::array<std::array<double, 3>, 3> rot;  // world -> ellipsoid frame

    double q(double z, double y, double x) const {
        const double d[3] = {z - center[0], y - center[1], x - center[2]};
        double s = 0.0;
        for (int r = 0; r < 3; ++r) {
            double u = 0.0;
            for (int c = 0; c < 3; ++c)
                u += rot[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * d[c];
            const double a = u / semi[static_cast<std::size_t>(r)];
            s += a * a;
        }
        return s;
    }
};

inline std::array<std::array<double, 3>, 3> rotation_zyx(double a, double b, double c) {
    const double ca = std::cos(a), sa = std::sin(a);
    const double cb = std::cos(b), sb = std::sin(b);
    const double cc = std::cos(c), sc = std::sin(c);
    // R = Rz(a) * Ry(b) * Rx(c)
    return {{{ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc},
             {sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc},
             {-sb, cb * sc, cb * cc}}};
}

}  // namespace detail

inline std::pair<Volume, LabelVolume> make_phantom(const PhantomSpec& spec) {
    spec.validate();
    const auto s = static_cast<double>(spec.size);

    // Geometry and signal use separate streams so the mask depends only on
    // (size, seed), never on contrast mode or noise settings.
    rng_t geom(derive_seed(spec.seed, 1));
    rng_t signal(derive_seed(spec.seed, 2));

    auto uni = [](rng_t& g, double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(g);
    };

    detail::Ellipsoid brain;
    for (int d = 0; d < 3; ++d)
        brain.center[static_cast<std::size_t>(d)] = s / 2.0 + uni(geom, -0.04, 0.04) * s;
    for (int d = 0; d < 3; ++d)
        brain.semi[static_cast<std::size_t>(d)] = uni(geom, 0.18, 0.27) * s;
    brain.rot = detail::rotation_zyx(uni(geom, 0.0, 3.141592653589793),
                                     uni(geom, 0.0, 3.141592653589793),
                                     uni(geom, 0.0, 3.141592653589793));
    const double skull_scale = uni(geom, 1.12, 1.20);
    const double scalp_scale = uni(geom, 1.30, 1.42);

    detail::Ellipsoid skull = brain, scalp = brain;
    for (int d = 0; d < 3; ++d) {
        skull.semi[static_cast<std::size_t>(d)] *= skull_scale;
        scalp.semi[static_cast<std::size_t>(d)] *= scalp_scale;
    }

    // Tissue table; small per-subject jitter keeps the cohort from being a
    // single intensity template. Draw order is fixed so both contrast modes
    // consume the same stream.
    const double jitter_brain = uni(signal, 0.95, 1.05);
    const double jitter_shell = uni(signal, 0.95, 1.05);
    const double jitter_scalp = uni(signal, 0.95, 1.05);
    const bool newborn = spec.contrast == PhantomSpec::Contrast::newborn_like;
    const double brain_i = (newborn ? 0.45 : 0.80) * jitter_brain;
    const double skull_i = 0.10 * jitter_shell;
    const double scalp_i = (newborn ? 0.80 : 0.45) * jitter_scalp;
    const double background_i = 0.02;

    // Smooth multiplicative bias: one low-frequency cosine across the field.
    std::array<double, 3> freq{};
    for (int d = 0; d < 3; ++d)
        freq[static_cast<std::size_t>(d)] =
            uni(signal, -1.0, 1.0) * 2.0 * 3.141592653589793 / s;
    const double phase = uni(signal, 0.0, 2.0 * 3.141592653589793);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);

    Volume vol;
    vol.data = tensor<float>({spec.size, spec.size, spec.size});
    vol.spacing = {1.0, 1.0, 1.0};
    vol.axis_codes = canonical_codes(Orientation::coronal);
    LabelVolume mask;
    mask.data = tensor<std::uint8_t>({spec.size, spec.size, spec.size});
    mask.spacing = vol.spacing;
    mask.axis_codes = vol.axis_codes;

    float* vp = vol.data.data();
    std::uint8_t* mp = mask.data.data();
    for (index_t z = 0; z < spec.size; ++z) {
        for (index_t y = 0; y < spec.size; ++y) {
            for (index_t x = 0; x < spec.size; ++x) {
                const auto zd = static_cast<double>(z);
                const auto yd = static_cast<double>(y);
                const auto xd = static_cast<double>(x);
                double tissue = background_i;
                bool is_brain = false;
                if (brain.q(zd, yd, xd) <= 1.0) {
                    tissue = brain_i;
                    is_brain = true;
                } else if (skull.q(zd, yd, xd) <= 1.0) {
                    tissue = skull_i;
                } else if (scalp.q(zd, yd, xd) <= 1.0) {
                    tissue = scalp_i;
                }
                const double bias =
                    1.0 + spec.bias_strength *
                              std::cos(freq[0] * zd + freq[1] * yd + freq[2] * xd + phase);
                const double v = tissue * bias + noise(signal);
                *vp++ = static_cast<float>(v);
                *mp++ = is_brain ? 1 : 0;
            }
        }
    }
    return {std::move(vol), std::move(mask)};
}

// n phantoms with per-subject geometry seeds, alternating contrast modes.
inline std::vector<Subject> make_cohort(int n, const PhantomSpec& base,
                                        std::uint64_t seed) {
    if (n <= 0) throw ArgumentError("make_cohort: n must be positive");
    base.validate();
    std::vector<Subject> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        PhantomSpec spec = base;
        spec.seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        spec.contrast = i % 2 == 0 ? PhantomSpec::Contrast::newborn_like
                                   : PhantomSpec::Contrast::older_infant_like;
        auto [vol, mask] = make_phantom(spec);
        char id[16];
        std::snprintf(id, sizeof(id), "subj_%02d", i);
        out.push_back({id, std::move(vol), std::move(mask)});
    }
    return out;
}

// <root>/<subject>/{image,mask}.nii.gz
inline void write_cohort(const std::vector<Subject>& subjects, const std::string& root) {
    for (const auto& s : subjects) {
        const auto dir = std::filesystem::path(root) / s.id;
        std::filesystem::create_directories(dir);
        save_volume(s.image, (dir / "image.nii.gz").string());
        if (s.has_mask()) save_volume(s.mask, (dir / "mask.nii.gz").string());
    }
}

}  // namespace triview
