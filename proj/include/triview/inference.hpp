#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "triview/bundle.hpp"
#include "triview/model.hpp"
#include "triview/preprocess.hpp"
#include "triview/volume.hpp"

namespace triview {

// Run one orientation's network over every slice of the (conformed,
// normalized) volume and stack the per-slice class probabilities into a
// probability volume in that orientation's canonical layout.
inline ProbabilityVolume predict_view(const TrainedNet& tn, const Volume& vol,
                                      Orientation r, Workspace<float>& ws,
                                      int batch_size = 8) {
    if (tn.meta.view != r)
        throw ArgumentError(std::string("predict_view: checkpoint is for ") +
                            to_string(tn.meta.view) + ", requested " + to_string(r));
    if (batch_size < 1) throw ArgumentError("predict_view: bad batch size");
    if (tn.net.train_mode())
        throw ArgumentError("predict_view: network must be in inference mode");

    const Volume v = reorient(vol, r);
    const index_t n = v.data.dim(0), h = v.data.dim(1), w = v.data.dim(2);
    const index_t labels = tn.meta.cfg.labels;

    ProbabilityVolume out;
    out.data = tensor<float>({n, h, w, labels});
    out.spacing = v.spacing;
    out.axis_codes = v.axis_codes;

    tensor<float> x;
    for (index_t z0 = 0; z0 < n; z0 += batch_size) {
        const index_t z1 = std::min(n, z0 + batch_size);
        const index_t b = z1 - z0;
        x = tensor<float>({b, 1, h, w});
        std::copy_n(v.data.data() + z0 * h * w, b * h * w, x.data());
        const tensor<float> probs = tn.net.forward(x, ws);
        for (index_t s = 0; s < b; ++s) {
            float* dst = out.data.data() + (z0 + s) * h * w * labels;
            const float* src = probs.data() + s * labels * h * w;
            for (index_t i = 0; i < h * w; ++i)
                for (index_t c = 0; c < labels; ++c) dst[i * labels + c] = src[c * h * w + i];
        }
    }
    return out;
}

// Voxelwise convex combination of the three per-view probability volumes,
// all already in the coronal frame. Operates on every channel, so the
// output remains a valid probability volume.
template <class T>
ProbabilityVolumeT<T> fuse(const ProbabilityVolumeT<T>& p_ax,
                           const ProbabilityVolumeT<T>& p_cor,
                           const ProbabilityVolumeT<T>& p_sag,
                           const FusionWeights& w = {}) {
    w.validate();
    if (!same_grid(p_ax, p_cor) || !same_grid(p_ax, p_sag) ||
        p_ax.channels() != p_cor.channels() || p_ax.channels() != p_sag.channels())
        throw ArgumentError("fuse: probability volumes disagree on geometry");
    if (p_ax.orientation() != Orientation::coronal)
        throw ArgumentError("fuse: inputs must be reoriented to the coronal frame");

    ProbabilityVolumeT<T> out;
    out.data = tensor<T>(p_ax.data.shape());
    out.spacing = p_ax.spacing;
    out.axis_codes = p_ax.axis_codes;
    const auto wa = static_cast<T>(w.axial);
    const auto wc = static_cast<T>(w.coronal);
    const auto ws = static_cast<T>(w.sagittal);
    const T* a = p_ax.data.data();
    const T* c = p_cor.data.data();
    const T* s = p_sag.data.data();
    T* o = out.data.data();
    for (index_t i = 0; i < out.data.size(); ++i) o[i] = wa * a[i] + wc * c[i] + ws * s[i];
    return out;
}

// Per-voxel argmax over channels; exact ties resolve to the background
// class (conservative masks).
template <class T>
LabelVolume binarize(const ProbabilityVolumeT<T>& p) {
    LabelVolume out;
    out.data = tensor<std::uint8_t>({p.data.dim(0), p.data.dim(1), p.data.dim(2)});
    out.spacing = p.spacing;
    out.axis_codes = p.axis_codes;
    const index_t c = p.channels();
    const T* src = p.data.data();
    std::uint8_t* dst = out.data.data();
    const index_t n = out.data.size();
    for (index_t i = 0; i < n; ++i) {
        const T* row = src + i * c;
        int best = 0;
        for (index_t k = 1; k < c; ++k)
            if (row[k] > row[best]) best = static_cast<int>(k);
        dst[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

struct ComponentResult {
    LabelVolume mask;
    bool empty_warning = false;  // input had no foreground at all
};

// Keep only the largest foreground component; ties broken by the smallest
// component-seed linear index (components are discovered in scan order, so
// the first one found among equals wins).
inline ComponentResult largest_component(const LabelVolume& mask, int connectivity = 26) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw ArgumentError("largest_component: connectivity must be 6, 18 or 26");

    const index_t s0 = mask.data.dim(0), s1 = mask.data.dim(1), s2 = mask.data.dim(2);
    const index_t n = mask.data.size();
    const std::uint8_t* src = mask.data.data();

    std::vector<std::array<int, 3>> offs;
    const int max_manhattan = connectivity == 6 ? 1 : connectivity == 18 ? 2 : 3;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int m = std::abs(dz) + std::abs(dy) + std::abs(dx);
                if (m >= 1 && m <= max_manhattan) offs.push_back({dz, dy, dx});
            }

    ComponentResult result;
    result.mask.data = tensor<std::uint8_t>({s0, s1, s2});
    result.mask.spacing = mask.spacing;
    result.mask.axis_codes = mask.axis_codes;

    std::vector<std::int32_t> comp(static_cast<std::size_t>(n), 0);
    std::vector<index_t> stack;
    std::int32_t n_comp = 0;
    index_t best_size = 0;
    std::int32_t best_comp = 0;

    for (index_t seed = 0; seed < n; ++seed) {
        if (src[seed] == 0 || comp[static_cast<std::size_t>(seed)] != 0) continue;
        ++n_comp;
        index_t size = 0;
        stack.assign(1, seed);
        comp[static_cast<std::size_t>(seed)] = n_comp;
        while (!stack.empty()) {
            const index_t cur = stack.back();
            stack.pop_back();
            ++size;
            const index_t z = cur / (s1 * s2);
            const index_t y = (cur / s2) % s1;
            const index_t x = cur % s2;
            for (const auto& d : offs) {
                const index_t nz = z + d[0], ny = y + d[1], nx = x + d[2];
                if (nz < 0 || ny < 0 || nx < 0 || nz >= s0 || ny >= s1 || nx >= s2)
                    continue;
                const index_t ni = (nz * s1 + ny) * s2 + nx;
                if (src[ni] == 0 || comp[static_cast<std::size_t>(ni)] != 0) continue;
                comp[static_cast<std::size_t>(ni)] = n_comp;
                stack.push_back(ni);
            }
        }
        if (size > best_size) {  // strict: earlier seed wins ties
            best_size = size;
            best_comp = n_comp;
        }
    }

    if (n_comp == 0) {
        result.empty_warning = true;
        return result;
    }
    std::uint8_t* dst = result.mask.data.data();
    for (index_t i = 0; i < n; ++i)
        dst[i] = comp[static_cast<std::size_t>(i)] == best_comp ? 1 : 0;
    return result;
}

struct StripOptions {
    int batch_size = 8;
    int connectivity = 26;
    bool mask_on_native_grid = true;
};

struct StripResult {
    LabelVolume mask;            // native grid unless mask_on_native_grid=false
    LabelVolume mask_conformed;  // conformed grid, coronal frame
    ProbabilityVolume fused;     // conformed grid, coronal frame (QC output)
    bool empty_mask_warning = false;
};

// The full prediction workflow: conform -> normalize -> per-view slice
// prediction -> reorient to coronal -> weighted fusion -> argmax ->
// largest connected component -> back to the caller's native grid.
inline StripResult skullstrip(const ModelBundle& bundle, const Volume& raw,
                              const StripOptions& opts = {}) {
    bundle.validate();
    const Volume conformed = conform(raw, bundle.conform_shape, bundle.conform_spacing);
    const Volume normalized = normalize_intensity(conformed, bundle.norm).first;

    Workspace<float> ws;
    std::array<ProbabilityVolume, 3> views;
    for (Orientation r : all_orientations()) {
        ProbabilityVolume p =
            predict_view(bundle.net(r), normalized, r, ws, opts.batch_size);
        views[static_cast<std::size_t>(r)] = reorient(p, Orientation::coronal);
    }

    StripResult out;
    out.fused = fuse(views[static_cast<std::size_t>(Orientation::axial)],
                     views[static_cast<std::size_t>(Orientation::coronal)],
                     views[static_cast<std::size_t>(Orientation::sagittal)],
                     bundle.weights);
    ComponentResult cc = largest_component(binarize(out.fused), opts.connectivity);
    out.empty_mask_warning = cc.empty_warning;
    out.mask_conformed = cc.mask;

    if (!opts.mask_on_native_grid) {
        out.mask = std::move(cc.mask);
        return out;
    }
    // Undo the coronal reorientation, then the conform resample.
    LabelVolume native_layout = reorient_to(cc.mask, raw.axis_codes);
    out.mask = resample_nearest(native_layout, raw.shape(), raw.spacing);
    bool any = false;
    for (index_t i = 0; i < out.mask.data.size() && !any; ++i)
        any = out.mask.data(i) != 0;
    if (!any) out.empty_mask_warning = true;
    return out;
}

}  // namespace triview
