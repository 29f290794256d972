#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "triview/nifti.hpp"
#include "triview/preprocess.hpp"
#include "triview/volume.hpp"

namespace triview {

struct Subject {
    std::string id;
    Volume image;
    LabelVolume mask;  // empty data when unlabeled
    bool has_mask() const { return mask.data.size() > 0; }
};

namespace detail {

inline std::string find_nifti(const std::filesystem::path& dir, const std::string& stem) {
    for (const char* ext : {".nii.gz", ".nii"}) {
        const auto p = dir / (stem + ext);
        if (std::filesystem::exists(p)) return p.string();
    }
    return {};
}

}  // namespace detail

// Dataset directory layout: <root>/<subject>/image.nii[.gz] plus
// mask.nii[.gz] when labeled. Subjects come back sorted by name.
inline std::vector<Subject> load_cohort(const std::string& root, bool require_masks = true) {
    const std::filesystem::path rootp(root);
    if (!std::filesystem::is_directory(rootp))
        throw IoError("dataset root '" + root + "' is not a directory");

    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(rootp))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw IoError("dataset root '" + root + "' has no subject directories");

    std::vector<Subject> subjects;
    for (const auto& id : ids) {
        const auto dir = rootp / id;
        const std::string image_path = detail::find_nifti(dir, "image");
        if (image_path.empty())
            throw IoError("subject '" + id + "': missing image.nii[.gz]");
        Subject s;
        s.id = id;
        s.image = load_volume(image_path);
        const std::string mask_path = detail::find_nifti(dir, "mask");
        if (mask_path.empty()) {
            if (require_masks) throw IoError("subject '" + id + "': missing mask.nii[.gz]");
        } else {
            s.mask = load_label_volume(mask_path);
            if (!same_grid(s.image, s.mask))
                throw IoError("subject '" + id + "': image/mask geometry mismatch");
        }
        subjects.push_back(std::move(s));
    }
    return subjects;
}

// Conform + normalize one subject and cut it into labeled slices for all
// three orientations.
inline std::vector<SlicePair> subject_slices(
    const Subject& subject, std::array<index_t, 3> conform_shape = kConformShape,
    std::array<double, 3> conform_spacing = kConformSpacing,
    const NormConvention& norm = {}) {
    if (!subject.has_mask())
        throw ArgumentError("subject '" + subject.id + "' has no mask");
    const Volume image =
        normalize_intensity(conform(subject.image, conform_shape, conform_spacing), norm)
            .first;
    const LabelVolume mask = conform(subject.mask, conform_shape, conform_spacing);
    std::vector<SlicePair> out;
    for (Orientation r : all_orientations()) {
        auto slices = extract_slices(image, &mask, r, subject.id);
        out.insert(out.end(), std::make_move_iterator(slices.begin()),
                   std::make_move_iterator(slices.end()));
    }
    return out;
}

inline std::vector<SlicePair> collect_slices(
    const std::vector<Subject>& subjects,
    std::array<index_t, 3> conform_shape = kConformShape,
    std::array<double, 3> conform_spacing = kConformSpacing,
    const NormConvention& norm = {}) {
    std::vector<SlicePair> out;
    for (const auto& s : subjects) {
        auto slices = subject_slices(s, conform_shape, conform_spacing, norm);
        out.insert(out.end(), std::make_move_iterator(slices.begin()),
                   std::make_move_iterator(slices.end()));
    }
    return out;
}

}  // namespace triview
