#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "triview/checkpoint.hpp"
#include "triview/preprocess.hpp"
#include "triview/training.hpp"
#include "triview/volume.hpp"

namespace triview {

// Eq-style convex weights for the three per-view probability volumes.
// Defaults are the cross-validated optimum.
struct FusionWeights {
    double axial = 0.44;
    double coronal = 0.33;
    double sagittal = 0.23;

    double at(Orientation r) const {
        switch (r) {
            case Orientation::axial: return axial;
            case Orientation::coronal: return coronal;
            case Orientation::sagittal: return sagittal;
        }
        throw ArgumentError("bad orientation");
    }

    void validate() const {
        if (axial < 0.0 || coronal < 0.0 || sagittal < 0.0)
            throw ArgumentError("fusion weights must be non-negative");
        const double sum = axial + coronal + sagittal;
        if (std::abs(sum - 1.0) > 1e-9)
            throw ArgumentError("fusion weights must sum to 1 (got " +
                                std::to_string(sum) + ")");
    }
};

// Three trained networks (one per orientation) plus everything inference
// needs to reproduce the training-time conventions.
struct ModelBundle {
    std::array<TrainedNet, 3> nets;  // indexed by Orientation
    FusionWeights weights;
    NormConvention norm;
    std::array<index_t, 3> conform_shape = kConformShape;
    std::array<double, 3> conform_spacing = kConformSpacing;

    TrainedNet& net(Orientation r) { return nets[static_cast<std::size_t>(r)]; }
    const TrainedNet& net(Orientation r) const {
        return nets[static_cast<std::size_t>(r)];
    }

    void validate() const {
        weights.validate();
        for (Orientation r : all_orientations()) {
            const auto& tn = net(r);
            if (tn.meta.view != r)
                throw ArgumentError(std::string("bundle: slot ") + to_string(r) +
                                    " holds a " + to_string(tn.meta.view) + " network");
            if (tn.meta.cfg.labels != net(Orientation::axial).meta.cfg.labels)
                throw ArgumentError("bundle: networks disagree on label count");
        }
    }
};

namespace detail {

inline std::string checkpoint_name(Orientation r) {
    return std::string(to_string(r)) + ".ckpt";
}

}  // namespace detail

inline void save_bundle_manifest(const ModelBundle& bundle, const std::string& dir) {
    nlohmann::json j;
    j["format"] = 1;
    for (Orientation r : all_orientations())
        j["checkpoints"][to_string(r)] = detail::checkpoint_name(r);
    j["fusion_weights"] = {{"axial", bundle.weights.axial},
                           {"coronal", bundle.weights.coronal},
                           {"sagittal", bundle.weights.sagittal}};
    j["conform_shape"] = bundle.conform_shape;
    j["conform_spacing"] = bundle.conform_spacing;
    j["normalization"] = {{"lo_pct", bundle.norm.lo_pct}, {"hi_pct", bundle.norm.hi_pct}};
    std::ofstream f(std::filesystem::path(dir) / "manifest.json");
    if (!f) throw IoError("cannot write bundle manifest in '" + dir + "'");
    f << j.dump(2) << "\n";
}

inline ModelBundle load_bundle(const std::string& dir) {
    const auto manifest_path = std::filesystem::path(dir) / "manifest.json";
    std::ifstream f(manifest_path);
    if (!f) throw IoError("cannot open bundle manifest '" + manifest_path.string() + "'");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad bundle manifest '" + manifest_path.string() + "': " + e.what());
    }

    ModelBundle bundle;
    try {
        if (j.at("format").get<int>() != 1)
            throw IoError("unsupported bundle manifest format");
        for (Orientation r : all_orientations()) {
            const std::string name = j.at("checkpoints").at(to_string(r)).get<std::string>();
            bundle.net(r) = load_checkpoint((std::filesystem::path(dir) / name).string());
        }
        const auto& w = j.at("fusion_weights");
        bundle.weights.axial = w.at("axial").get<double>();
        bundle.weights.coronal = w.at("coronal").get<double>();
        bundle.weights.sagittal = w.at("sagittal").get<double>();
        const auto shape = j.at("conform_shape").get<std::vector<index_t>>();
        const auto spacing = j.at("conform_spacing").get<std::vector<double>>();
        if (shape.size() != 3 || spacing.size() != 3)
            throw IoError("bundle manifest: conform grid must be 3D");
        std::copy(shape.begin(), shape.end(), bundle.conform_shape.begin());
        std::copy(spacing.begin(), spacing.end(), bundle.conform_spacing.begin());
        bundle.norm.lo_pct = j.at("normalization").at("lo_pct").get<double>();
        bundle.norm.hi_pct = j.at("normalization").at("hi_pct").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad bundle manifest '" + manifest_path.string() + "': " + e.what());
    }
    bundle.validate();
    return bundle;
}

struct TrainAllResult {
    ModelBundle bundle;
    std::array<TrainState, 3> states;  // indexed by Orientation
};

// Train the three orientation networks independently (separate seeds derived
// from hyper.seed) on a mixed-orientation slice pool, then assemble and
// persist the bundle under `dir`.
inline TrainAllResult train_all(const std::vector<SlicePair>& train_set,
                                const std::vector<SlicePair>& val_set,
                                const NetworkConfig& cfg,
                                const TrainingHyperparams& hyper,
                                const std::string& dir,
                                const FusionWeights& weights = {},
                                const NormConvention& norm = {},
                                std::array<index_t, 3> conform_shape = kConformShape,
                                std::array<double, 3> conform_spacing = kConformSpacing,
                                std::ostream* progress = nullptr) {
    weights.validate();
    std::array<std::vector<SlicePair>, 3> train_by, val_by;
    for (const auto& s : train_set)
        train_by[static_cast<std::size_t>(s.orientation)].push_back(s);
    for (const auto& s : val_set)
        val_by[static_cast<std::size_t>(s.orientation)].push_back(s);
    for (Orientation r : all_orientations()) {
        if (train_by[static_cast<std::size_t>(r)].empty())
            throw ArgumentError(std::string("train_all: no training slices for ") +
                                to_string(r));
        if (val_by[static_cast<std::size_t>(r)].empty())
            throw ArgumentError(std::string("train_all: no validation slices for ") +
                                to_string(r));
    }

    std::filesystem::create_directories(dir);
    TrainAllResult out;
    for (Orientation r : all_orientations()) {
        const auto i = static_cast<std::size_t>(r);
        const auto ckpt = (std::filesystem::path(dir) / detail::checkpoint_name(r)).string();
        const auto log =
            (std::filesystem::path(dir) / (std::string("train_") + to_string(r) + ".tsv"))
                .string();
        auto res = train_network(train_by[i], val_by[i], cfg, hyper, r, ckpt, norm, log,
                                 progress);
        out.states[i] = res.state;
        out.bundle.net(r) = load_checkpoint(ckpt);
    }
    out.bundle.weights = weights;
    out.bundle.norm = norm;
    out.bundle.conform_shape = conform_shape;
    out.bundle.conform_spacing = conform_spacing;
    save_bundle_manifest(out.bundle, dir);
    out.bundle.validate();
    return out;
}

}  // namespace triview
