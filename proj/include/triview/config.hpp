#pragma once

#include <fstream>
#include <map>
#include <string>

#include "triview/bundle.hpp"
#include "triview/model.hpp"
#include "triview/preprocess.hpp"
#include "triview/training.hpp"

namespace triview {

using KeyValues = std::map<std::string, std::string>;

// key = value lines; '#' starts a comment; blank lines ignored.
inline KeyValues load_key_values(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file '" + path + "'");
    KeyValues kv;
    std::string line;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("'" + path + "' line " + std::to_string(lineno) +
                              ": expected key=value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

// Everything a run needs; defaults are the cross-validated optimum.
struct RunConfig {
    NetworkConfig net;
    TrainingHyperparams hyper;
    FusionWeights weights;
    NormConvention norm;
    std::array<index_t, 3> conform_shape = kConformShape;
    std::array<double, 3> conform_spacing = kConformSpacing;
};

namespace detail {

inline int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for '" + key + "': '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for '" + key + "': '" + v + "'");
    }
}

}  // namespace detail

inline void apply_key_values(RunConfig& rc, const KeyValues& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "kernel_size") rc.net.kernel_size = detail::to_int(key, value);
        else if (key == "levels") rc.net.levels = detail::to_int(key, value);
        else if (key == "base_filters") rc.net.base_filters = detail::to_int(key, value);
        else if (key == "convs_per_level")
            rc.net.convs_per_level = detail::to_int(key, value);
        else if (key == "labels") rc.net.labels = detail::to_int(key, value);
        else if (key == "batch_size") rc.hyper.batch_size = detail::to_int(key, value);
        else if (key == "learning_rate") rc.hyper.initial_lr = detail::to_double(key, value);
        else if (key == "epochs") rc.hyper.epochs = detail::to_int(key, value);
        else if (key == "slices_per_epoch")
            rc.hyper.slices_per_epoch = detail::to_int(key, value);
        else if (key == "plateau_patience")
            rc.hyper.plateau_patience = detail::to_int(key, value);
        else if (key == "lr_factor") rc.hyper.lr_factor = detail::to_double(key, value);
        else if (key == "seed")
            rc.hyper.seed = static_cast<std::uint64_t>(detail::to_int(key, value));
        else if (key == "weight_axial") rc.weights.axial = detail::to_double(key, value);
        else if (key == "weight_coronal") rc.weights.coronal = detail::to_double(key, value);
        else if (key == "weight_sagittal")
            rc.weights.sagittal = detail::to_double(key, value);
        else if (key == "conform_size") {
            const index_t n = detail::to_int(key, value);
            rc.conform_shape = {n, n, n};
        } else if (key == "conform_spacing") {
            const double sp = detail::to_double(key, value);
            rc.conform_spacing = {sp, sp, sp};
        } else if (key == "norm_lo_pct") rc.norm.lo_pct = detail::to_double(key, value);
        else if (key == "norm_hi_pct") rc.norm.hi_pct = detail::to_double(key, value);
        else
            throw ConfigError("config: unknown key '" + key + "'");
    }
}

inline RunConfig parse_run_config(const std::string& path) {
    RunConfig rc;
    apply_key_values(rc, load_key_values(path));
    return rc;
}

}  // namespace triview
