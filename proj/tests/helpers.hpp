#pragma once

#include <catch_amalgamated.hpp>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "triview/rng.hpp"
#include "triview/volume.hpp"

namespace test {

inline triview::Volume random_volume(triview::rng_t& rng,
                                     std::array<triview::index_t, 3> shape,
                                     std::array<double, 3> spacing = {1, 1, 1},
                                     triview::Orientation layout =
                                         triview::Orientation::coronal) {
    triview::Volume v;
    v.data = triview::tensor<float>({shape[0], shape[1], shape[2]});
    v.spacing = spacing;
    v.axis_codes = triview::canonical_codes(layout);
    std::uniform_real_distribution<float> dist(0.0f, 1.0f);
    for (triview::index_t i = 0; i < v.data.size(); ++i) v.data(i) = dist(rng);
    return v;
}

inline triview::LabelVolume random_mask(triview::rng_t& rng,
                                        std::array<triview::index_t, 3> shape,
                                        double fg_prob = 0.3) {
    triview::LabelVolume m;
    m.data = triview::tensor<std::uint8_t>({shape[0], shape[1], shape[2]});
    m.spacing = {1, 1, 1};
    m.axis_codes = triview::canonical_codes(triview::Orientation::coronal);
    std::bernoulli_distribution dist(fg_prob);
    for (triview::index_t i = 0; i < m.data.size(); ++i) m.data(i) = dist(rng) ? 1 : 0;
    return m;
}

// Unique scratch directory removed on scope exit.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("triview_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string str(const std::string& name = {}) const {
        return name.empty() ? path.string() : (path / name).string();
    }
};

}  // namespace test
