#include <catch_amalgamated.hpp>

#include <algorithm>

#include "helpers.hpp"
#include "triview/inference.hpp"
#include "triview/phantom.hpp"
#include "triview/preprocess.hpp"

using namespace triview;

TEST_CASE("phantom generation is bit-deterministic per seed", "[phantom]") {
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 99;
    auto [v1, m1] = make_phantom(spec);
    auto [v2, m2] = make_phantom(spec);
    REQUIRE(v1.data == v2.data);
    REQUIRE(m1.data == m2.data);

    spec.seed = 100;
    auto [v3, m3] = make_phantom(spec);
    REQUIRE_FALSE(v3.data == v1.data);
}

TEST_CASE("the ground-truth mask is one connected component strictly inside the "
          "volume",
          "[phantom]") {
    for (std::uint64_t seed : {0ULL, 5ULL, 13ULL}) {
        PhantomSpec spec;
        spec.size = 32;
        spec.seed = seed;
        auto [vol, mask] = make_phantom(spec);

        index_t fg = 0;
        for (index_t i = 0; i < mask.data.size(); ++i) fg += mask.data(i);
        REQUIRE(fg > 0);

        // Strictly inside: no foreground on any face.
        const index_t n = spec.size;
        for (index_t a = 0; a < n; ++a)
            for (index_t b = 0; b < n; ++b) {
                REQUIRE(mask.data(0, a, b) == 0);
                REQUIRE(mask.data(n - 1, a, b) == 0);
                REQUIRE(mask.data(a, 0, b) == 0);
                REQUIRE(mask.data(a, n - 1, b) == 0);
                REQUIRE(mask.data(a, b, 0) == 0);
                REQUIRE(mask.data(a, b, n - 1) == 0);
            }

        // The mask equals its own largest component.
        const auto cc = largest_component(mask, 26);
        REQUIRE(cc.mask.data == mask.data);
    }
}

TEST_CASE("contrast modes share geometry but swap the brain/scalp ordering",
          "[phantom]") {
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 7;
    spec.contrast = PhantomSpec::Contrast::newborn_like;
    auto [newborn, mask_a] = make_phantom(spec);
    spec.contrast = PhantomSpec::Contrast::older_infant_like;
    auto [older, mask_b] = make_phantom(spec);

    REQUIRE(mask_a.data == mask_b.data);
    REQUIRE_FALSE(newborn.data == older.data);

    auto stats = [&](const Volume& v, const LabelVolume& m) {
        double inside = 0;
        index_t n_in = 0;
        std::vector<float> outside;
        for (index_t i = 0; i < v.data.size(); ++i) {
            if (m.data(i)) {
                inside += v.data(i);
                ++n_in;
            } else {
                outside.push_back(v.data(i));
            }
        }
        const double mean_in = inside / static_cast<double>(n_in);
        const double p99_out = percentile(outside, 99.0);
        return std::pair{mean_in, p99_out};
    };
    const auto [nb_in, nb_out] = stats(newborn, mask_a);
    const auto [old_in, old_out] = stats(older, mask_b);
    REQUIRE(nb_in < nb_out);   // newborn-like: scalp brighter than brain
    REQUIRE(old_in > old_out); // older-infant-like: brain brighter than scalp
}

TEST_CASE("cohorts are reproducible, diverse in mask volume and span both modes",
          "[phantom]") {
    PhantomSpec base;
    base.size = 24;
    const auto cohort = make_cohort(8, base, 11);
    const auto again = make_cohort(8, base, 11);
    REQUIRE(cohort.size() == 8);
    std::vector<double> volumes;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        REQUIRE(cohort[i].id == again[i].id);
        REQUIRE(cohort[i].image.data == again[i].image.data);
        REQUIRE(cohort[i].mask.data == again[i].mask.data);
        index_t fg = 0;
        for (index_t v = 0; v < cohort[i].mask.data.size(); ++v)
            fg += cohort[i].mask.data(v);
        volumes.push_back(static_cast<double>(fg));
    }
    const auto [mn, mx] = std::minmax_element(volumes.begin(), volumes.end());
    REQUIRE(*mx / *mn >= 1.1);  // sizes genuinely vary across the cohort

    REQUIRE_THROWS_AS(make_cohort(0, base, 1), ArgumentError);
}

TEST_CASE("phantoms survive conform and normalization", "[phantom]") {
    PhantomSpec spec;
    spec.size = 24;
    spec.seed = 3;
    auto [vol, mask] = make_phantom(spec);
    const Volume conf = conform(vol, {32, 32, 32}, {0.75, 0.75, 0.75});
    REQUIRE_NOTHROW(normalize_intensity(conf));
    const LabelVolume mconf = conform(mask, {32, 32, 32}, {0.75, 0.75, 0.75});
    for (index_t i = 0; i < mconf.data.size(); ++i)
        REQUIRE((mconf.data(i) == 0 || mconf.data(i) == 1));
}

TEST_CASE("invalid phantom specs are rejected", "[phantom]") {
    PhantomSpec spec;
    spec.size = 4;
    REQUIRE_THROWS_AS(make_phantom(spec), ArgumentError);
    spec.size = 32;
    spec.noise_sigma = -0.1;
    REQUIRE_THROWS_AS(make_phantom(spec), ArgumentError);
}

TEST_CASE("cohorts write and load through the dataset layout", "[phantom]") {
    test::TempDir tmp("cohort");
    PhantomSpec base;
    base.size = 16;
    const auto cohort = make_cohort(3, base, 5);
    write_cohort(cohort, tmp.str());
    const auto loaded = load_cohort(tmp.str());
    REQUIRE(loaded.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(loaded[i].id == cohort[i].id);
        REQUIRE(loaded[i].image.data == cohort[i].image.data);
        REQUIRE(loaded[i].mask.data == cohort[i].mask.data);
    }
}
