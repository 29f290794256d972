#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "triview/staple.hpp"

using namespace triview;

namespace {

LabelVolume mask_from(const std::vector<int>& bits) {
    LabelVolume m;
    m.data = tensor<std::uint8_t>({static_cast<index_t>(bits.size()), 1, 1});
    for (std::size_t i = 0; i < bits.size(); ++i)
        m.data(static_cast<index_t>(i)) = bits[i] ? 1 : 0;
    return m;
}

// Brute-force reference EM, written directly from the update equations on
// plain vectors.
struct ReferenceEm {
    std::vector<double> w;
    std::vector<double> p, q;

    ReferenceEm(const std::vector<std::vector<int>>& d, double init_p, double init_q,
                int iters) {
        const std::size_t raters = d.size(), voxels = d[0].size();
        p.assign(raters, init_p);
        q.assign(raters, init_q);
        double fg = 0;
        for (const auto& r : d)
            for (int v : r) fg += v;
        const double prior = fg / static_cast<double>(raters * voxels);
        w.assign(voxels, 0.0);
        for (int it = 0; it < iters; ++it) {
            for (std::size_t v = 0; v < voxels; ++v) {
                double a = prior, b = 1.0 - prior;
                for (std::size_t j = 0; j < raters; ++j) {
                    a *= d[j][v] ? p[j] : 1.0 - p[j];
                    b *= d[j][v] ? 1.0 - q[j] : q[j];
                }
                w[v] = a + b > 0 ? a / (a + b) : prior;
            }
            double sw = 0;
            for (double x : w) sw += x;
            const double snw = static_cast<double>(voxels) - sw;
            for (std::size_t j = 0; j < raters; ++j) {
                double wd = 0, nwnd = 0;
                for (std::size_t v = 0; v < voxels; ++v) {
                    if (d[j][v])
                        wd += w[v];
                    else
                        nwnd += 1.0 - w[v];
                }
                if (sw > 0) p[j] = std::clamp(wd / sw, 1e-7, 1.0 - 1e-7);
                if (snw > 0) q[j] = std::clamp(nwnd / snw, 1e-7, 1.0 - 1e-7);
            }
        }
    }
};

}  // namespace

TEST_CASE("unanimous raters reproduce the common mask in one iteration", "[staple]") {
    const auto m = mask_from({1, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0});
    StapleOptions opts;
    opts.max_iter = 1;
    const StapleResult res = staple({m, m, m}, opts);
    REQUIRE(res.threshold(0.5).data == m.data);

    const StapleResult full = staple({m, m, m});
    REQUIRE(full.converged);
    REQUIRE(full.iterations <= 3);
    REQUIRE(full.threshold(0.5).data == m.data);
}

TEST_CASE("a single rater is its own consensus", "[staple]") {
    const auto m = mask_from({0, 1, 1, 0, 0, 0, 1});
    const StapleResult res = staple({m});
    REQUIRE(res.threshold(0.5).data == m.data);
    REQUIRE(res.sensitivity.size() == 1);
    REQUIRE(res.sensitivity[0] > 0.0);
    REQUIRE(res.sensitivity[0] < 1.0);
}

TEST_CASE("the consensus is invariant under rater permutation", "[staple]") {
    rng_t rng(21);
    std::vector<LabelVolume> raters;
    for (int j = 0; j < 4; ++j) raters.push_back(test::random_mask(rng, {6, 5, 4}, 0.35));
    const StapleResult fwd = staple(raters);
    std::vector<LabelVolume> shuffled{raters[2], raters[0], raters[3], raters[1]};
    const StapleResult rev = staple(shuffled);
    for (index_t i = 0; i < fwd.consensus.size(); ++i)
        REQUIRE(std::abs(fwd.consensus(i) - rev.consensus(i)) < 1e-12);
}

TEST_CASE("the full EM trajectory matches a brute-force oracle on 12-voxel instances",
          "[staple]") {
    // 3 raters, one dissenting on 2 voxels.
    const std::vector<std::vector<int>> d{{1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0},
                                          {1, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0},
                                          {1, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0}};
    std::vector<LabelVolume> raters;
    for (const auto& bits : d) raters.push_back(mask_from(bits));

    for (int iters = 1; iters <= 5; ++iters) {
        const ReferenceEm ref(d, 0.99, 0.99, iters);
        StapleOptions opts;
        opts.max_iter = iters;
        opts.tol = 0.0;  // disable early exit so the trajectories align
        const StapleResult res = staple(raters, opts);
        REQUIRE(res.iterations == iters);
        for (index_t v = 0; v < 12; ++v)
            REQUIRE(std::abs(res.consensus(v) - ref.w[static_cast<std::size_t>(v)]) <
                    1e-9);
        for (std::size_t j = 0; j < 3; ++j) {
            REQUIRE(std::abs(res.sensitivity[j] - ref.p[j]) < 1e-9);
            REQUIRE(std::abs(res.specificity[j] - ref.q[j]) < 1e-9);
        }
    }
}

TEST_CASE("staple rejects bad inputs", "[staple]") {
    REQUIRE_THROWS_AS(staple({}), ArgumentError);
    rng_t rng(23);
    const LabelVolume a = test::random_mask(rng, {4, 4, 4});
    const LabelVolume b = test::random_mask(rng, {4, 4, 5});
    REQUIRE_THROWS_AS(staple({a, b}), ArgumentError);
    StapleOptions opts;
    opts.init_p = 1.5;
    REQUIRE_THROWS_AS(staple({a}, opts), ArgumentError);
}

TEST_CASE("non-convergence within the iteration cap is reported, not thrown",
          "[staple]") {
    rng_t rng(29);
    std::vector<LabelVolume> raters;
    for (int j = 0; j < 3; ++j) raters.push_back(test::random_mask(rng, {5, 5, 5}, 0.5));
    StapleOptions opts;
    opts.max_iter = 1;
    opts.tol = 0.0;
    const StapleResult res = staple(raters, opts);
    REQUIRE_FALSE(res.converged);
    REQUIRE(res.iterations == 1);
}

TEST_CASE("candidate-vs-consensus scoring", "[staple]") {
    const auto m = mask_from({1, 1, 0, 0, 1, 0, 0, 0});
    // Identical to all others -> perfect agreement.
    const auto same = compare_to_consensus(m, {m, m, m});
    REQUIRE(same.dice == 1.0);

    // Disjoint from a unanimous set of 5 -> the unanimous raters dominate.
    const auto inverse = mask_from({0, 0, 1, 1, 0, 1, 1, 1});
    const auto off = compare_to_consensus(inverse, {m, m, m, m, m});
    REQUIRE(off.dice == Catch::Approx(0.0).margin(1e-12));

    // Excluding the candidate gives the pure crowd consensus.
    const auto excl = compare_to_consensus(inverse, {m, m, m, m, m}, false);
    REQUIRE(excl.dice == Catch::Approx(0.0).margin(1e-12));
}
