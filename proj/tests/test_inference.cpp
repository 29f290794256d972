#include <catch_amalgamated.hpp>

#include <queue>
#include <set>

#include "helpers.hpp"
#include "triview/inference.hpp"
#include "triview/phantom.hpp"

using namespace triview;

namespace {

template <class T>
ProbabilityVolumeT<T> random_prob(rng_t& rng, std::array<index_t, 3> shape,
                                  index_t channels = 2) {
    ProbabilityVolumeT<T> p;
    p.data = tensor<T>({shape[0], shape[1], shape[2], channels});
    p.spacing = {1, 1, 1};
    p.axis_codes = canonical_codes(Orientation::coronal);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (index_t v = 0; v < shape[0] * shape[1] * shape[2]; ++v) {
        double sum = 0.0;
        for (index_t c = 0; c < channels; ++c) {
            const double x = u(rng);
            p.data(v * channels + c) = static_cast<T>(x);
            sum += x;
        }
        for (index_t c = 0; c < channels; ++c)
            p.data(v * channels + c) =
                static_cast<T>(static_cast<double>(p.data(v * channels + c)) / sum);
    }
    return p;
}

// Independent reference: flood fill with set-based frontier, used to check
// largest_component.
std::vector<std::set<index_t>> reference_components(const LabelVolume& m,
                                                    int connectivity) {
    const index_t s0 = m.data.dim(0), s1 = m.data.dim(1), s2 = m.data.dim(2);
    std::set<index_t> todo;
    for (index_t i = 0; i < m.data.size(); ++i)
        if (m.data(i)) todo.insert(i);
    std::vector<std::set<index_t>> comps;
    while (!todo.empty()) {
        std::set<index_t> comp;
        std::queue<index_t> frontier;
        frontier.push(*todo.begin());
        todo.erase(todo.begin());
        while (!frontier.empty()) {
            const index_t cur = frontier.front();
            frontier.pop();
            comp.insert(cur);
            const index_t z = cur / (s1 * s2), y = (cur / s2) % s1, x = cur % s2;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int manhattan = std::abs(dz) + std::abs(dy) + std::abs(dx);
                        const int limit =
                            connectivity == 6 ? 1 : connectivity == 18 ? 2 : 3;
                        if (manhattan < 1 || manhattan > limit) continue;
                        const index_t nz = z + dz, ny = y + dy, nx = x + dx;
                        if (nz < 0 || ny < 0 || nx < 0 || nz >= s0 || ny >= s1 ||
                            nx >= s2)
                            continue;
                        const index_t ni = (nz * s1 + ny) * s2 + nx;
                        if (todo.erase(ni)) frontier.push(ni);
                    }
        }
        comps.push_back(std::move(comp));
    }
    return comps;
}

ModelBundle tiny_bundle(std::array<index_t, 3> conform_shape, int levels = 1) {
    NetworkConfig cfg{.kernel_size = 3,
                      .levels = levels,
                      .base_filters = 2,
                      .convs_per_level = 1,
                      .labels = 2,
                      .in_channels = 1};
    ModelBundle b;
    for (Orientation r : all_orientations()) {
        b.net(r).net = Unet<float>::build(cfg, 7 + static_cast<unsigned>(r));
        b.net(r).meta.cfg = cfg;
        b.net(r).meta.view = r;
    }
    b.conform_shape = conform_shape;
    b.conform_spacing = {1, 1, 1};
    return b;
}

}  // namespace

TEST_CASE("degenerate weights return the axial volume bit-exactly", "[inference]") {
    rng_t rng(3);
    const auto a = random_prob<float>(rng, {4, 4, 4});
    const auto b = random_prob<float>(rng, {4, 4, 4});
    const auto c = random_prob<float>(rng, {4, 4, 4});
    const auto fused = fuse(a, b, c, FusionWeights{1.0, 0.0, 0.0});
    REQUIRE(fused.data == a.data);
}

TEST_CASE("fusion reproduces the hand-computed weighted value", "[inference]") {
    // Single voxel, brain-channel probabilities (0.8, 0.4, 0.5).
    auto mk = [](double bg, double fg) {
        ProbabilityVolumeT<double> p;
        p.data = tensor<double>({1, 1, 1, 2});
        p.data(0) = bg;
        p.data(1) = fg;
        return p;
    };
    const auto fused = fuse(mk(0.2, 0.8), mk(0.6, 0.4), mk(0.5, 0.5), FusionWeights{});
    REQUIRE(std::abs(fused.data(1) - 0.599) < 1e-12);
    REQUIRE(std::abs(fused.data(0) - 0.401) < 1e-12);
}

TEST_CASE("identical inputs are a fixed point of fusion", "[inference]") {
    rng_t rng(5);
    const auto p = random_prob<double>(rng, {3, 3, 3});
    const auto fused = fuse(p, p, p, FusionWeights{0.2, 0.5, 0.3});
    for (index_t i = 0; i < p.data.size(); ++i)
        REQUIRE(fused.data(i) == Catch::Approx(p.data(i)).margin(1e-12));
}

TEST_CASE("fusion preserves the probability simplex", "[inference]") {
    rng_t rng(7);
    const auto a = random_prob<float>(rng, {4, 4, 4});
    const auto b = random_prob<float>(rng, {4, 4, 4});
    const auto c = random_prob<float>(rng, {4, 4, 4});
    const auto fused = fuse(a, b, c);
    for (index_t v = 0; v < 64; ++v) {
        const double sum = static_cast<double>(fused.data(2 * v)) + fused.data(2 * v + 1);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-4));
        REQUIRE(fused.data(2 * v) >= 0.0f);
        REQUIRE(fused.data(2 * v) <= 1.0f);
    }
}

TEST_CASE("fusion validates weights and geometry", "[inference]") {
    rng_t rng(9);
    const auto a = random_prob<float>(rng, {4, 4, 4});
    auto b = random_prob<float>(rng, {4, 4, 4});
    const auto c = random_prob<float>(rng, {4, 4, 5});
    REQUIRE_THROWS_AS(fuse(a, b, a, FusionWeights{0.5, 0.5, 0.5}), ArgumentError);
    REQUIRE_THROWS_AS(fuse(a, b, c), ArgumentError);
    b.axis_codes = canonical_codes(Orientation::axial);
    REQUIRE_THROWS_AS(fuse(a, b, a), ArgumentError);
}

TEST_CASE("binarize takes the argmax and sends exact ties to background",
          "[inference]") {
    ProbabilityVolumeT<float> p;
    p.data = tensor<float>({1, 1, 3, 2});
    p.data(0) = 0.401f;
    p.data(1) = 0.599f;  // brain wins
    p.data(2) = 0.5f;
    p.data(3) = 0.5f;  // exact tie -> background
    p.data(4) = 1.0f;
    p.data(5) = 0.0f;  // background wins
    const LabelVolume m = binarize(p);
    REQUIRE(m.data(0) == 1);
    REQUIRE(m.data(1) == 0);
    REQUIRE(m.data(2) == 0);
}

TEST_CASE("binarize-after-fusion is invariant to common positive channel scaling",
          "[inference]") {
    rng_t rng(11);
    auto a = random_prob<float>(rng, {4, 4, 4});
    auto b = random_prob<float>(rng, {4, 4, 4});
    auto c = random_prob<float>(rng, {4, 4, 4});
    const LabelVolume before = binarize(fuse(a, b, c));
    for (auto* p : {&a, &b, &c})
        for (index_t i = 0; i < p->data.size(); ++i) p->data(i) *= 0.125f;
    const LabelVolume after = binarize(fuse(a, b, c));
    REQUIRE(before.data == after.data);
}

TEST_CASE("largest_component matches a brute-force flood fill on random masks",
          "[inference]") {
    rng_t rng(13);
    for (int rep = 0; rep < 25; ++rep) {
        const LabelVolume m = test::random_mask(rng, {16, 16, 16}, 0.12);
        for (int conn : {6, 18, 26}) {
            const auto comps = reference_components(m, conn);
            const ComponentResult got = largest_component(m, conn);
            if (comps.empty()) {
                REQUIRE(got.empty_warning);
                continue;
            }
            // Reference winner: max size, then smallest seed (= smallest
            // member, since components are disjoint voxel sets).
            std::size_t best = 0;
            for (std::size_t i = 1; i < comps.size(); ++i) {
                if (comps[i].size() > comps[best].size() ||
                    (comps[i].size() == comps[best].size() &&
                     *comps[i].begin() < *comps[best].begin()))
                    best = i;
            }
            std::set<index_t> got_set;
            for (index_t i = 0; i < got.mask.data.size(); ++i)
                if (got.mask.data(i)) got_set.insert(i);
            REQUIRE(got_set == comps[best]);
        }
    }
}

TEST_CASE("largest_component keeps a single blob and flags empty inputs",
          "[inference]") {
    rng_t rng_empty(1);
    LabelVolume m = test::random_mask(rng_empty, {8, 8, 8}, 0.0);  // empty
    const auto empty = largest_component(m);
    REQUIRE(empty.empty_warning);
    for (index_t i = 0; i < empty.mask.data.size(); ++i) REQUIRE(empty.mask.data(i) == 0);

    // 100-voxel blob vs 3-voxel blob.
    LabelVolume two;
    two.data = tensor<std::uint8_t>({10, 10, 10});
    for (index_t i = 0; i < 5; ++i)
        for (index_t j = 0; j < 5; ++j)
            for (index_t k = 0; k < 4; ++k) two.data(i, j, k) = 1;
    two.data(9, 9, 9) = two.data(9, 9, 8) = two.data(9, 8, 9) = 1;
    const auto kept = largest_component(two, 26);
    REQUIRE_FALSE(kept.empty_warning);
    index_t count = 0;
    for (index_t i = 0; i < kept.mask.data.size(); ++i) count += kept.mask.data(i);
    REQUIRE(count == 100);
    REQUIRE(kept.mask.data(9, 9, 9) == 0);

    // Single blob passes through unchanged.
    two.data(9, 9, 9) = two.data(9, 9, 8) = two.data(9, 8, 9) = 0;
    const auto same = largest_component(two, 6);
    REQUIRE(same.mask.data == two.data);

    REQUIRE_THROWS_AS(largest_component(two, 7), ArgumentError);
}

TEST_CASE("predict_view matches single-slice forwards and guards orientation",
          "[inference]") {
    NetworkConfig cfg{.kernel_size = 3,
                      .levels = 1,
                      .base_filters = 2,
                      .convs_per_level = 1,
                      .labels = 2,
                      .in_channels = 1};
    TrainedNet tn;
    tn.net = Unet<float>::build(cfg, 55);
    tn.meta.cfg = cfg;
    tn.meta.view = Orientation::coronal;

    rng_t rng(15);
    Volume vol = test::random_volume(rng, {8, 8, 8});
    Workspace<float> ws;
    const ProbabilityVolume p = predict_view(tn, vol, Orientation::coronal, ws, 3);
    REQUIRE(p.shape() == std::array<index_t, 3>{8, 8, 8});
    REQUIRE(p.channels() == 2);
    for (index_t v = 0; v < 8 * 8 * 8; ++v) {
        const double sum = static_cast<double>(p.data(2 * v)) + p.data(2 * v + 1);
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-4));
    }

    // Slice 5 alone through the network equals plane 5 of the stack.
    const Volume vr = reorient(vol, Orientation::coronal);
    tensor<float> x({1, 1, 8, 8});
    std::copy_n(vr.data.data() + 5 * 64, 64, x.data());
    const auto single = tn.net.forward(x, ws);
    for (index_t i = 0; i < 8; ++i)
        for (index_t j = 0; j < 8; ++j)
            for (index_t c = 0; c < 2; ++c)
                REQUIRE(p.data(((5 * 8 + i) * 8 + j) * 2 + c) == single(0, c, i, j));

    REQUIRE_THROWS_AS(predict_view(tn, vol, Orientation::axial, ws), ArgumentError);
}

TEST_CASE("skullstrip is deterministic and returns masks on the native grid",
          "[inference]") {
    const ModelBundle bundle = tiny_bundle({16, 16, 16});
    PhantomSpec spec;
    spec.size = 24;
    spec.seed = 77;
    auto [vol, truth] = make_phantom(spec);
    vol.spacing = {2, 2, 2};  // native grid differs from the conform target
    vol.axis_codes = canonical_codes(Orientation::axial);

    const StripResult r1 = skullstrip(bundle, vol);
    const StripResult r2 = skullstrip(bundle, vol);
    REQUIRE(r1.mask.data == r2.mask.data);
    REQUIRE(r1.mask.shape() == vol.shape());
    REQUIRE(r1.mask.spacing == vol.spacing);
    REQUIRE(r1.mask.axis_codes == vol.axis_codes);
    REQUIRE(r1.fused.orientation() == Orientation::coronal);
    REQUIRE(r1.fused.shape() == std::array<index_t, 3>{16, 16, 16});

    // Untrained nets may produce anything; an empty mask must carry the flag.
    index_t fg = 0;
    for (index_t i = 0; i < r1.mask.data.size(); ++i) fg += r1.mask.data(i);
    if (fg == 0) REQUIRE(r1.empty_mask_warning);
}
