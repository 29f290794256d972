#include <catch_amalgamated.hpp>

#include <cstring>
#include <fstream>

#include "helpers.hpp"
#include "triview/nifti.hpp"

using namespace triview;

TEST_CASE("save/load round trip is bit-identical for data and geometry", "[nifti]") {
    test::TempDir tmp("nifti_rt");
    rng_t rng(5);
    std::uniform_int_distribution<int> coin(0, 1);
    // Spacings exactly representable in the file's float fields.
    const std::array<double, 3> spacings[] = {{1.0, 1.0, 1.0}, {0.5, 2.0, 1.25}};
    int k = 0;
    for (const char* name : {"a.nii", "b.nii.gz"}) {
        for (const auto& sp : spacings) {
            Volume v = test::random_volume(rng, {5, 4, 3}, sp);
            // Random signed permutation layout.
            std::array<int, 3> perm{0, 1, 2};
            std::swap(perm[0], perm[static_cast<std::size_t>(coin(rng) + 1)]);
            for (int d = 0; d < 3; ++d)
                v.axis_codes[static_cast<std::size_t>(d)] = {perm[static_cast<std::size_t>(d)],
                                                             coin(rng) ? 1 : -1};
            const std::string path = tmp.str(std::to_string(k++) + name);
            save_volume(v, path);
            const Volume w = load_volume(path);
            REQUIRE(w.data == v.data);
            REQUIRE(w.spacing == v.spacing);
            REQUIRE(w.axis_codes == v.axis_codes);
        }
    }
}

TEST_CASE("label volumes round trip as exact uint8 {0,1}", "[nifti]") {
    test::TempDir tmp("nifti_label");
    rng_t rng(7);
    const LabelVolume m = test::random_mask(rng, {6, 5, 4});
    save_volume(m, tmp.str("mask.nii.gz"));
    const LabelVolume back = load_label_volume(tmp.str("mask.nii.gz"));
    REQUIRE(back.data == m.data);
    REQUIRE(back.spacing == m.spacing);
    REQUIRE(back.axis_codes == m.axis_codes);

    // Non-binary content is rejected as a label volume.
    Volume v;
    v.data = tensor<float>({2, 2, 2});
    v.data(3) = 0.5f;
    save_volume(v, tmp.str("graded.nii"));
    REQUIRE_THROWS_AS(load_label_volume(tmp.str("graded.nii")), IoError);
}

TEST_CASE("a well-formed 256-cube header is echoed back", "[nifti]") {
    test::TempDir tmp("nifti_256");
    Volume v;
    v.data = tensor<float>({256, 256, 256});
    v.spacing = {1, 1, 1};
    save_volume(v, tmp.str("big.nii"));
    const Volume w = load_volume(tmp.str("big.nii"));
    REQUIRE(w.shape() == std::array<index_t, 3>{256, 256, 256});
    REQUIRE(w.spacing == std::array<double, 3>{1.0, 1.0, 1.0});
}

TEST_CASE("4D payloads are rejected with a clear message", "[nifti]") {
    test::TempDir tmp("nifti_4d");
    // Hand-build a 4D header + payload.
    nifti::Header h{};
    h.sizeof_hdr = 348;
    h.dim[0] = 4;
    h.dim[1] = 2;
    h.dim[2] = 2;
    h.dim[3] = 2;
    h.dim[4] = 3;
    h.datatype = nifti::DT_FLOAT32;
    h.bitpix = 32;
    for (int d = 0; d < 8; ++d) h.pixdim[d] = 1.0f;
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    std::memcpy(h.magic, "n+1", 4);
    std::ofstream f(tmp.str("fourd.nii"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const std::uint32_t pad = 0;
    f.write(reinterpret_cast<const char*>(&pad), 4);
    std::vector<float> payload(2 * 2 * 2 * 3, 1.0f);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
    f.close();
    REQUIRE_THROWS_WITH(load_volume(tmp.str("fourd.nii")),
                        Catch::Matchers::ContainsSubstring("expected 3D volume"));

    // Trailing singleton dimensions are tolerated.
    h.dim[4] = 1;
    std::ofstream g(tmp.str("fake4d.nii"), std::ios::binary);
    g.write(reinterpret_cast<const char*>(&h), sizeof(h));
    g.write(reinterpret_cast<const char*>(&pad), 4);
    g.write(reinterpret_cast<const char*>(payload.data()), 8 * sizeof(float));
    g.close();
    REQUIRE(load_volume(tmp.str("fake4d.nii")).shape() ==
            std::array<index_t, 3>{2, 2, 2});
}

TEST_CASE("unreadable, truncated and non-NIfTI files raise IoError naming the path",
          "[nifti]") {
    test::TempDir tmp("nifti_bad");
    REQUIRE_THROWS_WITH(load_volume(tmp.str("absent.nii")),
                        Catch::Matchers::ContainsSubstring("absent.nii"));

    std::ofstream(tmp.str("junk.nii"), std::ios::binary) << "not a nifti at all";
    REQUIRE_THROWS_AS(load_volume(tmp.str("junk.nii")), IoError);

    // Valid header but payload cut short.
    rng_t rng(9);
    const Volume v = test::random_volume(rng, {8, 8, 8});
    save_volume(v, tmp.str("full.nii"));
    std::ifstream in(tmp.str("full.nii"), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    bytes.resize(bytes.size() / 2);
    std::ofstream(tmp.str("cut.nii"), std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_AS(load_volume(tmp.str("cut.nii")), IoError);
}

TEST_CASE("integer datatypes load with scaling applied", "[nifti]") {
    test::TempDir tmp("nifti_dtype");
    nifti::Header h{};
    h.sizeof_hdr = 348;
    h.dim[0] = 3;
    h.dim[1] = 2;
    h.dim[2] = 1;
    h.dim[3] = 1;
    h.datatype = nifti::DT_INT16;
    h.bitpix = 16;
    for (int d = 0; d < 8; ++d) h.pixdim[d] = 1.0f;
    h.vox_offset = 352.0f;
    h.scl_slope = 2.0f;
    h.scl_inter = 1.0f;
    std::memcpy(h.magic, "n+1", 4);
    std::ofstream f(tmp.str("i16.nii"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const std::uint32_t pad = 0;
    f.write(reinterpret_cast<const char*>(&pad), 4);
    const std::int16_t vals[2] = {3, -1};
    f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
    f.close();
    const Volume v = load_volume(tmp.str("i16.nii"));
    REQUIRE(v.data(0) == 7.0f);   // 3*2+1
    REQUIRE(v.data(1) == -1.0f);  // -1*2+1
}

TEST_CASE("saving over an existing file replaces its content", "[nifti]") {
    test::TempDir tmp("nifti_overwrite");
    rng_t rng(13);
    const Volume a = test::random_volume(rng, {3, 3, 3});
    const Volume b = test::random_volume(rng, {4, 4, 4});
    save_volume(a, tmp.str("v.nii.gz"));
    save_volume(b, tmp.str("v.nii.gz"));
    const Volume w = load_volume(tmp.str("v.nii.gz"));
    REQUIRE(w.data == b.data);
}

TEST_CASE("unwritable destination raises IoError", "[nifti]") {
    rng_t rng(15);
    const Volume v = test::random_volume(rng, {2, 2, 2});
    REQUIRE_THROWS_AS(save_volume(v, "/nonexistent_dir_xyz/v.nii"), IoError);
}
