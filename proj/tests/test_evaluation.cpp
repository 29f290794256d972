#include <catch_amalgamated.hpp>

#include "helpers.hpp"
#include "triview/evaluation.hpp"
#include "triview/phantom.hpp"

using namespace triview;

namespace {

const NetworkConfig kTinyNet{.kernel_size = 3,
                             .levels = 1,
                             .base_filters = 2,
                             .convs_per_level = 1,
                             .labels = 2,
                             .in_channels = 1};

TrainingHyperparams fast_hyper() {
    TrainingHyperparams h;
    h.batch_size = 8;
    h.initial_lr = 1e-3;
    h.epochs = 1;
    h.slices_per_epoch = 24;
    h.seed = 7;
    return h;
}

HarnessOptions small_opts(const std::string& work_dir) {
    HarnessOptions opts;
    opts.conform_shape = {16, 16, 16};
    opts.conform_spacing = {1, 1, 1};
    opts.val_count = 1;
    opts.work_dir = work_dir;
    return opts;
}

}  // namespace

TEST_CASE("box stats use interpolated quartiles", "[evaluation]") {
    const BoxStats b = box_stats({4.0, 1.0, 3.0, 2.0});  // sorted: 1 2 3 4
    REQUIRE(b.min == 1.0);
    REQUIRE(b.q1 == Catch::Approx(1.75));
    REQUIRE(b.median == Catch::Approx(2.5));
    REQUIRE(b.q3 == Catch::Approx(3.25));
    REQUIRE(b.max == 4.0);
    REQUIRE_THROWS_AS(box_stats({}), ArgumentError);
}

TEST_CASE("sweep specs validate parameter names and split disjointness",
          "[evaluation]") {
    SweepSpec spec;
    spec.parameter = "kernel_size";
    spec.values = {3};
    spec.train_idx = {0, 1};
    spec.val_idx = {2};
    spec.test_idx = {3};
    REQUIRE_NOTHROW(spec.validate(4));

    spec.parameter = "f";  // has to be the role name
    REQUIRE_THROWS_AS(spec.validate(4), ArgumentError);
    spec.parameter = "levels";
    spec.test_idx = {2};
    REQUIRE_THROWS_AS(spec.validate(4), ArgumentError);  // overlap with val
    spec.test_idx = {9};
    REQUIRE_THROWS_AS(spec.validate(4), ArgumentError);  // out of range

    REQUIRE(spec.config_for(4).levels == 4);
    spec.parameter = "base_filters";
    REQUIRE(spec.config_for(16).base_filters == 16);
}

TEST_CASE("loocv produces one row per subject on a tiny phantom cohort",
          "[evaluation]") {
    test::TempDir tmp("loocv");
    PhantomSpec base;
    base.size = 16;
    base.noise_sigma = 0.01;
    const auto subjects = make_cohort(3, base, 3);

    const LoocvResult res =
        loocv(subjects, kTinyNet, fast_hyper(), small_opts(tmp.str("work")));
    REQUIRE(res.folds.size() == 3);
    for (const auto& fold : res.folds) {
        INFO(fold.error);
        REQUIRE_FALSE(fold.failed);
    }
    REQUIRE(res.complete);
    REQUIRE(res.metrics.size() == 3);
    REQUIRE(res.summary.dice.count == 3);

    REQUIRE_THROWS_AS(
        loocv({subjects[0], subjects[1]}, kTinyNet, fast_hyper(), small_opts(tmp.str())),
        ArgumentError);
}

TEST_CASE("loocv records failing folds and continues", "[evaluation]") {
    test::TempDir tmp("loocv_fail");
    PhantomSpec base;
    base.size = 16;
    auto subjects = make_cohort(3, base, 4);
    // A constant image cannot be normalized; every fold touches it either in
    // training or as the test subject, so each fold fails and is recorded.
    subjects[1].image.data.fill(1.0f);

    const LoocvResult res =
        loocv(subjects, kTinyNet, fast_hyper(), small_opts(tmp.str("work")));
    REQUIRE(res.folds.size() == 3);
    REQUIRE_FALSE(res.complete);
    int failed = 0;
    for (const auto& fold : res.folds)
        if (fold.failed) {
            ++failed;
            REQUIRE_FALSE(fold.error.empty());
        }
    REQUIRE(failed == 3);
}

TEST_CASE("a single-value sweep is one hold-out run with full reporting",
          "[evaluation]") {
    test::TempDir tmp("sweep");
    PhantomSpec base;
    base.size = 16;
    base.noise_sigma = 0.01;
    const auto subjects = make_cohort(4, base, 9);

    SweepSpec spec;
    spec.parameter = "kernel_size";
    spec.values = {3};
    spec.base = kTinyNet;
    spec.train_idx = {0, 1};
    spec.val_idx = {2};
    spec.test_idx = {3};

    const auto rows = sweep(subjects, spec, fast_hyper(), small_opts(tmp.str("work")));
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].value == 3);
    REQUIRE(rows[0].per_subject.size() == 1);
    REQUIRE(rows[0].per_subject[0].subject_id == subjects[3].id);
    // Degenerate distribution: all five numbers collapse onto the one result.
    REQUIRE(rows[0].dice_stats.min == rows[0].dice_stats.max);
    REQUIRE(rows[0].dice_stats.median == rows[0].per_subject[0].dice);

    write_boxplot_data(rows, tmp.str("box.tsv"), tmp.str("raw.tsv"));
    std::ifstream f(tmp.str("box.tsv"));
    std::string header, row;
    std::getline(f, header);
    std::getline(f, row);
    REQUIRE(header == "value\tmin\tq1\tmedian\tq3\tmax");
    REQUIRE(row.substr(0, 2) == "3\t");
}
