#include <catch_amalgamated.hpp>

#include <numeric>

#include "helpers.hpp"
#include "triview/metrics.hpp"

using namespace triview;

TEST_CASE("dice and jaccard on hand-built masks", "[metrics]") {
    LabelVolume a, b;
    a.data = tensor<std::uint8_t>({2, 2, 2});
    b.data = tensor<std::uint8_t>({2, 2, 2});

    // |A|=2, |B|=2, |A∩B|=1.
    a.data(0) = a.data(1) = 1;
    b.data(1) = b.data(2) = 1;
    REQUIRE(dice(a, b) == Catch::Approx(0.5));
    REQUIRE(jaccard(a, b) == Catch::Approx(1.0 / 3.0));

    // Identical non-empty masks.
    REQUIRE(dice(a, a) == 1.0);
    REQUIRE(jaccard(a, a) == 1.0);

    // Disjoint.
    b.data.zero();
    b.data(5) = 1;
    REQUIRE(dice(a, b) == 0.0);
    REQUIRE(jaccard(a, b) == 0.0);

    // Empty vs empty agrees perfectly by convention.
    a.data.zero();
    b.data.zero();
    REQUIRE(dice(a, b) == 1.0);
    REQUIRE(jaccard(a, b) == 1.0);
}

TEST_CASE("geometry mismatches are rejected", "[metrics]") {
    rng_t rng(3);
    const LabelVolume a = test::random_mask(rng, {4, 4, 4});
    LabelVolume b = test::random_mask(rng, {4, 4, 4});
    b.spacing = {2, 1, 1};
    REQUIRE_THROWS_AS(dice(a, b), ArgumentError);
    const LabelVolume c = test::random_mask(rng, {4, 4, 5});
    REQUIRE_THROWS_AS(jaccard(a, c), ArgumentError);
}

TEST_CASE("jaccard equals dice/(2-dice) and both are symmetric", "[metrics]") {
    rng_t rng(5);
    for (int rep = 0; rep < 1000; ++rep) {
        const LabelVolume a = test::random_mask(rng, {4, 4, 4}, 0.4);
        const LabelVolume b = test::random_mask(rng, {4, 4, 4}, 0.4);
        const double d = dice(a, b);
        const double j = jaccard(a, b);
        REQUIRE(std::abs(j - d / (2.0 - d)) < 1e-12);
        REQUIRE(dice(b, a) == d);
        REQUIRE(jaccard(b, a) == j);
    }
}

TEST_CASE("summary statistics match an independent computation", "[metrics]") {
    REQUIRE_THROWS_AS(summarize(std::vector<double>{}), ArgumentError);

    const Summary single = summarize(std::vector<double>{0.7});
    REQUIRE(single.stddev == 0.0);
    REQUIRE(single.median == 0.7);

    const Summary pair = summarize(std::vector<double>{0.9, 1.0});
    REQUIRE(pair.mean == Catch::Approx(0.95));
    REQUIRE(pair.median == Catch::Approx(0.95));

    rng_t rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int rep = 0; rep < 100; ++rep) {
        std::vector<double> v(static_cast<std::size_t>(len(rng)));
        for (auto& x : v) x = u(rng);
        const Summary s = summarize(v);

        // Independent route: moment form in long double + sorted order stats.
        long double m1 = 0.0L, m2 = 0.0L;
        for (double x : v) {
            m1 += x;
            m2 += static_cast<long double>(x) * x;
        }
        m1 /= v.size();
        m2 = m2 / v.size() - m1 * m1;
        std::vector<double> sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const double med = sorted.size() % 2 == 1
                               ? sorted[sorted.size() / 2]
                               : 0.5 * (sorted[sorted.size() / 2 - 1] +
                                        sorted[sorted.size() / 2]);
        REQUIRE(std::abs(s.mean - static_cast<double>(m1)) < 1e-12);
        REQUIRE(std::abs(s.stddev - std::sqrt(std::max(0.0, static_cast<double>(m2)))) <
                1e-9);
        REQUIRE(s.min == sorted.front());
        REQUIRE(s.max == sorted.back());
        REQUIRE(s.median == Catch::Approx(med).margin(1e-15));
    }
}

TEST_CASE("metrics tables are written as delimited text", "[metrics]") {
    test::TempDir tmp("metrics");
    std::vector<MaskMetrics> rows{{"s1", 1.0, 1.0}, {"s2", 0.5, 1.0 / 3.0}};
    write_metrics_table(rows, tmp.str("m.tsv"));
    std::ifstream f(tmp.str("m.tsv"));
    std::string line;
    std::getline(f, line);
    REQUIRE(line == "subject_id\tdice\tjaccard");
    std::getline(f, line);
    REQUIRE(line.substr(0, 3) == "s1\t");
}
