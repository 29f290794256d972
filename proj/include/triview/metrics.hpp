#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "triview/errors.hpp"
#include "triview/volume.hpp"

namespace triview {

namespace detail {

struct OverlapCounts {
    std::uint64_t a = 0, b = 0, inter = 0;
};

inline OverlapCounts overlap(const LabelVolume& a, const LabelVolume& b) {
    if (!same_grid(a, b)) throw ArgumentError("overlap metric: geometry mismatch");
    OverlapCounts c;
    const std::uint8_t* pa = a.data.data();
    const std::uint8_t* pb = b.data.data();
    const index_t n = a.data.size();
    for (index_t i = 0; i < n; ++i) {
        c.a += pa[i];
        c.b += pb[i];
        c.inter += static_cast<std::uint64_t>(pa[i] & pb[i]);
    }
    return c;
}

}  // namespace detail

// 2|A∩B| / (|A|+|B|); two empty masks agree perfectly (1).
inline double dice(const LabelVolume& a, const LabelVolume& b) {
    const auto c = detail::overlap(a, b);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
}

// |A∩B| / |A∪B|; empty/empty -> 1. Related to Dice by J = D/(2-D).
inline double jaccard(const LabelVolume& a, const LabelVolume& b) {
    const auto c = detail::overlap(a, b);
    const std::uint64_t uni = c.a + c.b - c.inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(uni);
}

struct MaskMetrics {
    std::string subject_id;
    double dice = 0.0;
    double jaccard = 0.0;
};

inline MaskMetrics mask_metrics(const std::string& subject_id, const LabelVolume& a,
                                const LabelVolume& b) {
    return {subject_id, dice(a, b), jaccard(a, b)};
}

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double stddev = 0.0;  // population convention (divide by n)
    double min = 0.0;
    double max = 0.0;
    double median = 0.0;
};

inline Summary summarize(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("summarize: empty value list");
    Summary s;
    s.count = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    const std::size_t n = values.size();
    s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    return s;
}

struct MetricsSummary {
    Summary dice;
    Summary jaccard;
};

inline MetricsSummary summarize(const std::vector<MaskMetrics>& metrics) {
    std::vector<double> d, j;
    for (const auto& m : metrics) {
        d.push_back(m.dice);
        j.push_back(m.jaccard);
    }
    return {summarize(std::move(d)), summarize(std::move(j))};
}

inline void write_metrics_table(const std::vector<MaskMetrics>& metrics,
                                const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write metrics table '" + path + "'");
    f << "subject_id\tdice\tjaccard\n";
    for (const auto& m : metrics)
        f << m.subject_id << '\t' << m.dice << '\t' << m.jaccard << '\n';
}

inline void print_summary(std::ostream& os, const std::string& name, const Summary& s) {
    os << name << ": n=" << s.count << " mean=" << s.mean << " std=" << s.stddev
       << " min=" << s.min << " median=" << s.median << " max=" << s.max << "\n";
}

}  // namespace triview
