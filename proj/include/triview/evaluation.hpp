#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "triview/bundle.hpp"
#include "triview/dataset.hpp"
#include "triview/inference.hpp"
#include "triview/metrics.hpp"
#include "triview/rng.hpp"

namespace triview {

struct HarnessOptions {
    std::array<index_t, 3> conform_shape = kConformShape;
    std::array<double, 3> conform_spacing = kConformSpacing;
    FusionWeights weights;
    NormConvention norm;
    int val_count = 0;  // 0: max(1, n_train/6)
    int connectivity = 26;
    int batch_size = 8;
    std::string work_dir = "triview_work";
    std::ostream* progress = nullptr;
};

namespace detail {

inline int default_val_count(std::size_t n_train, int requested) {
    if (requested > 0) return requested;
    return std::max<int>(1, static_cast<int>(n_train / 6));
}

// Deterministic train/validation split of a subject list.
inline void split_train_val(std::vector<const Subject*>& pool, int val_count,
                            std::uint64_t seed, std::vector<const Subject*>& train,
                            std::vector<const Subject*>& val) {
    rng_t rng(seed);
    for (std::size_t i = pool.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(pool[i - 1], pool[pick(rng)]);
    }
    if (val_count >= static_cast<int>(pool.size()))
        throw ArgumentError("harness: validation split leaves no training subjects");
    val.assign(pool.begin(), pool.begin() + val_count);
    train.assign(pool.begin() + val_count, pool.end());
}

inline std::vector<Subject> deref(const std::vector<const Subject*>& ptrs) {
    std::vector<Subject> out;
    for (const auto* p : ptrs) out.push_back(*p);
    return out;
}

}  // namespace detail

struct FoldResult {
    std::string subject_id;
    bool failed = false;
    std::string error;
    MaskMetrics metrics;
};

struct LoocvResult {
    std::vector<FoldResult> folds;
    std::vector<MaskMetrics> metrics;  // successful folds only
    bool complete = false;
    MetricsSummary summary;
};

// Leave-one-out cross-validation: per subject, train a bundle on the rest
// (with a held-out validation split) and skullstrip the left-out volume.
// A failing fold is recorded and the run continues.
inline LoocvResult loocv(const std::vector<Subject>& subjects, const NetworkConfig& cfg,
                         const TrainingHyperparams& hyper,
                         const HarnessOptions& opts = {}) {
    if (subjects.size() < 3) throw ArgumentError("loocv: need at least 3 subjects");
    for (const auto& s : subjects)
        if (!s.has_mask()) throw ArgumentError("loocv: subject '" + s.id + "' lacks a mask");

    LoocvResult out;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        FoldResult fold;
        fold.subject_id = subjects[i].id;
        try {
            std::vector<const Subject*> rest;
            for (std::size_t j = 0; j < subjects.size(); ++j)
                if (j != i) rest.push_back(&subjects[j]);
            std::vector<const Subject*> train_p, val_p;
            detail::split_train_val(
                rest, detail::default_val_count(rest.size(), opts.val_count),
                derive_seed(hyper.seed, 0x10000u + i), train_p, val_p);

            const auto train_slices = collect_slices(
                detail::deref(train_p), opts.conform_shape, opts.conform_spacing, opts.norm);
            const auto val_slices = collect_slices(
                detail::deref(val_p), opts.conform_shape, opts.conform_spacing, opts.norm);

            const auto fold_dir =
                (std::filesystem::path(opts.work_dir) / ("fold_" + subjects[i].id)).string();
            if (opts.progress)
                (*opts.progress) << "== fold " << subjects[i].id << " ==\n";
            auto trained =
                train_all(train_slices, val_slices, cfg, hyper, fold_dir, opts.weights,
                          opts.norm, opts.conform_shape, opts.conform_spacing,
                          opts.progress);

            StripOptions strip;
            strip.batch_size = opts.batch_size;
            strip.connectivity = opts.connectivity;
            const StripResult res = skullstrip(trained.bundle, subjects[i].image, strip);
            fold.metrics = mask_metrics(subjects[i].id, res.mask, subjects[i].mask);
        } catch (const Error& e) {
            fold.failed = true;
            fold.error = e.what();
        }
        if (!fold.failed) out.metrics.push_back(fold.metrics);
        out.folds.push_back(std::move(fold));
    }
    out.complete = out.metrics.size() == subjects.size();
    if (!out.metrics.empty()) out.summary = summarize(out.metrics);
    return out;
}

// One-at-a-time parameter sweep over a fixed train/val/test subject split.
struct SweepSpec {
    std::string parameter;  // kernel_size | levels | base_filters | convs_per_level
    std::vector<int> values;
    NetworkConfig base;
    std::vector<std::size_t> train_idx, val_idx, test_idx;

    void validate(std::size_t n_subjects) const {
        static const char* known[] = {"kernel_size", "levels", "base_filters",
                                      "convs_per_level"};
        if (std::find(std::begin(known), std::end(known), parameter) == std::end(known))
            throw ArgumentError("sweep: unknown parameter '" + parameter + "'");
        if (values.empty()) throw ArgumentError("sweep: empty value list");
        if (train_idx.empty() || val_idx.empty() || test_idx.empty())
            throw ArgumentError("sweep: train/val/test splits must be non-empty");
        std::vector<bool> seen(n_subjects, false);
        for (const auto* split : {&train_idx, &val_idx, &test_idx})
            for (std::size_t i : *split) {
                if (i >= n_subjects) throw ArgumentError("sweep: subject index out of range");
                if (seen[i]) throw ArgumentError("sweep: splits are not disjoint");
                seen[i] = true;
            }
    }

    NetworkConfig config_for(int value) const {
        NetworkConfig cfg = base;
        if (parameter == "kernel_size") cfg.kernel_size = value;
        else if (parameter == "levels") cfg.levels = value;
        else if (parameter == "base_filters") cfg.base_filters = value;
        else if (parameter == "convs_per_level") cfg.convs_per_level = value;
        return cfg;
    }
};

struct BoxStats {
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline BoxStats box_stats(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("box_stats: empty sample");
    std::sort(values.begin(), values.end());
    const auto quant = [&](double p) {
        const double rank = p * static_cast<double>(values.size() - 1);
        const auto k = static_cast<std::size_t>(rank);
        const double frac = rank - static_cast<double>(k);
        if (k + 1 >= values.size()) return values.back();
        return values[k] + frac * (values[k + 1] - values[k]);
    };
    return {values.front(), quant(0.25), quant(0.5), quant(0.75), values.back()};
}

struct SweepRow {
    int value = 0;
    std::vector<MaskMetrics> per_subject;
    BoxStats dice_stats;
};

inline std::vector<SweepRow> sweep(const std::vector<Subject>& subjects,
                                   const SweepSpec& spec,
                                   const TrainingHyperparams& hyper,
                                   const HarnessOptions& opts = {}) {
    spec.validate(subjects.size());

    std::vector<Subject> train_s, val_s;
    for (std::size_t i : spec.train_idx) train_s.push_back(subjects[i]);
    for (std::size_t i : spec.val_idx) val_s.push_back(subjects[i]);
    const auto train_slices =
        collect_slices(train_s, opts.conform_shape, opts.conform_spacing, opts.norm);
    const auto val_slices =
        collect_slices(val_s, opts.conform_shape, opts.conform_spacing, opts.norm);

    std::vector<SweepRow> rows;
    for (int value : spec.values) {
        if (opts.progress)
            (*opts.progress) << "== sweep " << spec.parameter << "=" << value << " ==\n";
        SweepRow row;
        row.value = value;
        const NetworkConfig cfg = spec.config_for(value);
        const auto dir = (std::filesystem::path(opts.work_dir) /
                          ("sweep_" + spec.parameter + "_" + std::to_string(value)))
                             .string();
        auto trained = train_all(train_slices, val_slices, cfg, hyper, dir, opts.weights,
                                 opts.norm, opts.conform_shape, opts.conform_spacing,
                                 opts.progress);
        StripOptions strip;
        strip.batch_size = opts.batch_size;
        strip.connectivity = opts.connectivity;
        std::vector<double> dices;
        for (std::size_t i : spec.test_idx) {
            const StripResult res = skullstrip(trained.bundle, subjects[i].image, strip);
            row.per_subject.push_back(
                mask_metrics(subjects[i].id, res.mask, subjects[i].mask));
            dices.push_back(row.per_subject.back().dice);
        }
        row.dice_stats = box_stats(std::move(dices));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Plot-ready delimited text: one row per swept value with the five-number
// Dice distribution summary, plus a raw per-subject table alongside.
inline void write_boxplot_data(const std::vector<SweepRow>& rows,
                               const std::string& stats_path,
                               const std::string& raw_path) {
    std::ofstream fs(stats_path, std::ios::trunc);
    if (!fs) throw IoError("cannot write '" + stats_path + "'");
    fs << "value\tmin\tq1\tmedian\tq3\tmax\n";
    for (const auto& r : rows)
        fs << r.value << '\t' << r.dice_stats.min << '\t' << r.dice_stats.q1 << '\t'
           << r.dice_stats.median << '\t' << r.dice_stats.q3 << '\t' << r.dice_stats.max
           << '\n';

    std::ofstream fr(raw_path, std::ios::trunc);
    if (!fr) throw IoError("cannot write '" + raw_path + "'");
    fr << "value\tsubject_id\tdice\tjaccard\n";
    for (const auto& r : rows)
        for (const auto& m : r.per_subject)
            fr << r.value << '\t' << m.subject_id << '\t' << m.dice << '\t' << m.jaccard
               << '\n';
}

}  // namespace triview
