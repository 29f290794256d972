#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "triview/errors.hpp"
#include "triview/metrics.hpp"
#include "triview/volume.hpp"

namespace triview {

// Binary-label STAPLE: EM over a voxelwise consensus probability W and
// per-rater sensitivity p_j / specificity q_j. The foreground prior is the
// mean rater foreground fraction, held fixed across iterations.
struct StapleResult {
    tensor<double> consensus;  // W, shape (s0,s1,s2)
    std::array<double, 3> spacing{1, 1, 1};
    AxisCodes axis_codes = canonical_codes(Orientation::coronal);
    std::vector<double> sensitivity;  // p_j
    std::vector<double> specificity;  // q_j
    int iterations = 0;
    bool converged = false;

    LabelVolume threshold(double level = 0.5) const {
        LabelVolume out;
        out.data = tensor<std::uint8_t>(
            {consensus.dim(0), consensus.dim(1), consensus.dim(2)});
        out.spacing = spacing;
        out.axis_codes = axis_codes;
        for (index_t i = 0; i < consensus.size(); ++i)
            out.data(i) = consensus(i) > level ? 1 : 0;
        return out;
    }
};

struct StapleOptions {
    double init_p = 0.99;
    double init_q = 0.99;
    double tol = 1e-6;  // on max |delta W|
    int max_iter = 100;
};

inline StapleResult staple(const std::vector<LabelVolume>& raters,
                           const StapleOptions& opts = {}) {
    if (raters.empty()) throw ArgumentError("staple: empty rater list");
    const auto n_raters = raters.size();
    for (const auto& r : raters)
        if (!same_grid(raters.front(), r))
            throw ArgumentError("staple: raters disagree on geometry");
    if (!(opts.init_p > 0.0 && opts.init_p < 1.0 && opts.init_q > 0.0 &&
          opts.init_q < 1.0))
        throw ArgumentError("staple: init_p/init_q must be in (0,1)");
    if (opts.max_iter < 1) throw ArgumentError("staple: max_iter must be positive");

    const index_t n = raters.front().data.size();
    StapleResult res;
    res.consensus = tensor<double>({raters.front().data.dim(0),
                                    raters.front().data.dim(1),
                                    raters.front().data.dim(2)});
    res.spacing = raters.front().spacing;
    res.axis_codes = raters.front().axis_codes;
    res.sensitivity.assign(n_raters, opts.init_p);
    res.specificity.assign(n_raters, opts.init_q);

    double fg = 0.0;
    for (const auto& r : raters)
        for (index_t i = 0; i < n; ++i) fg += r.data(i);
    const double prior = fg / (static_cast<double>(n_raters) * static_cast<double>(n));

    constexpr double kClamp = 1e-7;
    std::vector<double> prev(static_cast<std::size_t>(n), -1.0);
    for (int it = 1; it <= opts.max_iter; ++it) {
        res.iterations = it;
        // E-step.
        double max_delta = 0.0;
        for (index_t v = 0; v < n; ++v) {
            double a = prior, b = 1.0 - prior;
            for (std::size_t j = 0; j < n_raters; ++j) {
                const int d = raters[j].data(v);
                const double p = res.sensitivity[j], q = res.specificity[j];
                a *= d ? p : 1.0 - p;
                b *= d ? 1.0 - q : q;
            }
            const double w = a + b > 0.0 ? a / (a + b) : prior;
            max_delta = std::max(max_delta, std::abs(w - prev[static_cast<std::size_t>(v)]));
            prev[static_cast<std::size_t>(v)] = w;
            res.consensus(v) = w;
        }
        // M-step.
        double sum_w = 0.0;
        for (index_t v = 0; v < n; ++v) sum_w += res.consensus(v);
        const double sum_not_w = static_cast<double>(n) - sum_w;
        for (std::size_t j = 0; j < n_raters; ++j) {
            double wd = 0.0, nwnd = 0.0;
            for (index_t v = 0; v < n; ++v) {
                const int d = raters[j].data(v);
                if (d)
                    wd += res.consensus(v);
                else
                    nwnd += 1.0 - res.consensus(v);
            }
            if (sum_w > 0.0)
                res.sensitivity[j] = std::clamp(wd / sum_w, kClamp, 1.0 - kClamp);
            if (sum_not_w > 0.0)
                res.specificity[j] = std::clamp(nwnd / sum_not_w, kClamp, 1.0 - kClamp);
        }
        if (it > 1 && max_delta < opts.tol) {
            res.converged = true;
            break;
        }
    }
    return res;
}

// STAPLE the candidate together with the other raters (the candidate is a
// rater too; pass include_candidate=false to consense only the others),
// threshold the consensus at 0.5 and score the candidate against it.
inline MaskMetrics compare_to_consensus(const LabelVolume& candidate,
                                        const std::vector<LabelVolume>& others,
                                        bool include_candidate = true,
                                        const StapleOptions& opts = {}) {
    std::vector<LabelVolume> raters;
    if (include_candidate) raters.push_back(candidate);
    raters.insert(raters.end(), others.begin(), others.end());
    const StapleResult consensus = staple(raters, opts);
    return mask_metrics("candidate-vs-consensus", candidate, consensus.threshold(0.5));
}

}  // namespace triview
