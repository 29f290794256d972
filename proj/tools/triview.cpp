// triview command line: train / predict / evaluate / sweep / staple / phantom.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "triview/triview.hpp"

namespace fs = std::filesystem;
using namespace triview;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct CommonOpts {
    std::string config_path;
    std::string device = "cpu";
    bool deterministic = false;
    RunConfig rc;

    // CLI override staging; applied on top of config-file values.
    int kernel_size = -1, levels = -1, base_filters = -1, convs_per_level = -1;
    int batch_size = -1, epochs = -1, slices_per_epoch = -1, plateau_patience = -1;
    double learning_rate = -1, lr_factor = -1;
    long long seed = -1;
    int conform_size = -1;
    double conform_spacing = -1;
    double w_ax = -1, w_cor = -1, w_sag = -1;

    void add_flags(CLI::App* cmd, bool with_training) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--device", device, "compute device (cpu)");
        cmd->add_flag("--deterministic", deterministic,
                      "force deterministic execution (the CPU backend always is)");
        cmd->add_option("--seed", seed, "master RNG seed");
        cmd->add_option("--kernel-size", kernel_size, "conv kernel edge (odd)");
        cmd->add_option("--levels", levels, "number of pooling layers");
        cmd->add_option("--base-filters", base_filters, "filters at level 1");
        cmd->add_option("--convs-per-level", convs_per_level, "conv blocks per level");
        cmd->add_option("--conform-size", conform_size, "conformed cube edge (voxels)");
        cmd->add_option("--conform-spacing", conform_spacing, "conformed voxel size (mm)");
        cmd->add_option("--weight-axial", w_ax, "fusion weight, axial view");
        cmd->add_option("--weight-coronal", w_cor, "fusion weight, coronal view");
        cmd->add_option("--weight-sagittal", w_sag, "fusion weight, sagittal view");
        if (with_training) {
            cmd->add_option("--batch-size", batch_size, "training batch size");
            cmd->add_option("--learning-rate", learning_rate, "initial learning rate");
            cmd->add_option("--epochs", epochs, "training epochs");
            cmd->add_option("--slices-per-epoch", slices_per_epoch,
                            "slice pairs sampled per epoch");
            cmd->add_option("--plateau-patience", plateau_patience,
                            "epochs without improvement before halving the rate");
            cmd->add_option("--lr-factor", lr_factor, "rate reduction factor");
        }
    }

    void resolve() {
        if (device != "cpu")
            throw ArgumentError("unsupported device '" + device + "' (available: cpu)");
        if (!config_path.empty()) rc = parse_run_config(config_path);
        if (kernel_size >= 0) rc.net.kernel_size = kernel_size;
        if (levels >= 0) rc.net.levels = levels;
        if (base_filters >= 0) rc.net.base_filters = base_filters;
        if (convs_per_level >= 0) rc.net.convs_per_level = convs_per_level;
        if (batch_size >= 0) rc.hyper.batch_size = batch_size;
        if (epochs >= 0) rc.hyper.epochs = epochs;
        if (slices_per_epoch >= 0) rc.hyper.slices_per_epoch = slices_per_epoch;
        if (plateau_patience >= 0) rc.hyper.plateau_patience = plateau_patience;
        if (learning_rate >= 0) rc.hyper.initial_lr = learning_rate;
        if (lr_factor >= 0) rc.hyper.lr_factor = lr_factor;
        if (seed >= 0) rc.hyper.seed = static_cast<std::uint64_t>(seed);
        if (conform_size > 0)
            rc.conform_shape = {conform_size, conform_size, conform_size};
        if (conform_spacing > 0)
            rc.conform_spacing = {conform_spacing, conform_spacing, conform_spacing};
        if (w_ax >= 0) rc.weights.axial = w_ax;
        if (w_cor >= 0) rc.weights.coronal = w_cor;
        if (w_sag >= 0) rc.weights.sagittal = w_sag;
    }
};

HarnessOptions harness_options(const RunConfig& rc, const std::string& work_dir,
                               int val_count) {
    HarnessOptions opts;
    opts.conform_shape = rc.conform_shape;
    opts.conform_spacing = rc.conform_spacing;
    opts.weights = rc.weights;
    opts.norm = rc.norm;
    opts.val_count = val_count;
    opts.work_dir = work_dir;
    opts.progress = &std::cout;
    return opts;
}

// Deterministic subject split used by train/sweep; order shuffled by seed.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    rng_t rng(derive_seed(seed, 0xC0));
    for (std::size_t i = n; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(idx[i - 1], idx[pick(rng)]);
    }
    return idx;
}

int cmd_train(CommonOpts& common, const std::string& data_dir,
              const std::string& output_dir, int val_count) {
    common.resolve();
    const auto subjects = load_cohort(data_dir);
    const int n_val =
        val_count > 0 ? val_count : std::max<int>(1, static_cast<int>(subjects.size() / 6));
    if (n_val >= static_cast<int>(subjects.size()))
        throw ArgumentError("validation split leaves no training subjects");

    const auto order = shuffled_indices(subjects.size(), common.rc.hyper.seed);
    std::vector<Subject> train_s, val_s;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < static_cast<std::size_t>(n_val) ? val_s : train_s)
            .push_back(subjects[order[i]]);

    std::cout << "training on " << train_s.size() << " subjects, validating on "
              << val_s.size() << "\n";
    const auto train_slices = collect_slices(train_s, common.rc.conform_shape,
                                             common.rc.conform_spacing, common.rc.norm);
    const auto val_slices = collect_slices(val_s, common.rc.conform_shape,
                                           common.rc.conform_spacing, common.rc.norm);
    auto result = train_all(train_slices, val_slices, common.rc.net, common.rc.hyper,
                            output_dir, common.rc.weights, common.rc.norm,
                            common.rc.conform_shape, common.rc.conform_spacing,
                            &std::cout);
    for (Orientation r : all_orientations()) {
        const auto& st = result.states[static_cast<std::size_t>(r)];
        std::cout << to_string(r) << ": best epoch " << st.best_epoch << " (val loss "
                  << st.best_val << ")\n";
    }
    std::cout << "bundle written to " << output_dir << "\n";
    return kExitOk;
}

int cmd_predict(CommonOpts& common, const std::string& bundle_dir,
                const std::string& input_path, const std::string& output_path,
                const std::string& prob_path, const std::string& qc_dir,
                bool conformed_grid, int batch_size, int connectivity) {
    common.resolve();
    const auto t0 = std::chrono::steady_clock::now();
    const ModelBundle bundle = load_bundle(bundle_dir);
    const Volume raw = load_volume(input_path);

    StripOptions opts;
    opts.batch_size = batch_size;
    opts.connectivity = connectivity;
    opts.mask_on_native_grid = !conformed_grid;
    const StripResult res = skullstrip(bundle, raw, opts);

    if (!output_path.empty()) {
        if (const auto dir = fs::path(output_path).parent_path(); !dir.empty())
            fs::create_directories(dir);
        save_volume(res.mask, output_path);
    }
    if (!prob_path.empty()) {
        // Brain-channel probability as a float volume on the conformed grid.
        Volume prob;
        const auto sh = res.fused.shape();
        prob.data = tensor<float>({sh[0], sh[1], sh[2]});
        prob.spacing = res.fused.spacing;
        prob.axis_codes = res.fused.axis_codes;
        const index_t c = res.fused.channels();
        for (index_t i = 0; i < prob.data.size(); ++i)
            prob.data(i) = res.fused.data(i * c + (c - 1));
        save_volume(prob, prob_path);
    }
    if (!qc_dir.empty()) {
        const Volume conformed =
            conform(raw, bundle.conform_shape, bundle.conform_spacing);
        write_qc_overlays(reorient(conformed, Orientation::coronal), res.mask_conformed,
                          qc_dir);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (res.empty_mask_warning)
        std::cerr << "warning: empty brain mask for '" << input_path << "'\n";
    std::cout << "mask written to " << output_path << " (" << secs << " s)\n";
    return kExitOk;
}

std::vector<Subject> load_mask_dir(const std::string& root) {
    auto subjects = load_cohort(root, false);
    // Accept either image+mask cohorts or mask-only directories.
    for (auto& s : subjects)
        if (!s.has_mask())
            throw IoError("subject '" + s.id + "': missing mask.nii[.gz] in '" + root + "'");
    return subjects;
}

int cmd_evaluate_compare(const std::string& pred_dir, const std::string& truth_dir,
                         const std::string& output_dir) {
    const auto pred = load_mask_dir(pred_dir);
    const auto truth = load_mask_dir(truth_dir);
    std::vector<MaskMetrics> metrics;
    for (const auto& p : pred) {
        const Subject* t = nullptr;
        for (const auto& cand : truth)
            if (cand.id == p.id) t = &cand;
        if (!t) throw ArgumentError("subject '" + p.id + "' missing from truth directory");
        metrics.push_back(mask_metrics(p.id, p.mask, t->mask));
    }
    fs::create_directories(output_dir);
    write_metrics_table(metrics, (fs::path(output_dir) / "metrics.tsv").string());
    const auto summary = summarize(metrics);
    std::ostringstream block;
    print_summary(block, "dice", summary.dice);
    print_summary(block, "jaccard", summary.jaccard);
    std::ofstream((fs::path(output_dir) / "summary.txt").string()) << block.str();
    std::cout << block.str();
    return kExitOk;
}

int cmd_evaluate_loocv(CommonOpts& common, const std::string& data_dir,
                       const std::string& output_dir, int val_count) {
    common.resolve();
    const auto subjects = load_cohort(data_dir);
    fs::create_directories(output_dir);
    auto opts = harness_options(common.rc, (fs::path(output_dir) / "work").string(),
                                val_count);
    const LoocvResult res = loocv(subjects, common.rc.net, common.rc.hyper, opts);

    write_metrics_table(res.metrics, (fs::path(output_dir) / "metrics.tsv").string());
    std::ostringstream block;
    for (const auto& fold : res.folds)
        if (fold.failed)
            block << "fold " << fold.subject_id << " FAILED: " << fold.error << "\n";
    if (!res.metrics.empty()) {
        print_summary(block, "dice", res.summary.dice);
        print_summary(block, "jaccard", res.summary.jaccard);
    }
    if (!res.complete) block << "WARNING: run incomplete, "
                             << res.folds.size() - res.metrics.size() << " fold(s) failed\n";
    std::ofstream((fs::path(output_dir) / "summary.txt").string()) << block.str();
    std::cout << block.str();
    return kExitOk;
}

int cmd_sweep(CommonOpts& common, const std::string& data_dir,
              const std::string& output_dir, const std::string& param,
              const std::vector<int>& values, int train_count, int val_count,
              int test_count) {
    common.resolve();
    const auto subjects = load_cohort(data_dir);
    const auto order = shuffled_indices(subjects.size(), common.rc.hyper.seed);

    SweepSpec spec;
    spec.parameter = param;
    spec.values = values;
    spec.base = common.rc.net;
    std::size_t at = 0;
    for (int i = 0; i < train_count && at < order.size(); ++i) spec.train_idx.push_back(order[at++]);
    for (int i = 0; i < val_count && at < order.size(); ++i) spec.val_idx.push_back(order[at++]);
    const std::size_t rest = order.size() - at;
    const std::size_t n_test = test_count > 0 ? static_cast<std::size_t>(test_count) : rest;
    for (std::size_t i = 0; i < n_test && at < order.size(); ++i) spec.test_idx.push_back(order[at++]);

    fs::create_directories(output_dir);
    auto opts = harness_options(common.rc, (fs::path(output_dir) / "work").string(), 0);
    const auto rows = sweep(subjects, spec, common.rc.hyper, opts);
    write_boxplot_data(rows, (fs::path(output_dir) / "boxplot.tsv").string(),
                       (fs::path(output_dir) / "per_subject.tsv").string());
    std::cout << "value\tmin\tq1\tmedian\tq3\tmax\n";
    for (const auto& r : rows)
        std::cout << r.value << '\t' << r.dice_stats.min << '\t' << r.dice_stats.q1 << '\t'
                  << r.dice_stats.median << '\t' << r.dice_stats.q3 << '\t'
                  << r.dice_stats.max << '\n';
    return kExitOk;
}

int cmd_staple(const std::vector<std::string>& mask_paths, const std::string& output_dir,
               const std::string& candidate_path, bool exclude_candidate, double init_p,
               double init_q, double tol, int max_iter) {
    std::vector<LabelVolume> raters;
    for (const auto& p : mask_paths) raters.push_back(load_label_volume(p));
    StapleOptions opts{init_p, init_q, tol, max_iter};

    fs::create_directories(output_dir);
    if (!candidate_path.empty()) {
        const LabelVolume candidate = load_label_volume(candidate_path);
        const auto m = compare_to_consensus(candidate, raters, !exclude_candidate, opts);
        std::ofstream f((fs::path(output_dir) / "consensus_metrics.tsv").string());
        f << "dice\tjaccard\n" << m.dice << '\t' << m.jaccard << '\n';
        std::cout << "candidate vs consensus: dice " << m.dice << " jaccard " << m.jaccard
                  << "\n";
    }

    const StapleResult res = staple(raters, opts);
    save_volume(res.threshold(0.5), (fs::path(output_dir) / "consensus.nii.gz").string());
    Volume w;
    w.data = tensor<float>({res.consensus.dim(0), res.consensus.dim(1), res.consensus.dim(2)});
    w.spacing = res.spacing;
    w.axis_codes = res.axis_codes;
    for (index_t i = 0; i < w.data.size(); ++i)
        w.data(i) = static_cast<float>(res.consensus(i));
    save_volume(w, (fs::path(output_dir) / "consensus_prob.nii.gz").string());

    std::ofstream f((fs::path(output_dir) / "rater_stats.tsv").string());
    f << "rater\tsensitivity\tspecificity\n";
    for (std::size_t j = 0; j < raters.size(); ++j)
        f << mask_paths[j] << '\t' << res.sensitivity[j] << '\t' << res.specificity[j]
          << '\n';
    std::cout << "staple: " << res.iterations << " iterations, "
              << (res.converged ? "converged" : "max_iter reached") << "\n";
    return kExitOk;
}

int cmd_phantom(const std::string& output_dir, int count, int size, long long seed,
                double noise, double bias) {
    PhantomSpec base;
    base.size = size;
    base.noise_sigma = noise;
    base.bias_strength = bias;
    const auto cohort = make_cohort(count, base, static_cast<std::uint64_t>(seed));
    write_cohort(cohort, output_dir);
    std::cout << "wrote " << cohort.size() << " phantom subjects to " << output_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"triview: multi-view 2D CNN skullstripping toolkit"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train the three orientation networks");
    CommonOpts train_opts;
    std::string train_data, train_out;
    int train_val_count = 0;
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--output-dir", train_out, "bundle output directory")->required();
    train->add_option("--val-count", train_val_count, "subjects held out for validation");
    train_opts.add_flags(train, true);

    // predict
    auto* predict = app.add_subcommand("predict", "skullstrip one volume");
    CommonOpts predict_opts;
    std::string pr_bundle, pr_input, pr_output, pr_prob, pr_qc;
    bool pr_conformed = false;
    int pr_batch = 8, pr_conn = 26;
    predict->add_option("--bundle", pr_bundle, "bundle directory")->required();
    predict->add_option("--input", pr_input, "input volume (.nii/.nii.gz)")->required();
    predict->add_option("--output", pr_output, "output mask path")->required();
    predict->add_option("--probability", pr_prob, "write fused brain probability here");
    predict->add_option("--qc-dir", pr_qc, "write contour overlays here");
    predict->add_flag("--conformed-grid", pr_conformed,
                      "emit the mask on the conformed grid instead of the native one");
    predict->add_option("--batch-size", pr_batch, "slices per forward batch");
    predict->add_option("--connectivity", pr_conn, "component connectivity (6/18/26)");
    predict->add_option("--device", predict_opts.device, "compute device (cpu)");
    predict->add_flag("--deterministic", predict_opts.deterministic,
                      "force deterministic execution");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score masks or run LOOCV");
    CommonOpts eval_opts;
    std::string ev_pred, ev_truth, ev_data, ev_out;
    bool ev_loocv = false;
    int ev_val_count = 0;
    evaluate->add_option("--pred-dir", ev_pred, "predicted-mask cohort directory");
    evaluate->add_option("--truth-dir", ev_truth, "ground-truth cohort directory");
    evaluate->add_flag("--loocv", ev_loocv, "leave-one-out cross-validation harness");
    evaluate->add_option("--data", ev_data, "labeled dataset directory (LOOCV)");
    evaluate->add_option("--output-dir", ev_out, "report directory")->required();
    evaluate->add_option("--val-count", ev_val_count, "validation subjects per fold");
    eval_opts.add_flags(evaluate, true);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "one-at-a-time parameter sweep");
    CommonOpts sweep_opts;
    std::string sw_data, sw_out, sw_param;
    std::vector<int> sw_values;
    int sw_train = 0, sw_val = 0, sw_test = 0;
    sweep_cmd->add_option("--data", sw_data, "labeled dataset directory")->required();
    sweep_cmd->add_option("--output-dir", sw_out, "report directory")->required();
    sweep_cmd
        ->add_option("--param", sw_param,
                     "kernel_size | levels | base_filters | convs_per_level")
        ->required();
    sweep_cmd->add_option("--values", sw_values, "values to sweep")->required();
    sweep_cmd->add_option("--train-count", sw_train, "training subjects")->required();
    sweep_cmd->add_option("--val-count", sw_val, "validation subjects")->required();
    sweep_cmd->add_option("--test-count", sw_test, "test subjects (default: the rest)");
    sweep_opts.add_flags(sweep_cmd, true);

    // staple
    auto* staple_cmd = app.add_subcommand("staple", "consensus fusion of binary masks");
    std::vector<std::string> st_masks;
    std::string st_out, st_candidate;
    bool st_exclude = false;
    double st_p = 0.99, st_q = 0.99, st_tol = 1e-6;
    int st_iter = 100;
    staple_cmd->add_option("masks", st_masks, "rater mask files")->required();
    staple_cmd->add_option("--output-dir", st_out, "report directory")->required();
    staple_cmd->add_option("--candidate", st_candidate,
                           "score this mask against the consensus");
    staple_cmd->add_flag("--exclude-candidate", st_exclude,
                         "leave the candidate out of the consensus");
    staple_cmd->add_option("--init-p", st_p, "initial sensitivity");
    staple_cmd->add_option("--init-q", st_q, "initial specificity");
    staple_cmd->add_option("--tol", st_tol, "convergence tolerance on max |dW|");
    staple_cmd->add_option("--max-iter", st_iter, "iteration cap");

    // phantom
    auto* phantom_cmd = app.add_subcommand("phantom", "generate a synthetic cohort");
    std::string ph_out;
    int ph_count = 20, ph_size = 64;
    long long ph_seed = 0;
    double ph_noise = 0.02, ph_bias = 0.2;
    phantom_cmd->add_option("--output-dir", ph_out, "cohort directory")->required();
    phantom_cmd->add_option("--count", ph_count, "number of subjects");
    phantom_cmd->add_option("--size", ph_size, "cube edge (voxels)");
    phantom_cmd->add_option("--seed", ph_seed, "master seed");
    phantom_cmd->add_option("--noise", ph_noise, "additive noise sigma");
    phantom_cmd->add_option("--bias", ph_bias, "multiplicative bias amplitude");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train->parsed()) return cmd_train(train_opts, train_data, train_out, train_val_count);
        if (predict->parsed()) {
            if (predict_opts.device != "cpu")
                throw ArgumentError("unsupported device '" + predict_opts.device + "'");
            return cmd_predict(predict_opts, pr_bundle, pr_input, pr_output, pr_prob,
                               pr_qc, pr_conformed, pr_batch, pr_conn);
        }
        if (evaluate->parsed()) {
            if (ev_loocv) {
                if (ev_data.empty())
                    throw ArgumentError("evaluate --loocv requires --data");
                return cmd_evaluate_loocv(eval_opts, ev_data, ev_out, ev_val_count);
            }
            if (ev_pred.empty() || ev_truth.empty())
                throw ArgumentError("evaluate requires --pred-dir and --truth-dir "
                                    "(or --loocv with --data)");
            return cmd_evaluate_compare(ev_pred, ev_truth, ev_out);
        }
        if (sweep_cmd->parsed())
            return cmd_sweep(sweep_opts, sw_data, sw_out, sw_param, sw_values, sw_train,
                             sw_val, sw_test);
        if (staple_cmd->parsed())
            return cmd_staple(st_masks, st_out, st_candidate, st_exclude, st_p, st_q,
                              st_tol, st_iter);
        if (phantom_cmd->parsed())
            return cmd_phantom(ph_out, ph_count, ph_size, ph_seed, ph_noise, ph_bias);
    } catch (const ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
