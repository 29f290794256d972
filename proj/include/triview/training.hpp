#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "triview/checkpoint.hpp"
#include "triview/loss.hpp"
#include "triview/model.hpp"
#include "triview/optimizer.hpp"
#include "triview/rng.hpp"
#include "triview/volume.hpp"

namespace triview {

struct TrainingHyperparams {
    int batch_size = 16;
    double initial_lr = 1e-5;
    int epochs = 30;
    int slices_per_epoch = 3000;
    int plateau_patience = 5;
    double lr_factor = 0.5;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ArgumentError("batch_size must be positive");
        if (epochs < 0) throw ArgumentError("epochs must be non-negative");
        if (slices_per_epoch < 1) throw ArgumentError("slices_per_epoch must be positive");
        if (plateau_patience < 1) throw ArgumentError("plateau_patience must be positive");
        if (!(initial_lr > 0.0)) throw ArgumentError("initial_lr must be positive");
        if (!(lr_factor > 0.0 && lr_factor < 1.0))
            throw ArgumentError("lr_factor must be in (0,1)");
    }
};

struct TrainState {
    int epochs_completed = 0;
    double lr = 0.0;  // learning rate for the next step
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int stagnation = 0;
    int best_epoch = 0;  // 1-based; 0 means no epoch finished
    double best_val = std::numeric_limits<double>::infinity();
};

// Validation-based model selection: strict improvement, ties keep the
// earliest minimum. Returns true when this epoch becomes the checkpoint.
inline bool update_best(TrainState& state, int epoch, double val_loss) {
    if (val_loss < state.best_val) {
        state.best_val = val_loss;
        state.best_epoch = epoch;
        return true;
    }
    return false;
}

// Plateau-on-training-loss schedule: halve the rate when the best training
// loss has not improved for `patience` consecutive epochs; an improving
// epoch resets the counter, and so does a halving.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, int patience, double factor)
        : lr_(initial_lr), patience_(patience), factor_(factor) {}

    // Feed one finished epoch's training loss; returns the rate for the
    // next epoch.
    double observe(double train_loss) {
        if (train_loss < best_) {
            best_ = train_loss;
            stagnant_ = 0;
        } else if (++stagnant_ >= patience_) {
            lr_ *= factor_;
            stagnant_ = 0;
        }
        return lr_;
    }

    double lr() const { return lr_; }
    int stagnant() const { return stagnant_; }

private:
    double lr_;
    int patience_;
    double factor_;
    double best_ = std::numeric_limits<double>::infinity();
    int stagnant_ = 0;
};

// Uniform epoch sampling: without replacement while n fits in the dataset,
// with replacement otherwise; grouped into batches, trailing partial batch
// kept. Deterministic for a given generator state.
inline std::vector<std::vector<std::size_t>> sample_epoch(std::size_t dataset_size,
                                                          int n, int batch_size,
                                                          rng_t& rng) {
    if (dataset_size == 0) throw ArgumentError("sample_epoch: empty dataset");
    if (n < 1) throw ArgumentError("sample_epoch: need a positive sample count");
    if (batch_size < 1) throw ArgumentError("sample_epoch: need a positive batch size");

    std::vector<std::size_t> picks;
    picks.reserve(static_cast<std::size_t>(n));
    if (static_cast<std::size_t>(n) <= dataset_size) {
        std::vector<std::size_t> idx(dataset_size);
        for (std::size_t i = 0; i < dataset_size; ++i) idx[i] = i;
        for (int i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i),
                                                            dataset_size - 1);
            std::swap(idx[static_cast<std::size_t>(i)], idx[pick(rng)]);
            picks.push_back(idx[static_cast<std::size_t>(i)]);
        }
    } else {
        std::uniform_int_distribution<std::size_t> pick(0, dataset_size - 1);
        for (int i = 0; i < n; ++i) picks.push_back(pick(rng));
    }

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < picks.size(); i += static_cast<std::size_t>(batch_size)) {
        const auto end = std::min(picks.size(), i + static_cast<std::size_t>(batch_size));
        batches.emplace_back(picks.begin() + static_cast<std::ptrdiff_t>(i),
                             picks.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

namespace detail {

inline void check_slices(const std::vector<SlicePair>& slices, Orientation r,
                         const char* which, bool need_labels) {
    if (slices.empty())
        throw ArgumentError(std::string("train: empty ") + which + " slice set");
    const index_t h = slices.front().image.dim(0);
    const index_t w = slices.front().image.dim(1);
    for (const auto& s : slices) {
        if (s.orientation != r)
            throw ArgumentError(std::string("train: ") + which + " slice for subject '" +
                                s.subject_id + "' is " + to_string(s.orientation) +
                                ", expected " + to_string(r));
        if (s.image.dim(0) != h || s.image.dim(1) != w)
            throw ArgumentError(std::string("train: inconsistent ") + which +
                                " slice shapes");
        if (need_labels && !s.label)
            throw ArgumentError(std::string("train: unlabeled ") + which + " slice");
    }
}

// Batch assembly: images to (B,1,H,W), labels one-hot to (B,labels,H,W).
inline void make_batch(const std::vector<SlicePair>& pool,
                       const std::vector<std::size_t>& indices, int labels,
                       tensor<float>& x, tensor<float>& t) {
    const auto b = static_cast<index_t>(indices.size());
    const index_t h = pool.front().image.dim(0), w = pool.front().image.dim(1);
    x = tensor<float>({b, 1, h, w});
    t = tensor<float>({b, labels, h, w});
    for (index_t s = 0; s < b; ++s) {
        const auto& pair = pool[indices[static_cast<std::size_t>(s)]];
        std::copy_n(pair.image.data(), h * w, x.data() + s * h * w);
        const std::uint8_t* lab = pair.label->data();
        for (index_t i = 0; i < h * w; ++i) {
            const int c = lab[i];
            t(s, c, i / w, i % w) = 1.0f;
        }
    }
}

// Mean of per-slice loss values over the full validation set, evaluated in
// inference mode (running BN statistics).
inline double validation_loss(Unet<float>& net, const std::vector<SlicePair>& val,
                              int batch_size, Workspace<float>& ws) {
    double total = 0.0;
    tensor<float> x, t;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < val.size();
         start += static_cast<std::size_t>(batch_size)) {
        const auto end =
            std::min(val.size(), start + static_cast<std::size_t>(batch_size));
        idx.clear();
        for (std::size_t i = start; i < end; ++i) idx.push_back(i);
        make_batch(val, idx, net.cfg.labels, x, t);
        const tensor<float> probs = net.forward(x, ws);
        const index_t per = probs.size() / probs.dim(0);
        for (index_t s = 0; s < probs.dim(0); ++s) {
            double inter = 0.0, denom = 0.0;
            const float* tp = t.data() + s * per;
            const float* pp = probs.data() + s * per;
            for (index_t v = 0; v < per; ++v) {
                inter += static_cast<double>(tp[v]) * pp[v];
                denom += static_cast<double>(tp[v]) * tp[v] +
                         static_cast<double>(pp[v]) * pp[v];
            }
            total += denom == 0.0 ? 0.0 : 1.0 - 2.0 * inter / denom;
        }
    }
    return total / static_cast<double>(val.size());
}

struct Snapshot {
    std::vector<std::vector<float>> params;
    std::vector<std::vector<float>> running;

    void capture(Unet<float>& net) {
        params.clear();
        running.clear();
        for (const auto& p : net.parameters())
            params.emplace_back(p.value->data(), p.value->data() + p.value->size());
        for (const auto* t : net.running_stats())
            running.emplace_back(t->data(), t->data() + t->size());
    }

    void restore(Unet<float>& net) const {
        auto ps = net.parameters();
        for (std::size_t i = 0; i < ps.size(); ++i)
            std::copy(params[i].begin(), params[i].end(), ps[i].value->data());
        auto rs = net.running_stats();
        for (std::size_t i = 0; i < rs.size(); ++i)
            std::copy(running[i].begin(), running[i].end(), rs[i]->data());
    }
};

}  // namespace detail

struct TrainResult {
    std::string checkpoint_path;
    TrainState state;
};

// Train one orientation's network: Adam on the soft Dice loss, plateau lr
// schedule driven by training loss, checkpoint selection by minimum
// validation loss.
inline TrainResult train_network(const std::vector<SlicePair>& train_set,
                                 const std::vector<SlicePair>& val_set,
                                 const NetworkConfig& cfg,
                                 const TrainingHyperparams& hyper, Orientation r,
                                 const std::string& checkpoint_path,
                                 const NormConvention& norm = {},
                                 const std::string& log_path = {},
                                 std::ostream* progress = nullptr) {
    cfg.validate();
    hyper.validate();
    if (hyper.epochs < 1) throw ArgumentError("train: epochs=0, nothing to train");
    detail::check_slices(train_set, r, "training", true);
    detail::check_slices(val_set, r, "validation", true);

    const std::uint64_t net_seed =
        derive_seed(hyper.seed, 0x11u + static_cast<unsigned>(r));
    Unet<float> net = Unet<float>::build(cfg, net_seed);
    net.set_train(true);
    Adam<float> opt(net.parameters());
    PlateauScheduler sched(hyper.initial_lr, hyper.plateau_patience, hyper.lr_factor);
    rng_t sample_rng(derive_seed(hyper.seed, 0x51u + static_cast<unsigned>(r)));

    Workspace<float> ws;
    UnetTrace<float> tr;
    detail::Snapshot best;
    TrainState state;
    state.lr = hyper.initial_lr;

    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path, std::ios::trunc);
        if (!log) throw IoError("cannot write training log '" + log_path + "'");
        log << "epoch\tlr\ttrain_loss\tval_loss\n";
    }

    tensor<float> x, t, grad;
    for (int epoch = 1; epoch <= hyper.epochs; ++epoch) {
        const double epoch_lr = state.lr;
        const auto plan = sample_epoch(train_set.size(), hyper.slices_per_epoch,
                                       hyper.batch_size, sample_rng);
        double loss_sum = 0.0;
        std::size_t n_slices = 0;
        net.set_train(true);
        for (const auto& batch : plan) {
            detail::make_batch(train_set, batch, cfg.labels, x, t);
            const tensor<float>& probs = net.forward_train(x, ws, tr);
            const double loss = soft_dice_loss(t, probs, &grad);
            if (!std::isfinite(loss))
                throw TrainingError("train: non-finite loss at epoch " +
                                    std::to_string(epoch) + " (" + to_string(r) + ")");
            net.zero_grad();
            net.backward(grad, ws, tr);
            opt.step(epoch_lr);
            loss_sum += loss * static_cast<double>(batch.size());
            n_slices += batch.size();
        }
        const double train_loss = loss_sum / static_cast<double>(n_slices);

        net.set_train(false);
        const double val_loss =
            detail::validation_loss(net, val_set, hyper.batch_size, ws);
        if (!std::isfinite(val_loss))
            throw TrainingError("train: non-finite validation loss at epoch " +
                                std::to_string(epoch) + " (" + to_string(r) + ")");

        state.epochs_completed = epoch;
        state.train_loss.push_back(train_loss);
        state.val_loss.push_back(val_loss);
        state.lr = sched.observe(train_loss);
        state.stagnation = sched.stagnant();
        if (update_best(state, epoch, val_loss)) best.capture(net);
        if (log)
            log << epoch << '\t' << epoch_lr << '\t' << train_loss << '\t' << val_loss
                << '\n';
        if (progress)
            (*progress) << "[" << to_string(r) << "] epoch " << epoch << "/"
                        << hyper.epochs << " lr " << epoch_lr << " train " << train_loss
                        << " val " << val_loss << "\n";
    }

    best.restore(net);
    net.set_train(false);
    CheckpointMeta meta{cfg, r, net_seed, norm};
    save_checkpoint(net, meta, checkpoint_path);
    return {checkpoint_path, state};
}

}  // namespace triview
