#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "triview/layers.hpp"
#include "triview/rng.hpp"
#include "triview/tensor.hpp"

namespace triview {

// The four architecture hyperparameters plus channel counts; fully
// determines the network graph.
struct NetworkConfig {
    int kernel_size = 7;      // conv kernel edge, odd
    int levels = 6;           // number of pooling layers
    int base_filters = 32;    // filters at level 1; level l has base_filters*2^(l-1)
    int convs_per_level = 3;  // conv+BN+ReLU blocks per level
    int labels = 2;
    int in_channels = 1;

    void validate() const {
        if (kernel_size < 1 || kernel_size % 2 == 0)
            throw ConfigError("kernel_size must be odd and >= 1");
        if (levels < 1) throw ConfigError("levels must be >= 1");
        if (base_filters < 1) throw ConfigError("base_filters must be >= 1");
        if (convs_per_level < 1) throw ConfigError("convs_per_level must be >= 1");
        if (labels < 2) throw ConfigError("labels must be >= 2");
        if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
    }

    // level is 1-based; level levels+1 is the bottleneck.
    int filters_at(int level) const { return base_filters << (level - 1); }

    bool operator==(const NetworkConfig&) const = default;
};

// Closed-form count of trainable scalars: each conv contributes
// k^2*C_in*C_out + C_out, each BN 2*C_out, the 1x1 head C_in*labels + labels.
inline index_t parameter_count(const NetworkConfig& cfg) {
    cfg.validate();
    const index_t k2 = static_cast<index_t>(cfg.kernel_size) * cfg.kernel_size;
    index_t total = 0;
    auto block_chain = [&](index_t in_c, index_t out_c, int blocks) {
        for (int j = 0; j < blocks; ++j) {
            total += k2 * in_c * out_c + out_c;  // conv
            total += 2 * out_c;                  // BN scale/shift
            in_c = out_c;
        }
    };
    index_t prev = cfg.in_channels;
    for (int l = 1; l <= cfg.levels + 1; ++l) {
        const index_t f = cfg.filters_at(l);
        block_chain(prev, f, cfg.convs_per_level);
        prev = f;
    }
    for (int l = cfg.levels; l >= 1; --l) {
        const index_t f = cfg.filters_at(l);
        const index_t f_below = cfg.filters_at(l + 1);
        block_chain(f + f_below, f, cfg.convs_per_level);
    }
    total += static_cast<index_t>(cfg.base_filters) * cfg.labels + cfg.labels;
    return total;
}

template <class T>
struct ConvBlock {
    nn::Conv2d<T> conv;
    nn::BatchNorm2d<T> bn;
};

template <class T>
struct BlockTrace {
    tensor<T> conv_out;  // BN input
    tensor<T> out;       // post-ReLU output (= next block's input)
    std::vector<double> bn_mean, bn_invstd;
};

template <class T>
struct UnetTrace {
    tensor<T> input;
    std::vector<std::vector<BlockTrace<T>>> enc;  // [levels+1][convs_per_level]
    std::vector<tensor<std::uint8_t>> pool_idx;   // [levels]
    std::vector<tensor<T>> pooled;                // [levels]
    std::vector<tensor<T>> concat;                // [levels]; index l-1 = decoder level l input
    std::vector<std::vector<BlockTrace<T>>> dec;  // [levels]; index l-1 = decoder level l
    tensor<T> probs;
};

// Encoder/decoder segmentation network. Encoder levels 1..L+1 of
// convs_per_level x [conv(k,same) -> BN -> ReLU] with 2x2 max pooling after
// levels 1..L; nearest-neighbor 2x upsampling, skip concatenation and a
// symmetric block chain on the way up; 1x1 conv head with per-pixel softmax.
template <class T>
class Unet {
public:
    NetworkConfig cfg;
    std::uint64_t init_seed = 0;

    std::vector<std::vector<ConvBlock<T>>> enc;  // [levels+1]
    std::vector<std::vector<ConvBlock<T>>> dec;  // [levels]; dec[l-1] = level l
    nn::Conv2d<T> head;

    Unet() = default;

    static Unet build(const NetworkConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Unet net;
        net.cfg = cfg;
        net.init_seed = seed;
        rng_t rng(seed);
        auto make_chain = [&](int in_c, int out_c) {
            std::vector<ConvBlock<T>> chain(static_cast<std::size_t>(cfg.convs_per_level));
            for (auto& blk : chain) {
                blk.conv.init(in_c, out_c, cfg.kernel_size, rng);
                blk.bn.init(out_c);
                in_c = out_c;
            }
            return chain;
        };
        int prev = cfg.in_channels;
        for (int l = 1; l <= cfg.levels + 1; ++l) {
            net.enc.push_back(make_chain(prev, cfg.filters_at(l)));
            prev = cfg.filters_at(l);
        }
        net.dec.resize(static_cast<std::size_t>(cfg.levels));
        for (int l = cfg.levels; l >= 1; --l)
            net.dec[static_cast<std::size_t>(l - 1)] =
                make_chain(cfg.filters_at(l) + cfg.filters_at(l + 1), cfg.filters_at(l));
        net.head.init(cfg.base_filters, cfg.labels, 1, rng);
        return net;
    }

    bool train_mode() const { return train_mode_; }
    void set_train(bool on) { train_mode_ = on; }

    // Fixed traversal order shared by the optimizer and the checkpoint:
    // encoder levels ascending, decoder in execution order (level L..1),
    // head last; within a block conv.w, conv.b, bn.gamma, bn.beta.
    struct ParamRef {
        tensor<T>* value;
        tensor<T>* grad;
    };

    std::vector<ParamRef> parameters() {
        std::vector<ParamRef> out;
        auto add_chain = [&](std::vector<ConvBlock<T>>& chain) {
            for (auto& blk : chain) {
                out.push_back({&blk.conv.w, &blk.conv.gw});
                out.push_back({&blk.conv.b, &blk.conv.gb});
                out.push_back({&blk.bn.gamma, &blk.bn.g_gamma});
                out.push_back({&blk.bn.beta, &blk.bn.g_beta});
            }
        };
        for (auto& chain : enc) add_chain(chain);
        for (int l = cfg.levels; l >= 1; --l) add_chain(dec[static_cast<std::size_t>(l - 1)]);
        out.push_back({&head.w, &head.gw});
        out.push_back({&head.b, &head.gb});
        return out;
    }

    std::vector<tensor<T>*> running_stats() {
        std::vector<tensor<T>*> out;
        auto add_chain = [&](std::vector<ConvBlock<T>>& chain) {
            for (auto& blk : chain) {
                out.push_back(&blk.bn.run_mean);
                out.push_back(&blk.bn.run_var);
            }
        };
        for (auto& chain : enc) add_chain(chain);
        for (int l = cfg.levels; l >= 1; --l) add_chain(dec[static_cast<std::size_t>(l - 1)]);
        return out;
    }

    index_t trainable_scalars() {
        index_t n = 0;
        for (const auto& p : parameters()) n += p.value->size();
        return n;
    }

    void zero_grad() {
        for (auto& chain : enc)
            for (auto& blk : chain) {
                blk.conv.zero_grad();
                blk.bn.zero_grad();
            }
        for (auto& chain : dec)
            for (auto& blk : chain) {
                blk.conv.zero_grad();
                blk.bn.zero_grad();
            }
        head.zero_grad();
    }

    void check_input(const tensor<T>& x) const {
        if (x.rank() != 4) throw ArgumentError("forward: expected (N,C,H,W) batch");
        if (x.dim(1) != cfg.in_channels)
            throw ArgumentError("forward: expected " + std::to_string(cfg.in_channels) +
                                " input channels, got " + std::to_string(x.dim(1)));
        const index_t div = index_t{1} << cfg.levels;
        if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
            throw ConfigError("forward: spatial size " + std::to_string(x.dim(2)) + "x" +
                              std::to_string(x.dim(3)) + " not divisible by 2^" +
                              std::to_string(cfg.levels));
        const T* p = x.data();
        for (index_t i = 0; i < x.size(); ++i)
            if (!std::isfinite(static_cast<double>(p[i])))
                throw ArgumentError("forward: non-finite input value");
    }

    // Inference-mode forward (running BN statistics): a pure function of
    // (weights, input). Returns per-pixel class probabilities.
    tensor<T> forward(const tensor<T>& x, Workspace<T>& ws) const {
        check_input(x);
        std::vector<tensor<T>> skips;
        tensor<T> cur = x, t1, t2;
        for (int l = 0; l <= cfg.levels; ++l) {
            for (const auto& blk : enc[static_cast<std::size_t>(l)]) {
                blk.conv.forward(cur, t1, ws);
                blk.bn.forward_infer(t1, cur);
                nn::relu_inplace(cur);
            }
            if (l < cfg.levels) {
                skips.push_back(std::move(cur));
                tensor<std::uint8_t> idx;
                nn::maxpool2_forward(skips.back(), cur, idx);
            }
        }
        for (int l = cfg.levels; l >= 1; --l) {
            nn::upsample2_forward(cur, t1);
            nn::concat_channels(skips[static_cast<std::size_t>(l - 1)], t1, t2);
            skips[static_cast<std::size_t>(l - 1)] = tensor<T>();  // release skip memory
            cur = std::move(t2);
            for (const auto& blk : dec[static_cast<std::size_t>(l - 1)]) {
                blk.conv.forward(cur, t1, ws);
                blk.bn.forward_infer(t1, cur);
                nn::relu_inplace(cur);
            }
        }
        head.forward(cur, t1, ws);
        nn::softmax_channels(t1, cur);
        return cur;
    }

    // Training-mode forward: batch BN statistics, running stats updated,
    // intermediate activations kept for backward().
    const tensor<T>& forward_train(const tensor<T>& x, Workspace<T>& ws,
                                   UnetTrace<T>& tr) {
        check_input(x);
        tr.input = x;
        tr.enc.assign(static_cast<std::size_t>(cfg.levels + 1), {});
        tr.pool_idx.assign(static_cast<std::size_t>(cfg.levels), {});
        tr.pooled.assign(static_cast<std::size_t>(cfg.levels), {});
        tr.concat.assign(static_cast<std::size_t>(cfg.levels), {});
        tr.dec.assign(static_cast<std::size_t>(cfg.levels), {});

        const tensor<T>* cur = &tr.input;
        for (int l = 0; l <= cfg.levels; ++l) {
            auto& chain = enc[static_cast<std::size_t>(l)];
            auto& traces = tr.enc[static_cast<std::size_t>(l)];
            traces.resize(chain.size());
            for (std::size_t j = 0; j < chain.size(); ++j) {
                auto& bt = traces[j];
                chain[j].conv.forward(*cur, bt.conv_out, ws);
                chain[j].bn.forward_train(bt.conv_out, bt.out, bt.bn_mean, bt.bn_invstd);
                nn::relu_inplace(bt.out);
                cur = &bt.out;
            }
            if (l < cfg.levels) {
                nn::maxpool2_forward(*cur, tr.pooled[static_cast<std::size_t>(l)],
                                     tr.pool_idx[static_cast<std::size_t>(l)]);
                cur = &tr.pooled[static_cast<std::size_t>(l)];
            }
        }
        tensor<T> up;
        for (int l = cfg.levels; l >= 1; --l) {
            nn::upsample2_forward(*cur, up);
            nn::concat_channels(tr.enc[static_cast<std::size_t>(l - 1)].back().out, up,
                                tr.concat[static_cast<std::size_t>(l - 1)]);
            cur = &tr.concat[static_cast<std::size_t>(l - 1)];
            auto& chain = dec[static_cast<std::size_t>(l - 1)];
            auto& traces = tr.dec[static_cast<std::size_t>(l - 1)];
            traces.resize(chain.size());
            for (std::size_t j = 0; j < chain.size(); ++j) {
                auto& bt = traces[j];
                chain[j].conv.forward(*cur, bt.conv_out, ws);
                chain[j].bn.forward_train(bt.conv_out, bt.out, bt.bn_mean, bt.bn_invstd);
                nn::relu_inplace(bt.out);
                cur = &bt.out;
            }
        }
        tensor<T> logits;
        head.forward(*cur, logits, ws);
        nn::softmax_channels(logits, tr.probs);
        return tr.probs;
    }

    // Backpropagate dL/dprobs; parameter gradients accumulate (call
    // zero_grad() between steps).
    void backward(const tensor<T>& gprobs, Workspace<T>& ws, UnetTrace<T>& tr) {
        tensor<T> gcur, gtmp;
        nn::softmax_backward(tr.probs, gprobs, gcur);
        head.backward(tr.dec[0].back().out, gcur, &gtmp, ws);
        gcur = std::move(gtmp);

        auto chain_backward = [&](std::vector<ConvBlock<T>>& chain,
                                  std::vector<BlockTrace<T>>& traces,
                                  const tensor<T>& first_input) {
            for (int j = static_cast<int>(chain.size()) - 1; j >= 0; --j) {
                auto& bt = traces[static_cast<std::size_t>(j)];
                nn::relu_backward_inplace(bt.out, gcur);
                chain[static_cast<std::size_t>(j)].bn.backward(bt.conv_out, bt.bn_mean,
                                                               bt.bn_invstd, gcur, &gtmp);
                const tensor<T>& input =
                    j == 0 ? first_input : traces[static_cast<std::size_t>(j - 1)].out;
                chain[static_cast<std::size_t>(j)].conv.backward(input, gtmp, &gcur, ws);
            }
        };

        // Decoder, reverse execution order (level 1 up to level L).
        std::vector<tensor<T>> skip_grad(static_cast<std::size_t>(cfg.levels));
        for (int l = 1; l <= cfg.levels; ++l) {
            chain_backward(dec[static_cast<std::size_t>(l - 1)],
                           tr.dec[static_cast<std::size_t>(l - 1)],
                           tr.concat[static_cast<std::size_t>(l - 1)]);
            tensor<T> gup;
            nn::split_channels(gcur, skip_grad[static_cast<std::size_t>(l - 1)], gup,
                               cfg.filters_at(l), cfg.filters_at(l + 1));
            nn::upsample2_backward(gup, gcur);  // grad wrt the stage below
        }

        // Encoder, bottleneck down to level 1.
        chain_backward(enc[static_cast<std::size_t>(cfg.levels)],
                       tr.enc[static_cast<std::size_t>(cfg.levels)],
                       tr.pooled[static_cast<std::size_t>(cfg.levels - 1)]);
        for (int l = cfg.levels; l >= 1; --l) {
            const auto& pre_pool = tr.enc[static_cast<std::size_t>(l - 1)].back().out;
            nn::maxpool2_backward(tr.pool_idx[static_cast<std::size_t>(l - 1)], gcur, gtmp,
                                  pre_pool.dim(2), pre_pool.dim(3));
            // Skip connection joins here.
            const tensor<T>& sg = skip_grad[static_cast<std::size_t>(l - 1)];
            for (index_t i = 0; i < gtmp.size(); ++i) gtmp(i) += sg(i);
            gcur = std::move(gtmp);
            chain_backward(enc[static_cast<std::size_t>(l - 1)],
                           tr.enc[static_cast<std::size_t>(l - 1)],
                           l == 1 ? tr.input
                                  : tr.pooled[static_cast<std::size_t>(l - 2)]);
        }
    }

private:
    bool train_mode_ = false;
};

// Shape-preserving forward that respects the network mode; training-mode
// callers that need gradients use forward_train directly.
template <class T>
tensor<T> forward(Unet<T>& net, const tensor<T>& batch, Workspace<T>& ws) {
    if (!net.train_mode()) return net.forward(batch, ws);
    UnetTrace<T> tr;
    return net.forward_train(batch, ws, tr);
}

}  // namespace triview
