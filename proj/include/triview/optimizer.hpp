#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "triview/tensor.hpp"

namespace triview {

// Adam with the conventional moment coefficients. Moment buffers are kept
// in double so update order is the only thing that matters for determinism,
// and that order is fixed by the parameter list.
template <class T>
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    struct Slot {
        T* value;
        const T* grad;
        index_t n;
    };

    template <class ParamRefs>
    explicit Adam(const ParamRefs& params) {
        index_t total = 0;
        for (const auto& p : params) {
            slots_.push_back({p.value->data(), p.grad->data(), p.value->size()});
            total += p.value->size();
        }
        m_.assign(static_cast<std::size_t>(total), 0.0);
        v_.assign(static_cast<std::size_t>(total), 0.0);
    }

    void step(double lr) {
        ++t_;
        const double corr =
            lr * std::sqrt(1.0 - std::pow(beta2, t_)) / (1.0 - std::pow(beta1, t_));
        std::size_t off = 0;
        for (const auto& s : slots_) {
            for (index_t i = 0; i < s.n; ++i) {
                const double g = static_cast<double>(s.grad[i]);
                double& m = m_[off + static_cast<std::size_t>(i)];
                double& v = v_[off + static_cast<std::size_t>(i)];
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                s.value[i] = static_cast<T>(static_cast<double>(s.value[i]) -
                                            corr * m / (std::sqrt(v) + eps));
            }
            off += static_cast<std::size_t>(s.n);
        }
    }

    std::int64_t steps() const { return t_; }

private:
    std::vector<Slot> slots_;
    std::vector<double> m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace triview
