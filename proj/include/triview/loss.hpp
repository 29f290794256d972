#pragma once

#include "triview/errors.hpp"
#include "triview/tensor.hpp"

namespace triview {

// Soft Dice loss, averaged over the batch:
//   L = (1/B) sum_b [ 1 - 2*sum_v t_v p_v / sum_v (t_v^2 + p_v^2) ]
// where v runs over all pixels and channels of sample b. Bounded in [0,1]
// for one-hot targets and simplex predictions; 0 iff prediction equals the
// target exactly. The batch is dim 0; remaining dims are flattened per
// sample, so the channel axis position does not matter.
//
// If `grad` is non-null it receives dL/dp (same shape as y_pred).
// Accumulation is in double regardless of T.
template <class T>
double soft_dice_loss(const tensor<T>& y_true, const tensor<T>& y_pred,
                      tensor<T>* grad = nullptr) {
    if (!y_true.same_shape(y_pred))
        throw ArgumentError("soft_dice_loss: shape mismatch");
    if (y_true.rank() < 2 || y_true.dim(0) < 1)
        throw ArgumentError("soft_dice_loss: need a non-empty batch");
    if (grad && !grad->same_shape(y_pred)) *grad = tensor<T>(y_pred.shape());

    const index_t batch = y_true.dim(0);
    const index_t per = y_true.size() / batch;
    const T* t = y_true.data();
    const T* p = y_pred.data();
    T* g = grad ? grad->data() : nullptr;

    double total = 0.0;
    for (index_t b = 0; b < batch; ++b) {
        const T* tb = t + b * per;
        const T* pb = p + b * per;
        double inter = 0.0, denom = 0.0;
        for (index_t v = 0; v < per; ++v) {
            const double tv = static_cast<double>(tb[v]);
            const double pv = static_cast<double>(pb[v]);
            inter += tv * pv;
            denom += tv * tv + pv * pv;
        }
        if (denom == 0.0) {  // all-zero target and prediction
            if (g) {
                T* gb = g + b * per;
                for (index_t v = 0; v < per; ++v) gb[v] = T{};
            }
            continue;
        }
        // Non-finite inputs propagate into the total so callers can abort.
        total += 1.0 - 2.0 * inter / denom;
        if (g) {
            T* gb = g + b * per;
            const double inv_d = 1.0 / denom;
            const double c1 = -2.0 * inv_d / static_cast<double>(batch);
            const double c2 = 4.0 * inter * inv_d * inv_d / static_cast<double>(batch);
            for (index_t v = 0; v < per; ++v)
                gb[v] = static_cast<T>(c1 * static_cast<double>(tb[v]) +
                                       c2 * static_cast<double>(pb[v]));
        }
    }
    return total / static_cast<double>(batch);
}

}  // namespace triview
