#pragma once

// Internal helpers shared by the trainer and the audit harness. Not installed.

#include <cstddef>

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"

namespace audit::internal {

// Fraction of rows that are misclassified cleanly or whose class-invariance
// margins fail to verify under the interval engine. This is the cheap metric
// the trainer logs per epoch; the harness's full report builds on the same
// semantics.
inline double interval_verified_error(const Network& net, const Dataset& data, const PerturbationSpec& pert) {
    const std::size_t classes = net.output_dim();
    std::size_t failing = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const VecView z0 = data.row(i);
        const std::size_t label = data.labels[i];
        if (argmax(forward(net, z0).logits()) != label) {
            ++failing;
            continue;
        }
        const Interval logit_box = propagate_bounds(net, z0, pert);
        bool verified = true;
        for (std::size_t y = 0; y < classes && verified; ++y) {
            if (y == label) continue;
            // margin spec c = onehot(y) - onehot(label), d = 0
            const double upper = logit_box.upper[y] - logit_box.lower[label];
            if (!(upper < 0.0)) verified = false;
        }
        if (!verified) ++failing;
    }
    return static_cast<double>(failing) / static_cast<double>(data.size());
}

} // namespace audit::internal
