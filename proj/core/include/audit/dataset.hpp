#pragma once

#include <cstddef>
#include <vector>

#include "audit/linalg.hpp"

namespace audit {

// Labeled point set. Rows of `points` are latent codes or pixel vectors
// depending on which side of the decoder the set lives on.
struct Dataset {
    Matrix points;                   // n x dim
    std::vector<std::size_t> labels; // n class indices
    std::size_t num_classes = 0;     // max label + 1 unless set explicitly

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return points.cols; }
    VecView row(std::size_t i) const { return points.row(i); }

    // Shape/label consistency and finiteness; throws on violation.
    void validate() const;
};

} // namespace audit
