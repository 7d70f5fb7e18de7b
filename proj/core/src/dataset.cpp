#include "audit/dataset.hpp"

namespace audit {

void Dataset::validate() const {
    if (labels.size() != points.rows)
        throw ShapeError("dataset: " + std::to_string(points.rows) + " rows but " + std::to_string(labels.size()) +
                         " labels");
    if (points.values.size() != points.rows * points.cols)
        throw ShapeError("dataset: point storage size does not match " + std::to_string(points.rows) + "x" +
                         std::to_string(points.cols));
    if (points.rows == 0 || points.cols == 0) throw ShapeError("dataset: empty");
    require_finite(points.values, "dataset points");
    for (std::size_t label : labels)
        if (num_classes != 0 && label >= num_classes)
            throw ShapeError("dataset: label " + std::to_string(label) + " out of range for " +
                             std::to_string(num_classes) + " classes");
}

} // namespace audit
