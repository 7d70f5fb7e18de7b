#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "audit/errors.hpp"

namespace audit {

using Vector = std::vector<double>;
using VecView = std::span<const double>;

// Dense row-major matrix. Row-major keeps matvec and the per-row dual-norm
// reductions cache-friendly, which is where nearly all cycles go.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    VecView row(std::size_t i) const { return VecView(values.data() + i * cols, cols); }
};

enum class Activation { identity, relu, tanh, sigmoid };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Every activation in the catalogue is monotone nondecreasing; the bound
// engine relies on that to map interval endpoints through layers.
double activation_value(Activation a, double x);

// Derivative at a pre-activation value. relu uses the subgradient 0 at the
// kink so that gradients are deterministic there.
double activation_derivative(Activation a, double x);

struct Layer {
    Matrix weights; // output_dim x input_dim
    Vector bias;    // output_dim
    Activation activation = Activation::identity;

    std::size_t input_dim() const { return weights.cols; }
    std::size_t output_dim() const { return weights.rows; }
};

enum class NetworkRole { classifier, encoder, decoder };

const char* to_string(NetworkRole r);
NetworkRole role_from_string(const std::string& name);

struct Network {
    std::vector<Layer> layers;
    NetworkRole role = NetworkRole::classifier;
    std::size_t input_dim = 0;

    std::size_t output_dim() const { return layers.empty() ? input_dim : layers.back().output_dim(); }

    // Checks the chain of layer shapes and that every parameter is finite.
    // Throws ShapeError / NumericError with the offending layer named.
    void validate() const;
};

// Per-layer parameter gradients, shapes mirroring the network.
struct LayerGradient {
    Matrix weights;
    Vector bias;
};

struct GradientSet {
    std::vector<LayerGradient> layers;

    static GradientSet zeros_like(const Network& net);

    // this += scale * other (shapes must match).
    void axpy(double scale, const GradientSet& other);
    void scale(double s);
    double max_abs() const;
};

// y = W x. Throws ShapeError naming both dimensions on mismatch.
Vector matvec(const Matrix& w, VecView x);

Vector apply_activation(Activation a, VecView x);

// Full forward pass record: pre[k] / post[k] are the pre- and post-activation
// vectors of layer k; post.back() are the logits.
struct ForwardTrace {
    Vector input;
    std::vector<Vector> pre;
    std::vector<Vector> post;

    const Vector& logits() const { return post.back(); }
};

ForwardTrace forward(const Network& net, VecView input);

// Reverse-mode pass over a recorded trace. dloss_dlogits has one entry per
// logit; the result holds d(loss)/d(params) for every layer.
GradientSet backward(const Network& net, const ForwardTrace& trace, VecView dloss_dlogits);

// Central finite differences of an arbitrary scalar loss over every
// parameter. Independent of backward() by construction; used as the gradient
// oracle in tests. O(P) loss evaluations.
GradientSet finite_diff_grad(const std::function<double(const Network&)>& loss, const Network& net, double h);

// Small shared helpers.
double dot(VecView a, VecView b);
std::size_t argmax(VecView v);
bool all_finite(VecView v);
void require_finite(VecView v, const std::string& context);

} // namespace audit
