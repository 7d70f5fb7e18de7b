#include "audit/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace audit {

const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    throw ArgumentError("to_string: unknown activation tag");
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ArgumentError("unknown activation \"" + name + "\" (expected identity, relu, tanh or sigmoid)");
}

const char* to_string(NetworkRole r) {
    switch (r) {
        case NetworkRole::classifier: return "classifier";
        case NetworkRole::encoder: return "encoder";
        case NetworkRole::decoder: return "decoder";
    }
    throw ArgumentError("to_string: unknown network role tag");
}

NetworkRole role_from_string(const std::string& name) {
    if (name == "classifier") return NetworkRole::classifier;
    if (name == "encoder") return NetworkRole::encoder;
    if (name == "decoder") return NetworkRole::decoder;
    throw ArgumentError("unknown network role \"" + name + "\" (expected classifier, encoder or decoder)");
}

double activation_value(Activation a, double x) {
    switch (a) {
        case Activation::identity: return x;
        case Activation::relu: return x > 0.0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-x));
    }
    throw ArgumentError("activation_value: unknown activation tag");
}

double activation_derivative(Activation a, double x) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::sigmoid: {
            const double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
    }
    throw ArgumentError("activation_derivative: unknown activation tag");
}

void Network::validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    std::size_t expected = input_dim;
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const Layer& layer = layers[k];
        if (layer.weights.values.size() != layer.weights.rows * layer.weights.cols)
            throw ShapeError("layer " + std::to_string(k) + ": weight storage size " +
                             std::to_string(layer.weights.values.size()) + " does not match " +
                             std::to_string(layer.weights.rows) + "x" + std::to_string(layer.weights.cols));
        if (layer.input_dim() != expected)
            throw ShapeError("layer " + std::to_string(k) + ": input dim " + std::to_string(layer.input_dim()) +
                             " does not match incoming width " + std::to_string(expected));
        if (layer.bias.size() != layer.output_dim())
            throw ShapeError("layer " + std::to_string(k) + ": bias length " + std::to_string(layer.bias.size()) +
                             " does not match output dim " + std::to_string(layer.output_dim()));
        if (layer.output_dim() == 0) throw ShapeError("layer " + std::to_string(k) + ": output dim is 0");
        if (!all_finite(layer.weights.values) || !all_finite(layer.bias))
            throw NumericError("layer " + std::to_string(k) + ": nonfinite parameter");
        expected = layer.output_dim();
    }
}

GradientSet GradientSet::zeros_like(const Network& net) {
    GradientSet grads;
    grads.layers.reserve(net.layers.size());
    for (const Layer& layer : net.layers) {
        grads.layers.push_back({Matrix(layer.output_dim(), layer.input_dim()), Vector(layer.output_dim(), 0.0)});
    }
    return grads;
}

void GradientSet::axpy(double scale, const GradientSet& other) {
    if (layers.size() != other.layers.size()) throw ShapeError("GradientSet::axpy: layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        LayerGradient& dst = layers[k];
        const LayerGradient& src = other.layers[k];
        if (dst.weights.values.size() != src.weights.values.size() || dst.bias.size() != src.bias.size())
            throw ShapeError("GradientSet::axpy: layer " + std::to_string(k) + " shape mismatch");
        for (std::size_t i = 0; i < dst.weights.values.size(); ++i) dst.weights.values[i] += scale * src.weights.values[i];
        for (std::size_t i = 0; i < dst.bias.size(); ++i) dst.bias[i] += scale * src.bias[i];
    }
}

void GradientSet::scale(double s) {
    for (LayerGradient& layer : layers) {
        for (double& v : layer.weights.values) v *= s;
        for (double& v : layer.bias) v *= s;
    }
}

double GradientSet::max_abs() const {
    double m = 0.0;
    for (const LayerGradient& layer : layers) {
        for (double v : layer.weights.values) m = std::max(m, std::abs(v));
        for (double v : layer.bias) m = std::max(m, std::abs(v));
    }
    return m;
}

Vector matvec(const Matrix& w, VecView x) {
    if (w.cols != x.size())
        throw ShapeError("matvec: matrix cols " + std::to_string(w.cols) + " does not match vector length " +
                         std::to_string(x.size()));
    Vector y(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        const double* row = w.values.data() + i * w.cols;
        double acc = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
    return y;
}

Vector apply_activation(Activation a, VecView x) {
    require_finite(x, "apply_activation");
    Vector y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = activation_value(a, x[i]);
    return y;
}

ForwardTrace forward(const Network& net, VecView input) {
    if (net.layers.empty()) throw ShapeError("forward: network has no layers");
    if (input.size() != net.input_dim)
        throw ShapeError("forward: input length " + std::to_string(input.size()) + " does not match network input dim " +
                         std::to_string(net.input_dim));
    require_finite(input, "forward input");

    ForwardTrace trace;
    trace.input.assign(input.begin(), input.end());
    trace.pre.reserve(net.layers.size());
    trace.post.reserve(net.layers.size());

    const Vector* current = &trace.input;
    for (const Layer& layer : net.layers) {
        Vector pre = matvec(layer.weights, *current);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += layer.bias[i];
        Vector post(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i) post[i] = activation_value(layer.activation, pre[i]);
        trace.pre.push_back(std::move(pre));
        trace.post.push_back(std::move(post));
        current = &trace.post.back();
    }
    return trace;
}

GradientSet backward(const Network& net, const ForwardTrace& trace, VecView dloss_dlogits) {
    if (trace.pre.size() != net.layers.size() || trace.post.size() != net.layers.size())
        throw ShapeError("backward: trace has " + std::to_string(trace.post.size()) + " layers, network has " +
                         std::to_string(net.layers.size()));
    if (dloss_dlogits.size() != net.output_dim())
        throw ShapeError("backward: logit gradient length " + std::to_string(dloss_dlogits.size()) +
                         " does not match output dim " + std::to_string(net.output_dim()));

    GradientSet grads = GradientSet::zeros_like(net);
    Vector g_post(dloss_dlogits.begin(), dloss_dlogits.end());

    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const Layer& layer = net.layers[k];
        const Vector& pre = trace.pre[k];
        const Vector& below = (k == 0) ? trace.input : trace.post[k - 1];

        // Through the activation, then the affine map.
        Vector g_pre(pre.size());
        for (std::size_t i = 0; i < pre.size(); ++i)
            g_pre[i] = g_post[i] * activation_derivative(layer.activation, pre[i]);

        LayerGradient& lg = grads.layers[k];
        for (std::size_t i = 0; i < layer.output_dim(); ++i) {
            const double gi = g_pre[i];
            lg.bias[i] += gi;
            double* wrow = lg.weights.values.data() + i * layer.input_dim();
            for (std::size_t j = 0; j < layer.input_dim(); ++j) wrow[j] += gi * below[j];
        }

        if (k > 0) {
            Vector g_below(layer.input_dim(), 0.0);
            for (std::size_t i = 0; i < layer.output_dim(); ++i) {
                const double gi = g_pre[i];
                const double* wrow = layer.weights.values.data() + i * layer.input_dim();
                for (std::size_t j = 0; j < layer.input_dim(); ++j) g_below[j] += gi * wrow[j];
            }
            g_post = std::move(g_below);
        }
    }
    return grads;
}

GradientSet finite_diff_grad(const std::function<double(const Network&)>& loss, const Network& net, double h) {
    if (h <= 0.0) throw ArgumentError("finite_diff_grad: step h must be positive");
    GradientSet grads = GradientSet::zeros_like(net);
    Network probe = net;
    for (std::size_t k = 0; k < probe.layers.size(); ++k) {
        for (std::size_t i = 0; i < probe.layers[k].weights.values.size(); ++i) {
            double& theta = probe.layers[k].weights.values[i];
            const double saved = theta;
            theta = saved + h;
            const double up = loss(probe);
            theta = saved - h;
            const double down = loss(probe);
            theta = saved;
            grads.layers[k].weights.values[i] = (up - down) / (2.0 * h);
        }
        for (std::size_t i = 0; i < probe.layers[k].bias.size(); ++i) {
            double& theta = probe.layers[k].bias[i];
            const double saved = theta;
            theta = saved + h;
            const double up = loss(probe);
            theta = saved - h;
            const double down = loss(probe);
            theta = saved;
            grads.layers[k].bias[i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

double dot(VecView a, VecView b) {
    if (a.size() != b.size())
        throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " differ");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::size_t argmax(VecView v) {
    if (v.empty()) throw ArgumentError("argmax: empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

bool all_finite(VecView v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_finite(VecView v, const std::string& context) {
    if (!all_finite(v)) throw NumericError(context + ": nonfinite value");
}

} // namespace audit
