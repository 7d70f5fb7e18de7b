#include "audit/bounds.hpp"

#include <algorithm>
#include <cmath>

namespace audit {

const char* to_string(Norm n) {
    switch (n) {
        case Norm::l2: return "l2";
        case Norm::linf: return "linf";
    }
    throw ArgumentError("to_string: unknown norm tag");
}

Norm norm_from_string(const std::string& name) {
    if (name == "l2") return Norm::l2;
    if (name == "linf") return Norm::linf;
    throw ArgumentError("unknown norm \"" + name + "\" (expected l2 or linf)");
}

const char* to_string(BoundEngine e) {
    switch (e) {
        case BoundEngine::ibp: return "ibp";
        case BoundEngine::crown_ibp: return "crown-ibp";
    }
    throw ArgumentError("to_string: unknown engine tag");
}

BoundEngine engine_from_string(const std::string& name) {
    if (name == "ibp") return BoundEngine::ibp;
    if (name == "crown-ibp") return BoundEngine::crown_ibp;
    throw ArgumentError("unknown engine \"" + name + "\" (expected ibp or crown-ibp)");
}

void PerturbationSpec::validate(std::size_t input_dim) const {
    if (dims.empty()) throw ArgumentError("perturbation: dims must be nonempty");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
        throw ArgumentError("perturbation: epsilon must be finite and nonnegative");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] >= input_dim)
            throw ArgumentError("perturbation: dim " + std::to_string(dims[i]) + " out of range for input dim " +
                                std::to_string(input_dim));
        if (i > 0 && dims[i] <= dims[i - 1])
            throw ArgumentError("perturbation: dims must be strictly increasing (got " + std::to_string(dims[i - 1]) +
                                " then " + std::to_string(dims[i]) + ")");
    }
}

bool Interval::contains(VecView point, double slack) const {
    if (point.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i)
        if (point[i] < lower[i] - slack || point[i] > upper[i] + slack) return false;
    return true;
}

void Interval::check_ordered(const std::string& context) const {
    if (lower.size() != upper.size())
        throw ShapeError(context + ": interval endpoint lengths " + std::to_string(lower.size()) + " and " +
                         std::to_string(upper.size()) + " differ");
    for (std::size_t i = 0; i < lower.size(); ++i)
        if (!(lower[i] <= upper[i]))
            throw NumericError(context + ": interval coordinate " + std::to_string(i) + " is inverted");
}

double restricted_dual_norm(VecView v, const std::vector<std::size_t>& dims, Norm norm) {
    if (norm == Norm::linf) {
        double acc = 0.0;
        for (std::size_t d : dims) acc += std::abs(v[d]);
        return acc;
    }
    double acc = 0.0;
    for (std::size_t d : dims) acc += v[d] * v[d];
    return std::sqrt(acc);
}

namespace {

// Pre-activation box of the first layer over the restricted epsilon-ball.
// Row i is W_i . z0 + b_i with half-width eps * ||W_i on dims||_q. The center
// reuses matvec so a zero radius reproduces forward() bit for bit.
Interval first_layer_preactivation(const Layer& layer, VecView z0, const PerturbationSpec& pert) {
    Vector center = matvec(layer.weights, z0);
    for (std::size_t i = 0; i < center.size(); ++i) center[i] += layer.bias[i];

    Interval box{center, center};
    for (std::size_t i = 0; i < center.size(); ++i) {
        const double half = pert.epsilon * restricted_dual_norm(layer.weights.row(i), pert.dims, pert.norm);
        box.lower[i] -= half;
        box.upper[i] += half;
    }
    return box;
}

Interval interval_preactivation(const Layer& layer, const Interval& input) {
    Vector mid(input.size());
    Vector rad(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
        mid[i] = (input.lower[i] + input.upper[i]) / 2.0;
        rad[i] = (input.upper[i] - input.lower[i]) / 2.0;
    }

    Vector center = matvec(layer.weights, mid);
    Interval box{center, center};
    for (std::size_t i = 0; i < layer.output_dim(); ++i) {
        const double* wrow = layer.weights.values.data() + i * layer.input_dim();
        double spread = 0.0;
        for (std::size_t j = 0; j < layer.input_dim(); ++j) spread += std::abs(wrow[j]) * rad[j];
        box.lower[i] += layer.bias[i] - spread;
        box.upper[i] += layer.bias[i] + spread;
    }
    return box;
}

Interval apply_activation_box(Activation a, const Interval& pre) {
    Interval post;
    post.lower.resize(pre.size());
    post.upper.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) {
        post.lower[i] = activation_value(a, pre.lower[i]);
        post.upper[i] = activation_value(a, pre.upper[i]);
    }
    return post;
}

} // namespace

Interval holder_first_layer(const Layer& layer, VecView z0, const PerturbationSpec& pert) {
    if (z0.size() != layer.input_dim())
        throw ShapeError("holder_first_layer: input length " + std::to_string(z0.size()) +
                         " does not match layer input dim " + std::to_string(layer.input_dim()));
    pert.validate(layer.input_dim());
    require_finite(z0, "holder_first_layer input");
    return apply_activation_box(layer.activation, first_layer_preactivation(layer, z0, pert));
}

Interval ibp_step(const Layer& layer, const Interval& input) {
    input.check_ordered("ibp_step input");
    if (input.size() != layer.input_dim())
        throw ShapeError("ibp_step: interval size " + std::to_string(input.size()) +
                         " does not match layer input dim " + std::to_string(layer.input_dim()));
    return apply_activation_box(layer.activation, interval_preactivation(layer, input));
}

BoundTrace propagate_bounds_trace(const Network& net, VecView z0, const PerturbationSpec& pert) {
    if (net.layers.empty()) throw ShapeError("propagate_bounds: network has no layers");
    if (z0.size() != net.input_dim)
        throw ShapeError("propagate_bounds: input length " + std::to_string(z0.size()) +
                         " does not match network input dim " + std::to_string(net.input_dim));
    pert.validate(net.input_dim);
    require_finite(z0, "propagate_bounds input");

    BoundTrace trace;
    trace.pre.reserve(net.layers.size());
    trace.post.reserve(net.layers.size());

    trace.pre.push_back(first_layer_preactivation(net.layers.front(), z0, pert));
    trace.post.push_back(apply_activation_box(net.layers.front().activation, trace.pre.back()));
    for (std::size_t k = 1; k < net.layers.size(); ++k) {
        trace.pre.push_back(interval_preactivation(net.layers[k], trace.post.back()));
        trace.post.push_back(apply_activation_box(net.layers[k].activation, trace.pre.back()));
    }
    return trace;
}

Interval propagate_bounds(const Network& net, VecView z0, const PerturbationSpec& pert) {
    return propagate_bounds_trace(net, z0, pert).logits();
}

double ibp_margin_bound(const LinearSpec& spec, const Interval& logits) {
    if (spec.c.size() != logits.size())
        throw ShapeError("ibp_margin_bound: spec length " + std::to_string(spec.c.size()) +
                         " does not match logit count " + std::to_string(logits.size()));
    double acc = spec.d;
    for (std::size_t i = 0; i < spec.c.size(); ++i)
        acc += spec.c[i] > 0.0 ? spec.c[i] * logits.upper[i] : spec.c[i] * logits.lower[i];
    return acc;
}

double crown_backward(const Network& net, VecView z0, const PerturbationSpec& pert, const LinearSpec& spec) {
    return crown_backward(net, z0, pert, spec, propagate_bounds_trace(net, z0, pert));
}

double crown_backward(const Network& net, VecView z0, const PerturbationSpec& pert, const LinearSpec& spec,
                      const BoundTrace& trace) {
    if (spec.c.size() != net.output_dim())
        throw ShapeError("crown_backward: spec length " + std::to_string(spec.c.size()) +
                         " does not match logit count " + std::to_string(net.output_dim()));
    if (trace.pre.size() != net.layers.size())
        throw ShapeError("crown_backward: bound trace depth " + std::to_string(trace.pre.size()) +
                         " does not match network depth " + std::to_string(net.layers.size()));
    for (const Layer& layer : net.layers) {
        if (layer.activation != Activation::relu && layer.activation != Activation::identity)
            throw CapabilityError(std::string("crown_backward: activation ") + to_string(layer.activation) +
                                  " has no linear relaxation here; use the ibp engine");
    }

    // Maintain an affine upper bound lambda . z_k + constant while walking
    // from the logits back to the input.
    Vector lambda(spec.c);
    double constant = spec.d;

    for (std::size_t k = net.layers.size(); k-- > 0;) {
        const Layer& layer = net.layers[k];

        if (layer.activation == Activation::relu) {
            const Interval& pre = trace.pre[k];
            for (std::size_t j = 0; j < lambda.size(); ++j) {
                const double l = pre.lower[j];
                const double u = pre.upper[j];
                const double coeff = lambda[j];
                if (u <= 0.0) {
                    lambda[j] = 0.0; // stably inactive: relu is the zero map
                } else if (l >= 0.0) {
                    // stably active: relu is the identity, keep the coefficient
                } else if (coeff > 0.0) {
                    // chord from (l, 0) to (u, u) upper-bounds relu on [l, u]
                    const double slope = u / (u - l);
                    lambda[j] = coeff * slope;
                    constant += coeff * (-l * slope);
                } else if (coeff < 0.0) {
                    // supporting line alpha * x lower-bounds relu; pick the
                    // steeper side of the kink
                    lambda[j] = coeff * (u >= -l ? 1.0 : 0.0);
                }
            }
        }

        constant += dot(lambda, layer.bias);
        Vector next(layer.input_dim(), 0.0);
        for (std::size_t i = 0; i < layer.output_dim(); ++i) {
            const double li = lambda[i];
            if (li == 0.0) continue;
            const double* wrow = layer.weights.values.data() + i * layer.input_dim();
            for (std::size_t j = 0; j < layer.input_dim(); ++j) next[j] += li * wrow[j];
        }
        lambda = std::move(next);
    }

    double bound = dot(lambda, z0) + constant + pert.epsilon * restricted_dual_norm(lambda, pert.dims, pert.norm);

    // The fixed lower-slope choice can lose to the plain interval bound;
    // taking the tighter of the two sound bounds keeps dominance exact.
    return std::min(bound, ibp_margin_bound(spec, trace.logits()));
}

Vector worst_case_logits(const Interval& logit_box, std::size_t true_class) {
    logit_box.check_ordered("worst_case_logits");
    if (true_class >= logit_box.size())
        throw ArgumentError("worst_case_logits: class " + std::to_string(true_class) + " out of range for " +
                            std::to_string(logit_box.size()) + " logits");
    Vector worst(logit_box.upper);
    worst[true_class] = logit_box.lower[true_class];
    return worst;
}

VerificationOutcome eval_linear_spec(const LinearSpec& spec, const Network& net, VecView z0,
                                     const PerturbationSpec& pert, BoundEngine engine) {
    BoundTrace trace = propagate_bounds_trace(net, z0, pert);
    VerificationOutcome outcome;
    outcome.engine = engine;
    outcome.output_interval = trace.logits();
    outcome.upper_bound = engine == BoundEngine::ibp ? ibp_margin_bound(spec, trace.logits())
                                                     : crown_backward(net, z0, pert, spec, trace);
    outcome.verified = outcome.upper_bound < 0.0;
    return outcome;
}

} // namespace audit
