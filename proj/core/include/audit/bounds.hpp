#pragma once

#include <cstddef>
#include <vector>

#include "audit/linalg.hpp"

namespace audit {

enum class Norm { l2, linf };

const char* to_string(Norm n);
Norm norm_from_string(const std::string& name);

// An epsilon-ball around a nominal point, restricted to a subset of input
// coordinates. dims must be sorted, unique and in range; coordinates outside
// dims are held at their nominal values.
struct PerturbationSpec {
    std::vector<std::size_t> dims;
    double epsilon = 0.0;
    Norm norm = Norm::linf;

    void validate(std::size_t input_dim) const;
};

// Axis-aligned box: per-coordinate [lower, upper] with lower <= upper.
struct Interval {
    Vector lower;
    Vector upper;

    std::size_t size() const { return lower.size(); }
    bool contains(VecView point, double slack = 0.0) const;
    void check_ordered(const std::string& context) const;
};

// Linear functional over the logits: c . z_K + d. For margin specs c is a
// difference of one-hot vectors and d is 0.
struct LinearSpec {
    Vector c;
    double d = 0.0;
};

enum class BoundEngine { ibp, crown_ibp };

const char* to_string(BoundEngine e);
BoundEngine engine_from_string(const std::string& name);

struct VerificationOutcome {
    bool verified = false;     // upper_bound < 0, strictly; ties are unverified
    double upper_bound = 0.0;  // sound upper bound on c . z_K + d over the ball
    Interval output_interval;  // logit box from the interval pass
    BoundEngine engine = BoundEngine::ibp;
};

// Dual exponent norm of a coefficient vector restricted to dims: q = 1 for
// linf perturbations, q = 2 for l2. This is the closed form for
// max { v . delta : ||delta|_dims||_p <= eps, delta zero off dims } / eps.
double restricted_dual_norm(VecView v, const std::vector<std::size_t>& dims, Norm norm);

// First-layer bound: the pre-activation row i is centered at W_i . z0 + b_i
// with half-width eps * ||W_i restricted to dims||_q; the monotone activation
// is applied to both ends. Returns the post-activation box.
Interval holder_first_layer(const Layer& layer, VecView z0, const PerturbationSpec& pert);

// Interval pass through one layer: with mu = (l+u)/2 and r = (u-l)/2 the
// pre-activation box is W mu + b -+ |W| r, then the activation maps both ends.
Interval ibp_step(const Layer& layer, const Interval& input);

// Pre- and post-activation boxes of every layer along the interval pass.
// pre[0] comes from the first-layer dual-norm bound, later layers from
// ibp_step; post.back() is the logit box.
struct BoundTrace {
    std::vector<Interval> pre;
    std::vector<Interval> post;

    const Interval& logits() const { return post.back(); }
};

BoundTrace propagate_bounds_trace(const Network& net, VecView z0, const PerturbationSpec& pert);

// Logit box only (post-activation of the last layer).
Interval propagate_bounds(const Network& net, VecView z0, const PerturbationSpec& pert);

// Upper bound on c . z_K + d read off an interval logit box:
// sum_i max(c_i, 0) * upper_i + min(c_i, 0) * lower_i + d.
double ibp_margin_bound(const LinearSpec& spec, const Interval& logits);

// Backward linear relaxation of c . z_K + d through the network, using the
// interval pass for the per-neuron pre-activation ranges. Supports relu and
// identity activations only (CapabilityError otherwise, naming the ibp
// fallback). Never worse than the interval bound: the result is clamped to
// ibp_margin_bound so the dominance contract holds even where the fixed
// lower-slope heuristic would lose.
double crown_backward(const Network& net, VecView z0, const PerturbationSpec& pert, const LinearSpec& spec);
double crown_backward(const Network& net, VecView z0, const PerturbationSpec& pert, const LinearSpec& spec,
                      const BoundTrace& trace);

// Adversarial logit vector: the upper bound for every class except the true
// one, the lower bound for the true class.
Vector worst_case_logits(const Interval& logit_box, std::size_t true_class);

VerificationOutcome eval_linear_spec(const LinearSpec& spec, const Network& net, VecView z0,
                                     const PerturbationSpec& pert, BoundEngine engine);

} // namespace audit
