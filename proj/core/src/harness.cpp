#include "audit/harness.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "audit/rng.hpp"
#include "harness_internal.hpp"

namespace audit {

std::vector<LinearSpec> margin_specs(std::size_t num_classes, std::size_t true_class) {
    if (true_class >= num_classes)
        throw ArgumentError("margin_specs: class " + std::to_string(true_class) + " out of range for " +
                            std::to_string(num_classes) + " classes");
    std::vector<LinearSpec> specs;
    specs.reserve(num_classes - 1);
    for (std::size_t y = 0; y < num_classes; ++y) {
        if (y == true_class) continue;
        LinearSpec spec;
        spec.c = Vector(num_classes, 0.0);
        spec.c[y] = 1.0;
        spec.c[true_class] = -1.0;
        spec.d = 0.0;
        specs.push_back(std::move(spec));
    }
    return specs;
}

namespace {

std::vector<LinearSpec> specs_for_sample(const UnitTest& test, std::size_t num_classes, std::size_t label) {
    if (test.family == SpecFamily::classification_invariance) return margin_specs(num_classes, label);
    if (test.specs.empty()) throw ArgumentError("unit test \"" + test.id + "\": explicit spec list is empty");
    return test.specs;
}

SampleOutcome evaluate_sample(const Network& net, const Dataset& data, const UnitTest& test,
                              const PerturbationSpec& pert, BoundEngine engine, std::size_t index) {
    SampleOutcome outcome;
    outcome.index = index;
    outcome.label = data.labels[index];
    const VecView z0 = data.row(index);
    outcome.predicted = argmax(forward(net, z0).logits());
    if (outcome.predicted != outcome.label) return outcome; // margins_evaluated stays false

    outcome.margins_evaluated = true;
    outcome.worst_margin = -std::numeric_limits<double>::infinity();
    outcome.verified = true;

    // One interval pass serves every spec; the backward relaxation reuses it.
    const BoundTrace trace = propagate_bounds_trace(net, z0, pert);
    for (const LinearSpec& spec : specs_for_sample(test, net.output_dim(), outcome.label)) {
        const double upper = engine == BoundEngine::ibp ? ibp_margin_bound(spec, trace.logits())
                                                        : crown_backward(net, z0, pert, spec, trace);
        outcome.worst_margin = std::max(outcome.worst_margin, upper);
        if (!(upper < 0.0)) outcome.verified = false;
    }
    return outcome;
}

// Interpolates the monotone (epsilon, verified_error) curve at the target
// level; the first bracketing segment wins. Errors outside the achieved range.
double interpolate_epsilon_at(const std::vector<std::pair<double, double>>& curve, double target,
                              const std::string& side) {
    const double lowest = curve.front().second;
    const double highest = curve.back().second;
    if (target < lowest || target > highest) {
        std::ostringstream msg;
        msg << side << " sweep never reaches verified error " << target << " (achieved range [" << lowest << ", "
            << highest << "] over the grid)";
        throw ArgumentError(msg.str());
    }
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        const auto [e0, v0] = curve[i];
        const auto [e1, v1] = curve[i + 1];
        if (target >= v0 && target <= v1) {
            if (v1 == v0) return e0;
            return e0 + (target - v0) / (v1 - v0) * (e1 - e0);
        }
    }
    return curve.back().first;
}

} // namespace

VerificationReport run_unit_test(const Network& net, const Dataset& data, const UnitTest& test,
                                 std::optional<double> epsilon_override, BoundEngine engine, std::size_t jobs) {
    data.validate();
    net.validate();
    PerturbationSpec pert = test.pert;
    if (epsilon_override) pert.epsilon = *epsilon_override;
    pert.validate(net.input_dim);
    if (data.dim() != net.input_dim)
        throw ShapeError("run_unit_test: data dim " + std::to_string(data.dim()) + " does not match network input dim " +
                         std::to_string(net.input_dim));
    if (jobs == 0) throw ArgumentError("run_unit_test: jobs must be positive");

    const std::size_t n = data.size();
    std::vector<SampleOutcome> outcomes(n);

    if (jobs == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) outcomes[i] = evaluate_sample(net, data, test, pert, engine, i);
    } else {
        // Per-sample work is pure and lands in its own slot, so the fan-out
        // width cannot change the report.
        const std::size_t workers = std::min(jobs, n);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            pool.emplace_back([&, begin, end] {
                try {
                    for (std::size_t i = begin; i < end; ++i)
                        outcomes[i] = evaluate_sample(net, data, test, pert, engine, i);
                } catch (...) {
                    const std::lock_guard<std::mutex> hold(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    VerificationReport report;
    report.test_id = test.id;
    report.epsilon = pert.epsilon;
    report.engine = engine;
    report.n_samples = n;
    for (const SampleOutcome& outcome : outcomes) {
        if (!outcome.margins_evaluated) ++report.n_clean_errors;
        else if (!outcome.verified) ++report.n_unverified;
    }
    report.verified_error =
        static_cast<double>(report.n_clean_errors + report.n_unverified) / static_cast<double>(n);
    report.samples = std::move(outcomes);
    return report;
}

namespace {

EpsilonSearchResult bisect_epsilon(const std::function<bool(double)>& verified_at, double eps_max, double tol,
                                   std::size_t max_iterations) {
    if (!(eps_max > 0.0)) throw ArgumentError("largest_epsilon: eps_max must be positive");
    if (!(tol > 0.0)) throw ArgumentError("largest_epsilon: tol must be positive");

    EpsilonSearchResult result;
    if (!verified_at(0.0)) {
        result.eps_star = 0.0;
        result.verified_at_zero = false;
        return result;
    }
    if (verified_at(eps_max)) {
        result.eps_star = eps_max;
        return result;
    }

    double lo = 0.0; // always verified
    double hi = eps_max;
    while (hi - lo > tol && result.iterations < max_iterations) {
        const double mid = (lo + hi) / 2.0;
        if (verified_at(mid)) lo = mid;
        else hi = mid;
        ++result.iterations;
    }
    result.eps_star = lo;
    return result;
}

} // namespace

EpsilonSearchResult largest_epsilon(const Network& net, const Dataset& data, const UnitTest& test, BoundEngine engine,
                                    double eps_max, double tol, std::size_t max_iterations) {
    return bisect_epsilon(
        [&](double eps) { return run_unit_test(net, data, test, eps, engine).verified_error == 0.0; }, eps_max, tol,
        max_iterations);
}

EpsilonSearchResult largest_epsilon_sample(const Network& net, VecView z0, std::size_t label, const UnitTest& test,
                                           BoundEngine engine, double eps_max, double tol,
                                           std::size_t max_iterations) {
    net.validate();
    if (argmax(forward(net, z0).logits()) != label) {
        // A misclassified point can never verify, at any radius.
        EpsilonSearchResult result;
        result.verified_at_zero = false;
        return result;
    }
    const std::size_t classes = net.output_dim();
    return bisect_epsilon(
        [&](double eps) {
            PerturbationSpec pert = test.pert;
            pert.epsilon = eps;
            const BoundTrace trace = propagate_bounds_trace(net, z0, pert);
            for (const LinearSpec& spec : specs_for_sample(test, classes, label)) {
                const double upper = engine == BoundEngine::ibp ? ibp_margin_bound(spec, trace.logits())
                                                                : crown_backward(net, z0, pert, spec, trace);
                if (!(upper < 0.0)) return false;
            }
            return true;
        },
        eps_max, tol, max_iterations);
}

Interval induced_latent_interval(const Network& encoder, VecView pixels, double pixel_epsilon, Norm norm) {
    if (encoder.role != NetworkRole::encoder)
        throw ArgumentError("induced_latent_interval: network role is not encoder");
    PerturbationSpec pert;
    pert.dims.resize(encoder.input_dim);
    for (std::size_t j = 0; j < encoder.input_dim; ++j) pert.dims[j] = j;
    pert.epsilon = pixel_epsilon;
    pert.norm = norm;
    return propagate_bounds(encoder, pixels, pert);
}

Network compose(const Network& encoder, const Network& classifier) {
    encoder.validate();
    classifier.validate();
    if (encoder.output_dim() != classifier.input_dim)
        throw ShapeError("compose: encoder output dim " + std::to_string(encoder.output_dim()) +
                         " does not match classifier input dim " + std::to_string(classifier.input_dim));
    Network combined;
    combined.role = NetworkRole::classifier;
    combined.input_dim = encoder.input_dim;
    combined.layers = encoder.layers;
    combined.layers.insert(combined.layers.end(), classifier.layers.begin(), classifier.layers.end());
    return combined;
}

PixelLatentComparison compare_pixel_latent(const Network& encoder, const Network& classifier,
                                           const Dataset& pixel_data, double target_verified_error,
                                           const std::vector<double>& eps_grid, const std::vector<std::size_t>& dims,
                                           Norm latent_norm, BoundEngine engine) {
    pixel_data.validate();
    if (eps_grid.size() < 2) throw ArgumentError("compare_pixel_latent: epsilon grid needs at least two points");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        if (!(eps_grid[i] >= 0.0)) throw ArgumentError("compare_pixel_latent: grid epsilons must be nonnegative");
        if (i > 0 && eps_grid[i] <= eps_grid[i - 1])
            throw ArgumentError("compare_pixel_latent: epsilon grid must be strictly increasing");
    }
    if (pixel_data.dim() != encoder.input_dim)
        throw ShapeError("compare_pixel_latent: data dim " + std::to_string(pixel_data.dim()) +
                         " does not match encoder input dim " + std::to_string(encoder.input_dim));

    // The deployment pipeline defines the nominal latents: encode each row.
    Dataset latent_data;
    latent_data.points = Matrix(pixel_data.size(), classifier.input_dim);
    latent_data.labels = pixel_data.labels;
    latent_data.num_classes = pixel_data.num_classes;
    for (std::size_t i = 0; i < pixel_data.size(); ++i) {
        const Vector z = forward(encoder, pixel_data.row(i)).logits();
        std::copy(z.begin(), z.end(), latent_data.points.values.begin() + i * latent_data.points.cols);
    }

    std::vector<std::size_t> latent_dims = dims;
    if (latent_dims.empty()) {
        latent_dims.resize(classifier.input_dim);
        for (std::size_t j = 0; j < classifier.input_dim; ++j) latent_dims[j] = j;
    }

    UnitTest latent_test;
    latent_test.id = "latent-sweep";
    latent_test.pert.dims = latent_dims;
    latent_test.pert.norm = latent_norm;

    const Network pixel_net = compose(encoder, classifier);
    UnitTest pixel_test;
    pixel_test.id = "pixel-sweep";
    pixel_test.pert.dims.resize(encoder.input_dim);
    for (std::size_t j = 0; j < encoder.input_dim; ++j) pixel_test.pert.dims[j] = j;
    pixel_test.pert.norm = Norm::linf;

    std::vector<std::pair<double, double>> latent_curve;
    std::vector<std::pair<double, double>> pixel_curve;
    latent_curve.reserve(eps_grid.size());
    pixel_curve.reserve(eps_grid.size());
    for (double eps : eps_grid) {
        latent_curve.emplace_back(eps, run_unit_test(classifier, latent_data, latent_test, eps, engine).verified_error);
        pixel_curve.emplace_back(eps, run_unit_test(pixel_net, pixel_data, pixel_test, eps, engine).verified_error);
    }

    PixelLatentComparison cmp;
    cmp.target_verified_error = target_verified_error;
    cmp.eps1 = interpolate_epsilon_at(latent_curve, target_verified_error, "latent");
    cmp.eps2 = interpolate_epsilon_at(pixel_curve, target_verified_error, "pixel");

    // Induced half-width and nominal scale, both averaged over the samples
    // and the perturbed dims.
    double width_sum = 0.0;
    double nominal_sum = 0.0;
    for (std::size_t i = 0; i < pixel_data.size(); ++i) {
        const Interval induced = induced_latent_interval(encoder, pixel_data.row(i), cmp.eps2, Norm::linf);
        const VecView z = latent_data.row(i);
        for (std::size_t d : latent_dims) {
            width_sum += (induced.upper[d] - induced.lower[d]) / 2.0;
            nominal_sum += std::abs(z[d]);
        }
    }
    const double denom = static_cast<double>(pixel_data.size() * latent_dims.size());
    cmp.eps21 = width_sum / denom;
    cmp.z_nom = nominal_sum / denom;
    if (cmp.z_nom == 0.0) throw NumericError("compare_pixel_latent: nominal latent scale is zero on the chosen dims");
    cmp.latent_fraction = cmp.eps1 / cmp.z_nom;
    cmp.pixel_induced_fraction = cmp.eps21 / cmp.z_nom;
    return cmp;
}

OracleResult brute_force_oracle(const Network& net, VecView z0, const PerturbationSpec& pert,
                                const std::vector<LinearSpec>& specs, std::size_t n_samples, std::uint64_t seed) {
    net.validate();
    pert.validate(net.input_dim);
    if (z0.size() != net.input_dim)
        throw ShapeError("brute_force_oracle: input length " + std::to_string(z0.size()) +
                         " does not match network input dim " + std::to_string(net.input_dim));
    if (n_samples == 0) throw ArgumentError("brute_force_oracle: n_samples must be positive");

    Rng rng(seed);
    const std::size_t k = pert.dims.size();

    OracleResult result;
    result.logit_min = Vector(net.output_dim(), std::numeric_limits<double>::infinity());
    result.logit_max = Vector(net.output_dim(), -std::numeric_limits<double>::infinity());
    result.margin_max = std::vector<double>(specs.size(), -std::numeric_limits<double>::infinity());
    result.worst_margin = -std::numeric_limits<double>::infinity();

    Vector point(z0.begin(), z0.end());
    Vector direction(k);
    for (std::size_t s = 0; s < n_samples; ++s) {
        if (pert.norm == Norm::linf) {
            for (std::size_t d = 0; d < k; ++d) point[pert.dims[d]] = z0[pert.dims[d]] + rng.uniform(-pert.epsilon, pert.epsilon);
        } else {
            // Uniform in the k-ball: isotropic direction, radius density r^(k-1).
            double norm_sq = 0.0;
            for (std::size_t d = 0; d < k; ++d) {
                direction[d] = rng.gaussian();
                norm_sq += direction[d] * direction[d];
            }
            const double norm = std::sqrt(norm_sq);
            const double radius =
                pert.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(k));
            const double scale = norm > 0.0 ? radius / norm : 0.0;
            for (std::size_t d = 0; d < k; ++d) point[pert.dims[d]] = z0[pert.dims[d]] + scale * direction[d];
        }

        const Vector logits = forward(net, point).logits();
        for (std::size_t i = 0; i < logits.size(); ++i) {
            result.logit_min[i] = std::min(result.logit_min[i], logits[i]);
            result.logit_max[i] = std::max(result.logit_max[i], logits[i]);
        }
        for (std::size_t m = 0; m < specs.size(); ++m) {
            const double margin = dot(specs[m].c, logits) + specs[m].d;
            result.margin_max[m] = std::max(result.margin_max[m], margin);
            if (margin > result.worst_margin) result.worst_margin = margin;
            if (margin > 0.0 && !result.counterexample) result.counterexample = point;
        }
    }
    if (specs.empty()) result.worst_margin = 0.0;
    return result;
}

} // namespace audit
