#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"
#include "audit/linalg.hpp"

namespace audit {

// A named robustness requirement. The default family derives one margin spec
// per wrong class (c = onehot(y) - onehot(y_true), d = 0); an explicit list
// carries arbitrary linear functionals instead.
enum class SpecFamily { classification_invariance, explicit_list };

struct UnitTest {
    std::string id;
    std::string description;
    PerturbationSpec pert;
    SpecFamily family = SpecFamily::classification_invariance;
    std::vector<LinearSpec> specs; // explicit_list only
};

struct SampleOutcome {
    std::size_t index = 0;
    std::size_t predicted = 0;
    std::size_t label = 0;
    bool verified = false;
    bool margins_evaluated = false; // false when the clean prediction was wrong
    double worst_margin = 0.0;      // max upper bound across specs, when evaluated
};

struct VerificationReport {
    std::string test_id;
    double epsilon = 0.0;
    BoundEngine engine = BoundEngine::ibp;
    std::size_t n_samples = 0;
    std::size_t n_clean_errors = 0;
    std::size_t n_unverified = 0; // clean-correct but not verified
    double verified_error = 0.0;  // (n_clean_errors + n_unverified) / n_samples
    std::vector<SampleOutcome> samples;
};

// Evaluates the unit test over every row. A sample counts toward
// verified_error when its clean prediction is wrong or any spec fails to
// verify. jobs > 1 fans the per-sample work across threads; results are
// written by index, so the report is identical for every job count.
VerificationReport run_unit_test(const Network& net, const Dataset& data, const UnitTest& test,
                                 std::optional<double> epsilon_override, BoundEngine engine, std::size_t jobs = 1);

struct EpsilonSearchResult {
    double eps_star = 0.0;
    bool verified_at_zero = true; // false: nothing certifiable even at radius 0
    std::size_t iterations = 0;
};

// Largest radius at which the whole dataset verifies, by bisection on the
// monotone predicate. Converges to within tol of the true threshold in at
// most max_iterations halvings (the interval shrinks by half each step).
EpsilonSearchResult largest_epsilon(const Network& net, const Dataset& data, const UnitTest& test,
                                    BoundEngine engine, double eps_max, double tol,
                                    std::size_t max_iterations = 30);

// Same search for a single sample.
EpsilonSearchResult largest_epsilon_sample(const Network& net, VecView z0, std::size_t label, const UnitTest& test,
                                           BoundEngine engine, double eps_max, double tol,
                                           std::size_t max_iterations = 30);

// Latent box induced by a full-dimensional pixel ball pushed through the
// encoder with the interval pass.
Interval induced_latent_interval(const Network& encoder, VecView pixels, double pixel_epsilon,
                                 Norm norm = Norm::linf);

// encoder o classifier as one network (for verifying pixel-space balls
// end to end). Shapes and roles are checked.
Network compose(const Network& encoder, const Network& classifier);

struct PixelLatentComparison {
    double target_verified_error = 0.0;
    double eps1 = 0.0;   // latent radius reaching the target
    double eps2 = 0.0;   // pixel radius reaching the target
    double eps21 = 0.0;  // mean induced latent half-width on the test dims at eps2
    double z_nom = 0.0;  // mean absolute nominal latent value on the test dims
    double latent_fraction = 0.0;        // eps1 / z_nom
    double pixel_induced_fraction = 0.0; // eps21 / z_nom
};

// Sweeps the shared epsilon grid on both sides (latent ball on `dims` vs
// full-dimensional pixel ball through the encoder), interpolates each curve
// at the target verified error, and reports both radii as fractions of the
// nominal latent scale. Errors if either curve never reaches the target,
// listing the achieved range.
PixelLatentComparison compare_pixel_latent(const Network& encoder, const Network& classifier,
                                           const Dataset& pixel_data, double target_verified_error,
                                           const std::vector<double>& eps_grid,
                                           const std::vector<std::size_t>& dims, Norm latent_norm = Norm::linf,
                                           BoundEngine engine = BoundEngine::ibp);

struct OracleResult {
    Vector logit_min;                  // empirical per-logit minimum over samples
    Vector logit_max;                  // empirical per-logit maximum
    std::vector<double> margin_max;    // empirical maximum of each spec margin
    double worst_margin = 0.0;         // max over specs (0 specs -> -inf guarded to 0)
    std::optional<Vector> counterexample; // first sampled point with a positive margin
};

// Monte Carlo sweep of the ball: linf draws each perturbed coordinate
// uniformly; l2 draws a uniform direction and a radius with density
// proportional to r^(k-1), i.e. uniform in the k-ball. Deterministic for a
// fixed seed.
OracleResult brute_force_oracle(const Network& net, VecView z0, const PerturbationSpec& pert,
                                const std::vector<LinearSpec>& specs, std::size_t n_samples, std::uint64_t seed);

// Margin specs for classification invariance: one per wrong class.
std::vector<LinearSpec> margin_specs(std::size_t num_classes, std::size_t true_class);

} // namespace audit
