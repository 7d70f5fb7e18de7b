#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"
#include "audit/harness.hpp"
#include "audit/io.hpp"
#include "audit/linalg.hpp"
#include "audit/rng.hpp"
#include "audit/train.hpp"

using namespace audit;

namespace {

Network mirror_net() {
    Network net;
    net.input_dim = 1;
    Layer layer;
    layer.weights = Matrix(2, 1);
    layer.weights.at(0, 0) = 1.0;
    layer.weights.at(1, 0) = -1.0;
    layer.bias = Vector(2, 0.0);
    net.layers.push_back(layer);
    return net;
}

Network random_net(const std::vector<std::size_t>& widths, Rng& rng) {
    Network net;
    net.input_dim = widths.front();
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        Layer layer;
        layer.weights = Matrix(widths[k + 1], widths[k]);
        for (double& v : layer.weights.values) v = rng.gaussian();
        layer.bias.resize(widths[k + 1]);
        for (double& v : layer.bias) v = rng.gaussian() * 0.1;
        layer.activation = k + 2 < widths.size() ? Activation::relu : Activation::identity;
        net.layers.push_back(std::move(layer));
    }
    return net;
}

Dataset random_points(std::size_t n, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Dataset data;
    data.points = Matrix(n, dim);
    for (double& v : data.points.values) v = rng.gaussian();
    data.labels.assign(n, 0);
    data.num_classes = 2;
    return data;
}

// Labels every row with the net's own prediction so the clean error is zero
// and verification outcomes depend on the bounds alone.
void self_label(Dataset& data, const Network& net) {
    std::size_t classes = net.output_dim();
    data.num_classes = classes;
    for (std::size_t i = 0; i < data.size(); ++i) data.labels[i] = argmax(forward(net, data.row(i)).logits());
}

UnitTest basic_test(const std::vector<std::size_t>& dims, double epsilon, Norm norm) {
    UnitTest test;
    test.id = "t";
    test.pert.dims = dims;
    test.pert.epsilon = epsilon;
    test.pert.norm = norm;
    return test;
}

} // namespace

TEST_CASE("margin specs oppose the true class against every other") {
    const std::vector<LinearSpec> specs = margin_specs(3, 1);
    REQUIRE(specs.size() == 2);
    CHECK(specs[0].c == Vector{1.0, -1.0, 0.0});
    CHECK(specs[1].c == Vector{0.0, -1.0, 1.0});
    CHECK(specs[0].d == 0.0);
    CHECK_THROWS_AS(margin_specs(3, 5), ArgumentError);
}

TEST_CASE("verified error at radius zero is the clean error") {
    Rng rng(151);
    const Network net = random_net({3, 6, 6, 2}, rng);
    Dataset data = random_points(60, 3, 31);
    // Half self-labeled (clean-correct), half flipped.
    self_label(data, net);
    for (std::size_t i = 0; i < data.size(); i += 2) data.labels[i] = 1 - data.labels[i];

    const VerificationReport report =
        run_unit_test(net, data, basic_test({0, 1, 2}, 0.0, Norm::l2), std::nullopt, BoundEngine::ibp);
    CHECK(report.verified_error == doctest::Approx(clean_error(net, data)).epsilon(1e-15));
    CHECK(report.n_unverified == 0);
}

TEST_CASE("the mirror net verifies class 0 for positive inputs") {
    Dataset data;
    data.points = Matrix(2, 1);
    data.points.at(0, 0) = 1.0;
    data.points.at(1, 0) = 2.0;
    data.labels = {0, 0};
    data.num_classes = 2;

    const VerificationReport report =
        run_unit_test(mirror_net(), data, basic_test({0}, 0.5, Norm::linf), std::nullopt, BoundEngine::ibp);
    CHECK(report.verified_error == 0.0);
    CHECK(report.n_clean_errors == 0);
    for (const SampleOutcome& s : report.samples) {
        CHECK(s.verified);
        CHECK(s.margins_evaluated);
        CHECK(s.worst_margin < 0.0);
    }
}

TEST_CASE("verified error is nondecreasing in the radius") {
    Rng rng(157);
    const Network net = random_net({3, 8, 8, 2}, rng);
    Dataset data = random_points(40, 3, 37);
    self_label(data, net);

    double previous = -1.0;
    for (const double eps : {0.0, 0.05, 0.15, 0.4, 1.0}) {
        const VerificationReport report =
            run_unit_test(net, data, basic_test({0, 1}, eps, Norm::l2), std::nullopt, BoundEngine::ibp);
        CHECK(report.verified_error >= previous);
        previous = report.verified_error;
    }
}

TEST_CASE("the backward engine never verifies less than the interval engine") {
    Rng rng(163);
    for (int round = 0; round < 5; ++round) {
        const Network net = random_net({3, 6, 6, 3}, rng);
        Dataset data = random_points(30, 3, 41 + round);
        self_label(data, net);

        const UnitTest test = basic_test({0, 1, 2}, 0.2, Norm::l2);
        const VerificationReport ibp = run_unit_test(net, data, test, std::nullopt, BoundEngine::ibp);
        const VerificationReport crown = run_unit_test(net, data, test, std::nullopt, BoundEngine::crown_ibp);
        CHECK(crown.verified_error <= ibp.verified_error);
    }
}

TEST_CASE("the report is identical for any worker count") {
    Rng rng(167);
    const Network net = random_net({4, 8, 8, 3}, rng);
    Dataset data = random_points(37, 4, 43);
    self_label(data, net);

    const UnitTest test = basic_test({0, 2}, 0.3, Norm::linf);
    const VerificationReport serial = run_unit_test(net, data, test, std::nullopt, BoundEngine::crown_ibp, 1);
    for (const std::size_t jobs : {2, 3, 8, 64}) {
        const VerificationReport parallel = run_unit_test(net, data, test, std::nullopt, BoundEngine::crown_ibp, jobs);
        CHECK(report_to_json(parallel) == report_to_json(serial));
    }
}

TEST_CASE("the epsilon override rescales the test radius") {
    Dataset data;
    data.points = Matrix(1, 1);
    data.points.at(0, 0) = 1.0;
    data.labels = {0};
    data.num_classes = 2;

    const UnitTest test = basic_test({0}, 99.0, Norm::linf);
    const VerificationReport report =
        run_unit_test(mirror_net(), data, test, std::optional<double>(0.25), BoundEngine::ibp);
    CHECK(report.epsilon == 0.25);
    CHECK(report.verified_error == 0.0);
}

TEST_CASE("bisection recovers the analytic threshold radius") {
    Dataset data;
    data.points = Matrix(1, 1);
    data.points.at(0, 0) = 1.0;
    data.labels = {0};
    data.num_classes = 2;

    const EpsilonSearchResult result =
        largest_epsilon(mirror_net(), data, basic_test({0}, 0.0, Norm::linf), BoundEngine::ibp, 4.0, 1e-3);
    CHECK(result.verified_at_zero);
    CHECK(result.eps_star == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(result.iterations <= 30);
}

TEST_CASE("a misclassified sample reports no certifiable radius") {
    const EpsilonSearchResult result = largest_epsilon_sample(
        mirror_net(), Vector{1.0}, 1, basic_test({0}, 0.0, Norm::linf), BoundEngine::ibp, 4.0, 1e-3);
    CHECK_FALSE(result.verified_at_zero);
    CHECK(result.eps_star == 0.0);
}

TEST_CASE("the found radius verifies and a nudge beyond it does not") {
    Rng rng(173);
    int exercised = 0;
    for (int round = 0; round < 8; ++round) {
        const Network net = random_net({3, 6, 2}, rng);
        Dataset data = random_points(10, 3, 47 + round);
        self_label(data, net);

        const UnitTest test = basic_test({0, 1, 2}, 0.0, Norm::l2);
        const double tol = 1e-4;
        const double eps_max = 8.0;
        const EpsilonSearchResult result = largest_epsilon(net, data, test, BoundEngine::ibp, eps_max, tol);
        if (!result.verified_at_zero) continue;

        const VerificationReport at_star =
            run_unit_test(net, data, test, std::optional<double>(result.eps_star), BoundEngine::ibp);
        CHECK(at_star.verified_error == 0.0);

        if (result.eps_star + 4.0 * tol < eps_max) {
            const VerificationReport beyond =
                run_unit_test(net, data, test, std::optional<double>(result.eps_star + 4.0 * tol), BoundEngine::ibp);
            CHECK(beyond.verified_error > 0.0);
            ++exercised;
        }
    }
    CHECK(exercised > 0);
}

TEST_CASE("a full-dimensional pixel ball induces the row-sum latent interval") {
    Network encoder;
    encoder.role = NetworkRole::encoder;
    encoder.input_dim = 2;
    Layer layer;
    layer.weights = Matrix(1, 2);
    layer.weights.at(0, 0) = 0.5;
    layer.weights.at(0, 1) = 0.5;
    layer.bias = Vector(1, 0.0);
    encoder.layers.push_back(layer);

    const Interval box = induced_latent_interval(encoder, Vector{1.0, 3.0}, 0.1, Norm::linf);
    CHECK(box.lower[0] == doctest::Approx(1.9).epsilon(1e-15));
    CHECK(box.upper[0] == doctest::Approx(2.1).epsilon(1e-15));

    const Interval collapsed = induced_latent_interval(encoder, Vector{1.0, 3.0}, 0.0, Norm::linf);
    CHECK(collapsed.lower[0] == 2.0);
    CHECK(collapsed.upper[0] == 2.0);
}

TEST_CASE("induced latent intervals contain sampled pixel perturbations") {
    Rng rng(179);
    Network encoder = random_net({6, 5, 3}, rng);
    encoder.role = NetworkRole::encoder;
    Vector pixels(6);
    for (double& v : pixels) v = rng.gaussian();

    const double eps = 0.2;
    const Interval box = induced_latent_interval(encoder, pixels, eps, Norm::linf);
    bool contained = true;
    for (int s = 0; s < 5000 && contained; ++s) {
        Vector shifted(pixels);
        for (double& v : shifted) v += rng.uniform(-eps, eps);
        contained = box.contains(forward(encoder, shifted).logits(), 1e-9);
    }
    CHECK(contained);
}

TEST_CASE("composition chains the encoder into the classifier") {
    Rng rng(181);
    Network encoder = random_net({5, 4, 3}, rng);
    encoder.role = NetworkRole::encoder;
    const Network classifier = random_net({3, 6, 2}, rng);

    const Network whole = compose(encoder, classifier);
    CHECK(whole.input_dim == 5);
    CHECK(whole.output_dim() == 2);

    Vector pixels(5);
    for (double& v : pixels) v = rng.gaussian();
    const Vector direct = forward(whole, pixels).logits();
    const Vector staged = forward(classifier, forward(encoder, pixels).logits()).logits();
    CHECK(direct == staged);

    Network misfit = random_net({4, 6, 2}, rng);
    CHECK_THROWS_AS(compose(encoder, misfit), ShapeError);
}

TEST_CASE("an identity encoder makes the induced latent radius the pixel radius") {
    Rng rng(191);
    const Network classifier = random_net({3, 8, 8, 2}, rng);

    Network encoder;
    encoder.role = NetworkRole::encoder;
    encoder.input_dim = 3;
    Layer layer;
    layer.weights = Matrix(3, 3, 0.0);
    for (std::size_t i = 0; i < 3; ++i) layer.weights.at(i, i) = 1.0;
    layer.bias = Vector(3, 0.0);
    encoder.layers.push_back(layer);

    Dataset pixels = random_points(50, 3, 53);
    self_label(pixels, classifier);

    const std::vector<double> grid{0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
    // Pick a target strictly inside the achieved range of the shared curve.
    const UnitTest probe = basic_test({0, 1, 2}, 0.0, Norm::linf);
    const double low =
        run_unit_test(classifier, pixels, probe, std::optional<double>(grid.front()), BoundEngine::ibp).verified_error;
    const double high =
        run_unit_test(classifier, pixels, probe, std::optional<double>(grid.back()), BoundEngine::ibp).verified_error;
    REQUIRE(low < high);
    const double target = 0.5 * (low + high);

    const PixelLatentComparison cmp =
        compare_pixel_latent(encoder, classifier, pixels, target, grid, {0, 1, 2}, Norm::linf, BoundEngine::ibp);
    CHECK(cmp.eps21 == doctest::Approx(cmp.eps2).epsilon(1e-12));
    CHECK(cmp.eps1 == doctest::Approx(cmp.eps2).epsilon(1e-12));
    CHECK(cmp.latent_fraction == doctest::Approx(cmp.pixel_induced_fraction).epsilon(1e-12));
}

TEST_CASE("raising the target verified error raises the latent radius") {
    Rng rng(193);
    Network encoder = random_net({4, 4, 3}, rng);
    encoder.role = NetworkRole::encoder;
    const Network classifier = random_net({3, 8, 2}, rng);
    const Network whole = compose(encoder, classifier);

    Dataset pixels = random_points(40, 4, 59);
    self_label(pixels, whole);

    const std::vector<double> grid{0.001, 0.01, 0.05, 0.2, 0.8, 2.0, 5.0};
    const UnitTest probe = basic_test({0, 1, 2}, 0.0, Norm::linf);
    Dataset latents;
    latents.points = Matrix(pixels.size(), 3);
    latents.num_classes = pixels.num_classes;
    latents.labels = pixels.labels;
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        const Vector z = forward(encoder, pixels.row(i)).logits();
        for (std::size_t d = 0; d < 3; ++d) latents.points.at(i, d) = z[d];
    }

    // Choose two targets at distinct achieved levels of the latent curve.
    std::vector<double> errors;
    for (double eps : grid)
        errors.push_back(
            run_unit_test(classifier, latents, probe, std::optional<double>(eps), BoundEngine::ibp).verified_error);
    std::sort(errors.begin(), errors.end());
    errors.erase(std::unique(errors.begin(), errors.end()), errors.end());
    REQUIRE(errors.size() >= 2);
    const double lo_target = errors.front();
    const double hi_target = errors.back();
    REQUIRE(lo_target < hi_target);

    const PixelLatentComparison lo =
        compare_pixel_latent(encoder, classifier, pixels, lo_target, grid, {0, 1, 2}, Norm::linf, BoundEngine::ibp);
    const PixelLatentComparison hi =
        compare_pixel_latent(encoder, classifier, pixels, hi_target, grid, {0, 1, 2}, Norm::linf, BoundEngine::ibp);
    CHECK(lo.eps1 < hi.eps1);
}

TEST_CASE("an unreachable target reports the achieved range") {
    Rng rng(197);
    Network encoder = random_net({4, 4, 3}, rng);
    encoder.role = NetworkRole::encoder;
    const Network classifier = random_net({3, 6, 2}, rng);

    Dataset pixels = random_points(20, 4, 61);
    self_label(pixels, compose(encoder, classifier));

    const std::vector<double> grid{0.01, 0.1, 1.0};
    CHECK_THROWS_WITH_AS(
        compare_pixel_latent(encoder, classifier, pixels, -0.5, grid, {0, 1, 2}, Norm::linf, BoundEngine::ibp),
        doctest::Contains("achieved range"), ArgumentError);
}

TEST_CASE("the sampling oracle respects the analytic margin range") {
    const Network net = mirror_net();
    const PerturbationSpec pert{{0}, 0.5, Norm::linf};
    const std::vector<LinearSpec> specs = margin_specs(2, 0);

    const OracleResult result = brute_force_oracle(net, Vector{1.0}, pert, specs, 10000, 63);
    // Margin is -2z over z in [0.5, 1.5]: always at most -1.
    CHECK(result.worst_margin <= -1.0 + 1e-9);
    CHECK(result.worst_margin >= -3.0 - 1e-9);
    CHECK_FALSE(result.counterexample.has_value());
    CHECK(result.logit_min[0] >= 0.5 - 1e-12);
    CHECK(result.logit_max[0] <= 1.5 + 1e-12);
}

TEST_CASE("the sampling oracle at radius zero sits on the nominal logits") {
    Rng rng(199);
    const Network net = random_net({3, 5, 2}, rng);
    Vector z0(3);
    for (double& v : z0) v = rng.gaussian();
    const Vector logits = forward(net, z0).logits();

    const OracleResult result =
        brute_force_oracle(net, z0, PerturbationSpec{{0, 1, 2}, 0.0, Norm::linf}, margin_specs(2, 0), 100, 65);
    CHECK(result.logit_min == logits);
    CHECK(result.logit_max == logits);
}

TEST_CASE("the sampling oracle is deterministic in the seed") {
    Rng rng(211);
    const Network net = random_net({3, 5, 2}, rng);
    Vector z0(3);
    for (double& v : z0) v = rng.gaussian();
    const PerturbationSpec pert{{0, 1}, 0.3, Norm::l2};

    const OracleResult a = brute_force_oracle(net, z0, pert, margin_specs(2, 1), 500, 67);
    const OracleResult b = brute_force_oracle(net, z0, pert, margin_specs(2, 1), 500, 67);
    CHECK(a.worst_margin == b.worst_margin);
    CHECK(a.logit_min == b.logit_min);
    CHECK(a.logit_max == b.logit_max);
}

TEST_CASE("oracle counterexamples carry the offending point") {
    const Network net = mirror_net();
    // Radius 2 around z0=1 crosses z=0 where class 1 overtakes class 0.
    const OracleResult result =
        brute_force_oracle(net, Vector{1.0}, PerturbationSpec{{0}, 2.0, Norm::linf}, margin_specs(2, 0), 2000, 69);
    REQUIRE(result.counterexample.has_value());
    CHECK((*result.counterexample)[0] < 0.0);
    CHECK(result.worst_margin > 0.0);
}
