#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "audit/io.hpp"
#include "audit/rng.hpp"
#include "audit/spec_sheet.hpp"

using namespace audit;

namespace {

Dataset two_point_latents() {
    Dataset data;
    data.points = Matrix(2, 2);
    data.points.at(0, 0) = 1.0;
    data.points.at(0, 1) = -4.0;
    data.points.at(1, 0) = 2.0;
    data.points.at(1, 1) = -6.0;
    data.labels = {0, 1};
    data.num_classes = 2;
    return data;
}

UnitTest sheet_test(const std::string& id, std::vector<std::size_t> dims) {
    UnitTest test;
    test.id = id;
    test.pert.dims = std::move(dims);
    test.pert.epsilon = 1.0;
    test.pert.norm = Norm::linf;
    return test;
}

VerificationReport report_for(const std::string& id, double epsilon, double verified_error) {
    VerificationReport report;
    report.test_id = id;
    report.epsilon = epsilon;
    report.engine = BoundEngine::ibp;
    report.n_samples = 10;
    report.verified_error = verified_error;
    return report;
}

Network identity_encoder(std::size_t dim) {
    Network net;
    net.role = NetworkRole::encoder;
    net.input_dim = dim;
    Layer layer;
    layer.weights = Matrix(dim, dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) layer.weights.at(i, i) = 1.0;
    layer.bias = Vector(dim, 0.0);
    net.layers.push_back(layer);
    return net;
}

} // namespace

TEST_CASE("aggregation pads the mean endpoints by one standard deviation") {
    const Vector lows{0.5, 1.5};
    const Vector highs{1.5, 2.5};
    const auto [lo, hi] = aggregate_global_bounds(lows, highs);
    CHECK(lo == 0.5);
    CHECK(hi == 2.5);
}

TEST_CASE("a single sample aggregates to its own interval") {
    const auto [lo, hi] = aggregate_global_bounds(Vector{0.75}, Vector{1.25});
    CHECK(lo == 0.75);
    CHECK(hi == 1.25);
}

TEST_CASE("identical samples have no spread to pad with") {
    const Vector lows{-2.0, -2.0, -2.0};
    const Vector highs{3.0, 3.0, 3.0};
    const auto [lo, hi] = aggregate_global_bounds(lows, highs);
    CHECK(lo == -2.0);
    CHECK(hi == 3.0);
}

TEST_CASE("aggregation rejects empty or mismatched endpoint lists") {
    CHECK_THROWS_AS(aggregate_global_bounds(Vector{}, Vector{}), ArgumentError);
    CHECK_THROWS_AS(aggregate_global_bounds(Vector{1.0}, Vector{1.0, 2.0}), ArgumentError);
}

TEST_CASE("the aggregate range always covers the mean endpoints") {
    Rng rng(223);
    for (int round = 0; round < 25; ++round) {
        const std::size_t n = 1 + rng.index(40);
        Vector lows(n);
        Vector highs(n);
        double mean_low = 0.0;
        double mean_high = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            lows[i] = rng.gaussian() * 3.0;
            highs[i] = lows[i] + rng.uniform(0.0, 2.0);
            mean_low += lows[i];
            mean_high += highs[i];
        }
        mean_low /= static_cast<double>(n);
        mean_high /= static_cast<double>(n);
        const auto [lo, hi] = aggregate_global_bounds(lows, highs);
        CHECK(lo <= mean_low + 1e-12);
        CHECK(hi >= mean_high - 1e-12);
    }
}

TEST_CASE("the sheet tabulates reports and picks the widest qualifying radius") {
    const std::vector<UnitTest> tests{sheet_test("stability", {0})};
    const std::vector<VerificationReport> reports{
        report_for("stability", 0.5, 0.4),
        report_for("stability", 0.25, 0.0),
        report_for("stability", 1.0, 0.9),
        report_for("unrelated", 0.5, 0.0),
    };

    const SpecSheet sheet = build_spec_sheet("model.json", "encoder.json", tests, reports, two_point_latents(), 0.5);
    REQUIRE(sheet.entries.size() == 1);
    const SpecSheetEntry& entry = sheet.entries[0];
    CHECK(entry.test_id == "stability");
    CHECK(entry.dims == std::vector<std::size_t>{0});

    // Sorted by radius, foreign test ids excluded.
    REQUIRE(entry.eps_table.size() == 3);
    CHECK(entry.eps_table[0].epsilon == 0.25);
    CHECK(entry.eps_table[1].epsilon == 0.5);
    CHECK(entry.eps_table[2].epsilon == 1.0);

    CHECK(entry.has_range);
    CHECK(entry.chosen_epsilon == 0.5);

    // Latent dim 0 holds {1.0, 2.0}; radius 0.5 gives endpoint lists
    // {0.5, 1.5} and {1.5, 2.5}.
    REQUIRE(entry.global_range.size() == 1);
    CHECK(entry.global_range[0].dim == 0);
    CHECK(entry.global_range[0].lower == 0.5);
    CHECK(entry.global_range[0].upper == 2.5);
}

TEST_CASE("a test with no qualifying radius is flagged rangeless") {
    const std::vector<UnitTest> tests{sheet_test("fragile", {1})};
    const std::vector<VerificationReport> reports{
        report_for("fragile", 0.25, 0.8),
        report_for("fragile", 0.5, 1.0),
    };

    const SpecSheet sheet = build_spec_sheet("m", "e", tests, reports, two_point_latents(), 0.5);
    REQUIRE(sheet.entries.size() == 1);
    CHECK_FALSE(sheet.entries[0].has_range);
    CHECK(sheet.entries[0].global_range.empty());
    CHECK(sheet.entries[0].eps_table.size() == 2);

    // The gate can never accept against a flagged entry.
    const GateDecision decision = gate(identity_encoder(2), sheet, Vector{1.5, -5.0}, "fragile");
    CHECK_FALSE(decision.accept);
    CHECK_FALSE(decision.entry_has_range);
}

TEST_CASE("an empty test list produces an empty sheet that still round-trips") {
    const SpecSheet sheet = build_spec_sheet("m", "e", {}, {}, two_point_latents(), 0.5);
    CHECK(sheet.entries.empty());

    const std::filesystem::path path = std::filesystem::temp_directory_path() / "audit_sheet_empty.json";
    save_spec_sheet(sheet, path.string());
    const SpecSheet loaded = load_spec_sheet(path.string());
    CHECK(loaded.entries.empty());
    CHECK(loaded.model_id == "m");
    std::filesystem::remove(path);
}

TEST_CASE("dims outside the latent space are rejected at build time") {
    const std::vector<UnitTest> tests{sheet_test("bad", {7})};
    CHECK_THROWS_AS(build_spec_sheet("m", "e", tests, {}, two_point_latents(), 0.5), ArgumentError);
    CHECK_THROWS_AS(build_spec_sheet("m", "e", {}, {}, two_point_latents(), 1.5), ArgumentError);
}

TEST_CASE("the gate accepts inside the range and rejects outside") {
    const std::vector<UnitTest> tests{sheet_test("stability", {0})};
    const std::vector<VerificationReport> reports{report_for("stability", 0.5, 0.0)};
    const SpecSheet sheet = build_spec_sheet("m", "e", tests, reports, two_point_latents(), 0.5);
    const Network encoder = identity_encoder(2);

    // Range on dim 0 is [0.5, 2.5]; dim 1 is not constrained.
    CHECK(gate(encoder, sheet, Vector{1.0, 99.0}, "stability").accept);
    CHECK_FALSE(gate(encoder, sheet, Vector{3.0, 0.0}, "stability").accept);
    CHECK_FALSE(gate(encoder, sheet, Vector{0.2, 0.0}, "stability").accept);

    // The boundary belongs to the range.
    CHECK(gate(encoder, sheet, Vector{2.5, 0.0}, "stability").accept);
    CHECK(gate(encoder, sheet, Vector{0.5, 0.0}, "stability").accept);

    const GateDecision decision = gate(encoder, sheet, Vector{1.0, 0.0}, "stability");
    REQUIRE(decision.latent_coords.size() == 1);
    CHECK(decision.latent_coords[0].first == 0);
    CHECK(decision.latent_coords[0].second == 1.0);
    REQUIRE(decision.range.size() == 1);
    CHECK(decision.range[0].lower == 0.5);
    CHECK(decision.range[0].upper == 2.5);
}

TEST_CASE("the gate can bypass the encoder for latent inputs") {
    const std::vector<UnitTest> tests{sheet_test("stability", {0})};
    const std::vector<VerificationReport> reports{report_for("stability", 0.5, 0.0)};
    const SpecSheet sheet = build_spec_sheet("m", "e", tests, reports, two_point_latents(), 0.5);

    // A two-input encoder would reject this shape; already-latent skips it.
    Network encoder = identity_encoder(2);
    const GateDecision decision = gate(encoder, sheet, Vector{1.5, 0.0}, "stability", true);
    CHECK(decision.accept);

    CHECK_THROWS_AS(gate(encoder, sheet, Vector{1.5}, "stability"), ShapeError);
    CHECK_THROWS_AS(gate(encoder, sheet, Vector{1.5, 0.0}, "no-such-test"), ArgumentError);
}

TEST_CASE("a saved sheet gates exactly like the in-memory one") {
    Rng rng(227);
    Dataset latents;
    latents.points = Matrix(30, 3);
    for (double& v : latents.points.values) v = rng.gaussian() * 2.0;
    latents.labels.assign(30, 0);
    latents.num_classes = 2;

    const std::vector<UnitTest> tests{sheet_test("a", {0, 2}), sheet_test("b", {1})};
    const std::vector<VerificationReport> reports{
        report_for("a", 0.1, 0.0), report_for("a", 0.4, 0.3), report_for("a", 0.9, 0.8),
        report_for("b", 0.2, 0.6),
    };
    const SpecSheet sheet = build_spec_sheet("m", "e", tests, reports, latents, 0.5);

    const std::filesystem::path path = std::filesystem::temp_directory_path() / "audit_sheet_roundtrip.json";
    save_spec_sheet(sheet, path.string());
    const SpecSheet loaded = load_spec_sheet(path.string());

    const Network encoder = identity_encoder(3);
    bool identical = true;
    for (int probe = 0; probe < 1000 && identical; ++probe) {
        Vector x(3);
        for (double& v : x) v = rng.gaussian() * 3.0;
        for (const char* id : {"a", "b"})
            identical = identical && gate(encoder, sheet, x, id).accept == gate(encoder, loaded, x, id).accept;
    }
    CHECK(identical);
    std::filesystem::remove(path);
}

TEST_CASE("building the same sheet twice gives identical entries") {
    const std::vector<UnitTest> tests{sheet_test("a", {0}), sheet_test("b", {1})};
    const std::vector<VerificationReport> reports{report_for("a", 0.3, 0.1), report_for("b", 0.3, 0.9)};
    const SpecSheet first = build_spec_sheet("m", "e", tests, reports, two_point_latents(), 0.5);
    const SpecSheet second = build_spec_sheet("m", "e", tests, reports, two_point_latents(), 0.5);

    REQUIRE(first.entries.size() == second.entries.size());
    for (std::size_t i = 0; i < first.entries.size(); ++i) {
        CHECK(first.entries[i].has_range == second.entries[i].has_range);
        CHECK(first.entries[i].chosen_epsilon == second.entries[i].chosen_epsilon);
        REQUIRE(first.entries[i].global_range.size() == second.entries[i].global_range.size());
        for (std::size_t d = 0; d < first.entries[i].global_range.size(); ++d) {
            CHECK(first.entries[i].global_range[d].lower == second.entries[i].global_range[d].lower);
            CHECK(first.entries[i].global_range[d].upper == second.entries[i].global_range[d].upper);
        }
    }
}
