#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "audit/dataset.hpp"
#include "audit/harness.hpp"

namespace audit {

struct EpsTableEntry {
    double epsilon = 0.0;
    double verified_error = 0.0;
};

struct DimRange {
    std::size_t dim = 0;
    double lower = 0.0;
    double upper = 0.0;
};

struct SpecSheetEntry {
    std::string test_id;
    std::vector<std::size_t> dims;
    Norm norm = Norm::linf;
    std::vector<EpsTableEntry> eps_table; // sorted by epsilon
    bool has_range = false;               // false: no epsilon met the threshold
    double chosen_epsilon = 0.0;          // largest epsilon meeting the threshold
    std::vector<DimRange> global_range;   // one per perturbed dim when has_range
};

struct SpecSheet {
    std::string model_id;
    std::string encoder_id;
    std::int64_t created_unix_seconds = 0;
    std::vector<SpecSheetEntry> entries;
};

// Collapses per-sample interval endpoints into one conservative range:
// lower = mean(lows) - std(lows), upper = mean(highs) + std(highs), with the
// population standard deviation (divide by N).
std::pair<double, double> aggregate_global_bounds(VecView lows, VecView highs);

// One sheet entry per unit test. The per-test epsilon table comes from the
// matching verification reports; the per-dim operating ranges aggregate
// [z - eps, z + eps] over the training rows at the largest tabulated epsilon
// whose verified_error is at or below the threshold. Tests where no epsilon
// qualifies get a flagged entry with an empty range.
SpecSheet build_spec_sheet(const std::string& model_id, const std::string& encoder_id,
                           const std::vector<UnitTest>& tests, const std::vector<VerificationReport>& reports,
                           const Dataset& train_latents, double verified_error_threshold = 0.5);

struct GateDecision {
    bool accept = false;
    std::string test_id;
    std::vector<std::pair<std::size_t, double>> latent_coords; // (dim, value) on the test dims
    std::vector<DimRange> range;                               // matched entry's range
    bool entry_has_range = true; // false: entry was flagged, gate rejects
};

// Deployment-time check: encode the input (or take it as already latent) and
// accept iff every perturbed-dim coordinate lies inside the entry's closed
// range. Unknown test ids and shape mismatches throw.
GateDecision gate(const Network& encoder, const SpecSheet& sheet, VecView input, const std::string& test_id,
                  bool already_latent = false);

} // namespace audit
