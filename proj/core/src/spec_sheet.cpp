#include "audit/spec_sheet.hpp"

#include <algorithm>
#include <cmath>

namespace audit {

std::pair<double, double> aggregate_global_bounds(VecView lows, VecView highs) {
    if (lows.empty() || lows.size() != highs.size())
        throw ArgumentError("aggregate_global_bounds: need matching nonempty endpoint lists (got " +
                            std::to_string(lows.size()) + " and " + std::to_string(highs.size()) + ")");
    const double n = static_cast<double>(lows.size());

    double mean_low = 0.0;
    double mean_high = 0.0;
    for (std::size_t i = 0; i < lows.size(); ++i) {
        mean_low += lows[i];
        mean_high += highs[i];
    }
    mean_low /= n;
    mean_high /= n;

    // Population variance: the sheet describes this sample set, not an
    // estimate for a larger one.
    double var_low = 0.0;
    double var_high = 0.0;
    for (std::size_t i = 0; i < lows.size(); ++i) {
        var_low += (lows[i] - mean_low) * (lows[i] - mean_low);
        var_high += (highs[i] - mean_high) * (highs[i] - mean_high);
    }
    var_low /= n;
    var_high /= n;

    return {mean_low - std::sqrt(var_low), mean_high + std::sqrt(var_high)};
}

SpecSheet build_spec_sheet(const std::string& model_id, const std::string& encoder_id,
                           const std::vector<UnitTest>& tests, const std::vector<VerificationReport>& reports,
                           const Dataset& train_latents, double verified_error_threshold) {
    train_latents.validate();
    if (!(verified_error_threshold >= 0.0 && verified_error_threshold <= 1.0))
        throw ArgumentError("build_spec_sheet: threshold must be in [0, 1]");

    SpecSheet sheet;
    sheet.model_id = model_id;
    sheet.encoder_id = encoder_id;

    for (const UnitTest& test : tests) {
        SpecSheetEntry entry;
        entry.test_id = test.id;
        entry.dims = test.pert.dims;
        entry.norm = test.pert.norm;
        for (std::size_t d : entry.dims)
            if (d >= train_latents.dim())
                throw ArgumentError("build_spec_sheet: test \"" + test.id + "\" dim " + std::to_string(d) +
                                    " out of range for latent dim " + std::to_string(train_latents.dim()));

        for (const VerificationReport& report : reports) {
            if (report.test_id != test.id) continue;
            entry.eps_table.push_back({report.epsilon, report.verified_error});
        }
        std::sort(entry.eps_table.begin(), entry.eps_table.end(),
                  [](const EpsTableEntry& a, const EpsTableEntry& b) { return a.epsilon < b.epsilon; });

        // Operating point: the largest tabulated radius still meeting the
        // threshold. No qualifying radius leaves the entry flagged rangeless.
        entry.has_range = false;
        for (const EpsTableEntry& row : entry.eps_table) {
            if (row.verified_error <= verified_error_threshold && (!entry.has_range || row.epsilon >= entry.chosen_epsilon)) {
                entry.has_range = true;
                entry.chosen_epsilon = row.epsilon;
            }
        }

        if (entry.has_range) {
            const std::size_t n = train_latents.size();
            Vector lows(n);
            Vector highs(n);
            for (std::size_t d : entry.dims) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double z = train_latents.row(i)[d];
                    lows[i] = z - entry.chosen_epsilon;
                    highs[i] = z + entry.chosen_epsilon;
                }
                const auto [lo, hi] = aggregate_global_bounds(lows, highs);
                entry.global_range.push_back({d, lo, hi});
            }
        }
        sheet.entries.push_back(std::move(entry));
    }
    return sheet;
}

GateDecision gate(const Network& encoder, const SpecSheet& sheet, VecView input, const std::string& test_id,
                  bool already_latent) {
    const SpecSheetEntry* entry = nullptr;
    for (const SpecSheetEntry& candidate : sheet.entries) {
        if (candidate.test_id == test_id) {
            entry = &candidate;
            break;
        }
    }
    if (entry == nullptr) throw ArgumentError("gate: sheet has no entry for test id \"" + test_id + "\"");

    Vector latent;
    if (already_latent) {
        latent.assign(input.begin(), input.end());
    } else {
        if (input.size() != encoder.input_dim)
            throw ShapeError("gate: input length " + std::to_string(input.size()) +
                             " does not match encoder input dim " + std::to_string(encoder.input_dim));
        latent = forward(encoder, input).logits();
    }

    GateDecision decision;
    decision.test_id = test_id;
    decision.range = entry->global_range;
    decision.entry_has_range = entry->has_range;
    for (std::size_t d : entry->dims) {
        if (d >= latent.size())
            throw ShapeError("gate: entry dim " + std::to_string(d) + " out of range for latent dim " +
                             std::to_string(latent.size()));
        decision.latent_coords.emplace_back(d, latent[d]);
    }

    if (!entry->has_range) {
        // No certified operating range exists for this test; nothing can pass.
        decision.accept = false;
        return decision;
    }

    decision.accept = true;
    for (const DimRange& range : entry->global_range) {
        const double z = latent[range.dim];
        // Closed interval: the boundary is in range.
        if (z < range.lower || z > range.upper) decision.accept = false;
    }
    return decision;
}

} // namespace audit
