#pragma once

#include <string>
#include <vector>

#include "audit/dataset.hpp"
#include "audit/harness.hpp"
#include "audit/linalg.hpp"
#include "audit/spec_sheet.hpp"
#include "audit/train.hpp"
#include "audit/world.hpp"

namespace audit {

// All writers go through a temp-file-plus-rename so a crash never leaves a
// truncated artifact at the target path.
void atomic_write(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Network JSON: {"role", "input_dim", "layers": [{"weights": [[...]],
// "bias": [...], "activation": "relu"|...}]}. Numbers round-trip exactly, so
// a load(save(net)) cycle reproduces bit-identical forward outputs.
std::string network_to_json(const Network& net);
Network network_from_json(const std::string& text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Dataset CSV: header z0,...,z{d-1},label or p0,...,p{m-1},label, one row
// per sample, label last as an integer.
void save_dataset(const Dataset& data, const std::string& path, char column_prefix);
Dataset load_dataset(const std::string& path);

// Training history CSV with the fixed header
// epoch,chi,epsilon,task_loss,spec_loss,total_loss,clean_error,verified_error.
void save_history(const TrainHistory& history, const std::string& path);
TrainHistory load_history(const std::string& path);

// Verification report JSON (aggregates plus the per-sample table).
std::string report_to_json(const VerificationReport& report);
VerificationReport report_from_json(const std::string& text);
void save_report(const VerificationReport& report, const std::string& path);
VerificationReport load_report(const std::string& path);

// Single-outcome JSON: {"verified", "upper_bound", "engine", "lower", "upper"}.
std::string outcome_to_json(const VerificationOutcome& outcome);

// Unit-test suite JSON: {"tests": [{"id", "dims", "norm", "description"}]};
// per-test "epsilon" and an explicit "specs" list are accepted as optional.
std::vector<UnitTest> unit_tests_from_json(const std::string& text);
std::vector<UnitTest> load_unit_tests(const std::string& path);

// Spec sheet JSON.
std::string spec_sheet_to_json(const SpecSheet& sheet);
SpecSheet spec_sheet_from_json(const std::string& text);
void save_spec_sheet(const SpecSheet& sheet, const std::string& path);
SpecSheet load_spec_sheet(const std::string& path);

// World directory: decoder.json, encoder.json, train.csv, test.csv,
// config.json (config plus the recorded reconstruction error). With
// include_pixels, additionally train_pixels.csv / test_pixels.csv.
void save_world(const World& world, const std::string& dir, bool include_pixels = false);
World load_world(const std::string& dir);

WorldConfig world_config_from_json(const std::string& text);
std::string world_config_to_json(const WorldConfig& cfg, double reconstruction_error);
WorldConfig load_world_config(const std::string& path);

// One unlabeled CSV row of numbers (gate input). A leading header line is
// skipped if present.
Vector load_csv_row(const std::string& path);

} // namespace audit
