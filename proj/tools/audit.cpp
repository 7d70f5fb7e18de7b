// Command-line front end for the latent-space audit library. One binary,
// eight subcommands covering the whole workflow: synthesize a world, train a
// classifier with the robust objective, verify unit tests, search the largest
// certifiable radius, assemble and query deployment spec sheets, sample the
// ball as an empirical cross-check, and compare pixel-space against
// latent-space certification.
//
// Exit codes: 0 success (or affirmative answer), 1 negative answer from a
// yes/no query (verification failed, gate rejected, oracle found a class
// change), 2 usage or configuration error, 3 runtime failure.

#include <algorithm>
#include <cstdint>
#include <ctime>
#include <exception>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "audit/bounds.hpp"
#include "audit/dataset.hpp"
#include "audit/errors.hpp"
#include "audit/harness.hpp"
#include "audit/io.hpp"
#include "audit/linalg.hpp"
#include "audit/spec_sheet.hpp"
#include "audit/train.hpp"
#include "audit/world.hpp"

namespace {

using nlohmann::json;

// The machine-readable summary every subcommand ends with. Exactly one per
// successful dispatch, always the last line on stdout.
void emit_result(const json& payload) { std::cout << "RESULT " << payload.dump() << "\n"; }

std::vector<std::size_t> parse_arch(const std::string& text) {
    std::vector<std::size_t> widths;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string token = text.substr(pos, comma - pos);
        try {
            std::size_t consumed = 0;
            const unsigned long long value = std::stoull(token, &consumed);
            if (consumed != token.size()) throw std::invalid_argument(token);
            widths.push_back(static_cast<std::size_t>(value));
        } catch (const std::exception&) {
            throw audit::ArgumentError("--arch: \"" + token + "\" is not a width (expected e.g. \"4,32,32,2\")");
        }
        pos = comma + 1;
    }
    return widths;
}

struct WorldOpts {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string encoder_method = "least-squares";
    bool emit_pixels = false;
};

int run_world(const WorldOpts& o) {
    audit::WorldConfig cfg = audit::load_world_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();

    audit::EncoderFit method;
    if (o.encoder_method == "least-squares") method = audit::EncoderFit::least_squares;
    else if (o.encoder_method == "gradient") method = audit::EncoderFit::gradient;
    else throw audit::ArgumentError("--encoder: expected least-squares or gradient, got \"" + o.encoder_method + "\"");

    audit::World world = audit::generate_world(cfg);
    audit::fit_encoder(world, method);
    audit::save_world(world, o.out_dir, o.emit_pixels);

    std::cout << "world: " << world.train.size() << " train / " << world.test.size() << " test samples, latent dim "
              << cfg.latent_dim << ", pixel dim " << cfg.pixel_dim << "\n";
    std::cout << "encoder (" << o.encoder_method << "): held-out reconstruction error " << world.reconstruction_error
              << " rms per coordinate\n";

    emit_result(json{{"out_dir", o.out_dir},
                     {"latent_dim", cfg.latent_dim},
                     {"pixel_dim", cfg.pixel_dim},
                     {"n_train", world.train.size()},
                     {"n_test", world.test.size()},
                     {"reconstruction_error", world.reconstruction_error}});
    return 0;
}

struct TrainOpts {
    std::string data;
    std::string eval;
    std::string arch;
    double epsilon = 0.0;
    std::vector<std::size_t> dims;
    std::string norm = "linf";
    std::size_t epochs = 100;
    std::size_t warmup = 5;
    std::size_t ramp = 50;
    double lr = 5e-4;
    double kappa_final = 0.5;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
    std::string out;
    std::string history;
};

int run_train(const TrainOpts& o) {
    audit::TrainConfig cfg;
    cfg.layer_widths = parse_arch(o.arch);
    cfg.epochs = o.epochs;
    cfg.warmup_epochs = o.warmup;
    cfg.ramp_epochs = o.ramp;
    cfg.learning_rate = o.lr;
    cfg.kappa_final = o.kappa_final;
    cfg.epsilon_target = o.epsilon;
    cfg.pert_dims = o.dims;
    cfg.norm = audit::norm_from_string(o.norm);
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.validate();

    const audit::Dataset train_set = audit::load_dataset(o.data);
    const audit::Dataset eval_set = audit::load_dataset(o.eval);

    auto [net, history] = audit::train(cfg, train_set, eval_set);

    const std::size_t stride = std::max<std::size_t>(1, cfg.epochs / 5);
    for (const audit::EpochRecord& rec : history.epochs) {
        if (rec.epoch % stride != 0 && rec.epoch + 1 != cfg.epochs) continue;
        std::cout << "epoch " << rec.epoch << ": chi " << rec.chi << " eps " << rec.epsilon << " total loss "
                  << rec.total_loss << " clean " << rec.clean_error << " verified " << rec.verified_error << "\n";
    }

    audit::save_network(net, o.out);
    if (!o.history.empty()) audit::save_history(history, o.history);

    const audit::EpochRecord& last = history.epochs.back();
    emit_result(json{{"out", o.out},
                     {"epochs", cfg.epochs},
                     {"clean_error", last.clean_error},
                     {"verified_error", last.verified_error},
                     {"total_loss", last.total_loss}});
    return 0;
}

struct VerifyOpts {
    std::string model;
    std::string data;
    double epsilon = 0.0;
    std::vector<std::size_t> dims;
    std::string norm = "linf";
    std::string engine = "ibp";
    std::string out;
    std::string test_id = "adhoc";
    std::size_t jobs = 1;
};

audit::UnitTest make_unit_test(const std::string& id, const std::vector<std::size_t>& dims, double epsilon,
                               const std::string& norm) {
    audit::UnitTest test;
    test.id = id;
    test.pert.dims = dims;
    test.pert.epsilon = epsilon;
    test.pert.norm = audit::norm_from_string(norm);
    return test;
}

int run_verify(const VerifyOpts& o) {
    const audit::Network net = audit::load_network(o.model);
    const audit::Dataset data = audit::load_dataset(o.data);
    const audit::UnitTest test = make_unit_test(o.test_id, o.dims, o.epsilon, o.norm);
    const audit::BoundEngine engine = audit::engine_from_string(o.engine);

    const audit::VerificationReport report = audit::run_unit_test(net, data, test, std::nullopt, engine, o.jobs);
    audit::save_report(report, o.out);

    std::cout << "verified " << (report.n_samples - report.n_clean_errors - report.n_unverified) << "/"
              << report.n_samples << " samples at epsilon " << report.epsilon << " (" << o.norm << ", engine "
              << o.engine << "): verified error " << report.verified_error << "\n";

    emit_result(json{{"test_id", report.test_id},
                     {"epsilon", report.epsilon},
                     {"engine", audit::to_string(report.engine)},
                     {"n", report.n_samples},
                     {"clean_errors", report.n_clean_errors},
                     {"unverified", report.n_unverified},
                     {"verified_error", report.verified_error},
                     {"out", o.out}});
    return report.verified_error == 0.0 ? 0 : 1;
}

struct SearchOpts {
    std::string model;
    std::string data;
    std::vector<std::size_t> dims;
    std::string norm = "linf";
    std::string engine = "ibp";
    double eps_max = 0.0;
    double tol = 1e-3;
    std::string test_id = "search";
};

int run_search(const SearchOpts& o) {
    const audit::Network net = audit::load_network(o.model);
    const audit::Dataset data = audit::load_dataset(o.data);
    const audit::UnitTest test = make_unit_test(o.test_id, o.dims, 0.0, o.norm);
    const audit::BoundEngine engine = audit::engine_from_string(o.engine);

    const audit::EpsilonSearchResult result = audit::largest_epsilon(net, data, test, engine, o.eps_max, o.tol);

    if (!result.verified_at_zero)
        std::cout << "no certifiable radius: some sample fails even at epsilon 0\n";
    else
        std::cout << "largest certified epsilon " << result.eps_star << " (" << result.iterations
                  << " bisection steps, tolerance " << o.tol << ")\n";

    emit_result(json{{"eps_star", result.eps_star},
                     {"verified_at_zero", result.verified_at_zero},
                     {"iterations", result.iterations}});
    return 0;
}

struct SheetOpts {
    std::string model;
    std::string encoder;
    std::string train;
    std::string tests;
    std::vector<std::string> reports;
    double threshold = 0.5;
    std::string out;
    bool deterministic = false;
};

int run_sheet(const SheetOpts& o) {
    // The networks are loaded only to fail fast on a bad path; the sheet
    // records their file names as ids.
    audit::load_network(o.model);
    audit::load_network(o.encoder);
    const std::vector<audit::UnitTest> tests = audit::load_unit_tests(o.tests);
    const audit::Dataset train_latents = audit::load_dataset(o.train);

    std::vector<audit::VerificationReport> reports;
    reports.reserve(o.reports.size());
    for (const std::string& path : o.reports) reports.push_back(audit::load_report(path));

    audit::SpecSheet sheet = audit::build_spec_sheet(o.model, o.encoder, tests, reports, train_latents, o.threshold);
    sheet.created_unix_seconds = o.deterministic ? 0 : static_cast<std::int64_t>(std::time(nullptr));
    audit::save_spec_sheet(sheet, o.out);

    std::size_t flagged = 0;
    for (const audit::SpecSheetEntry& entry : sheet.entries)
        if (!entry.has_range) ++flagged;
    std::cout << "spec sheet: " << sheet.entries.size() << " entries from " << reports.size() << " reports, "
              << flagged << " without a certified range at threshold " << o.threshold << "\n";

    emit_result(json{{"out", o.out}, {"entries", sheet.entries.size()}, {"flagged", flagged}});
    return 0;
}

struct GateOpts {
    std::string encoder;
    std::string sheet;
    std::string test_id;
    std::string input;
    bool already_latent = false;
};

int run_gate(const GateOpts& o) {
    const audit::Network encoder = audit::load_network(o.encoder);
    const audit::SpecSheet sheet = audit::load_spec_sheet(o.sheet);
    const audit::Vector row = audit::load_csv_row(o.input);

    const audit::GateDecision decision = audit::gate(encoder, sheet, row, o.test_id, o.already_latent);

    json coords = json::array();
    for (const auto& [dim, value] : decision.latent_coords) coords.push_back(json{{"dim", dim}, {"value", value}});
    std::cout << "gate " << (decision.accept ? "accepts" : "rejects") << " the input for test \"" << o.test_id
              << "\"\n";

    emit_result(json{{"decision", decision.accept ? "accept" : "reject"},
                     {"test_id", decision.test_id},
                     {"latent", coords},
                     {"entry_has_range", decision.entry_has_range}});
    return decision.accept ? 0 : 1;
}

struct OracleOpts {
    std::string model;
    std::string data;
    double epsilon = 0.0;
    std::vector<std::size_t> dims;
    std::string norm = "linf";
    std::size_t samples = 10000;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

int run_oracle(const OracleOpts& o) {
    const audit::Network net = audit::load_network(o.model);
    const audit::Dataset data = audit::load_dataset(o.data);
    data.validate();
    audit::PerturbationSpec pert;
    pert.dims = o.dims;
    pert.epsilon = o.epsilon;
    pert.norm = audit::norm_from_string(o.norm);
    pert.validate(net.input_dim);
    if (o.jobs == 0) throw audit::ArgumentError("--jobs must be positive");

    const std::size_t n = data.size();
    const std::size_t classes = net.output_dim();
    std::vector<double> worst(n);
    std::vector<char> violated(n);

    // Each row gets its own derived seed, so the answer is independent of the
    // fan-out width.
    auto sweep = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::vector<audit::LinearSpec> specs = audit::margin_specs(classes, data.labels[i]);
            const audit::OracleResult result =
                audit::brute_force_oracle(net, data.row(i), pert, specs, o.samples, o.seed + i);
            worst[i] = result.worst_margin;
            violated[i] = result.counterexample.has_value() ? 1 : 0;
        }
    };

    if (o.jobs == 1 || n < 2) {
        sweep(0, n);
    } else {
        const std::size_t workers = std::min(o.jobs, n);
        std::vector<std::thread> pool;
        pool.reserve(workers);
        std::exception_ptr first_error;
        std::mutex error_mutex;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = n * w / workers;
            const std::size_t end = n * (w + 1) / workers;
            pool.emplace_back([&, begin, end] {
                try {
                    sweep(begin, end);
                } catch (...) {
                    const std::lock_guard<std::mutex> hold(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            });
        }
        for (std::thread& t : pool) t.join();
        if (first_error) std::rethrow_exception(first_error);
    }

    std::size_t violations = 0;
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        if (violated[i]) ++violations;
        worst_margin = std::max(worst_margin, worst[i]);
    }

    std::cout << "sampled " << o.samples << " points per row over " << n << " rows: " << violations
              << " rows with a class change inside the ball, worst sampled margin " << worst_margin << "\n";

    emit_result(json{{"n", n},
                     {"samples_per_row", o.samples},
                     {"violations", violations},
                     {"worst_margin", worst_margin}});
    return violations == 0 ? 0 : 1;
}

struct CompareOpts {
    std::string encoder;
    std::string model;
    std::string data;
    double target = 0.0;
    std::vector<double> eps_grid;
    std::vector<std::size_t> dims;
    std::string norm = "linf";
    std::string engine = "ibp";
};

int run_compare(const CompareOpts& o) {
    const audit::Network encoder = audit::load_network(o.encoder);
    const audit::Network model = audit::load_network(o.model);
    const audit::Dataset pixel_data = audit::load_dataset(o.data);

    std::vector<std::size_t> dims = o.dims;
    if (dims.empty()) {
        dims.resize(encoder.output_dim());
        for (std::size_t d = 0; d < dims.size(); ++d) dims[d] = d;
    }

    const audit::PixelLatentComparison cmp =
        audit::compare_pixel_latent(encoder, model, pixel_data, o.target, o.eps_grid, dims,
                                    audit::norm_from_string(o.norm), audit::engine_from_string(o.engine));

    std::cout << "at verified error " << cmp.target_verified_error << ": latent radius " << cmp.eps1
              << ", pixel radius " << cmp.eps2 << " inducing latent half-width " << cmp.eps21 << "\n";
    std::cout << "as fractions of the nominal latent scale " << cmp.z_nom << ": latent " << cmp.latent_fraction
              << " vs pixel-induced " << cmp.pixel_induced_fraction << "\n";

    emit_result(json{{"target_verified_error", cmp.target_verified_error},
                     {"eps1", cmp.eps1},
                     {"eps2", cmp.eps2},
                     {"eps21", cmp.eps21},
                     {"z_nom", cmp.z_nom},
                     {"latent_fraction", cmp.latent_fraction},
                     {"pixel_induced_fraction", cmp.pixel_induced_fraction}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent-space robustness audit toolkit"};
    app.require_subcommand(1);

    WorldOpts world_opts;
    CLI::App* world = app.add_subcommand("world", "generate a synthetic world directory (decoder, encoder, datasets)");
    world->add_option("--config", world_opts.config, "world config JSON")->required();
    world->add_option("--out-dir", world_opts.out_dir, "output directory")->required();
    world->add_option("--seed", world_opts.seed, "overrides the seed in the config");
    world->add_option("--encoder", world_opts.encoder_method, "encoder fit: least-squares or gradient")
        ->capture_default_str();
    world->add_flag("--emit-pixels", world_opts.emit_pixels, "also write train_pixels.csv / test_pixels.csv");

    TrainOpts train_opts;
    CLI::App* train = app.add_subcommand("train", "train a classifier with the scheduled robust objective");
    train->add_option("--data", train_opts.data, "training dataset CSV")->required();
    train->add_option("--eval", train_opts.eval, "evaluation dataset CSV")->required();
    train->add_option("--arch", train_opts.arch, "comma-separated layer widths, input first, classes last")
        ->required();
    train->add_option("--epsilon", train_opts.epsilon, "perturbation radius reached at the end of the ramp")
        ->capture_default_str();
    train->add_option("--dims", train_opts.dims, "perturbed input dims (comma-separated)")->delimiter(',');
    train->add_option("--norm", train_opts.norm, "perturbation norm: l2 or linf")->capture_default_str();
    train->add_option("--epochs", train_opts.epochs, "training epochs")->capture_default_str();
    train->add_option("--warmup", train_opts.warmup, "epochs before the schedule starts moving")
        ->capture_default_str();
    train->add_option("--ramp", train_opts.ramp, "epochs over which chi and epsilon move linearly")
        ->capture_default_str();
    train->add_option("--lr", train_opts.lr, "learning rate")->capture_default_str();
    train->add_option("--kappa-final", train_opts.kappa_final, "final weight on the robust loss term")
        ->capture_default_str();
    train->add_option("--batch", train_opts.batch, "minibatch size")->capture_default_str();
    train->add_option("--seed", train_opts.seed, "seed for init and shuffling")->capture_default_str();
    train->add_option("--out", train_opts.out, "output model JSON")->required();
    train->add_option("--history", train_opts.history, "optional per-epoch history CSV");

    VerifyOpts verify_opts;
    CLI::App* verify = app.add_subcommand("verify", "certify class invariance over a dataset (exit 1 if any sample fails)");
    verify->add_option("--model", verify_opts.model, "classifier JSON")->required();
    verify->add_option("--data", verify_opts.data, "dataset CSV")->required();
    verify->add_option("--epsilon", verify_opts.epsilon, "perturbation radius")->required();
    verify->add_option("--dims", verify_opts.dims, "perturbed input dims (comma-separated)")
        ->required()
        ->delimiter(',');
    verify->add_option("--norm", verify_opts.norm, "perturbation norm: l2 or linf")->capture_default_str();
    verify->add_option("--engine", verify_opts.engine, "bound engine: ibp or crown-ibp")->capture_default_str();
    verify->add_option("--out", verify_opts.out, "output report JSON")->required();
    verify->add_option("--test-id", verify_opts.test_id, "test id recorded in the report")->capture_default_str();
    verify->add_option("--jobs", verify_opts.jobs, "worker threads (result independent of the count)")
        ->capture_default_str();

    SearchOpts search_opts;
    CLI::App* search = app.add_subcommand("search-eps", "bisect for the largest radius at which the dataset certifies");
    search->add_option("--model", search_opts.model, "classifier JSON")->required();
    search->add_option("--data", search_opts.data, "dataset CSV")->required();
    search->add_option("--dims", search_opts.dims, "perturbed input dims (comma-separated)")
        ->required()
        ->delimiter(',');
    search->add_option("--norm", search_opts.norm, "perturbation norm: l2 or linf")->capture_default_str();
    search->add_option("--engine", search_opts.engine, "bound engine: ibp or crown-ibp")->capture_default_str();
    search->add_option("--eps-max", search_opts.eps_max, "upper end of the search interval")->required();
    search->add_option("--tol", search_opts.tol, "radius tolerance")->capture_default_str();

    SheetOpts sheet_opts;
    CLI::App* sheet = app.add_subcommand("spec-sheet", "aggregate verification reports into a deployment spec sheet");
    sheet->add_option("--model", sheet_opts.model, "classifier JSON (recorded as model id)")->required();
    sheet->add_option("--encoder", sheet_opts.encoder, "encoder JSON (recorded as encoder id)")->required();
    sheet->add_option("--train", sheet_opts.train, "training latents CSV for the operating ranges")->required();
    sheet->add_option("--tests", sheet_opts.tests, "unit test suite JSON")->required();
    sheet->add_option("--reports", sheet_opts.reports, "verification report JSONs (comma-separated)")
        ->required()
        ->delimiter(',');
    sheet->add_option("--threshold", sheet_opts.threshold, "largest acceptable verified error")
        ->capture_default_str();
    sheet->add_option("--out", sheet_opts.out, "output sheet JSON")->required();
    sheet->add_flag("--deterministic", sheet_opts.deterministic, "zero the creation timestamp");

    GateOpts gate_opts;
    CLI::App* gate = app.add_subcommand("gate", "check an input against a sheet's certified range (exit 1 on reject)");
    gate->add_option("--encoder", gate_opts.encoder, "encoder JSON")->required();
    gate->add_option("--spec-sheet", gate_opts.sheet, "spec sheet JSON")->required();
    gate->add_option("--test-id", gate_opts.test_id, "sheet entry to check against")->required();
    gate->add_option("--input", gate_opts.input, "CSV row with the input values")->required();
    gate->add_flag("--already-latent", gate_opts.already_latent, "input is a latent code, skip the encoder");

    OracleOpts oracle_opts;
    CLI::App* oracle = app.add_subcommand("oracle", "sample the ball for class changes (exit 1 if any are found)");
    oracle->add_option("--model", oracle_opts.model, "classifier JSON")->required();
    oracle->add_option("--data", oracle_opts.data, "dataset CSV")->required();
    oracle->add_option("--epsilon", oracle_opts.epsilon, "perturbation radius")->required();
    oracle->add_option("--dims", oracle_opts.dims, "perturbed input dims (comma-separated)")
        ->required()
        ->delimiter(',');
    oracle->add_option("--norm", oracle_opts.norm, "perturbation norm: l2 or linf")->capture_default_str();
    oracle->add_option("--samples", oracle_opts.samples, "samples per row")->capture_default_str();
    oracle->add_option("--seed", oracle_opts.seed, "base seed (row i uses seed + i)")->capture_default_str();
    oracle->add_option("--jobs", oracle_opts.jobs, "worker threads (result independent of the count)")
        ->capture_default_str();

    CompareOpts compare_opts;
    CLI::App* compare =
        app.add_subcommand("compare-pixel", "compare pixel-ball and latent-ball radii at matched verified error");
    compare->add_option("--encoder", compare_opts.encoder, "encoder JSON")->required();
    compare->add_option("--model", compare_opts.model, "classifier JSON on the latent space")->required();
    compare->add_option("--data", compare_opts.data, "pixel dataset CSV")->required();
    compare->add_option("--target-verified-error", compare_opts.target, "verified error level to match")->required();
    compare->add_option("--eps-grid", compare_opts.eps_grid, "shared radius grid (comma-separated)")
        ->required()
        ->delimiter(',');
    compare->add_option("--dims", compare_opts.dims, "latent dims for the latent-side ball (default: all)")
        ->delimiter(',');
    compare->add_option("--norm", compare_opts.norm, "latent-side norm: l2 or linf")->capture_default_str();
    compare->add_option("--engine", compare_opts.engine, "bound engine: ibp or crown-ibp")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // help and version are successes, everything else is usage
    }

    try {
        if (world->parsed()) return run_world(world_opts);
        if (train->parsed()) return run_train(train_opts);
        if (verify->parsed()) return run_verify(verify_opts);
        if (search->parsed()) return run_search(search_opts);
        if (sheet->parsed()) return run_sheet(sheet_opts);
        if (gate->parsed()) return run_gate(gate_opts);
        if (oracle->parsed()) return run_oracle(oracle_opts);
        if (compare->parsed()) return run_compare(compare_opts);
    } catch (const std::invalid_argument& e) {
        // ArgumentError, ShapeError, ConfigError: the invocation is wrong.
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        // IoError, NumericError, CapabilityError: the invocation was fine but
        // the run failed.
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
