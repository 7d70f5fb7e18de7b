#include "audit/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace audit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// 17 significant digits round-trip any finite double exactly.
std::string format_double(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.17g", v);
    return buffer;
}

double parse_double(const std::string& token, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(token, &pos);
        if (pos != token.size()) throw IoError(context + ": trailing characters in number \"" + token + "\"");
        return v;
    } catch (const std::logic_error&) {
        throw IoError(context + ": cannot parse number \"" + token + "\"");
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : line) {
        if (ch == ',') {
            tokens.push_back(current);
            current.clear();
        } else if (ch != '\r') {
            current += ch;
        }
    }
    tokens.push_back(current);
    return tokens;
}

const json& require_field(const json& j, const char* name, const std::string& context) {
    const auto it = j.find(name);
    if (it == j.end()) throw IoError(context + ": missing field \"" + name + "\"");
    return *it;
}

json parse_json(const std::string& text, const std::string& context) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw IoError(context + ": malformed JSON");
    return j;
}

Vector json_to_vector(const json& j, const std::string& context) {
    if (!j.is_array()) throw IoError(context + ": expected an array of numbers");
    Vector v;
    v.reserve(j.size());
    for (const json& item : j) {
        if (!item.is_number()) throw IoError(context + ": expected a number");
        v.push_back(item.get<double>());
    }
    return v;
}

std::vector<std::size_t> json_to_dims(const json& j, const std::string& context) {
    if (!j.is_array()) throw IoError(context + ": expected an array of dims");
    std::vector<std::size_t> dims;
    dims.reserve(j.size());
    for (const json& item : j) {
        if (!item.is_number_unsigned()) throw IoError(context + ": dims must be nonnegative integers");
        dims.push_back(item.get<std::size_t>());
    }
    return dims;
}

// Prefixes the file name onto parse errors; open/read errors from read_file
// already carry it.
[[noreturn]] void rethrow_with_path(const std::string& path, const IoError& e) {
    const std::string what = e.what();
    if (what.find(path) != std::string::npos) throw e;
    throw IoError(path + ": " + what);
}

} // namespace

void atomic_write(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + target.parent_path().string() + ": " + ec.message());
    }
    const fs::path temp = target.string() + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + temp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw IoError("write failed for " + temp.string());
    }
    std::error_code ec;
    fs::rename(temp, target, ec);
    if (ec) throw IoError("cannot rename " + temp.string() + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    if (in.bad()) throw IoError("read failed for " + path);
    return buffer.str();
}

std::string network_to_json(const Network& net) {
    net.validate();
    json j;
    j["role"] = to_string(net.role);
    j["input_dim"] = net.input_dim;
    json layers = json::array();
    for (const Layer& layer : net.layers) {
        json rows = json::array();
        for (std::size_t i = 0; i < layer.output_dim(); ++i) {
            json row = json::array();
            for (std::size_t c = 0; c < layer.input_dim(); ++c) row.push_back(layer.weights.at(i, c));
            rows.push_back(std::move(row));
        }
        json entry;
        entry["weights"] = std::move(rows);
        entry["bias"] = layer.bias;
        entry["activation"] = to_string(layer.activation);
        layers.push_back(std::move(entry));
    }
    j["layers"] = std::move(layers);
    return j.dump(2);
}

Network network_from_json(const std::string& text) {
    const std::string context = "network JSON";
    const json j = parse_json(text, context);
    Network net;
    try {
        net.role = role_from_string(require_field(j, "role", context).get<std::string>());
    } catch (const ArgumentError& e) {
        throw IoError(context + ": " + e.what());
    }
    const json& input_dim = require_field(j, "input_dim", context);
    if (!input_dim.is_number_unsigned()) throw IoError(context + ": input_dim must be a nonnegative integer");
    net.input_dim = input_dim.get<std::size_t>();

    const json& layers = require_field(j, "layers", context);
    if (!layers.is_array() || layers.empty()) throw IoError(context + ": layers must be a nonempty array");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const std::string layer_context = context + ", layer " + std::to_string(k);
        const json& entry = layers[k];
        Layer layer;
        try {
            layer.activation = activation_from_string(require_field(entry, "activation", layer_context).get<std::string>());
        } catch (const ArgumentError& e) {
            throw IoError(layer_context + ": " + e.what());
        }
        layer.bias = json_to_vector(require_field(entry, "bias", layer_context), layer_context + " bias");

        const json& rows = require_field(entry, "weights", layer_context);
        if (!rows.is_array() || rows.empty()) throw IoError(layer_context + ": weights must be a nonempty array of rows");
        const std::size_t out_dim = rows.size();
        Vector first_row = json_to_vector(rows[0], layer_context + " weights");
        const std::size_t in_dim = first_row.size();
        if (in_dim == 0) throw IoError(layer_context + ": weight rows must be nonempty");
        layer.weights = Matrix(out_dim, in_dim);
        std::copy(first_row.begin(), first_row.end(), layer.weights.values.begin());
        for (std::size_t i = 1; i < out_dim; ++i) {
            const Vector row = json_to_vector(rows[i], layer_context + " weights");
            if (row.size() != in_dim)
                throw IoError(layer_context + ": weight row " + std::to_string(i) + " has length " +
                              std::to_string(row.size()) + ", expected " + std::to_string(in_dim));
            std::copy(row.begin(), row.end(), layer.weights.values.begin() + i * in_dim);
        }
        net.layers.push_back(std::move(layer));
    }
    try {
        net.validate();
    } catch (const std::exception& e) {
        throw IoError(context + ": " + e.what());
    }
    return net;
}

void save_network(const Network& net, const std::string& path) { atomic_write(path, network_to_json(net) + "\n"); }

Network load_network(const std::string& path) {
    try {
        return network_from_json(read_file(path));
    } catch (const IoError& e) {
        rethrow_with_path(path, e);
    }
}

void save_dataset(const Dataset& data, const std::string& path, char column_prefix) {
    data.validate();
    if (column_prefix != 'z' && column_prefix != 'p')
        throw ArgumentError("save_dataset: column prefix must be 'z' (latent) or 'p' (pixel)");
    std::ostringstream out;
    for (std::size_t c = 0; c < data.dim(); ++c) out << column_prefix << c << ',';
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const VecView row = data.row(i);
        for (std::size_t c = 0; c < row.size(); ++c) out << format_double(row[c]) << ',';
        out << data.labels[i] << '\n';
    }
    atomic_write(path, out.str());
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + " for reading");

    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty dataset file");
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 2 || header.back() != "label")
        throw IoError(path + ": dataset header must end with \"label\"");
    const std::size_t dim = header.size() - 1;
    const char prefix = header.front().empty() ? '\0' : header.front()[0];
    if (prefix != 'z' && prefix != 'p') throw IoError(path + ": dataset columns must be named z0.. or p0..");
    for (std::size_t c = 0; c < dim; ++c) {
        if (header[c] != prefix + std::to_string(c))
            throw IoError(path + ": unexpected column \"" + header[c] + "\" (expected " + prefix + std::to_string(c) + ")");
    }

    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const std::vector<std::string> tokens = split_csv_line(line);
        const std::string context = path + ":" + std::to_string(line_number);
        if (tokens.size() != dim + 1)
            throw IoError(context + ": expected " + std::to_string(dim + 1) + " columns, got " +
                          std::to_string(tokens.size()));
        for (std::size_t c = 0; c < dim; ++c) values.push_back(parse_double(tokens[c], context));
        const double label = parse_double(tokens.back(), context);
        if (label < 0.0 || label != static_cast<double>(static_cast<std::size_t>(label)))
            throw IoError(context + ": label must be a nonnegative integer");
        labels.push_back(static_cast<std::size_t>(label));
    }
    if (labels.empty()) throw IoError(path + ": dataset has no rows");

    Dataset data;
    data.points = Matrix(labels.size(), dim);
    data.points.values = std::move(values);
    data.labels = std::move(labels);
    for (std::size_t label : data.labels) data.num_classes = std::max(data.num_classes, label + 1);
    data.validate();
    return data;
}

void save_history(const TrainHistory& history, const std::string& path) {
    std::ostringstream out;
    out << "epoch,chi,epsilon,task_loss,spec_loss,total_loss,clean_error,verified_error\n";
    for (const EpochRecord& r : history.epochs) {
        out << r.epoch << ',' << format_double(r.chi) << ',' << format_double(r.epsilon) << ','
            << format_double(r.task_loss) << ',' << format_double(r.spec_loss) << ',' << format_double(r.total_loss)
            << ',' << format_double(r.clean_error) << ',' << format_double(r.verified_error) << '\n';
    }
    atomic_write(path, out.str());
}

TrainHistory load_history(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::string line;
    if (!std::getline(in, line)) throw IoError(path + ": empty history file");
    if (split_csv_line(line) !=
        std::vector<std::string>{"epoch", "chi", "epsilon", "task_loss", "spec_loss", "total_loss", "clean_error",
                                 "verified_error"})
        throw IoError(path + ": unexpected history header");
    TrainHistory history;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const std::vector<std::string> tokens = split_csv_line(line);
        const std::string context = path + ":" + std::to_string(line_number);
        if (tokens.size() != 8) throw IoError(context + ": expected 8 columns");
        EpochRecord r;
        r.epoch = static_cast<std::size_t>(parse_double(tokens[0], context));
        r.chi = parse_double(tokens[1], context);
        r.epsilon = parse_double(tokens[2], context);
        r.task_loss = parse_double(tokens[3], context);
        r.spec_loss = parse_double(tokens[4], context);
        r.total_loss = parse_double(tokens[5], context);
        r.clean_error = parse_double(tokens[6], context);
        r.verified_error = parse_double(tokens[7], context);
        history.epochs.push_back(r);
    }
    return history;
}

std::string report_to_json(const VerificationReport& report) {
    json j;
    j["test_id"] = report.test_id;
    j["epsilon"] = report.epsilon;
    j["engine"] = to_string(report.engine);
    j["n"] = report.n_samples;
    j["clean_errors"] = report.n_clean_errors;
    j["unverified"] = report.n_unverified;
    j["verified_error"] = report.verified_error;
    json samples = json::array();
    for (const SampleOutcome& s : report.samples) {
        json entry;
        entry["index"] = s.index;
        entry["predicted"] = s.predicted;
        entry["label"] = s.label;
        entry["verified"] = s.verified;
        if (s.margins_evaluated) entry["worst_margin"] = s.worst_margin;
        else entry["worst_margin"] = nullptr;
        samples.push_back(std::move(entry));
    }
    j["samples"] = std::move(samples);
    return j.dump(2);
}

VerificationReport report_from_json(const std::string& text) {
    const std::string context = "verification report JSON";
    const json j = parse_json(text, context);
    VerificationReport report;
    report.test_id = require_field(j, "test_id", context).get<std::string>();
    report.epsilon = require_field(j, "epsilon", context).get<double>();
    try {
        report.engine = engine_from_string(require_field(j, "engine", context).get<std::string>());
    } catch (const ArgumentError& e) {
        throw IoError(context + ": " + e.what());
    }
    report.n_samples = require_field(j, "n", context).get<std::size_t>();
    report.n_clean_errors = require_field(j, "clean_errors", context).get<std::size_t>();
    report.n_unverified = require_field(j, "unverified", context).get<std::size_t>();
    report.verified_error = require_field(j, "verified_error", context).get<double>();
    const json& samples = require_field(j, "samples", context);
    if (!samples.is_array()) throw IoError(context + ": samples must be an array");
    for (const json& entry : samples) {
        SampleOutcome s;
        s.index = require_field(entry, "index", context).get<std::size_t>();
        s.predicted = require_field(entry, "predicted", context).get<std::size_t>();
        s.label = require_field(entry, "label", context).get<std::size_t>();
        s.verified = require_field(entry, "verified", context).get<bool>();
        const json& margin = require_field(entry, "worst_margin", context);
        if (margin.is_null()) {
            s.margins_evaluated = false;
        } else {
            s.margins_evaluated = true;
            s.worst_margin = margin.get<double>();
        }
        report.samples.push_back(std::move(s));
    }
    return report;
}

void save_report(const VerificationReport& report, const std::string& path) {
    atomic_write(path, report_to_json(report) + "\n");
}

VerificationReport load_report(const std::string& path) {
    try {
        return report_from_json(read_file(path));
    } catch (const IoError& e) {
        rethrow_with_path(path, e);
    }
}

std::string outcome_to_json(const VerificationOutcome& outcome) {
    json j;
    j["verified"] = outcome.verified;
    j["upper_bound"] = outcome.upper_bound;
    j["engine"] = to_string(outcome.engine);
    j["lower"] = outcome.output_interval.lower;
    j["upper"] = outcome.output_interval.upper;
    return j.dump();
}

std::vector<UnitTest> unit_tests_from_json(const std::string& text) {
    const std::string context = "unit test JSON";
    const json j = parse_json(text, context);
    const json& tests = require_field(j, "tests", context);
    if (!tests.is_array() || tests.empty()) throw IoError(context + ": tests must be a nonempty array");

    std::vector<UnitTest> result;
    for (const json& entry : tests) {
        UnitTest test;
        test.id = require_field(entry, "id", context).get<std::string>();
        const std::string test_context = context + ", test \"" + test.id + "\"";
        test.description = require_field(entry, "description", test_context).get<std::string>();
        test.pert.dims = json_to_dims(require_field(entry, "dims", test_context), test_context);
        try {
            test.pert.norm = norm_from_string(require_field(entry, "norm", test_context).get<std::string>());
        } catch (const ArgumentError& e) {
            throw IoError(test_context + ": " + e.what());
        }
        if (entry.contains("epsilon")) test.pert.epsilon = entry["epsilon"].get<double>();
        if (entry.contains("specs")) {
            test.family = SpecFamily::explicit_list;
            for (const json& spec_entry : entry["specs"]) {
                LinearSpec spec;
                spec.c = json_to_vector(require_field(spec_entry, "c", test_context), test_context + " spec c");
                spec.d = require_field(spec_entry, "d", test_context).get<double>();
                test.specs.push_back(std::move(spec));
            }
            if (test.specs.empty()) throw IoError(test_context + ": explicit specs list is empty");
        }
        result.push_back(std::move(test));
    }
    return result;
}

std::vector<UnitTest> load_unit_tests(const std::string& path) {
    try {
        return unit_tests_from_json(read_file(path));
    } catch (const IoError& e) {
        rethrow_with_path(path, e);
    }
}

std::string spec_sheet_to_json(const SpecSheet& sheet) {
    json j;
    j["model_id"] = sheet.model_id;
    j["encoder_id"] = sheet.encoder_id;
    j["created_unix_seconds"] = sheet.created_unix_seconds;
    json entries = json::array();
    for (const SpecSheetEntry& entry : sheet.entries) {
        json e;
        e["test_id"] = entry.test_id;
        e["dims"] = entry.dims;
        e["norm"] = to_string(entry.norm);
        json table = json::array();
        for (const EpsTableEntry& row : entry.eps_table) {
            table.push_back({{"epsilon", row.epsilon}, {"verified_error", row.verified_error}});
        }
        e["eps_table"] = std::move(table);
        e["has_range"] = entry.has_range;
        if (entry.has_range) e["chosen_epsilon"] = entry.chosen_epsilon;
        json ranges = json::array();
        for (const DimRange& r : entry.global_range) {
            ranges.push_back({{"dim", r.dim}, {"lower", r.lower}, {"upper", r.upper}});
        }
        e["global_range"] = std::move(ranges);
        entries.push_back(std::move(e));
    }
    j["entries"] = std::move(entries);
    return j.dump(2);
}

SpecSheet spec_sheet_from_json(const std::string& text) {
    const std::string context = "spec sheet JSON";
    const json j = parse_json(text, context);
    SpecSheet sheet;
    sheet.model_id = require_field(j, "model_id", context).get<std::string>();
    sheet.encoder_id = require_field(j, "encoder_id", context).get<std::string>();
    sheet.created_unix_seconds = require_field(j, "created_unix_seconds", context).get<std::int64_t>();
    const json& entries = require_field(j, "entries", context);
    if (!entries.is_array()) throw IoError(context + ": entries must be an array");
    for (const json& e : entries) {
        SpecSheetEntry entry;
        entry.test_id = require_field(e, "test_id", context).get<std::string>();
        entry.dims = json_to_dims(require_field(e, "dims", context), context);
        try {
            entry.norm = norm_from_string(require_field(e, "norm", context).get<std::string>());
        } catch (const ArgumentError& err) {
            throw IoError(context + ": " + err.what());
        }
        for (const json& row : require_field(e, "eps_table", context)) {
            entry.eps_table.push_back(
                {require_field(row, "epsilon", context).get<double>(),
                 require_field(row, "verified_error", context).get<double>()});
        }
        entry.has_range = require_field(e, "has_range", context).get<bool>();
        if (entry.has_range) entry.chosen_epsilon = require_field(e, "chosen_epsilon", context).get<double>();
        for (const json& row : require_field(e, "global_range", context)) {
            entry.global_range.push_back({require_field(row, "dim", context).get<std::size_t>(),
                                          require_field(row, "lower", context).get<double>(),
                                          require_field(row, "upper", context).get<double>()});
        }
        sheet.entries.push_back(std::move(entry));
    }
    return sheet;
}

void save_spec_sheet(const SpecSheet& sheet, const std::string& path) {
    atomic_write(path, spec_sheet_to_json(sheet) + "\n");
}

SpecSheet load_spec_sheet(const std::string& path) {
    try {
        return spec_sheet_from_json(read_file(path));
    } catch (const IoError& e) {
        rethrow_with_path(path, e);
    }
}

std::string world_config_to_json(const WorldConfig& cfg, double reconstruction_error) {
    json j;
    j["latent_dim"] = cfg.latent_dim;
    j["pixel_dim"] = cfg.pixel_dim;
    j["n_train"] = cfg.n_train;
    j["n_test"] = cfg.n_test;
    j["class_rule"] = {{"type", "sign-of-dim"}, {"dim", cfg.class_rule.dim}, {"margin", cfg.class_rule.margin}};
    j["factor_scales"] = cfg.factor_scales;
    j["seed"] = cfg.seed;
    j["reconstruction_error"] = reconstruction_error;
    return j.dump(2);
}

WorldConfig world_config_from_json(const std::string& text) {
    const std::string context = "world config JSON";
    const json j = parse_json(text, context);
    WorldConfig cfg;
    cfg.latent_dim = require_field(j, "latent_dim", context).get<std::size_t>();
    cfg.pixel_dim = require_field(j, "pixel_dim", context).get<std::size_t>();
    if (j.contains("n_train")) cfg.n_train = j["n_train"].get<std::size_t>();
    if (j.contains("n_test")) cfg.n_test = j["n_test"].get<std::size_t>();
    if (j.contains("class_rule")) {
        const json& rule = j["class_rule"];
        const std::string type = require_field(rule, "type", context).get<std::string>();
        if (type != "sign-of-dim") throw IoError(context + ": unknown class rule type \"" + type + "\"");
        cfg.class_rule.dim = require_field(rule, "dim", context).get<std::size_t>();
        cfg.class_rule.margin = require_field(rule, "margin", context).get<double>();
    }
    if (j.contains("factor_scales")) cfg.factor_scales = json_to_vector(j["factor_scales"], context + " factor_scales");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    return cfg;
}

WorldConfig load_world_config(const std::string& path) {
    try {
        return world_config_from_json(read_file(path));
    } catch (const IoError& e) {
        rethrow_with_path(path, e);
    }
}

void save_world(const World& world, const std::string& dir, bool include_pixels) {
    if (!world.has_encoder()) throw ArgumentError("save_world: fit an encoder before persisting the world");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());

    save_network(world.decoder, (fs::path(dir) / "decoder.json").string());
    save_network(world.encoder, (fs::path(dir) / "encoder.json").string());
    save_dataset(world.train, (fs::path(dir) / "train.csv").string(), 'z');
    save_dataset(world.test, (fs::path(dir) / "test.csv").string(), 'z');
    atomic_write((fs::path(dir) / "config.json").string(),
                 world_config_to_json(world.config, world.reconstruction_error) + "\n");
    if (include_pixels) {
        save_dataset(decode_dataset(world, world.train), (fs::path(dir) / "train_pixels.csv").string(), 'p');
        save_dataset(decode_dataset(world, world.test), (fs::path(dir) / "test_pixels.csv").string(), 'p');
    }
}

World load_world(const std::string& dir) {
    World world;
    const std::string config_path = (fs::path(dir) / "config.json").string();
    world.config = load_world_config(config_path);
    if (world.config.factor_scales.empty()) world.config.factor_scales = Vector(world.config.latent_dim, 1.0);
    const json j = parse_json(read_file(config_path), "world config JSON");
    if (j.contains("reconstruction_error")) world.reconstruction_error = j["reconstruction_error"].get<double>();
    world.decoder = load_network((fs::path(dir) / "decoder.json").string());
    world.encoder = load_network((fs::path(dir) / "encoder.json").string());
    world.train = load_dataset((fs::path(dir) / "train.csv").string());
    world.test = load_dataset((fs::path(dir) / "test.csv").string());
    return world;
}

Vector load_csv_row(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> tokens = split_csv_line(line);
        Vector values;
        values.reserve(tokens.size());
        bool numeric = true;
        for (const std::string& token : tokens) {
            try {
                std::size_t pos = 0;
                values.push_back(std::stod(token, &pos));
                if (pos != token.size()) numeric = false;
            } catch (const std::logic_error&) {
                numeric = false;
            }
            if (!numeric) break;
        }
        if (numeric && !values.empty()) return values;
        // Otherwise treat the line as a header and keep scanning.
    }
    throw IoError(path + ": no numeric row found");
}

} // namespace audit
