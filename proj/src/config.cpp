#include "aqmm/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace aqmm {

namespace {

std::string trim(const std::string& s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"') quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

[[noreturn]] void fail(int line, const std::string& message) {
    throw std::invalid_argument("config" +
                                (line > 0 ? " line " + std::to_string(line) : std::string()) +
                                ": " + message);
}

std::string parse_string(const std::string& raw, int line) {
    if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"') {
        std::string out;
        for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
            if (raw[i] == '\\' && i + 2 < raw.size()) {
                ++i;
                if (raw[i] == '"' || raw[i] == '\\') {
                    out.push_back(raw[i]);
                } else {
                    fail(line, "unsupported escape in string");
                }
            } else {
                out.push_back(raw[i]);
            }
        }
        return out;
    }
    if (line == 0) return raw;  // environment values may be unquoted
    fail(line, "expected a quoted string");
}

long long parse_int(const std::string& raw, int line) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(raw, &used);
        if (used != raw.size()) fail(line, "trailing characters after integer '" + raw + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(line, "expected an integer, got '" + raw + "'");
    } catch (const std::out_of_range&) {
        fail(line, "integer out of range: '" + raw + "'");
    }
}

std::uint64_t parse_u64(const std::string& raw, int line) {
    try {
        std::size_t used = 0;
        if (!raw.empty() && raw[0] == '-') fail(line, "expected a non-negative integer");
        const unsigned long long v = std::stoull(raw, &used);
        if (used != raw.size()) fail(line, "trailing characters after integer '" + raw + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(line, "expected an integer, got '" + raw + "'");
    } catch (const std::out_of_range&) {
        fail(line, "integer out of range: '" + raw + "'");
    }
}

double parse_float(const std::string& raw, int line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(raw, &used);
        if (used != raw.size()) fail(line, "trailing characters after number '" + raw + "'");
        return v;
    } catch (const std::invalid_argument&) {
        fail(line, "expected a number, got '" + raw + "'");
    } catch (const std::out_of_range&) {
        fail(line, "number out of range: '" + raw + "'");
    }
}

int parse_positive_int(const std::string& raw, int line) {
    const long long v = parse_int(raw, line);
    if (v < 1 || v > 1'000'000'000LL) fail(line, "value out of range: '" + raw + "'");
    return static_cast<int>(v);
}

// line == 0 marks environment-sourced values (unquoted strings allowed).
using Setter = std::function<void(RunConfig&, const std::string& raw, int line)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset.seed", [](RunConfig& c, const std::string& r, int l) { c.dataset.seed = parse_u64(r, l); }},
        {"model.kind", [](RunConfig& c, const std::string& r, int l) { c.model.kind = parse_string(r, l); }},
        {"model.n_bins", [](RunConfig& c, const std::string& r, int l) { c.model.n_bins = parse_positive_int(r, l); }},
        {"model.penc_frequencies", [](RunConfig& c, const std::string& r, int l) { c.model.penc_frequencies = parse_positive_int(r, l); }},
        {"model.context_dim", [](RunConfig& c, const std::string& r, int l) { c.model.context_dim = parse_positive_int(r, l); }},
        {"model.hidden1", [](RunConfig& c, const std::string& r, int l) { c.model.hidden1 = parse_positive_int(r, l); }},
        {"model.hidden2", [](RunConfig& c, const std::string& r, int l) { c.model.hidden2 = parse_positive_int(r, l); }},
        {"model.mog_components", [](RunConfig& c, const std::string& r, int l) { c.model.mog_components = parse_positive_int(r, l); }},
        {"model.viewpoints", [](RunConfig& c, const std::string& r, int l) { c.model.viewpoints = parse_positive_int(r, l); }},
        {"model.grid_hidden", [](RunConfig& c, const std::string& r, int l) { c.model.grid_hidden = parse_positive_int(r, l); }},
        {"model.grid_size", [](RunConfig& c, const std::string& r, int l) { c.model.grid_size = parse_positive_int(r, l); }},
        {"model.n_train", [](RunConfig& c, const std::string& r, int l) { c.model.n_train = parse_positive_int(r, l); }},
        {"training.lr", [](RunConfig& c, const std::string& r, int l) { c.training.lr = parse_float(r, l); }},
        {"training.batch", [](RunConfig& c, const std::string& r, int l) { c.training.batch = parse_positive_int(r, l); }},
        {"training.epoch_samples", [](RunConfig& c, const std::string& r, int l) { c.training.epoch_samples = parse_positive_int(r, l); }},
        {"training.max_epochs", [](RunConfig& c, const std::string& r, int l) { c.training.max_epochs = parse_positive_int(r, l); }},
        {"training.patience", [](RunConfig& c, const std::string& r, int l) { c.training.patience = parse_positive_int(r, l); }},
        {"training.max_halvings", [](RunConfig& c, const std::string& r, int l) { c.training.max_halvings = parse_positive_int(r, l); }},
        {"training.val_samples", [](RunConfig& c, const std::string& r, int l) { c.training.val_samples = parse_positive_int(r, l); }},
        {"training.seed", [](RunConfig& c, const std::string& r, int l) { c.training.seed = parse_u64(r, l); }},
        {"eval.n_samples", [](RunConfig& c, const std::string& r, int l) { c.eval.n_samples = parse_positive_int(r, l); }},
        {"eval.seed", [](RunConfig& c, const std::string& r, int l) { c.eval.seed = parse_u64(r, l); }},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    if (model.kind != "aquamam" && model.kind != "aquamam-mog" && model.kind != "grid") {
        throw std::invalid_argument(
            "config: model.kind must be aquamam, aquamam-mog, or grid (got '" + model.kind + "')");
    }
    scorer_config().validate();
    grid_model_config().validate();
    if (training.lr <= 0.0) throw std::invalid_argument("config: training.lr must be positive");
    if (model.kind == "grid" && model.n_train < 2) {
        throw std::invalid_argument("config: model.n_train must be at least 2");
    }
}

ScorerConfig RunConfig::scorer_config() const {
    ScorerConfig c;
    c.n_bins = model.n_bins;
    c.penc_frequencies = model.penc_frequencies;
    c.context_dim = model.context_dim;
    c.hidden1 = model.hidden1;
    c.hidden2 = model.hidden2;
    c.head = model.kind == "aquamam-mog" ? HeadKind::mog : HeadKind::binned;
    c.mog_components = model.mog_components;
    c.viewpoints = model.viewpoints;
    return c;
}

GridModelConfig RunConfig::grid_model_config() const {
    GridModelConfig c;
    c.context_dim = model.context_dim;
    c.hidden = model.grid_hidden;
    c.penc_frequencies = model.penc_frequencies;
    c.viewpoints = model.viewpoints;
    return c;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig c;
    c.lr = training.lr;
    c.batch_size = training.batch;
    c.epoch_samples = training.epoch_samples;
    c.max_epochs = training.max_epochs;
    c.patience = training.patience;
    c.max_halvings = training.max_halvings;
    c.val_samples = training.val_samples;
    return c;
}

GridTrainConfig RunConfig::grid_train_config() const {
    GridTrainConfig c;
    c.lr = training.lr;
    c.batch_size = training.batch;
    c.n_train = model.n_train;
    c.epoch_samples = training.epoch_samples;
    c.max_epochs = training.max_epochs;
    c.patience = training.patience;
    c.max_halvings = training.max_halvings;
    c.val_samples = training.val_samples;
    return c;
}

std::string RunConfig::to_toml() const {
    std::ostringstream out;
    out << "[dataset]\n"
        << "seed = " << dataset.seed << "\n\n"
        << "[model]\n"
        << "kind = \"" << model.kind << "\"\n"
        << "n_bins = " << model.n_bins << "\n"
        << "penc_frequencies = " << model.penc_frequencies << "\n"
        << "context_dim = " << model.context_dim << "\n"
        << "hidden1 = " << model.hidden1 << "\n"
        << "hidden2 = " << model.hidden2 << "\n"
        << "mog_components = " << model.mog_components << "\n"
        << "viewpoints = " << model.viewpoints << "\n"
        << "grid_hidden = " << model.grid_hidden << "\n"
        << "grid_size = " << model.grid_size << "\n"
        << "n_train = " << model.n_train << "\n\n"
        << "[training]\n";
    char lr[40];
    std::snprintf(lr, sizeof(lr), "%.17g", training.lr);
    out << "lr = " << lr << "\n"
        << "batch = " << training.batch << "\n"
        << "epoch_samples = " << training.epoch_samples << "\n"
        << "max_epochs = " << training.max_epochs << "\n"
        << "patience = " << training.patience << "\n"
        << "max_halvings = " << training.max_halvings << "\n"
        << "val_samples = " << training.val_samples << "\n"
        << "seed = " << training.seed << "\n\n"
        << "[eval]\n"
        << "n_samples = " << eval.n_samples << "\n"
        << "seed = " << eval.seed << "\n";
    return out.str();
}

RunConfig RunConfig::from_toml_text(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_number, "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "dataset" && section != "model" && section != "training" &&
                section != "eval") {
                fail(line_number, "unknown section [" + section + "]");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) fail(line_number, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (section.empty()) fail(line_number, "key outside any section");
        const auto it = setters().find(section + "." + key);
        if (it == setters().end()) {
            fail(line_number, "unknown key '" + key + "' in section [" + section + "]");
        }
        it->second(config, raw, line_number);
    }
    return config;
}

RunConfig RunConfig::from_toml_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    RunConfig config = from_toml_text(buffer.str());

    // AQMM_<SECTION>_<KEY> environment overrides.
    for (const auto& [path_key, setter] : setters()) {
        std::string env_name = "AQMM_";
        for (char c : path_key) {
            env_name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(c)));
        }
        if (const char* value = std::getenv(env_name.c_str())) {
            setter(config, value, 0);
        }
    }
    return config;
}

}  // namespace aqmm
