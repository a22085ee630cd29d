#include "amc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "amc/error.hpp"

namespace amc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d)) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return d;
}

std::int64_t to_int(const std::string& v, const std::string& key) {
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected an integer, got '" + v + "'");
    }
    return out;
}

std::size_t to_count(const std::string& v, const std::string& key) {
    const auto i = to_int(v, key);
    if (i < 0) throw ConfigError(key + ": must be non-negative");
    return static_cast<std::size_t>(i);
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double d) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, r.ptr);
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& setters() {
    static const std::vector<std::pair<std::string, Setter>> table = {
        {"data_file", [](auto& c, auto& v, auto&) { c.data_file = v; }},
        {"normalize", [](auto& c, auto& v, auto& k) { c.normalize = to_bool(v, k); }},
        {"frames_per_cell", [](auto& c, auto& v, auto& k) { c.frames_per_cell = to_int(v, k); }},
        {"epochs", [](auto& c, auto& v, auto& k) { c.training.epochs = int(to_int(v, k)); }},
        {"batch_size", [](auto& c, auto& v, auto& k) { c.training.batch_size = to_count(v, k); }},
        {"learning_rate", [](auto& c, auto& v, auto& k) { c.training.learning_rate = to_double(v, k); }},
        {"momentum", [](auto& c, auto& v, auto& k) { c.training.momentum = to_double(v, k); }},
        {"ls_alpha", [](auto& c, auto& v, auto& k) { c.training.ls_alpha = to_double(v, k); }},
        {"gna_variance", [](auto& c, auto& v, auto& k) { c.training.gna_variance = to_double(v, k); }},
        {"svm_features", [](auto& c, auto& v, auto& k) { c.svm_features = to_count(v, k); }},
        {"svm_c", [](auto& c, auto& v, auto& k) { c.svm_grid.c_values = parse_double_list(v, k); }},
        {"svm_gamma",
         [](auto& c, auto& v, auto& k) {
             c.svm_grid.gamma_values.clear();
             for (const auto& item : split_list(v)) {
                 c.svm_grid.gamma_values.push_back(item == "1/d" ? 0.0 : to_double(item, k));
                 if (item != "1/d" && c.svm_grid.gamma_values.back() <= 0.0) {
                     throw ConfigError(k + ": gamma values must be positive or 1/d");
                 }
             }
         }},
        {"svm_folds", [](auto& c, auto& v, auto& k) { c.svm_grid.folds = to_count(v, k); }},
        {"svm_standardize", [](auto& c, auto& v, auto& k) { c.svm_standardize = to_bool(v, k); }},
        {"rejection_rate", [](auto& c, auto& v, auto& k) { c.rejection_rate = to_double(v, k); }},
        {"eval_snr_db", [](auto& c, auto& v, auto& k) { c.eval_snr_db = int(to_int(v, k)); }},
        {"eval_samples", [](auto& c, auto& v, auto& k) { c.eval_samples = to_count(v, k); }},
        {"pnr_db", [](auto& c, auto& v, auto& k) { c.pnr_db = parse_double_list(v, k); }},
        {"systems", [](auto& c, auto& v, auto&) { c.systems = split_list(v); }},
        {"seeds",
         [](auto& c, auto& v, auto& k) {
             c.seeds.clear();
             for (const auto& item : split_list(v)) {
                 const auto s = to_int(item, k);
                 if (s < 0) throw ConfigError(k + ": seeds must be non-negative");
                 c.seeds.push_back(std::uint64_t(s));
             }
         }},
        {"counting_policy", [](auto& c, auto& v, auto&) { c.counting_policy = v; }},
        {"amplification_pnr_db", [](auto& c, auto& v, auto& k) { c.amplification_pnr_db = to_double(v, k); }},
        {"table_floor", [](auto& c, auto& v, auto& k) { c.table_floor = to_double(v, k); }},
        {"output_dir", [](auto& c, auto& v, auto&) { c.output_dir = v; }},
    };
    return table;
}

}  // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& key) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) out.push_back(to_double(item, key));
    return out;
}

ExperimentConfig::ExperimentConfig() {
    training.epochs = 30;
    for (int p = -20; p <= 0; p += 2) pnr_db.push_back(p);
}

void ExperimentConfig::validate() const {
    try {
        training.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("training: ") + e.what());
    }
    svm_grid.validate();
    if (!data_file.empty() && !std::filesystem::is_regular_file(data_file)) {
        throw ConfigError("data_file: file not found: " + data_file);
    }
    if (data_file.empty() && frames_per_cell < 2) throw ConfigError("frames_per_cell: must be at least 2");
    if (svm_features < 2 * svm_grid.folds) throw ConfigError("svm_features: too small for the fold count");
    if (!(rejection_rate >= 0.0 && rejection_rate < 1.0)) throw ConfigError("rejection_rate: must lie in [0, 1)");
    if (!is_standard_snr(eval_snr_db)) throw ConfigError("eval_snr_db: not on the -20..18 dB grid");
    if (eval_samples == 0) throw ConfigError("eval_samples: must be positive");
    if (pnr_db.empty()) throw ConfigError("pnr_db: list is empty");
    if (systems.empty()) throw ConfigError("systems: list is empty");
    std::set<std::string> seen;
    for (const auto& s : systems) {
        if (s != "dnn" && s != "nr" && s != "ls-gna-nr") throw ConfigError("systems: unknown system '" + s + "'");
        if (!seen.insert(s).second) throw ConfigError("systems: duplicate '" + s + "'");
    }
    if (seeds.empty()) throw ConfigError("seeds: list is empty");
    if (counting_policy != "lenient" && counting_policy != "strict") {
        throw ConfigError("counting_policy: expected lenient or strict");
    }
    if (!(table_floor >= 0.0)) throw ConfigError("table_floor: must be non-negative");
    if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
    auto gamma = [](double g) { return g == 0.0 ? std::string("1/d") : fmt(g); };
    return {
        {"data_file", data_file},
        {"normalize", normalize ? "true" : "false"},
        {"frames_per_cell", std::to_string(frames_per_cell)},
        {"epochs", std::to_string(training.epochs)},
        {"batch_size", std::to_string(training.batch_size)},
        {"learning_rate", fmt(training.learning_rate)},
        {"momentum", fmt(training.momentum)},
        {"ls_alpha", fmt(training.ls_alpha)},
        {"gna_variance", fmt(training.gna_variance)},
        {"svm_features", std::to_string(svm_features)},
        {"svm_c", join(svm_grid.c_values, fmt)},
        {"svm_gamma", join(svm_grid.gamma_values, gamma)},
        {"svm_folds", std::to_string(svm_grid.folds)},
        {"svm_standardize", svm_standardize ? "true" : "false"},
        {"rejection_rate", fmt(rejection_rate)},
        {"eval_snr_db", std::to_string(eval_snr_db)},
        {"eval_samples", std::to_string(eval_samples)},
        {"pnr_db", join(pnr_db, fmt)},
        {"systems", join(systems, [](const std::string& s) { return s; })},
        {"seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); })},
        {"counting_policy", counting_policy},
        {"amplification_pnr_db", fmt(amplification_pnr_db)},
        {"table_floor", fmt(table_floor)},
        {"output_dir", output_dir},
    };
}

namespace {

ExperimentConfig parse_raw(const std::string& text) {
    ExperimentConfig c;
    std::set<std::string> given;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& table = setters();
        const auto it = std::find_if(table.begin(), table.end(), [&](const auto& p) { return p.first == key; });
        if (it == table.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        if (!given.insert(key).second) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        it->second(c, value, key);
    }
    return c;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    auto c = parse_raw(text);
    c.validate();
    return c;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    auto c = parse_raw(ss.str());
    if (!c.data_file.empty() && std::filesystem::path(c.data_file).is_relative()) {
        c.data_file = (path.parent_path() / c.data_file).lexically_normal().string();
    }
    c.validate();
    return c;
}

}  // namespace amc
