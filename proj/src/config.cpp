#include "retc/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "retc/errors.hpp"
#include "retc/presets.hpp"

namespace retc {

namespace {

using nlohmann::json;

// Collects every violation so the user sees them all at once.
struct Problems {
    std::vector<std::string> items;
    void add(const std::string& msg) { items.push_back(msg); }
    bool empty() const { return items.empty(); }
    std::string text(const std::string& origin) const {
        std::ostringstream out;
        out << "invalid config " << origin << ":\n";
        for (const auto& item : items) out << "  - " << item << "\n";
        return out.str();
    }
};

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed,
                Problems& problems) {
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            problems.add(path + ": unknown key '" + item.key() + "'");
        }
    }
}

bool get_int(const json& obj, const std::string& key, const std::string& path, int& out,
             Problems& problems) {
    const auto it = obj.find(key);
    if (it == obj.end()) return false;
    if (!it->is_number_integer()) {
        problems.add(path + "." + key + " must be an integer");
        return false;
    }
    out = it->get<int>();
    return true;
}

bool get_double(const json& obj, const std::string& key, const std::string& path, double& out,
                Problems& problems) {
    const auto it = obj.find(key);
    if (it == obj.end()) return false;
    if (!it->is_number()) {
        problems.add(path + "." + key + " must be a number");
        return false;
    }
    out = it->get<double>();
    return true;
}

bool get_string(const json& obj, const std::string& key, const std::string& path,
                std::string& out, Problems& problems) {
    const auto it = obj.find(key);
    if (it == obj.end()) return false;
    if (!it->is_string()) {
        problems.add(path + "." + key + " must be a string");
        return false;
    }
    out = it->get<std::string>();
    return true;
}

bool parse_vector(const json& j, const std::string& path, Eigen::VectorXd& out,
                  Problems& problems) {
    if (!j.is_array() || j.empty()) {
        problems.add(path + " must be a non-empty array of numbers");
        return false;
    }
    out.resize(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) {
            problems.add(path + "[" + std::to_string(i) + "] must be a number");
            return false;
        }
        out(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return true;
}

bool parse_matrix(const json& j, const std::string& path, Eigen::MatrixXd& out,
                  Problems& problems) {
    if (!j.is_array() || j.empty()) {
        problems.add(path + " must be a non-empty array of rows");
        return false;
    }
    const size_t rows = j.size();
    size_t cols = 0;
    for (size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].empty()) {
            problems.add(path + " row " + std::to_string(r) + " must be a non-empty array");
            return false;
        }
        if (r == 0) {
            cols = j[r].size();
        } else if (j[r].size() != cols) {
            problems.add(path + " rows must all have the same length");
            return false;
        }
    }
    out.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) {
                problems.add(path + "[" + std::to_string(r) + "][" + std::to_string(c) +
                             "] must be a number");
                return false;
            }
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
        }
    }
    return true;
}

bool parse_box(const json& j, const std::string& path, Box& out, Problems& problems) {
    if (!j.is_object()) {
        problems.add(path + " must be an object with 'lo' and 'hi'");
        return false;
    }
    check_keys(j, path, {"lo", "hi"}, problems);
    bool ok = true;
    if (j.contains("lo")) {
        ok = parse_vector(j["lo"], path + ".lo", out.lo, problems) && ok;
    } else {
        problems.add(path + ".lo is required");
        ok = false;
    }
    if (j.contains("hi")) {
        ok = parse_vector(j["hi"], path + ".hi", out.hi, problems) && ok;
    } else {
        problems.add(path + ".hi is required");
        ok = false;
    }
    if (ok && out.lo.size() != out.hi.size()) {
        problems.add(path + ": lo and hi must have the same length");
        ok = false;
    }
    return ok;
}

bool parse_plant(const json& j, PlantModel& plant, Problems& problems) {
    if (!j.is_object()) {
        problems.add("plant must be an object");
        return false;
    }
    check_keys(j, "plant", {"A", "B", "Q", "R", "state_box", "input_box"}, problems);
    bool ok = true;
    for (const char* key : {"A", "B", "Q", "R"}) {
        if (!j.contains(key)) {
            problems.add(std::string("plant.") + key + " is required");
            ok = false;
        }
    }
    if (!ok) return false;
    ok = parse_matrix(j["A"], "plant.A", plant.A, problems) && ok;
    ok = parse_matrix(j["B"], "plant.B", plant.B, problems) && ok;
    ok = parse_matrix(j["Q"], "plant.Q", plant.Q, problems) && ok;
    ok = parse_matrix(j["R"], "plant.R", plant.R, problems) && ok;
    if (j.contains("state_box")) {
        Box box;
        if (parse_box(j["state_box"], "plant.state_box", box, problems)) {
            plant.state_box = box;
        } else {
            ok = false;
        }
    }
    if (j.contains("input_box")) {
        Box box;
        if (parse_box(j["input_box"], "plant.input_box", box, problems)) {
            plant.input_box = box;
        } else {
            ok = false;
        }
    }
    return ok;
}

bool require_int(const json& j, const char* key, const std::string& path, int& out,
                 Problems& problems) {
    if (!j.contains(key)) {
        problems.add(path + "." + key + " is required");
        return false;
    }
    return get_int(j, key, path, out, problems);
}

bool parse_bucket(const json& j, TokenBucketSpec& spec, Problems& problems) {
    if (!j.is_object()) {
        problems.add("token_bucket must be an object");
        return false;
    }
    check_keys(j, "token_bucket", {"g", "c", "b"}, problems);
    bool ok = require_int(j, "g", "token_bucket", spec.g, problems);
    ok = require_int(j, "c", "token_bucket", spec.c, problems) && ok;
    ok = require_int(j, "b", "token_bucket", spec.b, problems) && ok;
    return ok;
}

bool parse_int_list(const json& j, const std::string& path, std::vector<int>& out,
                    Problems& problems) {
    if (!j.is_array() || j.empty()) {
        problems.add(path + " must be a non-empty array of integers");
        return false;
    }
    out.clear();
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer()) {
            problems.add(path + "[" + std::to_string(i) + "] must be an integer");
            return false;
        }
        out.push_back(j[i].get<int>());
    }
    return true;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // Recover line/column from the byte offset in the parser message.
        size_t line = 1, col = 1;
        const size_t stop = std::min(e.byte, text.size());
        for (size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::ostringstream msg;
        msg << origin << ":" << line << ":" << col << ": " << e.what();
        throw ParseError(msg.str());
    }

    Problems problems;
    ExperimentConfig cfg;

    if (!root.is_object()) {
        throw ValidationError("invalid config " + origin + ": top level must be a JSON object");
    }
    check_keys(root, "top level",
               {"schema_version", "preset", "plant", "token_bucket", "controller", "x0", "u0",
                "beta0", "horizon_steps", "convergence_tol", "sweep_horizons", "etc_grid_size",
                "timing_horizons", "timing_repetitions"},
               problems);

    if (!root.contains("schema_version")) {
        problems.add("schema_version is required");
    } else if (get_int(root, "schema_version", "", cfg.schema_version, problems) &&
               cfg.schema_version != 1) {
        problems.add("schema_version must be 1");
    }

    // Plant + bucket come from a named preset or from explicit matrices.
    bool have_plant = false;
    bool have_bucket = false;
    if (root.contains("preset")) {
        std::string name;
        if (get_string(root, "preset", "", name, problems)) {
            if (root.contains("plant")) {
                problems.add("give either 'preset' or 'plant', not both");
            } else {
                try {
                    Preset preset = make_preset(name);
                    cfg.preset_name = preset.name;
                    cfg.plant = preset.plant;
                    cfg.spec = preset.spec;
                    cfg.x0 = preset.x0;
                    cfg.u0 = preset.u0;
                    cfg.beta0 = preset.beta0;
                    have_plant = true;
                    have_bucket = true;
                } catch (const ValidationError& e) {
                    problems.add(e.what());
                }
            }
        }
    } else if (root.contains("plant")) {
        have_plant = parse_plant(root["plant"], cfg.plant, problems);
    } else {
        problems.add("either 'preset' or 'plant' is required");
    }

    if (root.contains("token_bucket")) {  // required without preset, override with one
        have_bucket = parse_bucket(root["token_bucket"], cfg.spec, problems);
    } else if (!have_bucket) {
        problems.add("token_bucket is required when no preset is named");
    }

    if (root.contains("x0")) {
        parse_vector(root["x0"], "x0", cfg.x0, problems);
    } else if (cfg.preset_name.empty()) {
        problems.add("x0 is required when no preset is named");
    }
    if (root.contains("u0")) {
        parse_vector(root["u0"], "u0", cfg.u0, problems);
    } else if (cfg.preset_name.empty() && have_plant) {
        cfg.u0 = Eigen::VectorXd::Zero(cfg.plant.m());
    }
    if (root.contains("beta0")) {
        get_int(root, "beta0", "", cfg.beta0, problems);
    } else if (cfg.preset_name.empty()) {
        problems.add("beta0 is required when no preset is named");
    }

    if (!root.contains("controller")) {
        problems.add("controller is required");
    } else if (!root["controller"].is_object()) {
        problems.add("controller must be an object");
    } else {
        const json& jc = root["controller"];
        check_keys(jc, "controller", {"kind", "variant", "N_bar", "sigma_bucket", "sigma_trigger"},
                   problems);
        if (!jc.contains("kind")) {
            problems.add("controller.kind is required");
        } else {
            get_string(jc, "kind", "controller", cfg.controller.kind, problems);
        }
        int variant = 1;
        if (get_int(jc, "variant", "controller", variant, problems)) {
            if (variant == 1) {
                cfg.controller.variant = Variant::V1;
            } else if (variant == 2) {
                cfg.controller.variant = Variant::V2;
            } else {
                problems.add("controller.variant must be 1 or 2");
            }
        }
        get_int(jc, "N_bar", "controller", cfg.controller.N_bar, problems);
        get_double(jc, "sigma_bucket", "controller", cfg.controller.sigma_bucket, problems);
        get_double(jc, "sigma_trigger", "controller", cfg.controller.sigma_trigger, problems);
    }

    get_int(root, "horizon_steps", "", cfg.horizon_steps, problems);
    get_double(root, "convergence_tol", "", cfg.convergence_tol, problems);
    if (root.contains("sweep_horizons")) {
        parse_int_list(root["sweep_horizons"], "sweep_horizons", cfg.sweep_horizons, problems);
    }
    get_int(root, "etc_grid_size", "", cfg.etc_grid_size, problems);
    if (root.contains("timing_horizons")) {
        parse_int_list(root["timing_horizons"], "timing_horizons", cfg.timing_horizons, problems);
    }
    get_int(root, "timing_repetitions", "", cfg.timing_repetitions, problems);

    // Semantic validation on whatever parsed cleanly.
    if (have_plant) {
        try {
            cfg.plant.validate();
        } catch (const ValidationError& e) {
            problems.add(e.what());
        }
        if (cfg.x0.size() > 0 && cfg.x0.size() != cfg.plant.n()) {
            problems.add("x0 dimension does not match the plant state");
        }
        if (cfg.u0.size() > 0 && cfg.u0.size() != cfg.plant.m()) {
            problems.add("u0 dimension does not match the plant input");
        }
    }
    if (have_bucket) {
        try {
            cfg.spec.validate();
        } catch (const ValidationError& e) {
            problems.add(e.what());
        }
        if (cfg.beta0 < 0 || cfg.beta0 > cfg.spec.b) problems.add("beta0 must lie in [0, b]");
    }
    if (cfg.horizon_steps < 1) problems.add("horizon_steps must be >= 1");
    if (!(cfg.convergence_tol > 0.0)) problems.add("convergence_tol must be positive");
    if (!cfg.controller.kind.empty() && cfg.controller.kind != "rollout" &&
        cfg.controller.kind != "ttc" && cfg.controller.kind != "etc") {
        problems.add("controller.kind must be one of: rollout, ttc, etc");
    }
    if (cfg.controller.kind == "rollout") {
        if (cfg.controller.N_bar < 1) problems.add("controller.N_bar must be >= 1");
        if (cfg.controller.sigma_bucket < 0.0) {
            problems.add("controller.sigma_bucket must be >= 0");
        }
    }
    if (cfg.controller.kind == "etc" &&
        (cfg.controller.sigma_trigger < 0.0 || cfg.controller.sigma_trigger > 1.0)) {
        problems.add("controller.sigma_trigger must lie in [0, 1]");
    }
    if (cfg.etc_grid_size < 2) problems.add("etc_grid_size must be >= 2");
    if (cfg.timing_repetitions < 1) problems.add("timing_repetitions must be >= 1");
    for (int h : cfg.sweep_horizons) {
        if (h < 1) {
            problems.add("sweep_horizons entries must be >= 1");
            break;
        }
    }
    for (int h : cfg.timing_horizons) {
        if (h < 1) {
            problems.add("timing_horizons entries must be >= 1");
            break;
        }
    }

    if (!problems.empty()) throw ValidationError(problems.text(origin));
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str(), path);
}

}  // namespace retc
