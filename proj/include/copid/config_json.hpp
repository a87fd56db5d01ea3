#pragma once

// JSON run configuration. Parsing is strict: unknown keys are rejected so
// typos fail loudly instead of silently falling back to defaults, and every
// default that does apply is documented in the README next to the schema.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "copid/run.hpp"

namespace copid {
namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                                const char* where) {
    for (const auto& item : obj.items()) {
        if (allowed.find(item.key()) == allowed.end()) {
            throw std::invalid_argument(std::string("config: unknown key \"") + item.key() +
                                        "\" in " + where);
        }
    }
}

inline double number_field(const nlohmann::json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) {
        throw std::invalid_argument(std::string("config: ") + key + " must be a number");
    }
    return obj.at(key).get<double>();
}

inline std::int64_t int_field(const nlohmann::json& obj, const char* key, std::int64_t fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer()) {
        throw std::invalid_argument(std::string("config: ") + key + " must be an integer");
    }
    return obj.at(key).get<std::int64_t>();
}

inline std::string string_field(const nlohmann::json& obj, const char* key,
                                const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) {
        throw std::invalid_argument(std::string("config: ") + key + " must be a string");
    }
    return obj.at(key).get<std::string>();
}

/// Parse a knob that is either the string "auto" or a positive number.
/// Returns true when automatic; otherwise stores the number in `value`.
inline bool auto_or_number(const nlohmann::json& obj, const char* key, bool fallback_auto,
                           double& value) {
    if (!obj.contains(key)) return fallback_auto;
    const nlohmann::json& v = obj.at(key);
    if (v.is_string()) {
        if (v.get<std::string>() == "auto") return true;
        throw std::invalid_argument(std::string("config: ") + key +
                                    " must be a number or \"auto\"");
    }
    if (v.is_number()) {
        value = v.get<double>();
        return false;
    }
    throw std::invalid_argument(std::string("config: ") + key + " must be a number or \"auto\"");
}

inline ForecasterSpec parse_forecaster(const nlohmann::json& obj, const char* where) {
    reject_unknown_keys(obj, {"kind", "lags", "theta", "lambda", "tau", "window"}, where);
    ForecasterSpec spec;
    spec.kind = parse_forecaster_kind(string_field(obj, "kind", "persistence"));
    spec.lags = static_cast<std::size_t>(int_field(obj, "lags", 3));
    spec.theta = number_field(obj, "theta", 2.0);
    spec.lambda = number_field(obj, "lambda", 10.0);
    spec.tau = number_field(obj, "tau", 0.9);
    spec.window = static_cast<std::size_t>(int_field(obj, "window", 0));
    return spec;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::require(j.is_object(), "config: top level must be a JSON object");
    detail::reject_unknown_keys(j,
                                {"name", "source", "score", "alpha", "mode", "controller",
                                 "base_forecaster", "scorecaster", "burn_in", "horizon_cap",
                                 "trailing_windows"},
                                "top level");
    detail::require(j.contains("source"), "config: missing required key \"source\"");
    detail::require(j.contains("alpha"), "config: missing required key \"alpha\"");
    detail::require(j.contains("mode"), "config: missing required key \"mode\"");
    detail::require(j.contains("burn_in"), "config: missing required key \"burn_in\"");

    RunConfig cfg;
    cfg.name = detail::string_field(j, "name", "run");
    cfg.alpha = detail::number_field(j, "alpha", 0.1);
    cfg.burn_in = detail::int_field(j, "burn_in", 50);
    cfg.horizon_cap = detail::int_field(j, "horizon_cap", 0);
    cfg.score = parse_score_kind(detail::string_field(j, "score", "absolute_residual"));

    const nlohmann::json& src = j.at("source");
    detail::require(src.is_object(), "config: source must be an object");
    const std::string src_kind = detail::string_field(src, "kind", "");
    if (src_kind == "synth") {
        detail::reject_unknown_keys(src, {"kind", "synth_kind", "T", "seed", "sigma"}, "source");
        cfg.source.synthetic = true;
        cfg.source.synth.kind = parse_synth_kind(detail::string_field(src, "synth_kind", "iid"));
        cfg.source.synth.T = detail::int_field(src, "T", 1000);
        cfg.source.synth.seed = static_cast<std::uint64_t>(detail::int_field(src, "seed", 0));
        cfg.source.synth.sigma = detail::number_field(src, "sigma", 1.0);
    } else if (src_kind == "csv") {
        detail::reject_unknown_keys(src, {"kind", "path", "y_column", "feature_columns", "transform"},
                                    "source");
        cfg.source.synthetic = false;
        cfg.source.csv_path = detail::string_field(src, "path", "");
        cfg.source.y_column = detail::string_field(src, "y_column", "");
        if (src.contains("feature_columns")) {
            cfg.source.feature_columns = src.at("feature_columns").get<std::vector<std::string>>();
        }
        cfg.source.transform = parse_transform(detail::string_field(src, "transform", "none"));
    } else {
        throw std::invalid_argument("config: source.kind must be \"synth\" or \"csv\"");
    }

    cfg.controller.mode = parse_mode(detail::string_field(j, "mode", "pi"));
    if (j.contains("controller")) {
        const nlohmann::json& c = j.at("controller");
        detail::require(c.is_object(), "config: controller must be an object");
        detail::reject_unknown_keys(c,
                                    {"saturation", "eta", "eta_multiplier", "k_i", "c_sat",
                                     "c_sat_delta", "horizon_hint", "kernel"},
                                    "controller");
        const std::string sat = detail::string_field(c, "saturation", "tan");
        if (sat == "tan") {
            cfg.controller.saturation = SaturationKind::tan;
        } else if (sat == "linear") {
            cfg.controller.saturation = SaturationKind::linear;
        } else if (sat == "decaying_linear") {
            cfg.controller.saturation = SaturationKind::decaying_linear;
        } else {
            throw std::invalid_argument(
                "config: saturation must be tan, linear, or decaying_linear");
        }
        cfg.controller.eta_auto =
            detail::auto_or_number(c, "eta", cfg.controller.eta_auto, cfg.controller.eta);
        cfg.controller.k_i_auto =
            detail::auto_or_number(c, "k_i", cfg.controller.k_i_auto, cfg.controller.k_i);
        cfg.controller.c_sat_auto =
            detail::auto_or_number(c, "c_sat", cfg.controller.c_sat_auto, cfg.controller.c_sat);
        cfg.controller.eta_multiplier = detail::number_field(c, "eta_multiplier", 0.1);
        cfg.controller.c_sat_delta = detail::number_field(c, "c_sat_delta", 0.1);
        cfg.controller.horizon_hint = detail::int_field(c, "horizon_hint", 0);
        if (c.contains("kernel")) {
            const nlohmann::json& k = c.at("kernel");
            detail::reject_unknown_keys(k, {"kind", "w", "bins"}, "controller.kernel");
            const std::string kind = detail::string_field(k, "kind", "trailing_window");
            if (kind == "trailing_window") {
                cfg.controller.kernel.kind = KernelKind::trailing_window;
            } else if (kind == "bin_match") {
                cfg.controller.kernel.kind = KernelKind::bin_match;
            } else {
                throw std::invalid_argument(
                    "config: kernel.kind must be trailing_window or bin_match");
            }
            cfg.controller.kernel.w = detail::int_field(k, "w", 100);
            cfg.controller.kernel_bins = detail::int_field(k, "bins", 1);
        }
    }

    if (j.contains("base_forecaster")) {
        cfg.base = detail::parse_forecaster(j.at("base_forecaster"), "base_forecaster");
    } else if (!cfg.source.synthetic) {
        throw std::invalid_argument("config: csv sources require base_forecaster");
    } else {
        cfg.base.kind = ForecasterKind::none;
    }
    if (cfg.source.synthetic && !j.contains("base_forecaster")) {
        cfg.base.kind = ForecasterKind::none;
    }
    if (j.contains("scorecaster")) {
        cfg.scorecaster = detail::parse_forecaster(j.at("scorecaster"), "scorecaster");
    } else {
        cfg.scorecaster.kind = ForecasterKind::none;
    }
    if (j.contains("trailing_windows")) {
        cfg.trailing_windows = j.at("trailing_windows").get<std::vector<std::int64_t>>();
    }
    validate_config(cfg);
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require(in.good(), "config: cannot open file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_run_config(j);
}

}  // namespace copid
