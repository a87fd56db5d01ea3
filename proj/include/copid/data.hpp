#pragma once
// Time-series ingestion from delimited text files and seeded synthetic score
// generators. Generation is a pure function of the spec: the generator
// algorithm (mt19937_64) and the uniform-to-normal transform are pinned so
// that a (kind, T, seed, sigma) tuple yields the same sequence everywhere.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "copid/core.hpp"

namespace copid {

// ---------------------------------------------------------------------------
// Datasets from delimited files
// ---------------------------------------------------------------------------

enum class Transform { none, log };

inline const char* to_string(Transform t) {
    switch (t) {
        case Transform::none: return "none";
        case Transform::log: return "log";
    }
    return "?";
}

inline Transform parse_transform(const std::string& name) {
    if (name == "none") return Transform::none;
    if (name == "log") return Transform::log;
    throw std::invalid_argument("parse_transform: unknown transform '" + name + "'");
}

struct Dataset {
    std::string name;
    std::vector<SeriesPoint> points;     // t = 1..n after ingestion
    std::string y_name;                  // column the responses came from
    std::vector<std::string> feature_names;  // columns behind SeriesPoint::x
    std::string source;                  // file path or synthetic descriptor
    Transform transform = Transform::none;
    std::int64_t dropped_rows = 0;       // malformed rows skipped during parsing
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return out;
}

/// Strict numeric parse: the whole field must be consumed.
inline bool parse_double(const std::string& field, double& out) {
    if (field.empty()) return false;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

/// Shortest-exact decimal rendering used for all emitted numbers: %.17g
/// round-trips every finite double exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

}  // namespace detail

/// Parse a comma-separated file with a header row. Rows with a wrong field
/// count or non-numeric cells in the used columns are dropped and counted;
/// a missing column or a nonpositive response under the log transform is an
/// error. Step indices are assigned 1..n over the surviving rows.
inline Dataset load_csv(const std::string& path, const std::string& y_column,
                        const std::vector<std::string>& feature_columns, Transform transform) {
    std::ifstream in(path);
    detail::require(in.good(), "load_csv: cannot open file");

    std::string line;
    detail::require(static_cast<bool>(std::getline(in, line)), "load_csv: missing header row");
    const std::vector<std::string> header = detail::split_fields(line);

    const auto column_index = [&header](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw std::invalid_argument("load_csv: column '" + name + "' not found");
    };
    const std::size_t y_idx = column_index(y_column);
    std::vector<std::size_t> feat_idx;
    feat_idx.reserve(feature_columns.size());
    for (const std::string& name : feature_columns) feat_idx.push_back(column_index(name));

    Dataset ds;
    ds.name = path;
    ds.y_name = y_column;
    ds.feature_names = feature_columns;
    ds.source = path;
    ds.transform = transform;

    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> fields = detail::split_fields(line);
        if (fields.size() != header.size()) {
            ++ds.dropped_rows;
            continue;
        }
        SeriesPoint pt;
        bool ok = detail::parse_double(fields[y_idx], pt.y);
        pt.x.resize(feat_idx.size());
        for (std::size_t j = 0; ok && j < feat_idx.size(); ++j) {
            ok = detail::parse_double(fields[feat_idx[j]], pt.x[j]);
        }
        if (!ok) {
            ++ds.dropped_rows;
            continue;
        }
        if (transform == Transform::log) {
            detail::require(pt.y > 0.0, "load_csv: nonpositive response under log transform");
            pt.y = std::log(pt.y);
        }
        pt.t = static_cast<std::int64_t>(ds.points.size()) + 1;
        ds.points.push_back(std::move(pt));
    }
    return ds;
}

/// Write the response and feature columns back out (header + one row per
/// point, %.17g). load_csv of the result reproduces the numeric content
/// exactly. The transform is NOT un-applied; values are written as stored.
inline void write_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    detail::require(out.good(), "write_csv: cannot open file for writing");
    out << ds.y_name;
    for (const std::string& name : ds.feature_names) out << ',' << name;
    out << '\n';
    for (const SeriesPoint& pt : ds.points) {
        out << detail::format_double(pt.y);
        for (double v : pt.x) out << ',' << detail::format_double(v);
        out << '\n';
    }
    detail::require(out.good(), "write_csv: write failed");
}

// ---------------------------------------------------------------------------
// Synthetic score sequences
// ---------------------------------------------------------------------------

enum class SynthKind { iid, increasing, changepoint_mix };

inline const char* to_string(SynthKind k) {
    switch (k) {
        case SynthKind::iid: return "iid";
        case SynthKind::increasing: return "increasing";
        case SynthKind::changepoint_mix: return "changepoint_mix";
    }
    return "?";
}

inline SynthKind parse_synth_kind(const std::string& name) {
    for (SynthKind k : {SynthKind::iid, SynthKind::increasing, SynthKind::changepoint_mix}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("parse_synth_kind: unknown synthetic kind '" + name + "'");
}

struct SynthSpec {
    SynthKind kind = SynthKind::iid;
    std::int64_t T = 1000;
    std::uint64_t seed = 0;
    double sigma = 1.0;
};

/// One standard-normal draw. Pinned transform: two raw 64-bit outputs are
/// mapped to uniforms on (0,1] via the top 53 bits, then combined by the
/// Box-Muller cosine branch. Exactly two generator outputs are consumed per
/// draw, so sequences are reproducible across standard libraries.
inline double normal_draw(std::mt19937_64& gen) {
    const double u1 = static_cast<double>((gen() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>((gen() >> 11) + 1) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Deterministic synthetic score sequence (1-based time, length T):
///   iid               s_t = sigma * g_t
///   increasing        s_t = t/T + sigma * g_t
///   changepoint_mix   level 0 for t <= T/3; ramp of slope 3/T up to 2T/3;
///                     level 3 up to 5T/6; level 1 after; noise throughout
/// (integer cut points use floor division).
inline std::vector<double> synth_scores(const SynthSpec& spec) {
    detail::require(spec.T >= 1, "synth_scores: T must be >= 1");
    detail::require(spec.sigma >= 0.0, "synth_scores: sigma must be nonnegative");
    std::mt19937_64 gen(spec.seed);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(spec.T));
    const double T = static_cast<double>(spec.T);
    const std::int64_t c1 = spec.T / 3;
    const std::int64_t c2 = (2 * spec.T) / 3;
    const std::int64_t c3 = (5 * spec.T) / 6;
    for (std::int64_t t = 1; t <= spec.T; ++t) {
        double base = 0.0;
        switch (spec.kind) {
            case SynthKind::iid:
                base = 0.0;
                break;
            case SynthKind::increasing:
                base = static_cast<double>(t) / T;
                break;
            case SynthKind::changepoint_mix:
                if (t <= c1) {
                    base = 0.0;
                } else if (t <= c2) {
                    base = 3.0 * static_cast<double>(t - c1) / T;
                } else if (t <= c3) {
                    base = 3.0;
                } else {
                    base = 1.0;
                }
                break;
        }
        out.push_back(base + spec.sigma * normal_draw(gen));
    }
    return out;
}

}  // namespace copid
