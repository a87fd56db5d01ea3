#pragma once
// Miss scores: how far a realized value lands outside the forecast, and the
// inversion of a score threshold back into a prediction set.
//
// Three score kinds are supported:
//   absolute_residual            s = |y - f|          (single channel)
//   signed_residual_asymmetric   lo = f - y, hi = y - f   (point forecast)
//   quantile_asymmetric          lo = f_lo - y, hi = y - f_hi (quantile pair)
// Asymmetric kinds carry two channels that are tracked by two independent
// controllers; the set is the intersection of the two one-sided constraints.

#include <stdexcept>
#include <string>

#include "copid/core.hpp"

namespace copid {

enum class ScoreKind { absolute_residual, signed_residual_asymmetric, quantile_asymmetric };

inline const char* to_string(ScoreKind k) {
    switch (k) {
        case ScoreKind::absolute_residual: return "absolute_residual";
        case ScoreKind::signed_residual_asymmetric: return "signed_residual_asymmetric";
        case ScoreKind::quantile_asymmetric: return "quantile_asymmetric";
    }
    return "?";
}

inline ScoreKind parse_score_kind(const std::string& name) {
    if (name == "absolute_residual") return ScoreKind::absolute_residual;
    if (name == "signed_residual_asymmetric") return ScoreKind::signed_residual_asymmetric;
    if (name == "quantile_asymmetric") return ScoreKind::quantile_asymmetric;
    throw std::invalid_argument("parse_score_kind: unknown score kind '" + name + "'");
}

struct ScorePair {
    double lo = 0.0;
    double hi = 0.0;
};

/// A point forecast (lo == hi, is_pair == false) or a lower/upper quantile
/// pair. Score kinds check the arity they need.
struct ForecastValue {
    double lo = 0.0;
    double hi = 0.0;
    bool is_pair = false;

    static ForecastValue point(double f) { return ForecastValue{f, f, false}; }
    static ForecastValue quantiles(double lo, double hi) {
        detail::require(lo <= hi, "ForecastValue::quantiles: lower quantile above upper");
        return ForecastValue{lo, hi, true};
    }
};

/// Single-channel absolute residual score.
inline double absolute_score(double forecast, double y) { return std::abs(y - forecast); }

/// Both channels for any kind; absolute_residual duplicates its single score
/// on both channels. Throws on forecast-arity mismatch.
inline ScorePair compute_scores(ScoreKind kind, const ForecastValue& f, double y) {
    switch (kind) {
        case ScoreKind::absolute_residual: {
            detail::require(!f.is_pair, "compute_scores: absolute_residual needs a point forecast");
            const double s = absolute_score(f.lo, y);
            return ScorePair{s, s};
        }
        case ScoreKind::signed_residual_asymmetric:
            detail::require(!f.is_pair, "compute_scores: signed residual needs a point forecast");
            return ScorePair{f.lo - y, y - f.lo};
        case ScoreKind::quantile_asymmetric:
            detail::require(f.is_pair, "compute_scores: quantile kind needs a quantile pair");
            return ScorePair{f.lo - y, y - f.hi};
    }
    throw std::invalid_argument("compute_scores: unknown kind");
}

/// Prediction set {y : scores(y) <= q channelwise}. A -inf quantile on
/// either channel is unsatisfiable and yields the empty set; +inf quantiles
/// open the corresponding side.
inline IntervalSet invert_to_set(ScoreKind kind, const ForecastValue& f, const ScorePair& q) {
    if (q.lo == -kInf || q.hi == -kInf) return empty_set();
    switch (kind) {
        case ScoreKind::absolute_residual:
            detail::require(!f.is_pair, "invert_to_set: absolute_residual needs a point forecast");
            detail::require(q.lo == q.hi, "invert_to_set: absolute_residual uses one quantile");
            return make_set(f.lo - q.lo, f.lo + q.hi);
        case ScoreKind::signed_residual_asymmetric:
            detail::require(!f.is_pair, "invert_to_set: signed residual needs a point forecast");
            return make_set(f.lo - q.lo, f.lo + q.hi);
        case ScoreKind::quantile_asymmetric:
            detail::require(f.is_pair, "invert_to_set: quantile kind needs a quantile pair");
            return make_set(f.lo - q.lo, f.hi + q.hi);
    }
    throw std::invalid_argument("invert_to_set: unknown kind");
}

/// Single-quantile convenience for the symmetric kind.
inline IntervalSet invert_to_set(ScoreKind kind, const ForecastValue& f, double q) {
    return invert_to_set(kind, f, ScorePair{q, q});
}

/// 1 if y falls outside the set, else 0. With sets built by invert_to_set
/// this agrees with the score-scale comparison 1{score > quantile}.
inline double coverage_indicator(const IntervalSet& set, double y) {
    return set.contains(y) ? 0.0 : 1.0;
}

}  // namespace copid
