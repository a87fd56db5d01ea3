#pragma once
// Shared building blocks: pinball (quantile) loss, the running coverage
// ledger, a fixed-capacity trailing score window, and interval prediction
// sets over the extended reals.
//
// State types are plain values; updates are free functions taking the state
// by value and returning the successor, so callers can move-in for O(1)
// steps while keeping updates observationally pure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace copid {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

namespace detail {
inline void require(bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Series points
// ---------------------------------------------------------------------------

/// One observation of a time series: a 1-based step index, an optional
/// feature vector (fixed dimension within one series), and the response.
struct SeriesPoint {
    std::int64_t t = 0;
    std::vector<double> x;
    double y = 0.0;
};

// ---------------------------------------------------------------------------
// Pinball loss
// ---------------------------------------------------------------------------

/// Quantile ("pinball") loss at level tau in (0,1):
/// tau*|z| for z > 0, (1-tau)*|z| otherwise.
inline double pinball_loss(double z, double tau) {
    detail::require(tau > 0.0 && tau < 1.0, "pinball_loss: tau must lie in (0,1)");
    return z > 0.0 ? tau * z : (tau - 1.0) * z;
}

/// Subgradient of the pinball loss in z: tau for z > 0, tau - 1 for z < 0.
/// At the kink z == 0 the tau - 1 element is returned.
inline double pinball_subgradient(double z, double tau) {
    detail::require(tau > 0.0 && tau < 1.0, "pinball_subgradient: tau must lie in (0,1)");
    return z > 0.0 ? tau : tau - 1.0;
}

// ---------------------------------------------------------------------------
// Coverage ledger
// ---------------------------------------------------------------------------

/// Running record of per-step miscoverage. error_sum accumulates
/// (err_t - alpha); in risk mode err_t is a loss in [0,1] instead of a
/// 0/1 indicator. err_history keeps the raw values in arrival order so the
/// sum can be replayed and audited.
struct CoverageLedger {
    double alpha = 0.1;
    std::int64_t t = 0;
    double error_sum = 0.0;
    std::vector<double> err_history;
};

inline CoverageLedger make_ledger(double alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0, "make_ledger: alpha must lie in (0,1)");
    return CoverageLedger{alpha, 0, 0.0, {}};
}

/// Record one step. err must lie in [0,1] (a coverage indicator or a loss).
[[nodiscard]] inline CoverageLedger ledger_update(CoverageLedger ledger, double err) {
    detail::require(err >= 0.0 && err <= 1.0, "ledger_update: err must lie in [0,1]");
    ledger.error_sum += err - ledger.alpha;
    ledger.err_history.push_back(err);
    ++ledger.t;
    return ledger;
}

// ---------------------------------------------------------------------------
// Trailing score window
// ---------------------------------------------------------------------------

/// Ring buffer over the most recent `capacity` scores, used for the
/// trailing-max learning-rate heuristic.
struct ScoreWindow {
    std::size_t capacity = 0;
    std::vector<double> buf;
    std::size_t next = 0;  // overwrite position once full
};

inline ScoreWindow make_window(std::size_t capacity) {
    detail::require(capacity > 0, "make_window: capacity must be positive");
    ScoreWindow w;
    w.capacity = capacity;
    w.buf.reserve(capacity);
    return w;
}

[[nodiscard]] inline ScoreWindow window_push(ScoreWindow w, double s) {
    if (w.buf.size() < w.capacity) {
        w.buf.push_back(s);
    } else {
        w.buf[w.next] = s;
        w.next = (w.next + 1) % w.capacity;
    }
    return w;
}

/// Max of the last min(t, capacity) pushed scores.
inline double trailing_max(const ScoreWindow& w) {
    detail::require(!w.buf.empty(), "trailing_max: window is empty");
    return *std::max_element(w.buf.begin(), w.buf.end());
}

// ---------------------------------------------------------------------------
// Interval prediction sets
// ---------------------------------------------------------------------------

enum class SetKind { interval, empty, full };

inline const char* to_string(SetKind k) {
    switch (k) {
        case SetKind::interval: return "interval";
        case SetKind::empty: return "empty";
        case SetKind::full: return "full";
    }
    return "?";
}

/// A closed interval over the extended reals, or the empty/full set.
/// Bounds are meaningful only when kind == interval; half-infinite
/// intervals are represented with -inf / +inf endpoints.
struct IntervalSet {
    SetKind kind = SetKind::empty;
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double y) const {
        switch (kind) {
            case SetKind::empty: return false;
            case SetKind::full: return true;
            case SetKind::interval: return lower <= y && y <= upper;
        }
        return false;
    }

    bool is_finite_interval() const {
        return kind == SetKind::interval && std::isfinite(lower) && std::isfinite(upper);
    }

    /// Width of a finite interval; zero-width intervals are legal.
    double width() const {
        detail::require(is_finite_interval(), "width: set is not a finite interval");
        return upper - lower;
    }

    bool invariant() const {
        if (kind == SetKind::interval) return lower <= upper && !(lower == kInf) && !(upper == -kInf);
        return true;
    }
};

inline IntervalSet empty_set() { return IntervalSet{SetKind::empty, 0.0, 0.0}; }
inline IntervalSet full_set() { return IntervalSet{SetKind::full, -kInf, kInf}; }

/// Canonicalizing constructor: inverted or degenerate-infinite bounds give
/// the empty set, (-inf, +inf) gives the full set.
inline IntervalSet make_set(double lower, double upper) {
    if (std::isnan(lower) || std::isnan(upper)) throw std::invalid_argument("make_set: NaN bound");
    if (lower > upper) return empty_set();
    if (lower == kInf || upper == -kInf) return empty_set();  // [+inf,+inf], [-inf,-inf]
    if (lower == -kInf && upper == kInf) return full_set();
    return IntervalSet{SetKind::interval, lower, upper};
}

}  // namespace copid
