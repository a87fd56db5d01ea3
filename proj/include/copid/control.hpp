#pragma once
// Online coverage controllers.
//
// Every controller is advanced by a pure step function taking the observed
// error indicator (or loss) for the current step and returning the successor
// state, whose `q` field is the quantile to use for the NEXT prediction set:
//
//   quantile tracker   q <- q + eta * (err - alpha)
//   integrator         q <- r_t(sum of (err_i - alpha))   with saturation r_t
//   tracker+integrator+forecast
//                      q <- scorecast + r_t(sum)
//   adaptive level     level <- level + eta * (err - alpha),
//                      q <- empirical quantile of past scores at `level`
//   risk variant       integrator driven by a bounded loss instead of err
//   kernel variant     integrator over a kernel-weighted error sum
//
// The saturation function deliberately blows up to +-infinity once the
// accumulated coverage error crosses a threshold; an infinite quantile forces
// a full (or empty) prediction set, which immediately pushes coverage back.
// The saturation predicate is exposed (tan_saturated / tan_threshold) so
// callers and tests share the exact floating-point comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "copid/core.hpp"

namespace copid {

// ---------------------------------------------------------------------------
// Saturation functions r_t
// ---------------------------------------------------------------------------

enum class SaturationKind { linear, tan, decaying_linear };

inline const char* to_string(SaturationKind k) {
    switch (k) {
        case SaturationKind::linear: return "linear";
        case SaturationKind::tan: return "tan";
        case SaturationKind::decaying_linear: return "decaying_linear";
    }
    return "?";
}

struct SaturationSpec {
    SaturationKind kind = SaturationKind::linear;
    double eta = 1.0;    // linear / decaying_linear rate
    double k_i = 1.0;    // tan output scale
    double c_sat = 1.0;  // tan saturation scale

    static SaturationSpec linear(double eta) {
        detail::require(eta > 0.0, "SaturationSpec::linear: eta must be positive");
        SaturationSpec s;
        s.kind = SaturationKind::linear;
        s.eta = eta;
        return s;
    }
    static SaturationSpec decaying(double eta) {
        detail::require(eta > 0.0, "SaturationSpec::decaying: eta must be positive");
        SaturationSpec s;
        s.kind = SaturationKind::decaying_linear;
        s.eta = eta;
        return s;
    }
    static SaturationSpec tan(double k_i, double c_sat) {
        detail::require(k_i > 0.0 && c_sat > 0.0, "SaturationSpec::tan: constants must be positive");
        SaturationSpec s;
        s.kind = SaturationKind::tan;
        s.k_i = k_i;
        s.c_sat = c_sat;
        return s;
    }
};

/// Time scaling inside the tan argument. Plain log(t) vanishes at t = 1,
/// which would disable saturation on the first steps, so it is clamped to 1.
inline double log_clamped(std::int64_t t) {
    return std::max(std::log(static_cast<double>(t)), 1.0);
}

/// Error-sum magnitude at which the tan argument reaches pi/2 and the output
/// saturates. This is exactly the c*h(t) constant of the coverage bound:
/// threshold(t) = (pi/2) * c_sat * t / log_clamped(t), nondecreasing in t.
inline double tan_threshold(const SaturationSpec& spec, std::int64_t t) {
    detail::require(spec.kind == SaturationKind::tan, "tan_threshold: spec is not tan");
    detail::require(t >= 1, "tan_threshold: t must be >= 1");
    return (std::numbers::pi / 2.0) * spec.c_sat * static_cast<double>(t) / log_clamped(t);
}

/// Shared saturation predicate: tests rely on this exact comparison.
inline bool tan_saturated(const SaturationSpec& spec, double x, std::int64_t t) {
    return std::abs(x) >= tan_threshold(spec, t);
}

/// r_t(x). The tan kind returns sign(x)*infinity at or beyond the threshold
/// (the mathematical function has a pole there; the float comparison is the
/// one in tan_saturated).
inline double saturation_eval(const SaturationSpec& spec, double x, std::int64_t t) {
    detail::require(t >= 1, "saturation_eval: t must be >= 1");
    switch (spec.kind) {
        case SaturationKind::linear:
            return spec.eta * x;
        case SaturationKind::decaying_linear:
            return spec.eta * x / std::sqrt(static_cast<double>(t));
        case SaturationKind::tan: {
            if (tan_saturated(spec, x, t)) return x > 0.0 ? kInf : -kInf;
            const double a = x * log_clamped(t) / (static_cast<double>(t) * spec.c_sat);
            return spec.k_i * std::tan(a);
        }
    }
    throw std::invalid_argument("saturation_eval: unknown kind");
}

/// Local slope dr_t/dx at x — the effective learning rate of the integrator.
/// Infinite in the saturated regime of the tan kind.
inline double saturation_slope(const SaturationSpec& spec, double x, std::int64_t t) {
    detail::require(t >= 1, "saturation_slope: t must be >= 1");
    switch (spec.kind) {
        case SaturationKind::linear:
            return spec.eta;
        case SaturationKind::decaying_linear:
            return spec.eta / std::sqrt(static_cast<double>(t));
        case SaturationKind::tan: {
            if (tan_saturated(spec, x, t)) return kInf;
            const double scale = log_clamped(t) / (static_cast<double>(t) * spec.c_sat);
            const double c = std::cos(x * scale);
            return spec.k_i * scale / (c * c);
        }
    }
    throw std::invalid_argument("saturation_slope: unknown kind");
}

/// Default c_sat for a run of the given horizon: (2/pi) * (ceil(log(T) *
/// delta) - 1/log(T)), where delta is the tolerated asymptotic coverage
/// slack. Derived so that the saturation threshold at t = T sits at
/// ceil(log(T)*delta)*T/log(T) - T/log(T)^2, slightly above delta*T.
inline double csat_heuristic(double horizon, double delta) {
    detail::require(horizon >= 3.0, "csat_heuristic: horizon must be >= 3");
    detail::require(delta > 0.0 && delta < 1.0, "csat_heuristic: delta must be in (0,1)");
    const double logT = std::log(horizon);
    const double value = (2.0 / std::numbers::pi) * (std::ceil(logT * delta) - 1.0 / logT);
    detail::require(value > 0.0, "csat_heuristic: nonpositive result (horizon too small for delta)");
    return value;
}

/// Learning-rate heuristics from the trailing score maximum B: eta =
/// multiplier * B and k_i = B. A nonpositive B (all recent scores <= 0) gives
/// no usable scale; both rates fall back to 1 and the choice is flagged.
struct RateChoice {
    double eta = 1.0;
    double k_i = 1.0;
    bool degenerate = false;
};

inline RateChoice rate_heuristics(const ScoreWindow& window, double multiplier) {
    detail::require(multiplier > 0.0, "rate_heuristics: multiplier must be positive");
    const double b = trailing_max(window);
    if (b <= 0.0) return RateChoice{1.0, 1.0, true};
    return RateChoice{multiplier * b, b, false};
}

// ---------------------------------------------------------------------------
// Empirical quantiles of a score history (adaptive-level controllers)
// ---------------------------------------------------------------------------

/// Empirical quantile of a sorted history at `level`: the k-th smallest value
/// where k is the least index with k/n >= level. Levels at or below 0 give
/// -infinity, levels above 1 give +infinity. The index predicate uses the
/// same floating-point division as empirical_level so the two functions are
/// exact inverses in floats, not just in exact arithmetic.
inline double empirical_quantile(const std::vector<double>& sorted, double level) {
    detail::require(!sorted.empty(), "empirical_quantile: empty history");
    if (level <= 0.0) return -kInf;
    const auto n = static_cast<std::int64_t>(sorted.size());
    std::int64_t lo = 1, hi = n, k = n + 1;
    while (lo <= hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (static_cast<double>(mid) / static_cast<double>(n) >= level) {
            k = mid;
            hi = mid - 1;
        } else {
            lo = mid + 1;
        }
    }
    if (k > n) return kInf;  // level above 1: no order statistic reaches it
    return sorted[static_cast<std::size_t>(k - 1)];
}

/// Smallest level whose empirical quantile covers s: the fraction of history
/// strictly below s. 0 when s is at or below the minimum, 1 when s is above
/// the maximum.
inline double empirical_level(const std::vector<double>& sorted, double s) {
    detail::require(!sorted.empty(), "empirical_level: empty history");
    const auto below = std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin();
    return static_cast<double>(below) / static_cast<double>(sorted.size());
}

// ---------------------------------------------------------------------------
// Kernel weights for the locally-weighted integrator
// ---------------------------------------------------------------------------

enum class KernelKind { trailing_window, bin_match };

struct KernelSpec {
    KernelKind kind = KernelKind::trailing_window;
    std::int64_t w = 1;  // trailing_window width
};

/// One observed step as seen by the kernel: its time index, the bin its
/// features fall in (binning is the caller's job), and its error indicator.
struct ObsRecord {
    std::int64_t t = 0;
    std::int64_t bin = 0;
    double err = 0.0;
};

inline double kernel_weight(const KernelSpec& spec, const ObsRecord& past,
                            const ObsRecord& current) {
    switch (spec.kind) {
        case KernelKind::trailing_window:
            return (current.t - past.t <= spec.w) ? 1.0 : 0.0;
        case KernelKind::bin_match:
            return (past.bin == current.bin) ? 1.0 : 0.0;
    }
    throw std::invalid_argument("kernel_weight: unknown kind");
}

/// Weighted error sum sum_i (err_i - alpha) * K(record_i, back()), folded in
/// time order. With a kernel that is identically 1 this folds up exactly like
/// the ledger's running sum. `history` must include the current step last.
inline double kernel_weighted_sum(const KernelSpec& spec, const std::vector<ObsRecord>& history,
                                  double alpha) {
    detail::require(!history.empty(), "kernel_weighted_sum: empty history");
    const ObsRecord& current = history.back();
    double weighted = 0.0;
    for (const ObsRecord& rec : history) {
        weighted += (rec.err - alpha) * kernel_weight(spec, rec, current);
    }
    return weighted;
}

// ---------------------------------------------------------------------------
// Controller state and step functions
// ---------------------------------------------------------------------------

enum class Mode { p, pi, pid, aci, aci_clipped, risk, kernel_pi };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::p: return "p";
        case Mode::pi: return "pi";
        case Mode::pid: return "pid";
        case Mode::aci: return "aci";
        case Mode::aci_clipped: return "aci_clipped";
        case Mode::risk: return "risk";
        case Mode::kernel_pi: return "kernel_pi";
    }
    return "?";
}

inline Mode parse_mode(const std::string& name) {
    for (Mode m : {Mode::p, Mode::pi, Mode::pid, Mode::aci, Mode::aci_clipped, Mode::risk,
                   Mode::kernel_pi}) {
        if (name == to_string(m)) return m;
    }
    throw std::invalid_argument("parse_mode: unknown controller mode '" + name + "'");
}

struct ControllerState {
    Mode mode = Mode::p;
    double q = 0.0;        // quantile for the NEXT set; +-infinity means full/empty
    CoverageLedger ledger;  // err/loss history and running error sum
    ScoreWindow window;     // trailing scores for the rate heuristics
    double level = 0.0;     // adaptive coverage level (aci modes only)
    std::vector<double> sorted_scores;  // ascending score history (aci modes only)
};

/// Fresh controller at q = 0 (adaptive-level modes start at level 1 - alpha).
inline ControllerState make_controller(Mode mode, double alpha, std::size_t window_capacity) {
    ControllerState s;
    s.mode = mode;
    s.q = 0.0;
    s.ledger = make_ledger(alpha);
    s.window = make_window(window_capacity);
    s.level = 1.0 - alpha;
    return s;
}

/// Record a score into the trailing window (used by the rate heuristics).
/// Adaptive-level modes instead take the score in their step function.
[[nodiscard]] inline ControllerState observe_score(ControllerState state, double score) {
    state.window = window_push(std::move(state.window), score);
    return state;
}

namespace detail {
inline void require_mode(const ControllerState& state, Mode expected, const char* op) {
    require(state.mode == expected, (std::string(op) + ": controller mode is not " +
                                     std::string(to_string(expected)))
                                        .c_str());
}
}  // namespace detail

/// Quantile tracker: q <- q + eta * (err - alpha).
[[nodiscard]] inline ControllerState p_step(ControllerState state, double err, double eta) {
    detail::require_mode(state, Mode::p, "p_step");
    detail::require(eta >= 0.0, "p_step: eta must be nonnegative");
    state.ledger = ledger_update(std::move(state.ledger), err);
    state.q = state.q + eta * (err - state.ledger.alpha);
    return state;
}

/// Saturated integrator: record err, then q <- r_t(error sum).
[[nodiscard]] inline ControllerState pi_step(ControllerState state, double err,
                                             const SaturationSpec& spec) {
    detail::require_mode(state, Mode::pi, "pi_step");
    state.ledger = ledger_update(std::move(state.ledger), err);
    state.q = saturation_eval(spec, state.ledger.error_sum, state.ledger.t);
    return state;
}

/// Integrator plus score forecast: q <- scorecast_q + r_t(error sum).
/// scorecast_q must be computed from data observed so far only.
[[nodiscard]] inline ControllerState pid_step(ControllerState state, double err,
                                              const SaturationSpec& spec, double scorecast_q) {
    detail::require_mode(state, Mode::pid, "pid_step");
    state.ledger = ledger_update(std::move(state.ledger), err);
    state.q = scorecast_q + saturation_eval(spec, state.ledger.error_sum, state.ledger.t);
    return state;
}

/// Risk variant of the integrator: driven by a bounded loss in [0,1] rather
/// than a binary indicator. Same saturation mechanics.
[[nodiscard]] inline ControllerState risk_step(ControllerState state, double loss,
                                               const SaturationSpec& spec) {
    detail::require_mode(state, Mode::risk, "risk_step");
    state.ledger = ledger_update(std::move(state.ledger), loss);
    state.q = saturation_eval(spec, state.ledger.error_sum, state.ledger.t);
    return state;
}

/// Kernel-weighted integrator: q <- r_t(sum over history of
/// (err_i - alpha) * K(record_i, current)). `history` must include the
/// current step as its last record, in time order. With a kernel that is
/// identically 1 the weighted sum folds up exactly like the ledger's running
/// sum, so this reproduces pi_step bit for bit.
[[nodiscard]] inline ControllerState kernel_pi_step(ControllerState state,
                                                    const SaturationSpec& spec,
                                                    const KernelSpec& kernel,
                                                    const std::vector<ObsRecord>& history) {
    detail::require_mode(state, Mode::kernel_pi, "kernel_pi_step");
    detail::require(!history.empty(), "kernel_pi_step: history must include the current step");
    state.ledger = ledger_update(std::move(state.ledger), history.back().err);
    double weighted = kernel_weighted_sum(kernel, history, state.ledger.alpha);
    state.q = saturation_eval(spec, weighted, state.ledger.t);
    return state;
}

namespace detail {
/// Shared body of the adaptive-level steps: push the score, move the level by
/// the tracker update, and return the plain empirical quantile at the new
/// level (+-infinity outside (0, 1]).
inline double aci_advance(ControllerState& state, double score, double err, double eta) {
    require(eta >= 0.0, "aci_step: eta must be nonnegative");
    state.sorted_scores.insert(
        std::upper_bound(state.sorted_scores.begin(), state.sorted_scores.end(), score), score);
    state.ledger = ledger_update(std::move(state.ledger), err);
    state.level = state.level + eta * (err - state.ledger.alpha);
    return empirical_quantile(state.sorted_scores, state.level);
}
}  // namespace detail

/// Adaptive-level controller: the coverage level moves by the tracker update
/// and the quantile is read off the empirical distribution of all past
/// scores. Levels outside (0, 1] produce infinite quantiles (empty or full
/// sets).
[[nodiscard]] inline ControllerState aci_step(ControllerState state, double score, double err,
                                              double eta) {
    detail::require_mode(state, Mode::aci, "aci_step");
    state.q = detail::aci_advance(state, score, err, eta);
    return state;
}

/// As aci_step, but the quantile is clipped to the largest score seen so far,
/// so the emitted set is never unbounded above (never full).
[[nodiscard]] inline ControllerState aci_clipped_step(ControllerState state, double score,
                                                      double err, double eta) {
    detail::require_mode(state, Mode::aci_clipped, "aci_clipped_step");
    const double plain = detail::aci_advance(state, score, err, eta);
    state.q = std::min(plain, state.sorted_scores.back());
    return state;
}

}  // namespace copid
