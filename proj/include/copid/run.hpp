#pragma once

// Experiment driver: wires a data source, a base forecaster, a score, and an
// online quantile controller into a causal evaluation loop, then summarizes
// and emits the results.
//
// Causality contract: the record produced at time t depends only on inputs at
// times <= t. `run_prepared` exists so callers (and tests) can truncate the
// prepared input at any point and verify that the surviving prefix of records
// is reproduced bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "copid/control.hpp"
#include "copid/core.hpp"
#include "copid/data.hpp"
#include "copid/forecast.hpp"
#include "copid/scores.hpp"

namespace copid {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct SourceConfig {
    bool synthetic = true;
    SynthSpec synth{};
    std::string csv_path;
    std::string y_column;
    std::vector<std::string> feature_columns;
    Transform transform = Transform::none;
};

struct ControllerConfig {
    Mode mode = Mode::pi;
    SaturationKind saturation = SaturationKind::tan;
    bool eta_auto = true;
    double eta = 0.1;
    double eta_multiplier = 0.1;
    bool k_i_auto = true;
    double k_i = 1.0;
    bool c_sat_auto = true;
    double c_sat = 1.0;
    double c_sat_delta = 0.1;
    // Planned run length used by the automatic saturation scale. Deliberately
    // an explicit setting: deriving it from the data length would make early
    // records depend on how much future data happens to be present.
    std::int64_t horizon_hint = 0;
    KernelSpec kernel{KernelKind::trailing_window, 100};
    std::int64_t kernel_bins = 1;
};

struct RunConfig {
    std::string name = "run";
    SourceConfig source;
    ScoreKind score = ScoreKind::absolute_residual;
    double alpha = 0.1;
    ControllerConfig controller;
    ForecasterSpec base;         // kind none for synthetic sources
    ForecasterSpec scorecaster;  // kind none disables the forecast term
    std::int64_t burn_in = 50;
    std::int64_t horizon_cap = 0;  // 0 = evaluate everything after burn-in
    std::vector<std::int64_t> trailing_windows = {10, 50};
};

inline bool two_sided_score(ScoreKind kind) {
    return kind == ScoreKind::signed_residual_asymmetric || kind == ScoreKind::quantile_asymmetric;
}

inline void validate_config(const RunConfig& cfg) {
    detail::require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "config: alpha must lie in (0, 1)");
    detail::require(cfg.burn_in >= 1, "config: burn_in must be at least 1");
    detail::require(cfg.horizon_cap >= 0, "config: horizon_cap must be >= 0");
    for (std::int64_t w : cfg.trailing_windows) {
        detail::require(w >= 1, "config: trailing windows must be >= 1");
    }
    const ControllerConfig& ctl = cfg.controller;
    detail::require(ctl.eta_auto || ctl.eta > 0.0, "config: fixed eta must be positive");
    detail::require(ctl.k_i_auto || ctl.k_i > 0.0, "config: fixed k_i must be positive");
    detail::require(ctl.c_sat_auto || ctl.c_sat > 0.0, "config: fixed c_sat must be positive");
    detail::require(ctl.eta_multiplier > 0.0, "config: eta_multiplier must be positive");
    const bool uses_saturation = ctl.mode == Mode::pi || ctl.mode == Mode::pid ||
                                 ctl.mode == Mode::risk || ctl.mode == Mode::kernel_pi;
    if (uses_saturation && ctl.saturation == SaturationKind::tan && ctl.c_sat_auto) {
        detail::require(ctl.horizon_hint >= 3,
                        "config: automatic c_sat needs horizon_hint >= 3 (an explicit planned "
                        "run length; it is never inferred from the data)");
    }
    if (ctl.mode == Mode::kernel_pi) {
        detail::require(ctl.kernel.w >= 1, "config: kernel window must be >= 1");
        detail::require(ctl.kernel_bins >= 1, "config: kernel_bins must be >= 1");
    }
    if (cfg.source.synthetic) {
        detail::require(cfg.source.synth.T >= 1, "config: synthetic T must be >= 1");
        detail::require(cfg.source.synth.sigma >= 0.0, "config: synthetic sigma must be >= 0");
        detail::require(cfg.score == ScoreKind::absolute_residual,
                        "config: synthetic sources are driven on the raw score channel; set "
                        "score to absolute_residual");
        detail::require(cfg.base.kind == ForecasterKind::none,
                        "config: synthetic sources take no base forecaster");
    } else {
        detail::require(!cfg.source.csv_path.empty(), "config: csv source needs a path");
        detail::require(!cfg.source.y_column.empty(), "config: csv source needs y_column");
        detail::require(cfg.base.kind != ForecasterKind::none,
                        "config: csv sources need a base forecaster");
        if (cfg.score == ScoreKind::quantile_asymmetric) {
            detail::require(cfg.base.kind == ForecasterKind::l1_quantile,
                            "config: quantile_asymmetric scores need an l1_quantile base "
                            "forecaster (it is the only base that emits quantile pairs)");
        }
        detail::require(cfg.burn_in >= static_cast<std::int64_t>(forecaster_min_history(cfg.base)) + 1,
                        "config: burn_in must exceed the base forecaster's minimum history so "
                        "at least one score is observed before evaluation starts");
    }
    if (ctl.mode == Mode::risk) {
        detail::require(cfg.score == ScoreKind::absolute_residual,
                        "config: risk mode drives a single channel; use absolute_residual or a "
                        "synthetic source");
    }
    if (ctl.mode == Mode::aci || ctl.mode == Mode::aci_clipped) {
        detail::require(ctl.eta_auto || ctl.eta > 0.0, "config: aci needs a positive eta");
    }
}

// ---------------------------------------------------------------------------
// Records and summaries
// ---------------------------------------------------------------------------

/// One evaluation step. Everything except `loss` is emitted to steps.csv in
/// the fixed column order below; `loss` stays in memory.
struct StepRecord {
    std::int64_t t = 0;  // 1-based position in the input sequence
    double y = 0.0;
    double forecast_lo = 0.0;
    double forecast_hi = 0.0;
    double score_lo = 0.0;
    double score_hi = 0.0;
    double q_lo = 0.0;  // thresholds used for this step's set (pre-update)
    double q_hi = 0.0;
    IntervalSet set;
    double err = 0.0;      // 1 when the set missed, else 0 (controller's view)
    double eta_eff = 0.0;  // effective adaptation rate applied at this step
    double error_sum = 0.0;  // controller's running sum of (err - alpha) after this step
    double loss = 0.0;       // set-based loss (risk mode); not emitted
};

inline const char* kStepsHeader =
    "t,y,forecast_lo,forecast_hi,score_lo,score_hi,q_lo,q_hi,set_lo,set_hi,set_kind,err,"
    "eta_eff,error_sum";

/// True when the set is unbounded in the direction clipping is meant to bound
/// (upper bound +inf, which includes full sets). Half-infinite raw-score sets
/// (-inf, q] with finite q do not count.
inline bool upper_unbounded(const IntervalSet& set) {
    if (set.kind == SetKind::full) return true;
    return set.kind == SetKind::interval && set.upper == kInf;
}

struct RunSummary {
    std::string name;
    std::string mode;
    double alpha = 0.0;
    std::int64_t steps = 0;
    double marginal_coverage = 0.0;
    double avg_finite_set_width = 0.0;  // over bounded nonempty intervals only
    std::int64_t finite_set_count = 0;
    double fraction_infinite_sets = 0.0;  // upper-unbounded sets (includes full)
    double fraction_empty_sets = 0.0;
    std::int64_t longest_miscoverage_run = 0;
    double mean_loss = 0.0;
    double final_error_sum = 0.0;
    bool degenerate_rates = false;
    std::int64_t dropped_rows = 0;
    std::vector<std::int64_t> trailing_windows;
    std::vector<std::string> warnings;
};

/// Trailing coverage over the last min(i, w) evaluation steps, one value per
/// record.
inline std::vector<double> trailing_coverage(const std::vector<StepRecord>& records,
                                             std::int64_t w) {
    detail::require(w >= 1, "trailing_coverage: window must be >= 1");
    std::vector<double> out;
    out.reserve(records.size());
    double in_window = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        in_window += 1.0 - records[i].err;
        if (static_cast<std::int64_t>(i) >= w) {
            in_window -= 1.0 - records[i - static_cast<std::size_t>(w)].err;
        }
        const double denom =
            static_cast<double>(std::min<std::int64_t>(static_cast<std::int64_t>(i) + 1, w));
        out.push_back(in_window / denom);
    }
    return out;
}

/// Recompute the summary scalars from the records alone. `run_prepared`
/// produces its summary through this same function, so reading steps back and
/// summarizing them again must reproduce summary.json exactly.
inline RunSummary summarize(const std::vector<StepRecord>& records, double alpha,
                            const std::vector<std::int64_t>& windows) {
    RunSummary s;
    s.alpha = alpha;
    s.steps = static_cast<std::int64_t>(records.size());
    s.trailing_windows = windows;
    if (records.empty()) return s;
    double err_total = 0.0;
    double width_total = 0.0;
    double loss_total = 0.0;
    std::int64_t finite_count = 0;
    std::int64_t infinite_count = 0;
    std::int64_t empty_count = 0;
    std::int64_t run_len = 0;
    std::int64_t longest = 0;
    for (const StepRecord& r : records) {
        err_total += r.err;
        loss_total += r.loss;
        if (r.set.is_finite_interval()) {
            width_total += r.set.width();
            ++finite_count;
        }
        if (upper_unbounded(r.set)) ++infinite_count;
        if (r.set.kind == SetKind::empty) ++empty_count;
        run_len = (r.err == 1.0) ? run_len + 1 : 0;
        longest = std::max(longest, run_len);
    }
    const double n = static_cast<double>(records.size());
    s.marginal_coverage = 1.0 - err_total / n;
    s.finite_set_count = finite_count;
    s.avg_finite_set_width = finite_count > 0 ? width_total / static_cast<double>(finite_count) : 0.0;
    s.fraction_infinite_sets = static_cast<double>(infinite_count) / n;
    s.fraction_empty_sets = static_cast<double>(empty_count) / n;
    s.longest_miscoverage_run = longest;
    s.mean_loss = loss_total / n;
    s.final_error_sum = records.back().error_sum;
    return s;
}

// ---------------------------------------------------------------------------
// Prepared input
// ---------------------------------------------------------------------------

/// Materialized input sequence. For synthetic sources `raw_scores` is true and
/// `y[i]` already is the conformity score at step i+1; sets then live on the
/// score scale as (-inf, q]. For file sources `y` is the target series and
/// scores come from the base forecaster at run time.
struct PreparedInput {
    bool raw_scores = true;
    std::vector<double> y;
    std::int64_t dropped_rows = 0;
};

inline PreparedInput prepare_input(const RunConfig& cfg) {
    PreparedInput input;
    if (cfg.source.synthetic) {
        input.raw_scores = true;
        input.y = synth_scores(cfg.source.synth);
    } else {
        input.raw_scores = false;
        Dataset ds = load_csv(cfg.source.csv_path, cfg.source.y_column,
                              cfg.source.feature_columns, cfg.source.transform);
        input.dropped_rows = ds.dropped_rows;
        input.y.reserve(ds.points.size());
        for (const SeriesPoint& p : ds.points) input.y.push_back(p.y);
    }
    return input;
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

struct RunResult {
    std::vector<StepRecord> records;
    RunSummary summary;
    std::map<std::int64_t, std::vector<double>> trailing;  // window -> coverage series
};

namespace detail {

/// Score-side miss indicator with the infinite-threshold conventions used
/// throughout: an infinite threshold always covers, a -inf threshold never
/// does.
inline double channel_err(double score, double q) {
    if (q == kInf) return 0.0;
    if (q == -kInf) return 1.0;
    return score > q ? 1.0 : 0.0;
}

/// Distance from a point to a set: 0 inside, gap to the nearest bound
/// otherwise, +inf for the empty set.
inline double set_distance(const IntervalSet& set, double y) {
    switch (set.kind) {
        case SetKind::empty: return kInf;
        case SetKind::full: return 0.0;
        case SetKind::interval:
            return std::max({set.lower - y, y - set.upper, 0.0});
    }
    throw std::invalid_argument("set_distance: unknown kind");
}

/// Per-channel controller plus everything needed to advance it.
struct Channel {
    ControllerState ctl;
    SaturationSpec sat = SaturationSpec::linear(1.0);
    double eta = 1.0;          // fixed rate for p / aci modes
    bool eta_per_step = false; // p mode with automatic rate: recompute each step
    double eta_multiplier = 0.1;
    std::vector<double> score_history;  // burn-in + evaluation scores, in order
    std::vector<ObsRecord> observations;  // kernel mode
    bool degenerate = false;
};

inline Channel make_channel(const RunConfig& cfg, double channel_alpha,
                            const std::vector<double>& burn_in_scores) {
    Channel ch;
    const ControllerConfig& cc = cfg.controller;
    ch.ctl = make_controller(cc.mode, channel_alpha, static_cast<std::size_t>(cfg.burn_in));
    ch.eta_multiplier = cc.eta_multiplier;
    ch.score_history = burn_in_scores;
    for (double s : burn_in_scores) {
        ch.ctl = observe_score(std::move(ch.ctl), s);
        if (cc.mode == Mode::aci || cc.mode == Mode::aci_clipped) {
            auto pos = std::upper_bound(ch.ctl.sorted_scores.begin(),
                                        ch.ctl.sorted_scores.end(), s);
            ch.ctl.sorted_scores.insert(pos, s);
        }
    }
    // Resolve automatic rates once, from the burn-in window; they stay fixed
    // for the rest of the run (except the tracker's per-step rate, which is
    // recomputed from the same trailing window as scores arrive).
    RateChoice rc{1.0, 1.0, true};
    if (!burn_in_scores.empty()) {
        rc = rate_heuristics(ch.ctl.window, cc.eta_multiplier);
    }
    ch.degenerate = rc.degenerate && (cc.eta_auto || cc.k_i_auto);
    ch.eta = cc.eta_auto ? rc.eta : cc.eta;
    ch.eta_per_step = (cc.mode == Mode::p) && cc.eta_auto;
    const bool uses_saturation = cc.mode == Mode::pi || cc.mode == Mode::pid ||
                                 cc.mode == Mode::risk || cc.mode == Mode::kernel_pi;
    if (uses_saturation) {
        switch (cc.saturation) {
            case SaturationKind::linear: ch.sat = SaturationSpec::linear(ch.eta); break;
            case SaturationKind::decaying_linear: ch.sat = SaturationSpec::decaying(ch.eta); break;
            case SaturationKind::tan: {
                const double k_i = cc.k_i_auto ? rc.k_i : cc.k_i;
                const double c_sat =
                    cc.c_sat_auto
                        ? csat_heuristic(static_cast<double>(cc.horizon_hint), cc.c_sat_delta)
                        : cc.c_sat;
                ch.sat = SaturationSpec::tan(k_i, c_sat);
                break;
            }
        }
    }
    if (cc.mode == Mode::aci || cc.mode == Mode::aci_clipped) {
        // Start from the plain empirical quantile of the burn-in scores at the
        // initial level; burn-in is validated to produce at least one score.
        ch.ctl.q = empirical_quantile(ch.ctl.sorted_scores, ch.ctl.level);
    }
    return ch;
}

/// Advance one channel with this step's score and miss indicator (or loss, in
/// risk mode). Returns the effective adaptation rate applied.
inline double advance_channel(Channel& ch, const RunConfig& cfg, double score, double err,
                              double loss, std::int64_t eval_index, std::int64_t t_abs) {
    const ControllerConfig& cc = cfg.controller;
    ch.ctl = observe_score(std::move(ch.ctl), score);
    ch.score_history.push_back(score);
    switch (cc.mode) {
        case Mode::p: {
            const double eta_t =
                ch.eta_per_step ? rate_heuristics(ch.ctl.window, ch.eta_multiplier).eta : ch.eta;
            ch.ctl = p_step(std::move(ch.ctl), err, eta_t);
            return eta_t;
        }
        case Mode::pi: {
            ch.ctl = pi_step(std::move(ch.ctl), err, ch.sat);
            return saturation_slope(ch.sat, ch.ctl.ledger.error_sum, ch.ctl.ledger.t);
        }
        case Mode::pid: {
            ForecasterSpec sc = cfg.scorecaster;
            sc.tau = 1.0 - ch.ctl.ledger.alpha;
            const ScorecastResult forecast = scorecast(sc, ch.score_history);
            ch.ctl = pid_step(std::move(ch.ctl), err, ch.sat, forecast.q);
            return saturation_slope(ch.sat, ch.ctl.ledger.error_sum, ch.ctl.ledger.t);
        }
        case Mode::risk: {
            ch.ctl = risk_step(std::move(ch.ctl), loss, ch.sat);
            return saturation_slope(ch.sat, ch.ctl.ledger.error_sum, ch.ctl.ledger.t);
        }
        case Mode::kernel_pi: {
            ch.observations.push_back(
                ObsRecord{eval_index, t_abs % cc.kernel_bins, err});
            ch.ctl = kernel_pi_step(std::move(ch.ctl), ch.sat, cc.kernel, ch.observations);
            const double weighted =
                kernel_weighted_sum(cc.kernel, ch.observations, ch.ctl.ledger.alpha);
            return saturation_slope(ch.sat, weighted, ch.ctl.ledger.t);
        }
        case Mode::aci: {
            ch.ctl = aci_step(std::move(ch.ctl), score, err, ch.eta);
            return ch.eta;
        }
        case Mode::aci_clipped: {
            ch.ctl = aci_clipped_step(std::move(ch.ctl), score, err, ch.eta);
            return ch.eta;
        }
    }
    throw std::invalid_argument("advance_channel: unknown mode");
}

}  // namespace detail

inline RunResult run_prepared(const RunConfig& cfg, const PreparedInput& input) {
    validate_config(cfg);
    const std::int64_t n = static_cast<std::int64_t>(input.y.size());
    detail::require(n > cfg.burn_in,
                    "run: input must extend past burn_in by at least one step");
    std::int64_t n_eval = n - cfg.burn_in;
    if (cfg.horizon_cap > 0) n_eval = std::min(n_eval, cfg.horizon_cap);

    const bool two_sided = !input.raw_scores && two_sided_score(cfg.score);
    const double channel_alpha = two_sided ? cfg.alpha / 2.0 : cfg.alpha;

    // Burn-in: observe scores without emitting sets. For raw-score input the
    // first burn_in values are scores directly; otherwise run the base
    // forecaster causally over the burn-in prefix.
    std::vector<double> burn_lo;
    std::vector<double> burn_hi;
    for (std::int64_t idx = 0; idx < cfg.burn_in; ++idx) {
        if (input.raw_scores) {
            burn_lo.push_back(input.y[static_cast<std::size_t>(idx)]);
            continue;
        }
        if (idx < static_cast<std::int64_t>(forecaster_min_history(cfg.base))) continue;
        const std::vector<double> hist(input.y.begin(), input.y.begin() + idx);
        ForecastValue f;
        if (cfg.score == ScoreKind::quantile_asymmetric) {
            ForecasterSpec lo_spec = cfg.base;
            lo_spec.tau = cfg.alpha / 2.0;
            ForecasterSpec hi_spec = cfg.base;
            hi_spec.tau = 1.0 - cfg.alpha / 2.0;
            const double f_lo = forecast_next(lo_spec, hist);
            const double f_hi = forecast_next(hi_spec, hist);
            f = ForecastValue::quantiles(f_lo, std::max(f_lo, f_hi));
        } else {
            f = ForecastValue::point(forecast_next(cfg.base, hist));
        }
        const ScorePair s = compute_scores(cfg.score, f, input.y[static_cast<std::size_t>(idx)]);
        burn_lo.push_back(s.lo);
        if (two_sided) burn_hi.push_back(s.hi);
    }
    detail::require(!burn_lo.empty(), "run: burn-in produced no scores");

    detail::Channel lo = detail::make_channel(cfg, channel_alpha, burn_lo);
    detail::Channel hi;
    if (two_sided) hi = detail::make_channel(cfg, channel_alpha, burn_hi);

    RunResult result;
    result.records.reserve(static_cast<std::size_t>(n_eval));
    for (std::int64_t i = 1; i <= n_eval; ++i) {
        const std::int64_t t_abs = cfg.burn_in + i;
        const std::size_t idx = static_cast<std::size_t>(t_abs - 1);
        StepRecord rec;
        rec.t = t_abs;
        rec.y = input.y[idx];

        // Thresholds in force before y_t is revealed.
        rec.q_lo = lo.ctl.q;
        rec.q_hi = two_sided ? hi.ctl.q : lo.ctl.q;

        ScorePair s{0.0, 0.0};
        if (input.raw_scores) {
            rec.forecast_lo = 0.0;
            rec.forecast_hi = 0.0;
            rec.set = make_set(-kInf, rec.q_lo);
            s = ScorePair{rec.y, rec.y};
        } else {
            const std::vector<double> hist(input.y.begin(), input.y.begin() + t_abs - 1);
            ForecastValue f;
            if (cfg.score == ScoreKind::quantile_asymmetric) {
                ForecasterSpec lo_spec = cfg.base;
                lo_spec.tau = cfg.alpha / 2.0;
                ForecasterSpec hi_spec = cfg.base;
                hi_spec.tau = 1.0 - cfg.alpha / 2.0;
                const double f_lo = forecast_next(lo_spec, hist);
                const double f_hi = forecast_next(hi_spec, hist);
                f = ForecastValue::quantiles(f_lo, std::max(f_lo, f_hi));
            } else {
                f = ForecastValue::point(forecast_next(cfg.base, hist));
            }
            rec.forecast_lo = f.lo;
            rec.forecast_hi = f.hi;
            rec.set = invert_to_set(cfg.score, f, ScorePair{rec.q_lo, rec.q_hi});
            s = compute_scores(cfg.score, f, rec.y);
        }
        rec.score_lo = s.lo;
        rec.score_hi = s.hi;

        const double err_lo = detail::channel_err(s.lo, rec.q_lo);
        const double err_hi = two_sided ? detail::channel_err(s.hi, rec.q_hi) : err_lo;
        rec.err = std::max(err_lo, err_hi);
        rec.loss = cfg.controller.mode == Mode::risk
                       ? std::clamp(detail::set_distance(rec.set, rec.y), 0.0, 1.0)
                       : 0.0;

        rec.eta_eff = detail::advance_channel(lo, cfg, s.lo, err_lo, rec.loss, i, t_abs);
        if (two_sided) detail::advance_channel(hi, cfg, s.hi, err_hi, rec.loss, i, t_abs);
        rec.error_sum = lo.ctl.ledger.error_sum;
        result.records.push_back(rec);
    }

    result.summary = summarize(result.records, cfg.alpha, cfg.trailing_windows);
    result.summary.name = cfg.name;
    result.summary.mode = to_string(cfg.controller.mode);
    result.summary.degenerate_rates = lo.degenerate || (two_sided && hi.degenerate);
    result.summary.dropped_rows = input.dropped_rows;
    if (result.summary.degenerate_rates) {
        result.summary.warnings.push_back(
            "automatic rates fell back to 1.0: trailing max of burn-in scores was not positive");
    }
    if (input.dropped_rows > 0) {
        result.summary.warnings.push_back("input rows dropped as malformed: " +
                                          std::to_string(input.dropped_rows));
    }
    for (std::int64_t w : cfg.trailing_windows) {
        result.trailing[w] = trailing_coverage(result.records, w);
    }
    return result;
}

inline RunResult run_experiment(const RunConfig& cfg) {
    validate_config(cfg);
    return run_prepared(cfg, prepare_input(cfg));
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

namespace detail {

/// Bounds written for a set: empty is emitted as the inverted pair
/// (inf, -inf) so every row round-trips without a sentinel value.
inline std::pair<double, double> set_bounds_for_output(const IntervalSet& set) {
    switch (set.kind) {
        case SetKind::empty: return {kInf, -kInf};
        case SetKind::full: return {-kInf, kInf};
        case SetKind::interval: return {set.lower, set.upper};
    }
    throw std::invalid_argument("set_bounds_for_output: unknown kind");
}

inline IntervalSet set_from_output(const std::string& kind, double lo, double hi) {
    if (kind == "empty") return empty_set();
    if (kind == "full") return full_set();
    if (kind == "interval") return make_set(lo, hi);
    throw std::invalid_argument("unknown set kind in steps file: " + kind);
}

inline double parse_double_strict(const std::string& field) {
    double v = 0.0;
    require(parse_double(field, v), "read_steps_csv: malformed numeric field");
    return v;
}

}  // namespace detail

inline void write_steps_csv(const std::vector<StepRecord>& records,
                            const std::filesystem::path& path) {
    std::ofstream out(path);
    detail::require(out.good(), "write_steps_csv: cannot open output file");
    out << kStepsHeader << "\n";
    for (const StepRecord& r : records) {
        const auto [set_lo, set_hi] = detail::set_bounds_for_output(r.set);
        out << r.t << ',' << detail::format_double(r.y) << ','
            << detail::format_double(r.forecast_lo) << ',' << detail::format_double(r.forecast_hi)
            << ',' << detail::format_double(r.score_lo) << ',' << detail::format_double(r.score_hi)
            << ',' << detail::format_double(r.q_lo) << ',' << detail::format_double(r.q_hi) << ','
            << detail::format_double(set_lo) << ',' << detail::format_double(set_hi) << ','
            << to_string(r.set.kind) << ',' << detail::format_double(r.err) << ','
            << detail::format_double(r.eta_eff) << ',' << detail::format_double(r.error_sum)
            << "\n";
    }
    detail::require(out.good(), "write_steps_csv: write failed");
}

/// Read a steps.csv written by `write_steps_csv`. Strict: any malformed row
/// throws (this is our own output format, not foreign input).
inline std::vector<StepRecord> read_steps_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    detail::require(in.good(), "read_steps_csv: cannot open file");
    std::string line;
    detail::require(static_cast<bool>(std::getline(in, line)), "read_steps_csv: empty file");
    detail::require(detail::trim(line) == kStepsHeader, "read_steps_csv: unexpected header");
    std::vector<StepRecord> records;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> f = detail::split_fields(line);
        detail::require(f.size() == 14, "read_steps_csv: row does not have 14 columns");
        StepRecord r;
        r.t = static_cast<std::int64_t>(detail::parse_double_strict(f[0]));
        r.y = detail::parse_double_strict(f[1]);
        r.forecast_lo = detail::parse_double_strict(f[2]);
        r.forecast_hi = detail::parse_double_strict(f[3]);
        r.score_lo = detail::parse_double_strict(f[4]);
        r.score_hi = detail::parse_double_strict(f[5]);
        r.q_lo = detail::parse_double_strict(f[6]);
        r.q_hi = detail::parse_double_strict(f[7]);
        const double set_lo = detail::parse_double_strict(f[8]);
        const double set_hi = detail::parse_double_strict(f[9]);
        r.set = detail::set_from_output(f[10], set_lo, set_hi);
        r.err = detail::parse_double_strict(f[11]);
        r.eta_eff = detail::parse_double_strict(f[12]);
        r.error_sum = detail::parse_double_strict(f[13]);
        records.push_back(std::move(r));
    }
    return records;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
    nlohmann::json j;
    j["name"] = s.name;
    j["mode"] = s.mode;
    j["alpha"] = s.alpha;
    j["steps"] = s.steps;
    j["marginal_coverage"] = s.marginal_coverage;
    j["avg_finite_set_width"] = s.avg_finite_set_width;
    j["finite_set_count"] = s.finite_set_count;
    j["fraction_infinite_sets"] = s.fraction_infinite_sets;
    j["fraction_empty_sets"] = s.fraction_empty_sets;
    j["longest_miscoverage_run"] = s.longest_miscoverage_run;
    j["mean_loss"] = s.mean_loss;
    j["final_error_sum"] = s.final_error_sum;
    j["degenerate_rates"] = s.degenerate_rates;
    j["dropped_rows"] = s.dropped_rows;
    j["trailing_windows"] = s.trailing_windows;
    j["warnings"] = s.warnings;
    return j;
}

inline RunSummary summary_from_json(const nlohmann::json& j) {
    RunSummary s;
    s.name = j.at("name").get<std::string>();
    s.mode = j.at("mode").get<std::string>();
    s.alpha = j.at("alpha").get<double>();
    s.steps = j.at("steps").get<std::int64_t>();
    s.marginal_coverage = j.at("marginal_coverage").get<double>();
    s.avg_finite_set_width = j.at("avg_finite_set_width").get<double>();
    s.finite_set_count = j.at("finite_set_count").get<std::int64_t>();
    s.fraction_infinite_sets = j.at("fraction_infinite_sets").get<double>();
    s.fraction_empty_sets = j.at("fraction_empty_sets").get<double>();
    s.longest_miscoverage_run = j.at("longest_miscoverage_run").get<std::int64_t>();
    s.mean_loss = j.at("mean_loss").get<double>();
    s.final_error_sum = j.at("final_error_sum").get<double>();
    s.degenerate_rates = j.at("degenerate_rates").get<bool>();
    s.dropped_rows = j.at("dropped_rows").get<std::int64_t>();
    s.trailing_windows = j.at("trailing_windows").get<std::vector<std::int64_t>>();
    s.warnings = j.at("warnings").get<std::vector<std::string>>();
    return s;
}

struct EmitFormats {
    bool steps = true;
    bool summary = true;
    bool plotdata = true;
};

inline void emit(const RunResult& result, const std::filesystem::path& out_dir,
                 const EmitFormats& formats = {}) {
    std::filesystem::create_directories(out_dir);
    if (formats.steps) {
        write_steps_csv(result.records, out_dir / "steps.csv");
    }
    if (formats.summary) {
        std::ofstream out(out_dir / "summary.json");
        detail::require(out.good(), "emit: cannot open summary.json");
        out << summary_to_json(result.summary).dump(2) << "\n";
        detail::require(out.good(), "emit: summary write failed");
    }
    if (formats.plotdata) {
        {
            std::ofstream out(out_dir / "plotdata_coverage.csv");
            detail::require(out.good(), "emit: cannot open plotdata_coverage.csv");
            out << "t";
            for (const auto& [w, series] : result.trailing) out << ",cov_w" << w;
            out << "\n";
            for (std::size_t i = 0; i < result.records.size(); ++i) {
                out << result.records[i].t;
                for (const auto& [w, series] : result.trailing) {
                    out << ',' << detail::format_double(series[i]);
                }
                out << "\n";
            }
            detail::require(out.good(), "emit: coverage write failed");
        }
        {
            std::ofstream out(out_dir / "plotdata_sets.csv");
            detail::require(out.good(), "emit: cannot open plotdata_sets.csv");
            out << "t,y,set_lo,set_hi,set_kind\n";
            for (const StepRecord& r : result.records) {
                const auto [set_lo, set_hi] = detail::set_bounds_for_output(r.set);
                out << r.t << ',' << detail::format_double(r.y) << ','
                    << detail::format_double(set_lo) << ',' << detail::format_double(set_hi)
                    << ',' << to_string(r.set.kind) << "\n";
            }
            detail::require(out.good(), "emit: sets write failed");
        }
    }
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

struct SweepCell {
    std::string controller;
    double rate = 0.0;
    bool ok = false;
    std::string error;  // failure diagnostic when !ok
    RunSummary summary;
};

/// Apply a sweep rate to a config: the tracker takes it as the automatic-rate
/// multiplier (or the fixed eta if rates are explicit), the adaptive-level
/// modes and the linear/decaying saturations take it as the absolute eta, and
/// the arctangent-style saturation derives its own constants so the rate only
/// feeds through the multiplier.
inline RunConfig apply_sweep_rate(RunConfig cfg, Mode mode, double rate) {
    cfg.controller.mode = mode;
    switch (mode) {
        case Mode::p:
            if (cfg.controller.eta_auto) {
                cfg.controller.eta_multiplier = rate;
            } else {
                cfg.controller.eta = rate;
            }
            break;
        case Mode::aci:
        case Mode::aci_clipped:
            cfg.controller.eta_auto = false;
            cfg.controller.eta = rate;
            break;
        case Mode::pi:
        case Mode::pid:
        case Mode::risk:
        case Mode::kernel_pi:
            if (cfg.controller.saturation == SaturationKind::tan) {
                cfg.controller.eta_multiplier = rate;
            } else {
                cfg.controller.eta_auto = false;
                cfg.controller.eta = rate;
            }
            break;
    }
    return cfg;
}

/// Run the full grid sequentially. A failure in one cell is captured in that
/// cell's diagnostic and does not abort the rest of the grid.
inline std::vector<SweepCell> sweep(const RunConfig& base, const std::vector<std::string>& controllers,
                                    const std::vector<double>& rates) {
    detail::require(!controllers.empty(), "sweep: need at least one controller");
    detail::require(!rates.empty(), "sweep: need at least one rate");
    std::vector<SweepCell> cells;
    for (const std::string& name : controllers) {
        for (double rate : rates) {
            SweepCell cell;
            cell.controller = name;
            cell.rate = rate;
            try {
                const Mode mode = parse_mode(name);
                const RunConfig cfg = apply_sweep_rate(base, mode, rate);
                RunResult r = run_experiment(cfg);
                cell.summary = std::move(r.summary);
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

inline nlohmann::json sweep_to_json(const std::vector<SweepCell>& cells) {
    nlohmann::json grid = nlohmann::json::array();
    for (const SweepCell& cell : cells) {
        nlohmann::json j;
        j["controller"] = cell.controller;
        j["rate"] = cell.rate;
        j["ok"] = cell.ok;
        if (cell.ok) {
            j["summary"] = summary_to_json(cell.summary);
        } else {
            j["error"] = cell.error;
        }
        grid.push_back(std::move(j));
    }
    return grid;
}

}  // namespace copid
