#pragma once
// Base forecasters and scorecasters: autoregressive least squares, the theta
// method (trend + exponential smoothing blend), persistence, and an
// L1-penalized quantile regression solved by a proximal subgradient method.
//
// All recipes here are pinned for determinism: fixed iteration budgets, a
// fixed smoothing-parameter grid, and first-best tie breaking. The theta and
// smoothing recursions are written in incremental form (x + rate * (target -
// x)) so that a constant series is an exact floating-point fixed point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "copid/core.hpp"

namespace copid {

// ---------------------------------------------------------------------------
// Fit results
// ---------------------------------------------------------------------------

struct FitState {
    std::vector<double> coefficients;  // AR: most-recent-first lag weights
    double intercept = 0.0;
    double residual_scale = 0.0;  // mean absolute residual on the training rows
    std::int64_t iterations = 0;
    double objective = 0.0;  // solver objective at the returned iterate
};

namespace detail {

/// k-th smallest element where k is the least index with k/n >= tau; the same
/// order-statistic convention the controllers use for empirical quantiles.
inline double order_statistic_quantile(std::vector<double> values, double tau) {
    require(!values.empty(), "order_statistic_quantile: empty sample");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<std::int64_t>(values.size());
    for (std::int64_t k = 1; k <= n; ++k) {
        if (static_cast<double>(k) / static_cast<double>(n) >= tau) {
            return values[static_cast<std::size_t>(k - 1)];
        }
    }
    return values.back();
}

/// Eigendecomposition of a small symmetric matrix (row-major, n x n) by
/// cyclic Jacobi rotations. Returns eigenvalues and writes the orthonormal
/// eigenvectors into `vectors` (column j = eigenvector j).
inline std::vector<double> jacobi_eigen(std::vector<double> a, std::size_t n,
                                        std::vector<double>& vectors) {
    vectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) vectors[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (apq == 0.0) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vectors[k * n + p];
                    const double vkq = vectors[k * n + q];
                    vectors[k * n + p] = c * vkp - s * vkq;
                    vectors[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> eigenvalues(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
    return eigenvalues;
}

/// Minimum-norm solution of the symmetric system A w = c via the
/// pseudoinverse: eigenvalues below rtol * max|eigenvalue| are treated as
/// zero, which handles singular designs (e.g. constant series) gracefully.
inline std::vector<double> solve_min_norm(const std::vector<double>& a,
                                          const std::vector<double>& c, std::size_t n) {
    std::vector<double> vectors;
    const std::vector<double> eig = jacobi_eigen(a, n, vectors);
    double max_abs = 0.0;
    for (double v : eig) max_abs = std::max(max_abs, std::abs(v));
    const double cutoff = 1e-10 * std::max(max_abs, 1e-300);
    std::vector<double> w(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        if (std::abs(eig[j]) <= cutoff) continue;
        double proj = 0.0;  // (eigenvector_j . c) / eigenvalue_j
        for (std::size_t i = 0; i < n; ++i) proj += vectors[i * n + j] * c[i];
        proj /= eig[j];
        for (std::size_t i = 0; i < n; ++i) w[i] += proj * vectors[i * n + j];
    }
    return w;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Autoregressive least squares
// ---------------------------------------------------------------------------

/// Least-squares fit of each value on its p predecessors plus an intercept,
/// over the whole given series. Singular designs fall back to the
/// minimum-norm solution. coefficients[0] multiplies the most recent value.
inline FitState ar_fit(const std::vector<double>& series, std::size_t p) {
    detail::require(p >= 1, "ar_fit: lag count must be >= 1");
    detail::require(series.size() >= p + 2, "ar_fit: series too short for the lag count");
    const std::size_t rows = series.size() - p;
    const std::size_t d = p + 1;  // intercept + p lags

    // Normal equations A w = c with regressor vector (1, y_{t-1}, ..., y_{t-p}).
    std::vector<double> a(d * d, 0.0), c(d, 0.0), reg(d);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = p + r;  // index of the target value
        reg[0] = 1.0;
        for (std::size_t j = 1; j <= p; ++j) reg[j] = series[t - j];
        for (std::size_t i = 0; i < d; ++i) {
            c[i] += reg[i] * series[t];
            for (std::size_t j = 0; j < d; ++j) a[i * d + j] += reg[i] * reg[j];
        }
    }
    const std::vector<double> w = detail::solve_min_norm(a, c, d);

    FitState fit;
    fit.intercept = w[0];
    fit.coefficients.assign(w.begin() + 1, w.end());
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t t = p + r;
        double pred = fit.intercept;
        for (std::size_t j = 1; j <= p; ++j) pred += w[j] * series[t - j];
        const double res = series[t] - pred;
        abs_sum += std::abs(res);
        sq_sum += res * res;
    }
    fit.residual_scale = abs_sum / static_cast<double>(rows);
    fit.objective = sq_sum;
    return fit;
}

/// One-step prediction: intercept + dot(coefficients, recent), where
/// recent[0] is the most recent value.
inline double ar_predict(const FitState& fit, const std::vector<double>& recent) {
    detail::require(recent.size() == fit.coefficients.size(),
                    "ar_predict: recent-value count must match the lag count");
    double pred = fit.intercept;
    for (std::size_t j = 0; j < recent.size(); ++j) pred += fit.coefficients[j] * recent[j];
    return pred;
}

// ---------------------------------------------------------------------------
// Theta method
// ---------------------------------------------------------------------------

/// One-step theta forecast. Recipe, pinned:
///   1. ordinary least-squares trend over positions t = 1..n;
///   2. theta line z_t = y_t + (theta - 1) * (y_t - trend(t));
///   3. simple exponential smoothing of z, anchored at z_1, smoothing rate
///      chosen from the grid 0.05, 0.10, ..., 0.95 by in-window one-step
///      squared error (first best wins);
///   4. forecast = level + (1 - 1/theta) * (trend(n+1) - level).
/// At theta = 1 this is plain exponential smoothing of the raw series; at
/// theta = 2 it is the equal-weight blend of smoothing and trend.
inline double theta_forecast(const std::vector<double>& series, double theta) {
    detail::require(theta >= 1.0, "theta_forecast: theta must be >= 1");
    detail::require(series.size() >= 4, "theta_forecast: need at least 4 values");
    const auto n = static_cast<std::int64_t>(series.size());
    const double nd = static_cast<double>(n);

    // Trend fit, centered so that constant series give slope exactly 0.
    const double tbar = (nd + 1.0) / 2.0;
    double dy_sum = 0.0, cov = 0.0, var = 0.0;
    for (std::int64_t t = 1; t <= n; ++t) {
        const double dy = series[static_cast<std::size_t>(t - 1)] - series[0];
        const double dt = static_cast<double>(t) - tbar;
        dy_sum += dy;
        cov += dt * dy;
        var += dt * dt;
    }
    const double slope = cov / var;
    const double ybar = series[0] + dy_sum / nd;
    const auto trend = [&](double t) { return ybar + slope * (t - tbar); };

    std::vector<double> z(series.size());
    for (std::int64_t t = 1; t <= n; ++t) {
        const double y = series[static_cast<std::size_t>(t - 1)];
        z[static_cast<std::size_t>(t - 1)] = y + (theta - 1.0) * (y - trend(static_cast<double>(t)));
    }

    double best_sse = kInf;
    double best_level = z[0];
    for (int i = 1; i <= 19; ++i) {
        const double rate = 0.05 * static_cast<double>(i);
        double level = z[0];
        double sse = 0.0;
        for (std::size_t t = 1; t < z.size(); ++t) {
            const double e = z[t] - level;
            sse += e * e;
            level += rate * e;
        }
        if (sse < best_sse) {
            best_sse = sse;
            best_level = level;
        }
    }
    return best_level + (1.0 - 1.0 / theta) * (trend(nd + 1.0) - best_level);
}

// ---------------------------------------------------------------------------
// L1-penalized quantile regression
// ---------------------------------------------------------------------------

/// Approximately minimizes  sum_i pinball(y_i - w.x_i - w0, tau) + lambda*|w|_1
/// by proximal subgradient descent on standardized features: mean-form
/// pinball subgradient step of size 0.3 * max(1, sd(y)) / sqrt(k) at
/// iteration k, soft-thresholding of the (standardized) weights by
/// step * lambda / n, intercept unpenalized; the best iterate by the
/// objective above is returned, mapped back to the original feature scale.
/// With no features at all the problem has the closed-form solution
/// w0 = empirical tau-quantile of the targets, which is returned exactly.
inline FitState l1_quantile_fit(const std::vector<std::vector<double>>& features,
                                const std::vector<double>& targets, double tau, double lambda,
                                std::int64_t max_iters = 2000) {
    detail::require(tau > 0.0 && tau < 1.0, "l1_quantile_fit: tau must be in (0,1)");
    detail::require(lambda >= 0.0, "l1_quantile_fit: lambda must be nonnegative");
    detail::require(max_iters >= 1, "l1_quantile_fit: need at least one iteration");
    detail::require(features.size() == targets.size(),
                    "l1_quantile_fit: feature rows must match target count");
    const std::size_t n = targets.size();
    detail::require(n >= 2, "l1_quantile_fit: need at least two rows");
    const std::size_t d = features[0].size();
    for (const auto& row : features) {
        detail::require(row.size() == d, "l1_quantile_fit: ragged feature matrix");
    }

    FitState fit;
    fit.iterations = max_iters;
    if (d == 0) {
        fit.intercept = detail::order_statistic_quantile(targets, tau);
        double obj = 0.0, abs_sum = 0.0;
        for (double y : targets) {
            obj += pinball_loss(y - fit.intercept, tau);
            abs_sum += std::abs(y - fit.intercept);
        }
        fit.objective = obj;
        fit.residual_scale = abs_sum / static_cast<double>(n);
        return fit;
    }

    // Standardize features; constant columns get scale 1 (they stay all-zero
    // after centering, so their weights never move off 0).
    std::vector<double> mu(d, 0.0), sigma(d, 0.0);
    for (const auto& row : features)
        for (std::size_t j = 0; j < d; ++j) mu[j] += row[j];
    for (double& m : mu) m /= static_cast<double>(n);
    for (const auto& row : features)
        for (std::size_t j = 0; j < d; ++j) sigma[j] += (row[j] - mu[j]) * (row[j] - mu[j]);
    for (double& s : sigma) {
        s = std::sqrt(s / static_cast<double>(n));
        if (s < 1e-12) s = 1.0;
    }
    std::vector<double> xs(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) xs[i * d + j] = (features[i][j] - mu[j]) / sigma[j];

    double y_mean = 0.0, y_var = 0.0;
    for (double y : targets) y_mean += y;
    y_mean /= static_cast<double>(n);
    for (double y : targets) y_var += (y - y_mean) * (y - y_mean);
    const double step0 = 0.3 * std::max(1.0, std::sqrt(y_var / static_cast<double>(n)));

    std::vector<double> w(d, 0.0), grad(d);
    double w0 = 0.0;
    std::vector<double> best_w = w;
    double best_w0 = w0;
    double best_obj = kInf;
    std::vector<double> residuals(n);

    const auto evaluate = [&](const std::vector<double>& wv, double w0v) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double pred = w0v;
            for (std::size_t j = 0; j < d; ++j) pred += wv[j] * xs[i * d + j];
            residuals[i] = targets[i] - pred;
            obj += pinball_loss(residuals[i], tau);
        }
        for (double wj : wv) obj += lambda * std::abs(wj);
        return obj;
    };

    best_obj = evaluate(w, w0);
    for (std::int64_t k = 1; k <= max_iters; ++k) {
        // evaluate() above left `residuals` at the current iterate.
        double g0 = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double g = pinball_subgradient(residuals[i], tau);
            g0 -= g;
            for (std::size_t j = 0; j < d; ++j) grad[j] -= g * xs[i * d + j];
        }
        const double step = step0 / std::sqrt(static_cast<double>(k));
        const double scale = 1.0 / static_cast<double>(n);
        w0 -= step * g0 * scale;
        const double shrink = step * lambda * scale;
        for (std::size_t j = 0; j < d; ++j) {
            double wj = w[j] - step * grad[j] * scale;
            wj = (wj > shrink) ? wj - shrink : ((wj < -shrink) ? wj + shrink : 0.0);
            w[j] = wj;
        }
        const double obj = evaluate(w, w0);
        if (obj < best_obj) {
            best_obj = obj;
            best_w = w;
            best_w0 = w0;
        }
    }

    // Map back to the original feature scale.
    fit.coefficients.resize(d);
    fit.intercept = best_w0;
    for (std::size_t j = 0; j < d; ++j) {
        fit.coefficients[j] = best_w[j] / sigma[j];
        fit.intercept -= best_w[j] * mu[j] / sigma[j];
    }
    fit.objective = best_obj;
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = fit.intercept;
        for (std::size_t j = 0; j < d; ++j) pred += fit.coefficients[j] * features[i][j];
        abs_sum += std::abs(targets[i] - pred);
    }
    fit.residual_scale = abs_sum / static_cast<double>(n);
    return fit;
}

/// Linear prediction in the original feature scale.
inline double l1_predict(const FitState& fit, const std::vector<double>& x) {
    detail::require(x.size() == fit.coefficients.size(),
                    "l1_predict: feature count must match the fit");
    double pred = fit.intercept;
    for (std::size_t j = 0; j < x.size(); ++j) pred += fit.coefficients[j] * x[j];
    return pred;
}

// ---------------------------------------------------------------------------
// Forecaster plumbing
// ---------------------------------------------------------------------------

enum class ForecasterKind { ar, theta, persistence, l1_quantile, none };

inline const char* to_string(ForecasterKind k) {
    switch (k) {
        case ForecasterKind::ar: return "ar";
        case ForecasterKind::theta: return "theta";
        case ForecasterKind::persistence: return "persistence";
        case ForecasterKind::l1_quantile: return "l1_quantile";
        case ForecasterKind::none: return "none";
    }
    return "?";
}

inline ForecasterKind parse_forecaster_kind(const std::string& name) {
    for (ForecasterKind k : {ForecasterKind::ar, ForecasterKind::theta,
                             ForecasterKind::persistence, ForecasterKind::l1_quantile,
                             ForecasterKind::none}) {
        if (name == to_string(k)) return k;
    }
    throw std::invalid_argument("parse_forecaster_kind: unknown forecaster '" + name + "'");
}

struct ForecasterSpec {
    ForecasterKind kind = ForecasterKind::persistence;
    std::size_t lags = 3;       // ar / l1_quantile
    double theta = 2.0;         // theta
    double lambda = 10.0;       // l1_quantile
    double tau = 0.9;           // l1_quantile target quantile level
    std::size_t window = 0;     // training window; 0 = use all history
};

/// Minimum history length before the forecaster can produce a value.
inline std::size_t forecaster_min_history(const ForecasterSpec& spec) {
    switch (spec.kind) {
        case ForecasterKind::ar: return spec.lags + 2;
        case ForecasterKind::theta: return 4;
        case ForecasterKind::persistence: return 1;
        case ForecasterKind::l1_quantile: return spec.lags + 2;
        case ForecasterKind::none: return 0;
    }
    return 0;
}

namespace detail {
inline std::vector<double> training_slice(const std::vector<double>& history, std::size_t window) {
    if (window == 0 || history.size() <= window) return history;
    return std::vector<double>(history.end() - static_cast<long>(window), history.end());
}
}  // namespace detail

/// One-step forecast of the next value of `history`. Requires
/// history.size() >= forecaster_min_history(spec). The l1_quantile kind
/// regresses each value on its `lags` predecessors and predicts the tau
/// quantile of the next value.
inline double forecast_next(const ForecasterSpec& spec, const std::vector<double>& history) {
    detail::require(spec.kind != ForecasterKind::none, "forecast_next: no forecaster configured");
    detail::require(history.size() >= forecaster_min_history(spec),
                    "forecast_next: history shorter than the forecaster minimum");
    const std::vector<double> train = detail::training_slice(history, spec.window);
    switch (spec.kind) {
        case ForecasterKind::persistence:
            return train.back();
        case ForecasterKind::theta:
            return theta_forecast(train, spec.theta);
        case ForecasterKind::ar: {
            const FitState fit = ar_fit(train, spec.lags);
            std::vector<double> recent(spec.lags);
            for (std::size_t j = 0; j < spec.lags; ++j) recent[j] = train[train.size() - 1 - j];
            return ar_predict(fit, recent);
        }
        case ForecasterKind::l1_quantile: {
            detail::require(train.size() >= spec.lags + 2,
                            "forecast_next: window too short for the lag count");
            std::vector<std::vector<double>> rows;
            std::vector<double> targets;
            for (std::size_t t = spec.lags; t < train.size(); ++t) {
                std::vector<double> row(spec.lags);
                for (std::size_t j = 0; j < spec.lags; ++j) row[j] = train[t - 1 - j];
                rows.push_back(std::move(row));
                targets.push_back(train[t]);
            }
            const FitState fit = l1_quantile_fit(rows, targets, spec.tau, spec.lambda);
            std::vector<double> recent(spec.lags);
            for (std::size_t j = 0; j < spec.lags; ++j) recent[j] = train[train.size() - 1 - j];
            return l1_predict(fit, recent);
        }
        case ForecasterKind::none: break;
    }
    throw std::invalid_argument("forecast_next: unknown forecaster kind");
}

struct ScorecastResult {
    double q = 0.0;
    bool warmed_up = false;
};

/// Forecast of the next score for the composite controller. Until the score
/// history reaches the forecaster's minimum length the result is a neutral 0
/// with warmed_up = false, which reduces the composite step to the plain
/// integrator.
inline ScorecastResult scorecast(const ForecasterSpec& spec,
                                 const std::vector<double>& score_history) {
    if (spec.kind == ForecasterKind::none) return ScorecastResult{0.0, false};
    if (score_history.size() < forecaster_min_history(spec)) return ScorecastResult{0.0, false};
    return ScorecastResult{forecast_next(spec, score_history), true};
}

}  // namespace copid
