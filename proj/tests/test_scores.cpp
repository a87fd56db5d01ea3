// Scores: hand-checked values, set inversion, and the equivalence between
// the score-scale error 1{s > q} and the set-scale error 1{y outside set}.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>

#include "copid/core.hpp"
#include "copid/scores.hpp"

using namespace copid;

TEST_CASE("absolute residual score values") {
    CHECK(absolute_score(3.0, 5.5) == 2.5);
    CHECK(absolute_score(3.0, 1.0) == 2.0);
    CHECK(absolute_score(-2.0, -2.0) == 0.0);
    const ScorePair s = compute_scores(ScoreKind::absolute_residual, ForecastValue::point(3.0), 5.5);
    CHECK(s.lo == 2.5);
    CHECK(s.hi == 2.5);
}

TEST_CASE("signed residual scores are the two one-sided errors") {
    const ScorePair s =
        compute_scores(ScoreKind::signed_residual_asymmetric, ForecastValue::point(3.0), 5.5);
    CHECK(s.lo == -2.5);  // f - y
    CHECK(s.hi == 2.5);   // y - f
    // Exactly one channel is positive unless y == f.
    const ScorePair z =
        compute_scores(ScoreKind::signed_residual_asymmetric, ForecastValue::point(3.0), 3.0);
    CHECK(z.lo == 0.0);
    CHECK(z.hi == 0.0);
}

TEST_CASE("quantile pair scores measure exceedance beyond each quantile") {
    const ForecastValue f = ForecastValue::quantiles(2.0, 6.0);
    const ScorePair inside = compute_scores(ScoreKind::quantile_asymmetric, f, 4.0);
    CHECK(inside.lo == -2.0);
    CHECK(inside.hi == -2.0);
    const ScorePair below = compute_scores(ScoreKind::quantile_asymmetric, f, 1.0);
    CHECK(below.lo == 1.0);
    CHECK(below.hi == -5.0);
    const ScorePair above = compute_scores(ScoreKind::quantile_asymmetric, f, 9.0);
    CHECK(above.lo == -7.0);
    CHECK(above.hi == 3.0);
}

TEST_CASE("forecast arity is validated") {
    CHECK_THROWS_AS(compute_scores(ScoreKind::absolute_residual,
                                   ForecastValue::quantiles(0.0, 1.0), 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(compute_scores(ScoreKind::quantile_asymmetric, ForecastValue::point(0.0), 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(ForecastValue::quantiles(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("set inversion: symmetric interval around a point forecast") {
    const IntervalSet set = invert_to_set(ScoreKind::absolute_residual, ForecastValue::point(3.0), 2.5);
    REQUIRE(set.kind == SetKind::interval);
    CHECK(set.lower == 0.5);
    CHECK(set.upper == 5.5);

    // Negative quantile: a tighter-than-zero band is empty.
    CHECK(invert_to_set(ScoreKind::absolute_residual, ForecastValue::point(3.0), -0.1).kind ==
          SetKind::empty);
    // Zero quantile: the singleton {f} is still a (degenerate) interval.
    const IntervalSet point = invert_to_set(ScoreKind::absolute_residual, ForecastValue::point(3.0), 0.0);
    REQUIRE(point.kind == SetKind::interval);
    CHECK(point.contains(3.0));
    CHECK(point.width() == 0.0);
}

TEST_CASE("set inversion: asymmetric channels move the two edges independently") {
    const ForecastValue f = ForecastValue::point(10.0);
    const IntervalSet set =
        invert_to_set(ScoreKind::signed_residual_asymmetric, f, ScorePair{1.0, 4.0});
    REQUIRE(set.kind == SetKind::interval);
    CHECK(set.lower == 9.0);
    CHECK(set.upper == 14.0);

    const ForecastValue fq = ForecastValue::quantiles(2.0, 6.0);
    const IntervalSet setq = invert_to_set(ScoreKind::quantile_asymmetric, fq, ScorePair{0.5, 1.5});
    REQUIRE(setq.kind == SetKind::interval);
    CHECK(setq.lower == 1.5);
    CHECK(setq.upper == 7.5);
    // Negative quantiles can pull the pair inside-out, which is empty.
    CHECK(invert_to_set(ScoreKind::quantile_asymmetric, fq, ScorePair{-3.0, -3.0}).kind ==
          SetKind::empty);
}

TEST_CASE("set inversion: infinite quantiles") {
    const ForecastValue f = ForecastValue::point(0.0);
    // -inf on either channel is unsatisfiable.
    CHECK(invert_to_set(ScoreKind::signed_residual_asymmetric, f, ScorePair{-kInf, 5.0}).kind ==
          SetKind::empty);
    CHECK(invert_to_set(ScoreKind::signed_residual_asymmetric, f, ScorePair{5.0, -kInf}).kind ==
          SetKind::empty);
    CHECK(invert_to_set(ScoreKind::absolute_residual, f, -kInf).kind == SetKind::empty);
    // +inf on both channels opens the whole line.
    CHECK(invert_to_set(ScoreKind::signed_residual_asymmetric, f, ScorePair{kInf, kInf}).kind ==
          SetKind::full);
    CHECK(invert_to_set(ScoreKind::absolute_residual, f, kInf).kind == SetKind::full);
    // +inf on one channel opens one side only; still an interval.
    const IntervalSet half =
        invert_to_set(ScoreKind::signed_residual_asymmetric, f, ScorePair{kInf, 3.0});
    REQUIRE(half.kind == SetKind::interval);
    CHECK(half.lower == -kInf);
    CHECK(half.upper == 3.0);
    CHECK(half.contains(-1e300));
    CHECK(!half.contains(3.5));
}

TEST_CASE("coverage indicator equals the score-scale error (property)") {
    // On a dyadic grid every quantity below is exact in floating point, so the
    // equivalence 1{y outside set} == 1{score > q} can be checked with ==.
    std::mt19937_64 rng(20240817);
    auto draw_dyadic = [&rng](double scale) {
        // Multiples of 1/8 in [-scale, scale]; exact, as are their sums.
        const auto n = static_cast<std::uint64_t>(scale * 8.0);
        const auto k = static_cast<std::int64_t>(rng() % (2 * n + 1)) - static_cast<std::int64_t>(n);
        return static_cast<double>(k) * 0.125;
    };
    for (int trial = 0; trial < 4000; ++trial) {
        const double f = draw_dyadic(4.0);
        const double y = draw_dyadic(4.0);
        const double qlo = draw_dyadic(2.0);
        const double qhi = draw_dyadic(2.0);
        for (ScoreKind kind : {ScoreKind::absolute_residual, ScoreKind::signed_residual_asymmetric,
                               ScoreKind::quantile_asymmetric}) {
            ForecastValue fv = ForecastValue::point(f);
            ScorePair q{qlo, qhi};
            if (kind == ScoreKind::absolute_residual) q = ScorePair{qlo, qlo};
            if (kind == ScoreKind::quantile_asymmetric)
                fv = ForecastValue::quantiles(std::min(f, y) - 1.0, std::max(f, y) + 1.0);
            const ScorePair s = compute_scores(kind, fv, y);
            const IntervalSet set = invert_to_set(kind, fv, q);
            const double score_err = (s.lo > q.lo || s.hi > q.hi) ? 1.0 : 0.0;
            CHECK(coverage_indicator(set, y) == score_err);
        }
    }
}

TEST_CASE("sets grow monotonically with the quantile") {
    const ForecastValue f = ForecastValue::point(1.0);
    double prev_width = -1.0;
    for (double q = 0.0; q <= 5.0; q += 0.25) {
        const IntervalSet set = invert_to_set(ScoreKind::absolute_residual, f, q);
        REQUIRE(set.kind == SetKind::interval);
        CHECK(set.width() >= prev_width);
        prev_width = set.width();
    }
}
