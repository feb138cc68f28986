#pragma once

// Correlation, two-sample comparisons and simple regression with the
// distribution functions they need.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fluxjump/corpus.hpp"
#include "fluxjump/error.hpp"

namespace fluxjump::stats {

// ---------------------------------------------------------------------------
// Special functions

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularised incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(lbt) * detail::betacf(a, b, x) / a;
    return 1.0 - std::exp(lbt) * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
inline double t_two_sided_p(double t, double df) {
    if (std::isnan(t)) return 1.0;
    if (std::isinf(t)) return 0.0;
    return std::clamp(incomplete_beta(0.5 * df, 0.5, df / (df + t * t)), 0.0, 1.0);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_two_sided_p(double z) {
    if (std::isnan(z)) return 1.0;
    return std::clamp(std::erfc(std::abs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

inline constexpr double kZ975 = 1.959963984540054;

// ---------------------------------------------------------------------------

inline double mean(std::span<const double> x) {
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample variance (n - 1 denominator), two-pass.
inline double variance(std::span<const double> x) {
    double m = mean(x), s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

struct CorrelationResult {
    double r = 0.0;
    double p_value = 1.0;
    double ci_low = -1.0;
    double ci_high = 1.0;
    std::size_t n = 0;
};

/// Sample Pearson r, t-test p (n-2 df) and 95% Fisher-z interval.
inline CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionMismatch("pearson: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw Error("pearson: need at least 3 pairs");
    double mx = mean(x), my = mean(y), sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance");
    CorrelationResult res;
    res.n = n;
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = static_cast<double>(n - 2);
    if (std::abs(res.r) == 1.0) {
        res.p_value = 0.0;
    } else {
        double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
        res.p_value = t_two_sided_p(t, df);
    }
    if (n > 3) {
        double z = std::atanh(res.r), se = 1.0 / std::sqrt(static_cast<double>(n - 3));
        res.ci_low = std::tanh(z - kZ975 * se);
        res.ci_high = std::tanh(z + kZ975 * se);
    }
    res.ci_low = std::min(res.ci_low, res.r);
    res.ci_high = std::max(res.ci_high, res.r);
    return res;
}

enum class CompareMethod { welch_t, mann_whitney };

inline std::string to_string(CompareMethod m) { return m == CompareMethod::welch_t ? "welch_t" : "mann_whitney"; }

struct GroupComparison {
    double statistic = 0.0;  // Welch t, or Mann-Whitney U of group a
    double p_value = 1.0;
    CompareMethod method = CompareMethod::mann_whitney;
    std::size_t n_a = 0, n_b = 0;
    double mean_a = 0.0, mean_b = 0.0;
    double df = 0.0;  // Welch only
    double z = 0.0;   // Mann-Whitney only
};

/// Unequal-variance t-test with Welch–Satterthwaite df, two-sided.
inline GroupComparison welch_t(std::span<const double> a, std::span<const double> b) {
    GroupComparison g;
    g.method = CompareMethod::welch_t;
    g.n_a = a.size();
    g.n_b = b.size();
    g.mean_a = mean(a);
    g.mean_b = mean(b);
    double va = variance(a) / static_cast<double>(a.size()), vb = variance(b) / static_cast<double>(b.size());
    double se2 = va + vb;
    if (se2 == 0.0) {
        // both groups constant but different
        g.statistic = g.mean_a > g.mean_b ? std::numeric_limits<double>::infinity()
                                          : -std::numeric_limits<double>::infinity();
        g.df = static_cast<double>(a.size() + b.size() - 2);
        g.p_value = 0.0;
        return g;
    }
    g.statistic = (g.mean_a - g.mean_b) / std::sqrt(se2);
    g.df = se2 * se2 /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    g.p_value = t_two_sided_p(g.statistic, g.df);
    return g;
}

/// Mann-Whitney U with mid-ranks for ties; normal approximation with tie
/// correction, no continuity correction, two-sided.
inline GroupComparison mann_whitney(std::span<const double> a, std::span<const double> b) {
    GroupComparison g;
    g.method = CompareMethod::mann_whitney;
    g.n_a = a.size();
    g.n_b = b.size();
    g.mean_a = mean(a);
    g.mean_b = mean(b);
    const std::size_t n = a.size() + b.size();
    std::vector<std::pair<double, int>> all;
    all.reserve(n);
    for (double v : a) all.emplace_back(v, 0);
    for (double v : b) all.emplace_back(v, 1);
    std::sort(all.begin(), all.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
    double rank_sum_a = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && all[j + 1].first == all[i].first) ++j;
        double mid = 0.5 * static_cast<double>(i + j) + 1.0;
        double t = static_cast<double>(j - i + 1);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k <= j; ++k)
            if (all[k].second == 0) rank_sum_a += mid;
        i = j + 1;
    }
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size()), nn = static_cast<double>(n);
    g.statistic = rank_sum_a - na * (na + 1.0) / 2.0;
    double mu = na * nb / 2.0;
    double sigma2 = na * nb / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
    if (sigma2 <= 0.0) {
        g.z = 0.0;
        g.p_value = 1.0;
        return g;
    }
    g.z = (g.statistic - mu) / std::sqrt(sigma2);
    g.p_value = normal_two_sided_p(g.z);
    return g;
}

inline GroupComparison compare_groups(std::span<const double> a, std::span<const double> b, CompareMethod method) {
    if (a.size() < 2 || b.size() < 2) throw Error("compare_groups: each group needs at least 2 values");
    bool all_same = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; }) &&
                    std::all_of(b.begin(), b.end(), [&](double v) { return v == a[0]; });
    if (all_same) throw Error("compare_groups: all values identical across both groups");
    return method == CompareMethod::welch_t ? welch_t(a, b) : mann_whitney(a, b);
}

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double slope_p = 1.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

/// Least-squares line y = intercept + slope * x with a t-test on the slope.
inline RegressionResult ols_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DimensionMismatch("ols_slope: length mismatch");
    const std::size_t n = x.size();
    if (n < 3) throw Error("ols_slope: need at least 3 points");
    double mx = mean(x), my = mean(y), sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw Error("ols_slope: zero variance in x");
    RegressionResult r;
    r.n = n;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = y[i] - (r.intercept + r.slope * x[i]);
        ss_res += e * e;
    }
    r.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 0.0;
    const double df = static_cast<double>(n - 2);
    r.slope_se = std::sqrt(ss_res / df / sxx);
    if (r.slope_se == 0.0)
        r.slope_p = r.slope == 0.0 ? 1.0 : 0.0;
    else
        r.slope_p = t_two_sided_p(r.slope / r.slope_se, df);
    return r;
}

/// Response times of the later response of each transition, split by its jump code.
struct RtSplit {
    std::vector<double> jump;
    std::vector<double> stay;
};

/// Adds one sequence's transitions; transitions whose response lacks rt_ms are skipped.
inline void collect_rts(const ResponseSequence& seq, const std::vector<std::uint8_t>& jumps, RtSplit& acc) {
    if (jumps.size() + 1 != seq.size()) throw DimensionMismatch("collect_rts: jumps do not match sequence length");
    for (std::size_t i = 0; i < jumps.size(); ++i) {
        const auto& rt = seq.responses[i + 1].rt_ms;
        if (!rt) continue;
        (jumps[i] ? acc.jump : acc.stay).push_back(static_cast<double>(*rt));
    }
}

/// Compares RTs at jump = 1 transitions (group a) with jump = 0 (group b).
inline GroupComparison rt_by_jump(const RtSplit& rts, CompareMethod method = CompareMethod::mann_whitney) {
    if (rts.jump.empty() || rts.stay.empty())
        throw Error("rt_by_jump: no response times for " + std::string(rts.jump.empty() ? "jump" : "non-jump") +
                    " transitions");
    return compare_groups(rts.jump, rts.stay, method);
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json to_json(const CorrelationResult& c) {
    return {{"r", c.r}, {"p_value", c.p_value}, {"ci_low", c.ci_low}, {"ci_high", c.ci_high}, {"n", c.n}};
}

inline nlohmann::ordered_json to_json(const GroupComparison& g) {
    nlohmann::ordered_json j{{"method", to_string(g.method)}, {"statistic", g.statistic}, {"p_value", g.p_value},
                             {"n_a", g.n_a},  {"n_b", g.n_b},  {"mean_a", g.mean_a},  {"mean_b", g.mean_b}};
    if (g.method == CompareMethod::welch_t)
        j["df"] = g.df;
    else
        j["z"] = g.z;
    // JSON has no infinity; a constant-group Welch statistic is reported as null.
    if (!std::isfinite(g.statistic)) j["statistic"] = nullptr;
    return j;
}

inline nlohmann::ordered_json to_json(const RegressionResult& r) {
    return {{"slope", r.slope},     {"intercept", r.intercept}, {"slope_se", r.slope_se},
            {"slope_p", r.slope_p}, {"r_squared", r.r_squared}, {"n", r.n}};
}

}  // namespace fluxjump::stats
