#include "biasaudit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "biasaudit/errors.hpp"
#include "biasaudit/special_functions.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {

TestResult TestResult::make_degenerate(std::string why) {
    TestResult r;
    r.statistic = std::numeric_limits<double>::quiet_NaN();
    r.df1 = std::numeric_limits<double>::quiet_NaN();
    r.p_value = std::numeric_limits<double>::quiet_NaN();
    r.degenerate = true;
    r.reason = std::move(why);
    return r;
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("Welch t test needs at least two values per sample");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double va = variance(a);
    const double vb = variance(b);
    if (va == 0.0 && vb == 0.0) return TestResult::make_degenerate("zero variance");
    const double sa = va / na;
    const double sb = vb / nb;
    TestResult r;
    r.statistic = (mean(a) - mean(b)) / std::sqrt(sa + sb);
    r.df1 = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    r.p_value = special::student_t_two_sided(r.statistic, r.df1);
    return r;
}

TestResult pooled_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("t test needs at least two values per sample");
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / (na + nb - 2.0);
    if (pooled == 0.0) return TestResult::make_degenerate("zero variance");
    TestResult r;
    r.statistic = (mean(a) - mean(b)) / std::sqrt(pooled * (1.0 / na + 1.0 / nb));
    r.df1 = na + nb - 2.0;
    r.p_value = special::student_t_two_sided(r.statistic, r.df1);
    return r;
}

TestResult one_way_anova(std::span<const std::vector<double>> groups) {
    if (groups.size() < 2) throw ValidationError("ANOVA needs at least two groups");
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ValidationError("ANOVA needs at least two values per group");
        total += std::accumulate(g.begin(), g.end(), 0.0);
        n += g.size();
    }
    const double grand = total / static_cast<double>(n);
    double ssb = 0.0;
    double ssw = 0.0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double x : g) ssw += (x - m) * (x - m);
    }
    const double df1 = static_cast<double>(groups.size() - 1);
    const double df2 = static_cast<double>(n - groups.size());
    if (ssw == 0.0) {
        if (ssb == 0.0) return TestResult::make_degenerate("zero variance");
        TestResult r;
        r.statistic = std::numeric_limits<double>::infinity();
        r.df1 = df1;
        r.df2 = df2;
        r.p_value = 0.0;
        return r;
    }
    TestResult r;
    r.statistic = (ssb / df1) / (ssw / df2);
    r.df1 = df1;
    r.df2 = df2;
    r.p_value = special::f_survival(r.statistic, df1, df2);
    return r;
}

double fisher_exact_two_sided(const ContingencyTable2x2& t) {
    const std::uint64_t n = t.total();
    if (n == 0) throw ValidationError("Fisher test on an empty table");
    const std::uint64_t r1 = t.a + t.b;
    const std::uint64_t r2 = t.c + t.d;
    const std::uint64_t c1 = t.a + t.c;
    const std::uint64_t c2 = t.b + t.d;
    using special::log_factorial;
    const double fixed = log_factorial(r1) + log_factorial(r2) + log_factorial(c1) + log_factorial(c2) -
                         log_factorial(n);
    auto log_p = [&](std::uint64_t x) {
        return fixed - log_factorial(x) - log_factorial(r1 - x) - log_factorial(c1 - x) -
               log_factorial(r2 + x - c1);
    };
    const std::uint64_t lo = c1 > r2 ? c1 - r2 : 0;
    const std::uint64_t hi = std::min(r1, c1);
    std::vector<double> logs;
    logs.reserve(hi - lo + 1);
    for (std::uint64_t x = lo; x <= hi; ++x) logs.push_back(log_p(x));
    const double observed = logs[t.a - lo];
    const double peak = *std::max_element(logs.begin(), logs.end());
    const double cutoff = observed + std::log1p(1e-7);
    double kept = 0.0;
    double all = 0.0;
    for (double l : logs) {
        const double w = std::exp(l - peak);
        all += w;
        if (l <= cutoff) kept += w;
    }
    return std::min(1.0, kept / all);
}

OddsRatio odds_ratio(const ContingencyTable2x2& t) {
    if (t.total() == 0) throw ValidationError("odds ratio of an empty table");
    if (t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0) {
        const double a = t.a + 0.5, b = t.b + 0.5, c = t.c + 0.5, d = t.d + 0.5;
        return {(a * d) / (b * c), true};
    }
    return {(static_cast<double>(t.a) * static_cast<double>(t.d)) /
                (static_cast<double>(t.b) * static_cast<double>(t.c)),
            false};
}

std::vector<double> holm_bonferroni(std::span<const double> p_values) {
    for (double p : p_values) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
    }
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
    std::vector<double> adjusted(m);
    double running = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double scaled = std::min(1.0, static_cast<double>(m - k) * p_values[order[k]]);
        running = std::max(running, scaled);
        adjusted[order[k]] = running;
    }
    return adjusted;
}

std::string_view to_string(AlphaMetric metric) {
    switch (metric) {
        case AlphaMetric::Nominal: return "nominal";
        case AlphaMetric::Ordinal: return "ordinal";
        case AlphaMetric::Interval: return "interval";
    }
    return "";
}

AlphaMetric parse_alpha_metric(std::string_view name) {
    const std::string n = to_lower_ascii(trim(name));
    if (n == "nominal") return AlphaMetric::Nominal;
    if (n == "ordinal") return AlphaMetric::Ordinal;
    if (n == "interval") return AlphaMetric::Interval;
    throw ValidationError("unknown alpha metric '" + std::string(name) + "'");
}

AlphaResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& ratings, AlphaMetric metric) {
    std::vector<std::vector<double>> units;
    for (const auto& item : ratings) {
        std::vector<double> values;
        for (const auto& v : item) {
            if (v) {
                if (!std::isfinite(*v)) throw ValidationError("ratings must be finite");
                values.push_back(*v);
            }
        }
        if (values.size() >= 2) units.push_back(std::move(values));
    }
    AlphaResult out;
    if (units.empty()) {
        out.degenerate = true;
        out.reason = "no item has two or more ratings";
        out.alpha = std::numeric_limits<double>::quiet_NaN();
        return out;
    }

    std::vector<double> levels;
    for (const auto& u : units) levels.insert(levels.end(), u.begin(), u.end());
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const std::size_t L = levels.size();
    auto level_of = [&](double v) {
        return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
    };

    // Coincidence matrix: each unit contributes its ordered value pairs weighted by 1/(m_u - 1).
    std::vector<std::vector<double>> coincidence(L, std::vector<double>(L, 0.0));
    for (const auto& u : units) {
        std::vector<double> counts(L, 0.0);
        for (double v : u) counts[level_of(v)] += 1.0;
        const double weight = 1.0 / static_cast<double>(u.size() - 1);
        for (std::size_t c = 0; c < L; ++c) {
            if (counts[c] == 0.0) continue;
            for (std::size_t k = 0; k < L; ++k) {
                const double pairs = c == k ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[k];
                coincidence[c][k] += pairs * weight;
            }
        }
    }
    std::vector<double> marginal(L, 0.0);
    double n = 0.0;
    for (std::size_t c = 0; c < L; ++c) {
        marginal[c] = std::accumulate(coincidence[c].begin(), coincidence[c].end(), 0.0);
        n += marginal[c];
    }
    out.pairable_values = static_cast<std::size_t>(std::llround(n));

    auto delta2 = [&](std::size_t c, std::size_t k) -> double {
        switch (metric) {
            case AlphaMetric::Nominal: return c == k ? 0.0 : 1.0;
            case AlphaMetric::Interval: {
                const double d = levels[c] - levels[k];
                return d * d;
            }
            case AlphaMetric::Ordinal: {
                const std::size_t lo = std::min(c, k), hi = std::max(c, k);
                double s = 0.0;
                for (std::size_t g = lo; g <= hi; ++g) s += marginal[g];
                s -= (marginal[c] + marginal[k]) / 2.0;
                return s * s;
            }
        }
        return 0.0;
    };

    double observed = 0.0;
    double expected = 0.0;
    for (std::size_t c = 0; c < L; ++c) {
        for (std::size_t k = 0; k < L; ++k) {
            const double d = delta2(c, k);
            observed += coincidence[c][k] * d;
            expected += marginal[c] * marginal[k] * d;
        }
    }
    if (expected == 0.0) {
        out.degenerate = true;
        out.reason = "no expected disagreement";
        out.alpha = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    // alpha = 1 - D_o / D_e with D_o = observed / n and D_e = expected / (n (n - 1)).
    out.alpha = 1.0 - (n - 1.0) * observed / expected;
    return out;
}

}  // namespace biasaudit
