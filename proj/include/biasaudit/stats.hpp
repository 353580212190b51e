#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

struct TestResult {
    double statistic = 0.0;
    double df1 = 0.0;
    std::optional<double> df2;  // second degrees of freedom (F tests)
    double p_value = 1.0;
    bool degenerate = false;
    std::string reason;  // set when degenerate

    static TestResult make_degenerate(std::string why);
};

/// Unequal-variance two-sample t test; two-sided p.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b);

/// Pooled-variance Student t test; two-sided p.
TestResult pooled_t_test(std::span<const double> a, std::span<const double> b);

TestResult one_way_anova(std::span<const std::vector<double>> groups);

/// Rows are groups, columns are (theme present, theme absent).
struct ContingencyTable2x2 {
    std::uint64_t a = 0, b = 0;  // first group
    std::uint64_t c = 0, d = 0;  // second group

    std::uint64_t total() const { return a + b + c + d; }
};

/// Two-sided Fisher exact test: sum of hypergeometric probabilities of every
/// table with the observed margins whose probability does not exceed the
/// observed one (relative slack 1e-7).
double fisher_exact_two_sided(const ContingencyTable2x2& table);

struct OddsRatio {
    double value = 1.0;
    bool haldane_corrected = false;  // +0.5 added to every cell because one was zero
};

OddsRatio odds_ratio(const ContingencyTable2x2& table);

/// Holm step-down adjustment, returned in input order.
std::vector<double> holm_bonferroni(std::span<const double> p_values);

enum class AlphaMetric { Nominal, Ordinal, Interval };

std::string_view to_string(AlphaMetric metric);
AlphaMetric parse_alpha_metric(std::string_view name);

struct AlphaResult {
    double alpha = 0.0;
    bool degenerate = false;
    std::string reason;
    std::size_t pairable_values = 0;  // n in the coincidence-matrix formulation
};

/// Krippendorff's alpha over an item x rater matrix; nullopt marks a missing rating.
AlphaResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& ratings,
                               AlphaMetric metric);

double mean(std::span<const double> xs);
/// Sample variance (n - 1 denominator).
double variance(std::span<const double> xs);

}  // namespace biasaudit
