#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biasaudit/ingest.hpp"
#include "biasaudit/predictor.hpp"
#include "biasaudit/stats.hpp"

namespace biasaudit {

/// Ordered (dimension, label) pairs, e.g. [assessor=M, student=F].
struct GroupKey {
    std::vector<std::pair<Dimension, GroupLabel>> parts;

    /// "student=F", "assessor=M,student=F"
    std::string name() const;
    bool operator==(const GroupKey&) const = default;
    auto operator<=>(const GroupKey&) const = default;
};

struct ResidualEntry {
    std::string id;
    int score = 0;
    double residual = 0.0;
};

struct ResidualSet {
    GroupKey group;
    std::vector<ResidualEntry> entries;

    std::size_t n() const noexcept { return entries.size(); }
    std::vector<double> values() const;
};

/// id -> y - y_hat, in id order.
using ResidualMap = std::map<std::string, double, std::less<>>;

/// delta_i = y_i - y_hat_i for every record in `partition` (nullopt = all records).
/// A record without a prediction throws ValidationError("missing prediction ...").
ResidualMap compute_residuals(const Dataset& dataset, const PredictionSet& predictions,
                              const SplitAssignment* split, std::optional<Partition> partition);

struct GroupedResiduals {
    std::vector<ResidualSet> groups;  // present label combinations, M before F per dimension
    std::size_t excluded_unspecified = 0;
    std::vector<GroupKey> empty_groups;  // combinations with no records
};

GroupedResiduals group_residuals(const ResidualMap& residuals, const Dataset& dataset,
                                 std::span<const Dimension> dimensions);

struct PairwiseComparison {
    GroupKey first;
    GroupKey second;
    double mean_difference = 0.0;  // first minus second
    TestResult test;
    std::optional<double> holm_p;  // set when pairwise Holm correction was requested
};

/// Welch test on the residuals of two groups.
/// Welch by default; `pooled_variance` switches to Student's equal-variance test.
PairwiseComparison compare_two(const ResidualSet& first, const ResidualSet& second, bool pooled_variance = false);

struct GroupStats {
    GroupKey group;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;  // NaN when n < 2
};

struct Histogram {
    std::vector<double> edges;  // bins + 1 edges over [-3, 3]
    std::vector<std::size_t> counts;
    std::size_t clipped = 0;  // values outside the range, counted in an edge bin
};

/// One histogram per score level.
using ScoreHistograms = std::array<Histogram, kScoreLevels>;

inline constexpr double kHistogramLimit = 3.0;

ScoreHistograms score_conditional_histograms(const ResidualSet& residuals, std::size_t bins);

struct ResidualReport {
    std::vector<Dimension> dimensions;
    std::vector<GroupStats> groups;
    std::vector<GroupKey> excluded_groups;  // fewer than two residuals
    std::vector<GroupKey> empty_groups;
    std::size_t excluded_unspecified = 0;
    TestResult anova;
    std::vector<PairwiseComparison> pairwise;  // every pair of included groups once
    bool holm_pairwise = false;
    bool pooled_variance = false;
    std::map<std::string, ScoreHistograms> histograms;  // by group name
};

struct CompareOptions {
    bool holm_pairwise = false;
    bool pooled_variance = false;
    std::size_t histogram_bins = 25;
};

ResidualReport compare_all(const GroupedResiduals& grouped, const CompareOptions& options = {});

}  // namespace biasaudit
