#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "biasaudit/ingest.hpp"
#include "biasaudit/lexicon_audit.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/residual_audit.hpp"
#include "biasaudit/stats.hpp"

namespace biasaudit {

using Json = nlohmann::ordered_json;

struct AuditConfig {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    FitOptions fit;
    std::string predictor = "internal";  // or "external"
    std::filesystem::path predictions;   // external predictions file
    std::string partition = "test";      // "test" or "all"
    std::vector<std::vector<Dimension>> group_setups{{Dimension::Student},
                                                     {Dimension::Assessor, Dimension::Student}};
    std::filesystem::path lexicon;  // empty: bundled lexicon
    Dimension theme_dimension = Dimension::Student;
    AlphaMetric alpha_metric = AlphaMetric::Interval;
    bool holm_pairwise = false;
    bool pooled_variance = false;
    std::size_t histogram_bins = 25;
    std::filesystem::path gazetteer;
    std::filesystem::path spans;
    std::filesystem::path annotations;

    static AuditConfig from_json(const Json& j);
    static AuditConfig load(const std::filesystem::path& path);
    Json to_json() const;
};

struct GroupSetupReport {
    ResidualReport residuals;
    ResidualReport scores;       // same grouping applied to the human scores
    ResidualReport predictions;  // and to the predicted scores
};

struct RaterAccuracy {
    std::string rater;
    std::size_t n = 0;
    double accuracy = 0.0;
};

struct AgreementResult {
    std::vector<RaterAccuracy> raters;  // sorted by rater name
    double mean_accuracy = 0.0;
    AlphaMetric metric = AlphaMetric::Interval;
    AlphaResult alpha;
    std::size_t items = 0;
};

struct AuditReport {
    std::string dataset_source;
    std::size_t load_rejected = 0;  // rows that failed field validation on load
    SummaryReport summary;
    std::size_t preprocess_rejected = 0;
    std::array<std::size_t, 3> split_sizes{};
    ModelSummary model;
    std::string partition;
    std::size_t evaluated = 0;
    double rounded_accuracy = 0.0;
    std::vector<GroupSetupReport> setups;
    std::vector<ThemeResult> themes;
    std::optional<AgreementResult> agreement;
    std::uint64_t seed = 0;
    Json config;

    /// The M vs F residual test of the first single-dimension setup, if any.
    const PairwiseComparison* headline() const;
};

/// Loads the dataset, then preprocess -> split -> predictions -> residual audit ->
/// lexicon audit. Any failure is rethrown as a StageError naming the stage.
AuditReport run_audit(const std::filesystem::path& dataset_path, const AuditConfig& config);
AuditReport run_audit(const Dataset& dataset, const AuditConfig& config);

Json report_to_json(const AuditReport& report);
std::string render_markdown(const AuditReport& report);

/// Human formatting of a p-value: scientific with 3 significant digits below 1e-4.
std::string format_p(double p);
std::string format_sig(double value, int digits = 3);
std::string format_test(const TestResult& test);

/// Writes one histogram JSON per (setup, group, score level); returns the paths.
std::vector<std::filesystem::path> emit_plot_data(const AuditReport& report, const std::filesystem::path& out_dir);

struct Annotation {
    std::string id;
    std::string rater;
    int rating = 0;
};

std::vector<Annotation> parse_annotations(std::string_view jsonl);
AgreementResult agreement(std::span<const Annotation> annotations, const Dataset& labels, AlphaMetric metric);
AgreementResult agreement(const std::filesystem::path& annotations, const Dataset& labels, AlphaMetric metric);
Json agreement_to_json(const AgreementResult& result);

Json to_json(const TestResult& test);
Json to_json(const ResidualReport& report);
Json to_json(const std::vector<ThemeResult>& themes);
Json to_json(const SummaryReport& summary);

}  // namespace biasaudit
