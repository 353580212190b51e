#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasaudit/ingest.hpp"

namespace biasaudit {

struct PredictionSet {
    std::map<std::string, double, std::less<>> y_hat;
    std::string model_tag;
    std::string partition = "all";  // which records the predictions cover

    std::size_t size() const noexcept { return y_hat.size(); }
};

struct FitOptions {
    std::vector<double> lambda_grid{0.01, 0.1, 1.0, 10.0, 100.0};
    std::size_t min_df = 2;
    std::uint64_t seed = 0;
};

/// Ridge regression on L2-normalized TF-IDF vectors with an unpenalized intercept.
///
/// Term frequency is the raw count; idf is ln((1 + N) / (1 + df)) + 1 with N the
/// number of training documents.
class LinearTextModel {
public:
    struct Term {
        std::string text;
        std::size_t df = 0;
        double idf = 0.0;
        double weight = 0.0;
    };

    static LinearTextModel fit(std::span<const EvaluationRecord> train,
                               std::span<const EvaluationRecord> validation,
                               const FitOptions& options = {});

    /// Intercept plus weighted TF-IDF dot product; unseen terms contribute zero. Not clamped.
    double predict(std::string_view comment) const;

    PredictionSet predict_all(std::span<const EvaluationRecord> records, std::string partition) const;

    double intercept() const noexcept { return intercept_; }
    double lambda() const noexcept { return lambda_; }
    const std::vector<Term>& terms() const noexcept { return terms_; }
    std::size_t training_documents() const noexcept { return n_docs_; }
    /// Set when validation was empty and the smallest lambda was used without selection.
    bool lambda_fallback() const noexcept { return lambda_fallback_; }
    /// Validation MSE per grid entry, in grid order (empty on fallback).
    const std::vector<double>& validation_mse() const noexcept { return validation_mse_; }

    std::string to_json() const;
    static LinearTextModel from_json(std::string_view text);

private:
    std::vector<Term> terms_;
    std::map<std::string, std::size_t, std::less<>> index_;
    double intercept_ = 0.0;
    double lambda_ = 0.0;
    std::size_t n_docs_ = 0;
    std::size_t min_df_ = 2;
    bool lambda_fallback_ = false;
    std::vector<double> lambda_grid_;
    std::vector<double> validation_mse_;

    void rebuild_index();
    std::vector<std::pair<std::size_t, double>> features(std::string_view comment) const;

};

/// Predictions exchange file: JSONL {"id": string, "y_hat": number}. Unknown ids,
/// duplicates and non-finite values throw ValidationError.
PredictionSet load_external_predictions(const std::filesystem::path& path, const Dataset& dataset);
PredictionSet parse_external_predictions(std::string_view content, const Dataset& dataset);
std::string predictions_to_jsonl(const PredictionSet& predictions);

/// Half away from zero, then clamp to the score range.
int round_score(double y_hat);

/// Fraction of `labels` whose rounded prediction equals the global score.
/// Every label must have a prediction.
double rounded_accuracy(const PredictionSet& predictions, std::span<const EvaluationRecord> labels);

}  // namespace biasaudit
