#pragma once

#include <optional>

#include "biasaudit/anonymize.hpp"
#include "biasaudit/ingest.hpp"
#include "biasaudit/predictor.hpp"
#include "biasaudit/residual_audit.hpp"

namespace biasaudit {

struct PipelineOptions {
    std::uint64_t seed = 0;
    SplitRatios ratios;
    FitOptions fit;
    /// Partition the residuals are computed on; nullopt means every record.
    std::optional<Partition> partition = Partition::Test;
    MaskSource masks;
};

struct ModelSummary {
    std::string mode;  // "internal" or "external"
    std::string tag;
    double lambda = 0.0;
    std::size_t vocabulary = 0;
    bool lambda_fallback = false;
    std::vector<double> lambda_grid;
    std::vector<double> validation_mse;
};

struct PipelineRun {
    Dataset dataset;  // preprocessed
    SplitAssignment split;
    PredictionSet predictions;
    ModelSummary model;
    ResidualMap residuals;
};

/// Preprocess every record; rows that end up empty are reported, not dropped silently.
struct PreprocessOutcome {
    Dataset dataset;
    std::vector<RowError> errors;
};
PreprocessOutcome preprocess_dataset(const Dataset& dataset, MaskSource masks,
                                     const std::map<std::string, std::vector<Span>>* spans = nullptr);

/// The predictor only ever sees comments: group fields are blanked before fitting.
std::vector<EvaluationRecord> withhold_group_fields(std::span<const EvaluationRecord> records);

/// preprocess -> split -> fit on train (lambda chosen on validation) -> predict -> residuals.
/// When `external` is given it replaces the fitted model.
PipelineRun run_residual_pipeline(const Dataset& raw, const PipelineOptions& options,
                                  const PredictionSet* external = nullptr);

/// Residual pipeline on an already preprocessed dataset.
PipelineRun run_residual_pipeline_preprocessed(Dataset dataset, const PipelineOptions& options,
                                               const PredictionSet* external = nullptr);

}  // namespace biasaudit
