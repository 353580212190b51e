#include "biasaudit/pipeline.hpp"

#include <utility>

#include "biasaudit/errors.hpp"

namespace biasaudit {
namespace {

template <typename F>
auto in_stage(const char* stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e);
    }
}

}  // namespace

PreprocessOutcome preprocess_dataset(const Dataset& dataset, MaskSource masks,
                                     const std::map<std::string, std::vector<Span>>* spans) {
    std::vector<EvaluationRecord> kept;
    std::vector<RowError> errors;
    std::size_t row = 0;
    for (const auto& r : dataset.records()) {
        ++row;
        MaskSource m = masks;
        if (spans) {
            auto it = spans->find(r.id);
            if (it != spans->end()) m.spans = &it->second;
        }
        try {
            kept.push_back(preprocess(r, m));
        } catch (const ValidationError& e) {
            errors.push_back({row, r.id, e.what()});
        }
    }
    return {Dataset(std::move(kept), dataset.provenance()), std::move(errors)};
}

std::vector<EvaluationRecord> withhold_group_fields(std::span<const EvaluationRecord> records) {
    std::vector<EvaluationRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        EvaluationRecord blind;
        blind.id = r.id;
        blind.comment = r.comment;
        blind.global_score = r.global_score;
        out.push_back(std::move(blind));
    }
    return out;
}

PipelineRun run_residual_pipeline(const Dataset& raw, const PipelineOptions& options, const PredictionSet* external) {
    Dataset clean = in_stage("preprocess", [&] { return preprocess_dataset(raw, options.masks).dataset; });
    return run_residual_pipeline_preprocessed(std::move(clean), options, external);
}

PipelineRun run_residual_pipeline_preprocessed(Dataset dataset, const PipelineOptions& options,
                                               const PredictionSet* external) {
    PipelineRun run;
    run.dataset = std::move(dataset);
    run.split = in_stage("split", [&] { return stratified_split(run.dataset, options.ratios, options.seed); });

    const std::string partition_name = options.partition ? std::string(to_string(*options.partition)) : "all";
    if (external) {
        run.predictions = *external;
        run.model.mode = "external";
        run.model.tag = external->model_tag;
    } else {
        in_stage("train", [&] {
            const auto train = withhold_group_fields(select(run.dataset, run.split, Partition::Train));
            const auto validation = withhold_group_fields(select(run.dataset, run.split, Partition::Validation));
            const auto model = LinearTextModel::fit(train, validation, options.fit);
            const auto targets = options.partition
                                     ? withhold_group_fields(select(run.dataset, run.split, *options.partition))
                                     : withhold_group_fields(run.dataset.records());
            run.predictions = model.predict_all(targets, partition_name);
            run.model.mode = "internal";
            run.model.tag = run.predictions.model_tag;
            run.model.lambda = model.lambda();
            run.model.vocabulary = model.terms().size();
            run.model.lambda_fallback = model.lambda_fallback();
            run.model.lambda_grid = options.fit.lambda_grid;
            run.model.validation_mse = model.validation_mse();
            return 0;
        });
    }
    run.residuals = in_stage("residuals", [&] {
        return compute_residuals(run.dataset, run.predictions, &run.split, options.partition);
    });
    return run;
}

}  // namespace biasaudit
