#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/predictor.hpp"
#include "biasaudit/synth.hpp"

using namespace biasaudit;

namespace {

EvaluationRecord rec(const std::string& id, const std::string& comment, int score,
                     GroupLabel g = GroupLabel::Unspecified) {
    EvaluationRecord r;
    r.id = id;
    r.comment = comment;
    r.global_score = score;
    r.student_gender = g;
    return r;
}

std::vector<EvaluationRecord> toy_corpus() {
    std::vector<EvaluationRecord> out;
    for (int i = 0; i < 50; ++i) out.push_back(rec("e" + std::to_string(i), "excellent", 3));
    for (int i = 0; i < 50; ++i) out.push_back(rec("p" + std::to_string(i), "poor", 0));
    return out;
}

}  // namespace

TEST_CASE("constant labels give a constant model") {
    std::vector<EvaluationRecord> train;
    for (int i = 0; i < 30; ++i) train.push_back(rec(std::to_string(i), i % 2 ? "good work today" : "fine job", 2));
    const auto model = LinearTextModel::fit(train, train);
    CHECK(std::abs(model.predict("good job") - 2.0) < 1e-6);
    CHECK(std::abs(model.predict("anything else entirely") - 2.0) < 1e-6);
}

TEST_CASE("two-term toy corpus matches the closed-form ridge solution") {
    // Centered design: each term column is +-1/2, so X'X = 25 [[1,-1],[-1,1]] and X'y = 75 [1,-1].
    // w_excellent = -w_poor = 75 / (50 + lambda), intercept 1.5.
    const auto train = toy_corpus();
    FitOptions opts;
    for (double lambda : {0.01, 1.0, 10.0}) {
        opts.lambda_grid = {lambda};
        const auto model = LinearTextModel::fit(train, {}, opts);
        CHECK(model.lambda_fallback());
        CHECK(model.lambda() == lambda);
        CHECK(model.intercept() == doctest::Approx(1.5).epsilon(1e-12));
        const double w = 75.0 / (50.0 + lambda);
        CHECK(model.predict("excellent work") == doctest::Approx(1.5 + w).epsilon(1e-10));
        CHECK(model.predict("poor work") == doctest::Approx(1.5 - w).epsilon(1e-10));
    }
    const auto model = LinearTextModel::fit(train, train);
    CHECK(model.predict("excellent work") >= 2.0);
    CHECK(model.predict("poor work") <= 1.0);
    CHECK(model.predict("excellent") > 2.5);
    CHECK(model.predict("excellent") <= 3.0);
    CHECK(model.predict("poor") < 0.5);
    CHECK(model.predict("poor") >= 0.0);
}

TEST_CASE("unseen and empty comments predict the intercept") {
    const auto model = LinearTextModel::fit(toy_corpus(), toy_corpus());
    CHECK(model.predict("") == model.intercept());
    CHECK(model.predict("zebra quantum") == model.intercept());
}

TEST_CASE("lambda chosen by validation MSE") {
    std::vector<EvaluationRecord> train, validation;
    const char* words[] = {"weak", "adequate", "strong", "outstanding"};
    for (int i = 0; i < 80; ++i) {
        const int s = i % 4;
        const std::string text = std::string(words[s]) + " shift " + (i % 3 ? "notes" : "plan");
        (i % 5 ? train : validation).push_back(rec(std::to_string(i), text, s));
    }
    const auto model = LinearTextModel::fit(train, validation);
    CHECK_FALSE(model.lambda_fallback());
    const auto& mse = model.validation_mse();
    REQUIRE(mse.size() == 5);
    const auto best = std::min_element(mse.begin(), mse.end()) - mse.begin();
    CHECK(model.lambda() == FitOptions{}.lambda_grid[best]);
}

TEST_CASE("fit validates its inputs") {
    FitOptions bad;
    bad.lambda_grid = {};
    CHECK_THROWS_AS(LinearTextModel::fit(toy_corpus(), {}, bad), ValidationError);
    bad.lambda_grid = {1.0, -1.0};
    CHECK_THROWS_AS(LinearTextModel::fit(toy_corpus(), {}, bad), ValidationError);
    CHECK_THROWS_AS(LinearTextModel::fit({}, {}, {}), ValidationError);
}

TEST_CASE("min_df drops rare terms") {
    std::vector<EvaluationRecord> train = toy_corpus();
    train.push_back(rec("odd", "zanzibar", 3));
    const auto model = LinearTextModel::fit(train, {});
    for (const auto& t : model.terms()) CHECK(t.text != "zanzibar");
    FitOptions keep;
    keep.min_df = 1;
    const auto all = LinearTextModel::fit(train, {}, keep);
    CHECK(all.terms().size() == model.terms().size() + 1);
}

TEST_CASE("idf is smoothed") {
    const auto model = LinearTextModel::fit(toy_corpus(), {});
    for (const auto& t : model.terms()) CHECK(t.idf == doctest::Approx(std::log(101.0 / 51.0) + 1.0));
}

TEST_CASE("fit is deterministic and serializes losslessly") {
    SynthConfig cfg;
    cfg.n = 400;
    cfg.seed = 5;
    const auto corpus = generate(cfg);
    const auto& recs = corpus.dataset.records();
    const std::vector<EvaluationRecord> train(recs.begin(), recs.begin() + 300);
    const std::vector<EvaluationRecord> validation(recs.begin() + 300, recs.end());
    const auto a = LinearTextModel::fit(train, validation);
    const auto b = LinearTextModel::fit(train, validation);
    CHECK(a.to_json() == b.to_json());
    const auto restored = LinearTextModel::from_json(a.to_json());
    CHECK(restored.to_json() == a.to_json());
    for (const auto& r : validation) CHECK(restored.predict(r.comment) == a.predict(r.comment));
    CHECK_THROWS_AS(LinearTextModel::from_json("{\"terms\": 3}"), ValidationError);
}

TEST_CASE("group fields never reach the predictor") {
    SynthConfig cfg;
    cfg.n = 600;
    cfg.seed = 8;
    const auto corpus = generate(cfg);
    std::vector<EvaluationRecord> flipped = corpus.dataset.records();
    for (auto& r : flipped) {
        r.student_gender = r.student_gender == GroupLabel::M ? GroupLabel::F : GroupLabel::M;
        r.assessor_gender = GroupLabel::Unspecified;
    }
    PipelineOptions opts;
    opts.seed = 1;
    opts.partition = std::nullopt;
    const auto a = run_residual_pipeline(corpus.dataset, opts);
    const auto b = run_residual_pipeline(Dataset(flipped), opts);
    // The split stratifies on student gender, so compare models fitted on the same records.
    const auto blind = withhold_group_fields(corpus.dataset.records());
    for (const auto& r : blind) {
        CHECK(r.student_gender == GroupLabel::Unspecified);
        CHECK(r.assessor_gender == GroupLabel::Unspecified);
        CHECK_FALSE(r.institution);
    }
    const auto train_a = select(a.dataset, a.split, Partition::Train);
    const auto val_a = select(a.dataset, a.split, Partition::Validation);
    std::vector<EvaluationRecord> train_b, val_b;
    for (const auto& r : train_a) train_b.push_back(b.dataset.at(r.id));
    for (const auto& r : val_a) val_b.push_back(b.dataset.at(r.id));
    const auto ma = LinearTextModel::fit(withhold_group_fields(train_a), withhold_group_fields(val_a));
    const auto mb = LinearTextModel::fit(withhold_group_fields(train_b), withhold_group_fields(val_b));
    CHECK(ma.to_json() == mb.to_json());
    CHECK(a.model.tag.starts_with("tfidf-ridge(lambda="));
}

TEST_CASE("synthetic corpus: test MSE at most 0.8 of the mean predictor") {
    SynthConfig cfg;
    cfg.n = 3000;
    cfg.seed = 21;
    PipelineOptions opts;
    opts.seed = 21;
    const auto run = run_residual_pipeline(generate(cfg).dataset, opts);
    const auto train = select(run.dataset, run.split, Partition::Train);
    double mean_y = 0.0;
    for (const auto& r : train) mean_y += r.global_score;
    mean_y /= static_cast<double>(train.size());
    double mse = 0.0, mse_mean = 0.0;
    for (const auto& [id, delta] : run.residuals) {
        mse += delta * delta;
        const double d = run.dataset.at(id).global_score - mean_y;
        mse_mean += d * d;
    }
    CHECK(mse <= 0.8 * mse_mean);
}

TEST_CASE("external predictions") {
    const Dataset ds({rec("a", "x y", 1), rec("b", "x y", 2), rec("c", "x y", 3)});
    const auto ok = parse_external_predictions("{\"id\":\"a\",\"y_hat\":1.2}\n{\"id\":\"b\",\"y_hat\":-0.5}\n"
                                               "{\"id\":\"c\",\"y_hat\":3.7}\n",
                                               ds);
    CHECK(ok.size() == 3);
    CHECK(ok.y_hat.at("b") == -0.5);
    try {
        parse_external_predictions("{\"id\":\"zz\",\"y_hat\":1}\n", ds);
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_external_predictions("{\"id\":\"a\",\"y_hat\":\"NaN\"}\n", ds), ValidationError);
    CHECK_THROWS_AS(parse_external_predictions("{\"id\":\"a\",\"y_hat\":1}\n{\"id\":\"a\",\"y_hat\":2}\n", ds),
                    ValidationError);
    CHECK_THROWS_AS(parse_external_predictions("{\"id\":\"a\"}\n", ds), ValidationError);
    CHECK_THROWS_AS(load_external_predictions("/nonexistent/preds.jsonl", ds), IoError);
    const auto back = parse_external_predictions(predictions_to_jsonl(ok), ds);
    CHECK(back.y_hat == ok.y_hat);
}

TEST_CASE("rounding and rounded accuracy") {
    CHECK(round_score(2.5) == 3);
    CHECK(round_score(0.5) == 1);
    CHECK(round_score(1.49) == 1);
    CHECK(round_score(-0.5) == 0);
    CHECK(round_score(3.9) == 3);
    const std::vector<EvaluationRecord> labels{rec("a", "t", 1), rec("b", "t", 3), rec("c", "t", 3), rec("d", "t", 1)};
    PredictionSet p;
    p.y_hat = {{"a", 1.4}, {"b", 2.5}, {"c", 3.9}, {"d", 0.2}};
    CHECK(rounded_accuracy(p, labels) == 0.75);
    PredictionSet perfect;
    for (const auto& r : labels) perfect.y_hat[r.id] = r.global_score;
    CHECK(rounded_accuracy(perfect, labels) == 1.0);
    CHECK_THROWS_AS(rounded_accuracy(p, std::vector<EvaluationRecord>{}), ValidationError);
    CHECK_THROWS_AS(rounded_accuracy(PredictionSet{}, labels), ValidationError);
}

TEST_CASE("constant prediction 2 against a 5/35/45/15 label mix scores 0.45") {
    std::vector<EvaluationRecord> labels;
    PredictionSet p;
    const int counts[4] = {5, 35, 45, 15};
    for (int s = 0; s < 4; ++s)
        for (int i = 0; i < counts[s]; ++i) {
            labels.push_back(rec(std::to_string(s) + "-" + std::to_string(i), "t", s));
            p.y_hat[labels.back().id] = 2.0;
        }
    CHECK(rounded_accuracy(p, labels) == doctest::Approx(0.45));
}
