#include "biasaudit/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <Eigen/Dense>

#include "json.hpp"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {

using nlohmann::json;

void LinearTextModel::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < terms_.size(); ++i) index_.emplace(terms_[i].text, i);
}

std::vector<std::pair<std::size_t, double>> LinearTextModel::features(std::string_view comment) const {
    std::map<std::size_t, double> counts;
    for (const auto& tok : tokenize(comment)) {
        auto it = index_.find(tok);
        if (it != index_.end()) counts[it->second] += 1.0;
    }
    std::vector<std::pair<std::size_t, double>> out;
    double norm2 = 0.0;
    for (const auto& [idx, count] : counts) {
        const double v = count * terms_[idx].idf;
        out.emplace_back(idx, v);
        norm2 += v * v;
    }
    if (norm2 > 0.0) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (auto& [idx, v] : out) v *= inv;
    }
    return out;
}

LinearTextModel LinearTextModel::fit(std::span<const EvaluationRecord> train,
                                     std::span<const EvaluationRecord> validation, const FitOptions& options) {
    if (train.empty()) throw ValidationError("cannot fit on an empty training partition");
    if (options.lambda_grid.empty()) throw ValidationError("lambda grid is empty");
    for (double l : options.lambda_grid) {
        if (!(l > 0.0) || !std::isfinite(l)) throw ValidationError("lambda grid values must be positive");
    }

    LinearTextModel model;
    model.n_docs_ = train.size();
    model.min_df_ = options.min_df;
    model.lambda_grid_ = options.lambda_grid;

    std::map<std::string, std::size_t> df;
    for (const auto& r : train) {
        auto toks = tokenize(r.comment);
        std::set<std::string> unique(toks.begin(), toks.end());
        for (const auto& t : unique) ++df[t];
    }
    const double n = static_cast<double>(train.size());
    for (const auto& [term, count] : df) {
        if (count < options.min_df) continue;
        const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0;
        model.terms_.push_back({term, count, idf, 0.0});
    }
    model.rebuild_index();

    const auto rows = static_cast<Eigen::Index>(train.size());
    const auto cols = static_cast<Eigen::Index>(model.terms_.size());
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(rows, cols);
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = train[static_cast<std::size_t>(i)];
        for (const auto& [idx, v] : model.features(r.comment)) X(i, static_cast<Eigen::Index>(idx)) = v;
        y(i) = r.global_score;
    }
    const Eigen::RowVectorXd x_mean = X.colwise().mean();
    const double y_mean = y.mean();
    X.rowwise() -= x_mean;
    y.array() -= y_mean;

    // One eigendecomposition serves every lambda. The smaller of the primal (p x p)
    // and dual (n x n) Gram matrices is used.
    std::vector<Eigen::VectorXd> solutions;
    if (cols == 0) {
        solutions.assign(options.lambda_grid.size(), Eigen::VectorXd());
    } else if (cols <= rows) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X.transpose() * X);
        const Eigen::VectorXd proj = eig.eigenvectors().transpose() * (X.transpose() * y);
        for (double lambda : options.lambda_grid) {
            const Eigen::VectorXd scaled = proj.array() / (eig.eigenvalues().array().max(0.0) + lambda);
            solutions.push_back(eig.eigenvectors() * scaled);
        }
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(X * X.transpose());
        const Eigen::VectorXd proj = eig.eigenvectors().transpose() * y;
        for (double lambda : options.lambda_grid) {
            const Eigen::VectorXd scaled = proj.array() / (eig.eigenvalues().array().max(0.0) + lambda);
            solutions.push_back(X.transpose() * (eig.eigenvectors() * scaled));
        }
    }

    auto install = [&](std::size_t k) {
        model.lambda_ = options.lambda_grid[k];
        const Eigen::VectorXd& w = solutions[k];
        for (Eigen::Index j = 0; j < cols; ++j) model.terms_[static_cast<std::size_t>(j)].weight = w(j);
        model.intercept_ = cols == 0 ? y_mean : y_mean - x_mean.dot(w);
    };

    if (validation.empty()) {
        const auto smallest = std::min_element(options.lambda_grid.begin(), options.lambda_grid.end());
        install(static_cast<std::size_t>(smallest - options.lambda_grid.begin()));
        model.lambda_fallback_ = true;
        return model;
    }

    std::size_t best = 0;
    for (std::size_t k = 0; k < solutions.size(); ++k) {
        install(k);
        double sse = 0.0;
        for (const auto& r : validation) {
            const double e = r.global_score - model.predict(r.comment);
            sse += e * e;
        }
        model.validation_mse_.push_back(sse / static_cast<double>(validation.size()));
        if (model.validation_mse_[k] < model.validation_mse_[best]) best = k;
    }
    install(best);
    return model;
}

double LinearTextModel::predict(std::string_view comment) const {
    double y = intercept_;
    for (const auto& [idx, v] : features(comment)) y += v * terms_[idx].weight;
    return y;
}

PredictionSet LinearTextModel::predict_all(std::span<const EvaluationRecord> records, std::string partition) const {
    PredictionSet out;
    char tag[64];
    std::snprintf(tag, sizeof tag, "tfidf-ridge(lambda=%g)", lambda_);
    out.model_tag = tag;
    out.partition = std::move(partition);
    for (const auto& r : records) out.y_hat[r.id] = predict(r.comment);
    return out;
}

std::string LinearTextModel::to_json() const {
    nlohmann::ordered_json j;
    j["model"] = "tfidf_ridge";
    j["lambda"] = lambda_;
    j["intercept"] = intercept_;
    j["documents"] = n_docs_;
    j["min_df"] = min_df_;
    j["idf"] = "ln((1+N)/(1+df))+1";
    j["lambda_grid"] = lambda_grid_;
    j["validation_mse"] = validation_mse_;
    j["lambda_fallback"] = lambda_fallback_;
    auto& terms = j["terms"] = nlohmann::ordered_json::array();
    for (const auto& t : terms_)
        terms.push_back({{"term", t.text}, {"df", t.df}, {"idf", t.idf}, {"weight", t.weight}});
    return j.dump(1);
}

LinearTextModel LinearTextModel::from_json(std::string_view text) {
    LinearTextModel m;
    try {
        const json j = json::parse(text);
        if (j.at("model").get<std::string>() != "tfidf_ridge") throw ValidationError("not a tfidf_ridge model");
        m.lambda_ = j.at("lambda").get<double>();
        m.intercept_ = j.at("intercept").get<double>();
        m.n_docs_ = j.at("documents").get<std::size_t>();
        m.min_df_ = j.value("min_df", std::size_t{2});
        m.lambda_grid_ = j.value("lambda_grid", std::vector<double>{});
        m.validation_mse_ = j.value("validation_mse", std::vector<double>{});
        m.lambda_fallback_ = j.value("lambda_fallback", false);
        for (const auto& t : j.at("terms")) {
            Term term{t.at("term").get<std::string>(), t.at("df").get<std::size_t>(), t.at("idf").get<double>(),
                      t.at("weight").get<double>()};
            if (!std::isfinite(term.weight) || !std::isfinite(term.idf))
                throw ValidationError("non-finite weight for term '" + term.text + "'");
            m.terms_.push_back(std::move(term));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
    m.rebuild_index();
    if (m.index_.size() != m.terms_.size()) throw ValidationError("model lists a term twice");
    return m;
}

PredictionSet parse_external_predictions(std::string_view content, const Dataset& dataset) {
    PredictionSet out;
    out.model_tag = "external";
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "predictions line " + std::to_string(line_no) + ": ";
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(where + "malformed JSON: " + e.what());
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("y_hat"))
            throw ValidationError(where + "expected {\"id\", \"y_hat\"}");
        const json& jid = j["id"];
        const std::string id = jid.is_string() ? jid.get<std::string>() : jid.dump();
        const json& jy = j["y_hat"];
        if (!jy.is_number()) throw ValidationError(where + "y_hat for '" + id + "' is not a finite number");
        const double y = jy.get<double>();
        if (!std::isfinite(y)) throw ValidationError(where + "y_hat for '" + id + "' is not a finite number");
        if (!dataset.find(id)) throw ValidationError(where + "unknown id '" + id + "'");
        if (!out.y_hat.emplace(id, y).second) throw ValidationError(where + "duplicate id '" + id + "'");
    }
    return out;
}

PredictionSet load_external_predictions(const std::filesystem::path& path, const Dataset& dataset) {
    PredictionSet p = parse_external_predictions(read_file(path), dataset);
    p.model_tag = "external:" + path.filename().string();
    return p;
}

std::string predictions_to_jsonl(const PredictionSet& predictions) {
    std::string out;
    for (const auto& [id, y] : predictions.y_hat) {
        nlohmann::ordered_json j;
        j["id"] = id;
        j["y_hat"] = y;
        out += j.dump();
        out += '\n';
    }
    return out;
}

int round_score(double y_hat) {
    const double r = std::round(y_hat);  // half away from zero
    return static_cast<int>(std::clamp(r, static_cast<double>(kMinScore), static_cast<double>(kMaxScore)));
}

double rounded_accuracy(const PredictionSet& predictions, std::span<const EvaluationRecord> labels) {
    if (labels.empty()) throw ValidationError("rounded accuracy needs at least one labelled record");
    std::size_t correct = 0;
    for (const auto& r : labels) {
        auto it = predictions.y_hat.find(r.id);
        if (it == predictions.y_hat.end()) throw ValidationError("missing prediction for '" + r.id + "'");
        if (round_score(it->second) == r.global_score) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace biasaudit
