#include "biasaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "biasaudit/anonymize.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/text.hpp"

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

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return base / p;
}

std::string dims_name(std::span<const Dimension> dims) {
    std::string out;
    for (Dimension d : dims) {
        if (!out.empty()) out += '_';
        out += to_string(d);
    }
    return out;
}

}  // namespace

AuditConfig AuditConfig::from_json(const Json& j) {
    AuditConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("split_ratios")) {
            const auto& r = j["split_ratios"];
            if (r.is_array()) {
                const auto v = r.get<std::vector<double>>();
                if (v.size() != 3) throw ValidationError("split_ratios needs three entries");
                c.ratios = {v[0], v[1], v[2]};
            } else {
                c.ratios = {r.at("train").get<double>(), r.at("validation").get<double>(), r.at("test").get<double>()};
            }
        }
        if (j.contains("predictor")) {
            const auto& p = j["predictor"];
            c.predictor = p.value("mode", c.predictor);
            if (p.contains("predictions")) c.predictions = p["predictions"].get<std::string>();
            c.fit.lambda_grid = p.value("lambda_grid", c.fit.lambda_grid);
            c.fit.min_df = p.value("min_df", c.fit.min_df);
        }
        c.partition = j.value("partition", c.partition);
        if (j.contains("group_setups")) {
            c.group_setups.clear();
            for (const auto& setup : j["group_setups"]) {
                std::vector<Dimension> dims;
                for (const auto& d : setup) dims.push_back(parse_dimension(d.get<std::string>()));
                c.group_setups.push_back(std::move(dims));
            }
        }
        if (j.contains("lexicon")) c.lexicon = j["lexicon"].get<std::string>();
        if (j.contains("theme_dimension")) c.theme_dimension = parse_dimension(j["theme_dimension"].get<std::string>());
        if (j.contains("alpha_metric")) c.alpha_metric = parse_alpha_metric(j["alpha_metric"].get<std::string>());
        c.holm_pairwise = j.value("holm_pairwise", c.holm_pairwise);
        c.pooled_variance = j.value("pooled_variance", c.pooled_variance);
        c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
        if (j.contains("gazetteer")) c.gazetteer = j["gazetteer"].get<std::string>();
        if (j.contains("spans")) c.spans = j["spans"].get<std::string>();
        if (j.contains("annotations")) c.annotations = j["annotations"].get<std::string>();
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed audit config: ") + e.what());
    }
    if (c.predictor != "internal" && c.predictor != "external")
        throw ValidationError("predictor mode must be 'internal' or 'external'");
    if (c.partition != "test" && c.partition != "all") throw ValidationError("partition must be 'test' or 'all'");
    if (c.histogram_bins < 2) throw ValidationError("histogram_bins must be at least 2");
    return c;
}

AuditConfig AuditConfig::load(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::exception& e) {
        throw ValidationError("malformed audit config " + path.string() + ": " + e.what());
    }
    AuditConfig c = from_json(j);
    const auto base = path.parent_path();
    c.predictions = resolve(base, c.predictions);
    c.lexicon = resolve(base, c.lexicon);
    c.gazetteer = resolve(base, c.gazetteer);
    c.spans = resolve(base, c.spans);
    c.annotations = resolve(base, c.annotations);
    return c;
}

Json AuditConfig::to_json() const {
    Json j;
    j["seed"] = seed;
    j["split_ratios"] = {ratios.train, ratios.validation, ratios.test};
    Json p;
    p["mode"] = predictor;
    if (!predictions.empty()) p["predictions"] = predictions.string();
    p["lambda_grid"] = fit.lambda_grid;
    p["min_df"] = fit.min_df;
    j["predictor"] = std::move(p);
    j["partition"] = partition;
    Json setups = Json::array();
    for (const auto& s : group_setups) {
        Json dims = Json::array();
        for (Dimension d : s) dims.push_back(std::string(to_string(d)));
        setups.push_back(std::move(dims));
    }
    j["group_setups"] = std::move(setups);
    j["lexicon"] = lexicon.empty() ? std::string("(bundled)") : lexicon.string();
    j["theme_dimension"] = std::string(to_string(theme_dimension));
    j["alpha_metric"] = std::string(to_string(alpha_metric));
    j["holm_pairwise"] = holm_pairwise;
    j["pooled_variance"] = pooled_variance;
    j["histogram_bins"] = histogram_bins;
    if (!gazetteer.empty()) j["gazetteer"] = gazetteer.string();
    if (!spans.empty()) j["spans"] = spans.string();
    if (!annotations.empty()) j["annotations"] = annotations.string();
    return j;
}

const PairwiseComparison* AuditReport::headline() const {
    for (const auto& s : setups) {
        if (s.residuals.dimensions.size() != 1) continue;
        for (const auto& pw : s.residuals.pairwise) {
            if (pw.first.parts.front().second == GroupLabel::M && pw.second.parts.front().second == GroupLabel::F)
                return &pw;
        }
    }
    return nullptr;
}

namespace {

AuditReport run_audit_impl(const Dataset& raw, const AuditConfig& config, std::size_t load_rejected) {
    AuditReport report;
    report.dataset_source = raw.provenance().source;
    report.load_rejected = load_rejected;
    report.seed = config.seed;
    report.config = config.to_json();
    report.partition = config.partition;

    const PreprocessOutcome pre = in_stage("preprocess", [&] {
        Gazetteer gazetteer;
        if (!config.gazetteer.empty()) gazetteer = Gazetteer::load(config.gazetteer);
        std::map<std::string, std::vector<Span>> spans;
        if (!config.spans.empty()) spans = load_span_annotations(config.spans);
        MaskSource masks;
        masks.gazetteer = &gazetteer;
        return preprocess_dataset(raw, masks, &spans);
    });
    report.preprocess_rejected = pre.errors.size();
    report.summary = in_stage("summary", [&] { return summarize(pre.dataset); });

    PipelineOptions options;
    options.seed = config.seed;
    options.ratios = config.ratios;
    options.fit = config.fit;
    options.fit.seed = config.seed;
    options.partition = config.partition == "all" ? std::nullopt : std::optional<Partition>(Partition::Test);

    std::optional<PredictionSet> external;
    if (config.predictor == "external") {
        external = in_stage("predictions", [&] {
            if (config.predictions.empty()) throw ValidationError("external predictor mode needs a predictions file");
            return load_external_predictions(config.predictions, pre.dataset);
        });
    }
    const PipelineRun run = run_residual_pipeline_preprocessed(pre.dataset, options, external ? &*external : nullptr);
    report.split_sizes = run.split.sizes();
    report.model = run.model;

    std::vector<EvaluationRecord> evaluated;
    std::map<std::string, double, std::less<>> scores;
    std::map<std::string, double, std::less<>> predicted;
    for (const auto& r : run.dataset.records()) {
        if (!run.residuals.contains(r.id)) continue;
        evaluated.push_back(r);
        scores[r.id] = r.global_score;
        predicted[r.id] = run.predictions.y_hat.at(r.id);
    }
    report.evaluated = evaluated.size();
    report.rounded_accuracy = in_stage("residuals", [&] { return rounded_accuracy(run.predictions, evaluated); });

    in_stage("residuals", [&] {
        for (const auto& dims : config.group_setups) {
            GroupSetupReport setup;
            CompareOptions opts;
            opts.holm_pairwise = config.holm_pairwise;
            opts.pooled_variance = config.pooled_variance;
            opts.histogram_bins = config.histogram_bins;
            setup.residuals = compare_all(group_residuals(run.residuals, run.dataset, dims), opts);
            opts.histogram_bins = 0;
            setup.scores = compare_all(group_residuals(scores, run.dataset, dims), opts);
            setup.predictions = compare_all(group_residuals(predicted, run.dataset, dims), opts);
            for (auto* r : {&setup.residuals, &setup.scores, &setup.predictions}) r->dimensions = dims;
            report.setups.push_back(std::move(setup));
        }
        return 0;
    });

    report.themes = in_stage("lexicon", [&] {
        const ThemeLexicon lexicon = load_lexicon(config.lexicon.empty() ? default_lexicon_path() : config.lexicon);
        return audit_themes(run.dataset.records(), lexicon, config.theme_dimension);
    });

    if (!config.annotations.empty()) {
        report.agreement = in_stage("agreement", [&] { return agreement(config.annotations, raw, config.alpha_metric); });
    }
    return report;
}

}  // namespace

AuditReport run_audit(const Dataset& dataset, const AuditConfig& config) { return run_audit_impl(dataset, config, 0); }

AuditReport run_audit(const std::filesystem::path& dataset_path, const AuditConfig& config) {
    const LoadResult loaded = in_stage("load", [&] { return load_records(dataset_path, format_for_path(dataset_path)); });
    return run_audit_impl(loaded.dataset, config, loaded.errors.size());
}

Json to_json(const TestResult& t) {
    Json j;
    j["statistic"] = num(t.statistic);
    j["df"] = num(t.df1);
    if (t.df2) j["df2"] = num(*t.df2);
    j["p_value"] = num(t.p_value);
    j["degenerate"] = t.degenerate;
    if (t.degenerate) j["reason"] = t.reason;
    return j;
}

Json to_json(const ResidualReport& r) {
    Json j;
    Json dims = Json::array();
    for (Dimension d : r.dimensions) dims.push_back(std::string(to_string(d)));
    j["dimensions"] = std::move(dims);
    Json groups = Json::array();
    for (const auto& g : r.groups) {
        Json e;
        e["group"] = g.group.name();
        e["n"] = g.n;
        e["mean"] = num(g.mean);
        e["sd"] = num(g.sd);
        groups.push_back(std::move(e));
    }
    j["groups"] = std::move(groups);
    auto names = [](const std::vector<GroupKey>& keys) {
        Json a = Json::array();
        for (const auto& k : keys) a.push_back(k.name());
        return a;
    };
    j["excluded_groups"] = names(r.excluded_groups);
    j["empty_groups"] = names(r.empty_groups);
    j["excluded_unspecified"] = r.excluded_unspecified;
    j["anova"] = to_json(r.anova);
    j["pairwise_procedure"] =
        std::string(r.pooled_variance ? "pooled" : "welch") + (r.holm_pairwise ? ", holm-corrected" : ", uncorrected");
    Json pairs = Json::array();
    for (const auto& p : r.pairwise) {
        Json e;
        e["first"] = p.first.name();
        e["second"] = p.second.name();
        e["mean_difference"] = num(p.mean_difference);
        e["test"] = to_json(p.test);
        if (p.holm_p) e["holm_p"] = num(*p.holm_p);
        pairs.push_back(std::move(e));
    }
    j["pairwise"] = std::move(pairs);
    if (!r.histograms.empty()) {
        Json hist;
        for (const auto& [name, per_score] : r.histograms) {
            Json levels = Json::array();
            for (std::size_t k = 0; k < per_score.size(); ++k) {
                Json h;
                h["score"] = static_cast<int>(k) + kMinScore;
                h["bins"] = per_score[k].edges;
                h["counts"] = per_score[k].counts;
                h["clipped"] = per_score[k].clipped;
                levels.push_back(std::move(h));
            }
            hist[name] = std::move(levels);
        }
        j["histograms"] = std::move(hist);
    }
    return j;
}

Json to_json(const std::vector<ThemeResult>& themes) {
    Json rows = Json::array();
    for (const auto& t : themes) {
        Json e;
        e["theme"] = t.theme;
        e["examples"] = t.examples;
        e["counts"] = {{"first_present", t.counts.a}, {"first_absent", t.counts.b},
                       {"second_present", t.counts.c}, {"second_absent", t.counts.d}};
        e["first_percent"] = num(t.first_percent);
        e["second_percent"] = num(t.second_percent);
        e["odds_ratio"] = num(t.odds.value);
        e["odds_ratio_haldane"] = t.odds.haldane_corrected;
        e["p_raw"] = num(t.p_raw);
        e["p_corrected"] = num(t.p_corrected);
        rows.push_back(std::move(e));
    }
    return rows;
}

Json to_json(const SummaryReport& s) {
    Json j;
    j["records"] = s.records;
    auto counts = [](const std::map<GroupLabel, std::size_t>& m) {
        Json c;
        for (const auto& [label, n] : m) c[label == GroupLabel::Unspecified ? "unspecified" : std::string(to_string(label))] = n;
        return c;
    };
    j["student_counts"] = counts(s.student_counts);
    j["assessor_counts"] = counts(s.assessor_counts);
    j["score_counts"] = s.score_counts;
    j["score_distribution"] = s.score_distribution;
    j["mean_words"] = s.mean_words;
    j["max_words"] = s.max_words;
    return j;
}

Json agreement_to_json(const AgreementResult& a) {
    Json j;
    Json raters = Json::array();
    for (const auto& r : a.raters) raters.push_back({{"rater", r.rater}, {"n", r.n}, {"accuracy", num(r.accuracy)}});
    j["raters"] = std::move(raters);
    j["mean_accuracy"] = num(a.mean_accuracy);
    j["items"] = a.items;
    j["metric"] = std::string(to_string(a.metric));
    j["alpha"] = num(a.alpha.alpha);
    j["alpha_degenerate"] = a.alpha.degenerate;
    if (a.alpha.degenerate) j["alpha_reason"] = a.alpha.reason;
    return j;
}

Json report_to_json(const AuditReport& report) {
    Json j;
    j["seed"] = report.seed;
    j["config"] = report.config;
    Json ds;
    ds["source"] = report.dataset_source;
    ds["load_rejected"] = report.load_rejected;
    ds["preprocess_rejected"] = report.preprocess_rejected;
    ds["summary"] = to_json(report.summary);
    j["dataset"] = std::move(ds);
    j["split"] = {{"train", report.split_sizes[0]}, {"validation", report.split_sizes[1]}, {"test", report.split_sizes[2]}};
    Json p;
    p["mode"] = report.model.mode;
    p["tag"] = report.model.tag;
    if (report.model.mode == "internal") {
        p["lambda"] = report.model.lambda;
        p["vocabulary"] = report.model.vocabulary;
        p["lambda_fallback"] = report.model.lambda_fallback;
        p["lambda_grid"] = report.model.lambda_grid;
        Json mse = Json::array();
        for (double v : report.model.validation_mse) mse.push_back(num(v));
        p["validation_mse"] = std::move(mse);
    }
    p["partition"] = report.partition;
    p["evaluated"] = report.evaluated;
    p["rounded_accuracy"] = num(report.rounded_accuracy);
    j["predictor"] = std::move(p);
    Json setups = Json::array();
    for (const auto& s : report.setups) {
        Json e;
        e["residuals"] = to_json(s.residuals);
        e["scores"] = to_json(s.scores);
        e["predictions"] = to_json(s.predictions);
        setups.push_back(std::move(e));
    }
    j["residual_audit"] = std::move(setups);
    Json themes;
    themes["dimension"] = std::string(to_string(std::string(report.config.value("theme_dimension", "student")) == "assessor"
                                                    ? Dimension::Assessor
                                                    : Dimension::Student));
    themes["groups"] = {"M", "F"};
    themes["correction"] = "holm";
    themes["rows"] = to_json(report.themes);
    j["themes"] = std::move(themes);
    if (report.agreement) j["agreement"] = agreement_to_json(*report.agreement);
    return j;
}

std::string format_sig(double value, int digits) {
    if (!std::isfinite(value)) return std::isnan(value) ? "n/a" : (value > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, value);
    return buf;
}

std::string format_p(double p) {
    if (!std::isfinite(p)) return "n/a";
    if (p == 0.0) return "0";
    if (p < 1e-4) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.2e", p);
        return buf;
    }
    return format_sig(p, 4);
}

std::string format_test(const TestResult& t) {
    if (t.degenerate) return "degenerate (" + t.reason + ")";
    return format_p(t.p_value);
}

namespace {

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

void render_comparison(std::ostringstream& md, const std::string& title, const ResidualReport& r) {
    md << "#### " << title << "\n\n";
    md << "| Group | n | mean | SD |\n|---|---:|---:|---:|\n";
    for (const auto& g : r.groups)
        md << "| " << g.group.name() << " | " << g.n << " | " << format_sig(g.mean, 4) << " | " << format_sig(g.sd, 4)
           << " |\n";
    md << "\n";
    md << "ANOVA: ";
    if (r.anova.degenerate) {
        md << format_test(r.anova) << "\n\n";
    } else {
        md << "F(" << format_sig(r.anova.df1) << ", " << format_sig(r.anova.df2.value_or(0.0)) << ") = "
           << format_sig(r.anova.statistic, 4) << ", p = " << format_p(r.anova.p_value) << "\n\n";
    }
    if (!r.excluded_groups.empty()) {
        std::vector<std::string> names;
        for (const auto& k : r.excluded_groups) names.push_back(k.name());
        md << "Excluded (fewer than two values): " << join(names, ", ") << "\n\n";
    }
    if (!r.empty_groups.empty()) {
        std::vector<std::string> names;
        for (const auto& k : r.empty_groups) names.push_back(k.name());
        md << "No records: " << join(names, ", ") << "\n\n";
    }
    if (r.pairwise.empty()) return;
    md << "| First | Second | Mean diff (first - second) | t | df | p |" << (r.holm_pairwise ? " Holm p |" : "")
       << "\n|---|---|---:|---:|---:|---:|" << (r.holm_pairwise ? "---:|" : "") << "\n";
    for (const auto& p : r.pairwise) {
        md << "| " << p.first.name() << " | " << p.second.name() << " | " << format_sig(p.mean_difference, 4) << " | ";
        if (p.test.degenerate) {
            md << "- | - | " << format_test(p.test) << " |";
        } else {
            md << format_sig(p.test.statistic, 4) << " | " << format_sig(p.test.df1, 4) << " | "
               << format_p(p.test.p_value) << " |";
        }
        if (r.holm_pairwise) md << " " << (p.holm_p ? format_p(*p.holm_p) : std::string("-")) << " |";
        md << "\n";
    }
    md << "\n";
}

}  // namespace

std::string render_markdown(const AuditReport& report) {
    std::ostringstream md;
    md << "# Bias audit report\n\n";
    md << "Seed: " << report.seed << "\n\n";

    const auto& s = report.summary;
    md << "## Dataset\n\n";
    md << "Source: " << report.dataset_source << "\n\n";
    md << "| | value |\n|---|---:|\n";
    md << "| records | " << s.records << " |\n";
    md << "| rejected on load | " << report.load_rejected << " |\n";
    md << "| rejected in preprocessing | " << report.preprocess_rejected << " |\n";
    for (const auto& [label, n] : s.student_counts)
        md << "| student " << (label == GroupLabel::Unspecified ? "unspecified" : std::string(to_string(label))) << " | "
           << n << " |\n";
    for (const auto& [label, n] : s.assessor_counts)
        md << "| assessor " << (label == GroupLabel::Unspecified ? "unspecified" : std::string(to_string(label)))
           << " | " << n << " |\n";
    for (std::size_t k = 0; k < s.score_counts.size(); ++k)
        md << "| score " << k << " | " << s.score_counts[k] << " (" << format_sig(100.0 * s.score_distribution[k])
           << "%) |\n";
    md << "| mean words per comment | " << format_sig(s.mean_words) << " |\n";
    md << "| max words per comment | " << s.max_words << " |\n\n";

    md << "## Predictor\n\n";
    md << "Mode: " << report.model.mode << " (" << report.model.tag << ")\n\n";
    if (report.model.mode == "internal") {
        md << "Selected lambda: " << format_sig(report.model.lambda) << ", vocabulary: " << report.model.vocabulary
           << (report.model.lambda_fallback ? " (no validation data; smallest lambda used)" : "") << "\n\n";
    }
    md << "Split (train / validation / test): " << report.split_sizes[0] << " / " << report.split_sizes[1] << " / "
       << report.split_sizes[2] << "\n\n";
    md << "Rounded accuracy on " << report.partition << " partition (" << report.evaluated
       << " records): " << format_sig(100.0 * report.rounded_accuracy) << "%\n\n";

    md << "## Residual audit\n\n";
    md << "Residuals are y - y_hat. Pairwise comparisons are "
       << (report.config.value("pooled_variance", false) ? "pooled-variance" : "Welch") << " t tests"
       << (report.config.value("holm_pairwise", false) ? " with Holm correction" : " without correction")
       << "; the follow-up procedure after ANOVA is a choice of this tool.\n\n";
    for (const auto& setup : report.setups) {
        md << "### Groups: " << dims_name(setup.residuals.dimensions) << "\n\n";
        if (setup.residuals.excluded_unspecified > 0)
            md << "Records without a label on this grouping: " << setup.residuals.excluded_unspecified << "\n\n";
        render_comparison(md, "Residuals", setup.residuals);
        render_comparison(md, "Scores", setup.scores);
        render_comparison(md, "Predictions", setup.predictions);
    }

    md << "## Themes\n\n";
    md << "| Theme | Example words | % comments with theme (M) | % comments with theme (F) | odds ratio (M/F) | p "
          "(corrected) |\n|---|---|---:|---:|---:|---:|\n";
    for (const auto& t : report.themes) {
        md << "| " << t.theme << " | " << join(t.examples, ", ") << " | " << format_sig(t.first_percent) << "% | "
           << format_sig(t.second_percent) << "% | " << format_sig(t.odds.value) << (t.odds.haldane_corrected ? " (+0.5)" : "")
           << " | " << format_p(t.p_corrected) << (t.p_corrected < 0.05 ? "*" : "") << " |\n";
    }
    md << "\np-values are Fisher exact (two-sided) with Holm correction across " << report.themes.size()
       << " themes; * marks p < 0.05.\n";

    if (report.agreement) {
        const auto& a = *report.agreement;
        md << "\n## Annotator agreement\n\n";
        md << "| Rater | n | accuracy |\n|---|---:|---:|\n";
        for (const auto& r : a.raters) md << "| " << r.rater << " | " << r.n << " | " << format_sig(100.0 * r.accuracy) << "% |\n";
        md << "\nMean accuracy: " << format_sig(100.0 * a.mean_accuracy) << "%\n\n";
        md << "Krippendorff's alpha (" << to_string(a.metric) << "): "
           << (a.alpha.degenerate ? "degenerate (" + a.alpha.reason + ")" : format_sig(a.alpha.alpha)) << "\n";
    }
    return md.str();
}

std::vector<std::filesystem::path> emit_plot_data(const AuditReport& report, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) throw IoError("cannot create directory " + out_dir.string());
    std::vector<std::filesystem::path> written;
    for (const auto& setup : report.setups) {
        const std::string setup_name = dims_name(setup.residuals.dimensions);
        for (const auto& [group, per_score] : setup.residuals.histograms) {
            std::string slug = group;
            std::replace(slug.begin(), slug.end(), '=', '-');
            std::replace(slug.begin(), slug.end(), ',', '_');
            for (std::size_t k = 0; k < per_score.size(); ++k) {
                Json j;
                j["setup"] = setup_name;
                j["group"] = group;
                j["score"] = static_cast<int>(k) + kMinScore;
                j["bins"] = per_score[k].edges;
                j["counts"] = per_score[k].counts;
                j["clipped"] = per_score[k].clipped;
                const auto path = out_dir / ("residuals_" + setup_name + "_" + slug + "_score" + std::to_string(k) + ".json");
                write_file_atomic(path, j.dump(1) + "\n");
                written.push_back(path);
            }
        }
    }
    return written;
}

std::vector<Annotation> parse_annotations(std::string_view content) {
    std::vector<Annotation> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "annotations line " + std::to_string(line_no) + ": ";
        try {
            const Json j = Json::parse(line);
            Annotation a;
            const auto& id = j.at("id");
            a.id = id.is_string() ? id.get<std::string>() : id.dump();
            const auto& rater = j.at("rater");
            a.rater = rater.is_string() ? rater.get<std::string>() : rater.dump();
            const auto& rating = j.at("rating");
            if (!rating.is_number_integer()) throw ValidationError(where + "rating must be an integer");
            const long long v = rating.get<long long>();
            if (v < kMinScore || v > kMaxScore) throw ValidationError(where + "rating out of range: " + std::to_string(v));
            a.rating = static_cast<int>(v);
            out.push_back(std::move(a));
        } catch (const Json::exception& e) {
            throw ValidationError(where + e.what());
        }
    }
    return out;
}

AgreementResult agreement(std::span<const Annotation> annotations, const Dataset& labels, AlphaMetric metric) {
    if (annotations.empty()) throw ValidationError("no annotations");
    std::set<std::string> rater_set;
    std::set<std::string> item_set;
    for (const auto& a : annotations) {
        if (!labels.find(a.id)) throw ValidationError("annotation for unknown id '" + a.id + "'");
        if (a.rating < kMinScore || a.rating > kMaxScore) throw ValidationError("rating out of range");
        rater_set.insert(a.rater);
        item_set.insert(a.id);
    }
    const std::vector<std::string> raters(rater_set.begin(), rater_set.end());
    const std::vector<std::string> items(item_set.begin(), item_set.end());
    auto index_of = [](const std::vector<std::string>& v, const std::string& key) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), key) - v.begin());
    };
    std::vector<std::vector<std::optional<double>>> matrix(items.size(), std::vector<std::optional<double>>(raters.size()));
    std::vector<std::size_t> n(raters.size(), 0), correct(raters.size(), 0);
    for (const auto& a : annotations) {
        auto& cell = matrix[index_of(items, a.id)][index_of(raters, a.rater)];
        if (cell) throw ValidationError("rater '" + a.rater + "' rated '" + a.id + "' twice");
        cell = a.rating;
        const std::size_t r = index_of(raters, a.rater);
        ++n[r];
        if (a.rating == labels.at(a.id).global_score) ++correct[r];
    }
    AgreementResult out;
    out.metric = metric;
    out.items = items.size();
    double sum = 0.0;
    for (std::size_t r = 0; r < raters.size(); ++r) {
        const double acc = static_cast<double>(correct[r]) / static_cast<double>(n[r]);
        out.raters.push_back({raters[r], n[r], acc});
        sum += acc;
    }
    out.mean_accuracy = sum / static_cast<double>(raters.size());
    out.alpha = krippendorff_alpha(matrix, metric);
    return out;
}

AgreementResult agreement(const std::filesystem::path& annotations, const Dataset& labels, AlphaMetric metric) {
    const auto parsed = parse_annotations(read_file(annotations));
    return agreement(parsed, labels, metric);
}

}  // namespace biasaudit
