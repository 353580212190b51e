#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "biasaudit/anonymize.hpp"
#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/ingest.hpp"
#include "biasaudit/lexicon_audit.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/predictor.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/residual_audit.hpp"
#include "biasaudit/synth.hpp"

namespace fs = std::filesystem;
using namespace biasaudit;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitIo = 4;

struct Flags {
    std::string dataset;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string lexicon;
    std::string predictions;
    std::string out;
    std::string group_dims;
    std::string partition;
    std::string alpha_metric;
    std::optional<bool> holm_pairwise;
    std::optional<bool> pooled_variance;
    std::string gazetteer;
    std::string spans;
    std::string split;
    std::string model;
    std::string annotations;
    std::string truth;
};

// "student" or "assessor,student"; several setups separated by ';'.
std::vector<std::vector<Dimension>> parse_group_dims(const std::string& text) {
    std::vector<std::vector<Dimension>> setups;
    std::stringstream outer(text);
    std::string setup;
    while (std::getline(outer, setup, ';')) {
        std::vector<Dimension> dims;
        std::stringstream inner(setup);
        std::string name;
        while (std::getline(inner, name, ',')) {
            if (!name.empty()) dims.push_back(parse_dimension(name));
        }
        if (dims.empty()) throw ValidationError("empty group setup in --group-dims");
        setups.push_back(std::move(dims));
    }
    if (setups.empty()) throw ValidationError("--group-dims is empty");
    return setups;
}

AuditConfig effective_config(const Flags& f) {
    AuditConfig c = f.config.empty() ? AuditConfig{} : AuditConfig::load(f.config);
    if (f.seed) c.seed = *f.seed;
    if (!f.lexicon.empty()) c.lexicon = f.lexicon;
    if (!f.predictions.empty()) {
        c.predictor = "external";
        c.predictions = f.predictions;
    }
    if (!f.group_dims.empty()) c.group_setups = parse_group_dims(f.group_dims);
    if (!f.partition.empty()) {
        if (f.partition != "test" && f.partition != "all") throw ValidationError("--partition must be test or all");
        c.partition = f.partition;
    }
    if (!f.alpha_metric.empty()) c.alpha_metric = parse_alpha_metric(f.alpha_metric);
    if (f.holm_pairwise) c.holm_pairwise = *f.holm_pairwise;
    if (f.pooled_variance) c.pooled_variance = *f.pooled_variance;
    if (!f.gazetteer.empty()) c.gazetteer = f.gazetteer;
    if (!f.spans.empty()) c.spans = f.spans;
    if (!f.annotations.empty()) c.annotations = f.annotations;
    return c;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

Dataset load_dataset(const std::string& path) {
    require(path, "--dataset");
    LoadResult loaded = load_records(path, format_for_path(path));
    for (const auto& e : loaded.errors)
        std::fprintf(stderr, "warning: line %zu (%s): %s\n", e.line, e.id.c_str(), e.message.c_str());
    return std::move(loaded.dataset);
}

SplitAssignment load_or_make_split(const Flags& f, const AuditConfig& c, const Dataset& dataset) {
    if (!f.split.empty()) return split_from_jsonl(read_file(f.split), dataset);
    return stratified_split(dataset, c.ratios, c.seed);
}

int cmd_preprocess(const Flags& f) {
    require(f.out, "--out");
    const AuditConfig c = effective_config(f);
    const Dataset raw = load_dataset(f.dataset);
    Gazetteer gazetteer;
    if (!c.gazetteer.empty()) gazetteer = Gazetteer::load(c.gazetteer);
    std::map<std::string, std::vector<Span>> spans;
    if (!c.spans.empty()) spans = load_span_annotations(c.spans);
    MaskSource masks;
    masks.gazetteer = &gazetteer;
    const PreprocessOutcome pre = preprocess_dataset(raw, masks, &spans);
    for (const auto& e : pre.errors)
        std::fprintf(stderr, "rejected: record %zu (%s): %s\n", e.line, e.id.c_str(), e.message.c_str());
    write_file_atomic(f.out, records_to_jsonl(pre.dataset.records()));
    std::printf("preprocessed %zu records, rejected %zu\n", pre.dataset.size(), pre.errors.size());
    return 0;
}

int cmd_split(const Flags& f) {
    require(f.out, "--out");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    const SplitAssignment split = stratified_split(dataset, c.ratios, c.seed);
    write_file_atomic(f.out, split_to_jsonl(split, dataset));
    const auto sizes = split.sizes();
    std::printf("train %zu, validation %zu, test %zu\n", sizes[0], sizes[1], sizes[2]);
    return 0;
}

int cmd_train(const Flags& f) {
    require(f.out, "--out");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    const SplitAssignment split = load_or_make_split(f, c, dataset);
    const auto train = withhold_group_fields(select(dataset, split, Partition::Train));
    const auto validation = withhold_group_fields(select(dataset, split, Partition::Validation));
    FitOptions fit = c.fit;
    fit.seed = c.seed;
    const LinearTextModel model = LinearTextModel::fit(train, validation, fit);
    write_file_atomic(f.out, model.to_json());
    std::printf("lambda %g, vocabulary %zu%s\n", model.lambda(), model.terms().size(),
                model.lambda_fallback() ? " (validation empty: smallest lambda used)" : "");
    return 0;
}

int cmd_predict(const Flags& f) {
    require(f.out, "--out");
    require(f.model, "--model");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    const LinearTextModel model = LinearTextModel::from_json(read_file(f.model));
    std::vector<EvaluationRecord> records;
    std::string partition = "all";
    if (!f.partition.empty() && f.partition != "all") {
        const SplitAssignment split = load_or_make_split(f, c, dataset);
        const Partition p = parse_partition(f.partition);
        records = select(dataset, split, p);
        partition = std::string(to_string(p));
    } else {
        records = dataset.records();
    }
    const PredictionSet preds = model.predict_all(withhold_group_fields(records), partition);
    write_file_atomic(f.out, predictions_to_jsonl(preds));
    std::printf("wrote %zu predictions\n", preds.size());
    return 0;
}

bool headline_requested(const AuditConfig& c) {
    for (const auto& s : c.group_setups)
        if (s.size() == 1) return true;
    return false;
}

int cmd_residuals(const Flags& f) {
    require(f.out, "--out");
    require(f.predictions, "--predictions");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    const PredictionSet preds = load_external_predictions(f.predictions, dataset);
    std::optional<SplitAssignment> split;
    std::optional<Partition> partition;
    if (c.partition == "test") {
        split = load_or_make_split(f, c, dataset);
        partition = Partition::Test;
    }
    const ResidualMap residuals = compute_residuals(dataset, preds, split ? &*split : nullptr, partition);
    Json out;
    out["partition"] = c.partition;
    out["evaluated"] = residuals.size();
    Json setups = Json::array();
    bool degenerate_headline = false;
    bool headline_seen = false;
    for (const auto& dims : c.group_setups) {
        CompareOptions opts;
        opts.holm_pairwise = c.holm_pairwise;
        opts.pooled_variance = c.pooled_variance;
        opts.histogram_bins = c.histogram_bins;
        const ResidualReport r = compare_all(group_residuals(residuals, dataset, dims), opts);
        if (dims.size() == 1 && !headline_seen) {
            headline_seen = true;
            degenerate_headline = r.pairwise.empty() || r.pairwise.front().test.degenerate;
        }
        setups.push_back(to_json(r));
    }
    out["residual_audit"] = std::move(setups);
    write_file_atomic(f.out, out.dump(2) + "\n");
    if (degenerate_headline) {
        std::fprintf(stderr, "headline residual test is degenerate\n");
        return kExitDegenerate;
    }
    return 0;
}

int cmd_lexicon(const Flags& f) {
    require(f.out, "--out");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    Dimension dim = c.theme_dimension;
    if (!f.group_dims.empty()) {
        const auto setups = parse_group_dims(f.group_dims);
        if (setups.size() != 1 || setups.front().size() != 1)
            throw ValidationError("theme audit takes a single grouping dimension");
        dim = setups.front().front();
    }
    const ThemeLexicon lexicon = load_lexicon(c.lexicon.empty() ? default_lexicon_path() : c.lexicon);
    const auto themes = audit_themes(dataset.records(), lexicon, dim);
    Json out;
    out["dimension"] = std::string(to_string(dim));
    out["groups"] = {"M", "F"};
    out["correction"] = "holm";
    out["rows"] = to_json(themes);
    write_file_atomic(f.out, out.dump(2) + "\n");
    for (const auto& t : themes)
        std::printf("%-24s %6s%% %6s%%  OR %-7s p %s\n", t.theme.c_str(), format_sig(t.first_percent).c_str(),
                    format_sig(t.second_percent).c_str(), format_sig(t.odds.value).c_str(),
                    format_p(t.p_corrected).c_str());
    return 0;
}

int cmd_audit(const Flags& f) {
    require(f.out, "--out");
    const AuditConfig c = effective_config(f);
    require(f.dataset, "--dataset");
    const AuditReport report = run_audit(fs::path(f.dataset), c);
    const fs::path dir(f.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string());
    write_file_atomic(dir / "report.json", report_to_json(report).dump(2) + "\n");
    write_file_atomic(dir / "report.md", render_markdown(report));
    emit_plot_data(report, dir / "plots");
    const PairwiseComparison* headline = report.headline();
    if (headline_requested(c) && (!headline || headline->test.degenerate)) {
        std::fprintf(stderr, "headline residual test is degenerate%s\n",
                     headline ? (" (" + headline->test.reason + ")").c_str() : " (no M/F pair)");
        return kExitDegenerate;
    }
    if (headline)
        std::printf("residual M vs F: mean difference %s, p %s\n", format_sig(headline->mean_difference, 4).c_str(),
                    format_p(headline->test.p_value).c_str());
    return 0;
}

int cmd_synth(const Flags& f) {
    require(f.out, "--out");
    SynthConfig config;
    if (!f.config.empty()) config = SynthConfig::from_json(read_file(f.config));
    if (f.seed) config.seed = *f.seed;
    const SynthCorpus corpus = generate(config);
    write_file_atomic(f.out, records_to_jsonl(corpus.dataset.records()));
    if (!f.truth.empty()) write_file_atomic(f.truth, truth_to_jsonl(corpus.truth));
    std::printf("generated %zu records\n", corpus.dataset.size());
    return 0;
}

int cmd_agreement(const Flags& f) {
    require(f.out, "--out");
    require(f.annotations, "--annotations");
    const AuditConfig c = effective_config(f);
    const Dataset dataset = load_dataset(f.dataset);
    const AgreementResult result = agreement(fs::path(f.annotations), dataset, c.alpha_metric);
    write_file_atomic(f.out, agreement_to_json(result).dump(2) + "\n");
    std::printf("mean accuracy %s, alpha (%s) %s\n", format_sig(result.mean_accuracy).c_str(),
                std::string(to_string(result.metric)).c_str(),
                result.alpha.degenerate ? ("degenerate (" + result.alpha.reason + ")").c_str()
                                        : format_sig(result.alpha.alpha).c_str());
    return 0;
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation: return kExitValidation;
        case ErrorKind::Degenerate: return kExitDegenerate;
        case ErrorKind::Io: return kExitIo;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group residual and lexicon bias audit for scored free-text evaluations"};
    app.require_subcommand(1);
    Flags f;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--dataset", f.dataset, "Records file (.jsonl or .csv)");
        sub->add_option("--config", f.config, "Audit config JSON; flags override its fields");
        sub->add_option("--seed", f.seed, "Run seed");
        sub->add_option("--out", f.out, "Output file (audit: output directory)");
    };

    struct Entry {
        const char* name;
        const char* help;
        int (*run)(const Flags&);
    };
    const Entry entries[] = {
        {"preprocess", "Mask entities, neutralize pronouns and lowercase comments", cmd_preprocess},
        {"split", "Stratified train/validation/test split", cmd_split},
        {"train", "Fit the TF-IDF ridge predictor", cmd_train},
        {"predict", "Predict scores with a saved model", cmd_predict},
        {"residuals", "Group residual tests from a predictions file", cmd_residuals},
        {"lexicon", "Theme coding with Fisher tests and Holm correction", cmd_lexicon},
        {"audit", "End-to-end audit: JSON and markdown report plus plot data", cmd_audit},
        {"synth", "Generate a synthetic corpus", cmd_synth},
        {"agreement", "Annotator accuracy and Krippendorff's alpha", cmd_agreement},
    };
    std::vector<std::pair<CLI::App*, const Entry*>> subs;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        add_common(sub);
        subs.emplace_back(sub, &e);
        const std::string name = e.name;
        if (name == "preprocess" || name == "audit") {
            sub->add_option("--gazetteer", f.gazetteer, "Newline-delimited names to mask");
            sub->add_option("--spans", f.spans, "Entity span annotations (JSONL)");
        }
        if (name == "train" || name == "predict" || name == "residuals")
            sub->add_option("--split", f.split, "Split assignment file from the split command");
        if (name == "predict") sub->add_option("--model", f.model, "Model JSON from the train command");
        if (name == "predict" || name == "residuals" || name == "audit")
            sub->add_option("--partition", f.partition, "Records to score: test or all");
        if (name == "residuals" || name == "audit")
            sub->add_option("--predictions", f.predictions, "External predictions JSONL {id, y_hat}");
        if (name == "residuals" || name == "audit" || name == "lexicon")
            sub->add_option("--group-dims", f.group_dims, "Grouping, e.g. student or assessor,student; ';' separates setups");
        if (name == "residuals" || name == "audit") {
            sub->add_option("--holm-pairwise", f.holm_pairwise, "Holm-correct pairwise residual tests (true/false)");
            sub->add_option("--pooled-variance", f.pooled_variance, "Equal-variance t tests instead of Welch (true/false)");
        }
        if (name == "lexicon" || name == "audit") sub->add_option("--lexicon", f.lexicon, "Theme lexicon JSON");
        if (name == "agreement" || name == "audit") {
            sub->add_option("--annotations", f.annotations, "Annotations JSONL {id, rater, rating}");
            sub->add_option("--alpha-metric", f.alpha_metric, "nominal, ordinal or interval");
        }
        if (name == "synth") sub->add_option("--truth", f.truth, "Ground truth sidecar JSONL");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        for (const auto& [sub, entry] : subs)
            if (sub->parsed()) return entry->run(f);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
