// One line per acceptance criterion; nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "biasaudit/fileio.hpp"
#include "biasaudit/lexicon_audit.hpp"
#include "biasaudit/report.hpp"
#include "biasaudit/residual_audit.hpp"
#include "biasaudit/stats.hpp"
#include "biasaudit/synth.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace biasaudit;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int number, const char* title, double budget_seconds, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= budget_seconds;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("[%s] %d %s: %s (%.2f s, budget %.0f s%s)\n", pass ? "PASS" : "FAIL", number, title,
                out.detail.c_str(), secs, budget_seconds, in_time ? "" : ", over budget");
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

std::vector<EvaluationRecord> table2_corpus() {
    std::vector<EvaluationRecord> out;
    auto add = [&](const std::string& id, bool hit, GroupLabel g) {
        EvaluationRecord r;
        r.id = id;
        r.comment = hit ? "spoke with families during rounds" : "organized presentation on rounds";
        r.global_score = 2;
        r.student_gender = g;
        r.assessor_gender = GroupLabel::M;
        out.push_back(std::move(r));
    };
    for (int i = 0; i < 1767; ++i) add("m" + std::to_string(i), i < 146, GroupLabel::M);
    for (int i = 0; i < 1395; ++i) add("f" + std::to_string(i), i < 257, GroupLabel::F);
    return out;
}

Outcome theme_headline() {
    const auto rows = audit_themes(table2_corpus(), load_lexicon(default_lexicon_path()), Dimension::Student);
    for (const auto& r : rows) {
        if (r.theme != "Social-communal") continue;
        const bool or_ok = std::abs(r.odds.value - 0.401) <= 0.01;
        const bool p_ok = r.p_corrected >= 5.88e-17 && r.p_corrected <= 5.88e-15;
        return {or_ok && p_ok && rows.size() == 16,
                fmt("OR %.4f, Holm p %.3e over %.0f themes", r.odds.value, r.p_corrected, double(rows.size()))};
    }
    return {false, "Social-communal theme missing"};
}

Outcome fisher_agreement() {
    std::mt19937_64 gen(20240101);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::uniform_int_distribution<unsigned> total(1, 24);
        const unsigned n = total(gen);
        unsigned cells[4] = {0, 0, 0, 0};
        std::uniform_int_distribution<int> pick(0, 3);
        for (unsigned k = 0; k < n; ++k) ++cells[pick(gen)];
        const double got = fisher_exact_two_sided({cells[0], cells[1], cells[2], cells[3]});
        const double want = oracle::fisher_enumeration(cells[0], cells[1], cells[2], cells[3]);
        worst = std::max(worst, std::abs(got - want));
    }
    return {worst <= 1e-10, fmt("max |p - enumeration| = %.2e over 1000 tables", worst)};
}

Outcome holm_agreement() {
    std::mt19937_64 gen(77);
    double worst = 0.0;
    bool monotone = true, dominates = true;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t m = std::uniform_int_distribution<std::size_t>(1, 20)(gen);
        std::vector<double> p(m);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& x : p) x = (i % 5 == 0) ? std::round(u(gen) * 10.0) / 10.0 : u(gen) * u(gen);
        const auto got = holm_bonferroni(p);
        const auto want = oracle::holm_definition(p);
        for (std::size_t k = 0; k < m; ++k) {
            worst = std::max(worst, std::abs(got[k] - want[k]));
            if (got[k] < p[k]) dominates = false;
            for (std::size_t j = 0; j < m; ++j)
                if (p[j] < p[k] && got[j] > got[k]) monotone = false;
        }
    }
    return {worst <= 1e-12 && monotone && dominates,
            fmt("max deviation %.2e over 1000 vectors", worst) + (monotone ? ", monotone" : ", NOT monotone") +
                (dominates ? ", dominates raw" : ", below raw")};
}

Outcome null_calibration() {
    SynthConfig cfg;
    cfg.seed = 1000;
    const auto r = power_experiment(cfg, 200, 0.05);
    std::size_t degenerate = 0;
    for (const auto& s : r.seeds) degenerate += s.degenerate;
    return {r.rate >= 0.02 && r.rate <= 0.09 && degenerate == 0,
            fmt("rejection rate %.3f (se %.3f) at alpha 0.05 over 200 seeds, %.0f degenerate", r.rate,
                r.standard_error, double(degenerate))};
}

Outcome power_at_shift() {
    SynthConfig cfg;
    cfg.seed = 5000;
    cfg.beta_score = 0.3;
    cfg.biased_dimension = Dimension::Student;
    cfg.biased_label = GroupLabel::F;
    const auto r = power_experiment(cfg, 100, 0.01);
    bool all_negative = true;
    double widest = -1e9;
    for (const auto& s : r.seeds) {
        if (!(s.mean_difference < 0.0)) all_negative = false;
        widest = std::max(widest, s.mean_difference);
    }
    return {r.rate >= 0.9 && all_negative,
            fmt("power %.2f at alpha 0.01 over 100 seeds, largest M-F difference %.3f", r.rate, widest)};
}

Outcome theme_recovery() {
    double or_sum = 0.0;
    int unique = 0;
    const int seeds = 50;
    const auto lexicon = load_lexicon(default_lexicon_path());
    for (int s = 0; s < seeds; ++s) {
        SynthConfig cfg;
        cfg.n = 3162;
        cfg.student_m_share = 1767.0 / 3162.0;
        cfg.seed = 9000 + static_cast<std::uint64_t>(s);
        cfg.injections.push_back({"Social-communal", {}, 0.0826, 0.184, Dimension::Student});
        const auto corpus = generate(cfg);
        const auto rows = audit_themes(corpus.dataset.records(), lexicon, Dimension::Student);
        int significant = 0;
        bool target = false;
        for (const auto& r : rows) {
            if (r.p_corrected < 0.05) {
                ++significant;
                if (r.theme == "Social-communal") target = true;
            }
            if (r.theme == "Social-communal") or_sum += r.odds.value;
        }
        if (target && significant == 1) ++unique;
    }
    const double mean_or = or_sum / seeds;
    const double share = static_cast<double>(unique) / seeds;
    return {std::abs(mean_or - 0.401) <= 0.05 && share >= 0.95,
            fmt("mean OR %.4f, unique significant theme in %.0f%% of 50 seeds", mean_or, 100.0 * share)};
}

Outcome residual_sanity() {
    SynthConfig cfg;
    cfg.seed = 31;
    cfg.beta_score = 0.3;
    const auto corpus = generate(cfg);
    PredictionSet exact;
    for (const auto& r : corpus.dataset.records()) exact.y_hat[r.id] = r.global_score;
    const Dimension student[] = {Dimension::Student};
    const auto zero = compute_residuals(corpus.dataset, exact, nullptr, std::nullopt);
    bool all_zero = true;
    for (const auto& [id, d] : zero) all_zero = all_zero && d == 0.0;
    const auto zero_report = compare_all(group_residuals(zero, corpus.dataset, student));
    const bool degenerate = zero_report.anova.degenerate && !zero_report.pairwise.empty() &&
                            zero_report.pairwise[0].test.degenerate;

    PipelineOptions opts;
    opts.seed = 31;
    const auto run = run_residual_pipeline(corpus.dataset, opts);
    PredictionSet shifted = run.predictions;
    for (auto& [id, y] : shifted.y_hat) y += 0.5;
    const auto base = compare_all(group_residuals(
        compute_residuals(run.dataset, run.predictions, &run.split, Partition::Test), run.dataset, student));
    const auto moved = compare_all(
        group_residuals(compute_residuals(run.dataset, shifted, &run.split, Partition::Test), run.dataset, student));
    const double dt = std::abs(base.pairwise.at(0).test.statistic - moved.pairwise.at(0).test.statistic);
    return {all_zero && degenerate && dt <= 1e-12,
            std::string("exact predictions: ") + (all_zero ? "zero residuals" : "NONZERO residuals") +
                (degenerate ? ", degenerate tests" : ", tests NOT degenerate") + fmt("; shift changes t by %.1e", dt)};
}

Outcome determinism() {
    SynthConfig cfg;
    cfg.seed = 77;
    cfg.beta_score = 0.2;
    const auto dir = fs::temp_directory_path() / "biasaudit_acceptance";
    fs::create_directories(dir);
    const auto path = dir / "corpus.jsonl";
    write_file_atomic(path, records_to_jsonl(generate(cfg).dataset.records()));
    AuditConfig audit;
    audit.seed = 77;
    const auto a = report_to_json(run_audit(path, audit)).dump(2);
    const auto b = report_to_json(run_audit(path, audit)).dump(2);
    return {a == b, fmt("two runs of %.0f bytes", double(a.size())) + (a == b ? ", byte-identical" : ", reports differ")};
}

using Matrix = std::vector<std::vector<std::optional<double>>>;

std::vector<std::vector<double>> units_of(const Matrix& m) {
    std::vector<std::vector<double>> units;
    for (const auto& row : m) {
        std::vector<double> u;
        for (const auto& v : row)
            if (v) u.push_back(*v);
        units.push_back(u);
    }
    return units;
}

Outcome alpha_checks() {
    Matrix perfect;
    for (int i = 0; i < 30; ++i) perfect.push_back({double(i % 4), double(i % 4), double(i % 4)});
    bool perfect_ok = true;
    for (auto m : {AlphaMetric::Nominal, AlphaMetric::Ordinal, AlphaMetric::Interval})
        perfect_ok = perfect_ok && krippendorff_alpha(perfect, m).alpha == 1.0;

    // Six items rated by three raters.
    Matrix toy;
    const int ratings[3][6] = {{0, 1, 2, 3, 2, 1}, {0, 2, 2, 3, 1, 1}, {1, 1, 3, 3, 2, 0}};
    for (int i = 0; i < 6; ++i) toy.push_back({double(ratings[0][i]), double(ratings[1][i]), double(ratings[2][i])});
    double worst = 0.0;
    bool selectable = true;
    const std::pair<const char*, oracle::Metric> metrics[] = {
        {"nominal", oracle::Metric::Nominal}, {"ordinal", oracle::Metric::Ordinal}, {"interval", oracle::Metric::Interval}};
    std::vector<double> values;
    for (const auto& [name, om] : metrics) {
        const AlphaMetric m = parse_alpha_metric(name);
        selectable = selectable && to_string(m) == name;
        const double got = krippendorff_alpha(toy, m).alpha;
        worst = std::max(worst, std::abs(got - *oracle::krippendorff_pairwise(units_of(toy), om)));
        values.push_back(got);
    }
    const bool distinct = values[0] != values[1] && values[1] != values[2];
    return {perfect_ok && worst <= 1e-10 && selectable && distinct,
            std::string(perfect_ok ? "perfect agreement gives 1" : "perfect agreement NOT 1") +
                fmt("; toy max deviation %.1e", worst) +
                (selectable && distinct ? "; nominal, ordinal, interval selectable" : "; metric selection broken")};
}

}  // namespace

int main() {
    criterion(1, "theme audit headline", 1, theme_headline);
    criterion(2, "Fisher exact vs enumeration", 10, fisher_agreement);
    criterion(3, "Holm vs definition", 5, holm_agreement);
    criterion(4, "null calibration", 600, null_calibration);
    criterion(5, "power at beta 0.3", 300, power_at_shift);
    criterion(6, "injected theme recovery", 120, theme_recovery);
    criterion(7, "residual sanity", 60, residual_sanity);
    criterion(8, "determinism", 60, determinism);
    criterion(9, "Krippendorff alpha", 5, alpha_checks);
    std::printf("%d of 9 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
