#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "biasaudit/ingest.hpp"
#include "biasaudit/pipeline.hpp"
#include "biasaudit/rng.hpp"

namespace biasaudit {

/// Theme phrase inserted into comments with a per-group rate.
struct ThemeInjection {
    std::string name;                  // key into the template file's theme phrases
    std::vector<std::string> phrases;  // overrides the template file when non-empty
    double rate_m = 0.0;
    double rate_f = 0.0;
    Dimension dimension = Dimension::Student;
};

struct SynthConfig {
    std::size_t n = 3000;
    std::array<double, kScoreLevels> score_distribution{0.05, 0.35, 0.45, 0.15};
    double student_m_share = 0.5;
    double assessor_m_share = 0.5;
    /// Group receiving the biases.
    Dimension biased_dimension = Dimension::Student;
    GroupLabel biased_label = GroupLabel::F;
    /// Added to the continuous score before rounding, in score units.
    double beta_score = 0.0;
    /// Added to the valence that selects comment fragments, in score units.
    double beta_text = 0.0;
    double noise_sd = 0.15;
    std::vector<ThemeInjection> injections;
    std::uint64_t seed = 0;
    std::filesystem::path templates;  // empty: bundled template file

    static SynthConfig from_json(std::string_view text);
    std::string to_json() const;
    /// Throws ValidationError on an invalid configuration.
    void validate() const;
};

struct TemplateBank {
    std::array<std::vector<std::string>, kScoreLevels> bands;  // valence band per score level
    std::vector<std::string> neutral;
    std::map<std::string, std::vector<std::string>> theme_phrases;

    static TemplateBank load(const std::filesystem::path& path);
    static std::filesystem::path default_path();
};

struct TruthRecord {
    std::string id;
    double latent = 0.0;       // q ~ U[0, 1]
    double noise = 0.0;
    double continuous = 0.0;   // score-scale value before rounding, bias included
    double valence = 0.0;      // score-scale valence used to pick fragments
    double score_bias = 0.0;
    double text_bias = 0.0;
    std::vector<std::string> injected;
};

struct SynthCorpus {
    Dataset dataset;
    std::vector<TruthRecord> truth;
};

/// Latent thresholds on q + noise that reproduce `distribution` at zero bias.
std::array<double, kScoreLevels - 1> latent_thresholds(const std::array<double, kScoreLevels>& distribution,
                                                       double noise_sd);

SynthCorpus generate(const SynthConfig& config);

/// Appends a phrase of `injection` to each record independently with its group's rate.
/// Returns the ids that received it.
std::vector<std::string> inject_theme(std::vector<EvaluationRecord>& records,
                                      const ThemeInjection& injection,
                                      const std::vector<std::string>& phrases, Rng& rng);

std::string truth_to_jsonl(const std::vector<TruthRecord>& truth);

struct SeedOutcome {
    std::uint64_t seed = 0;
    double p_value = 1.0;
    double mean_difference = 0.0;  // M minus F residual mean
    bool degenerate = false;
    bool rejected = false;
};

struct PowerResult {
    double rate = 0.0;
    double standard_error = 0.0;
    std::vector<SeedOutcome> seeds;
};

/// Runs the end-to-end residual audit on `n_seeds` corpora (seeds config.seed, config.seed+1, ...)
/// and reports how often the M vs F residual test rejects at `alpha`.
PowerResult power_experiment(const SynthConfig& config, std::size_t n_seeds, double alpha,
                             const PipelineOptions& pipeline = {});

}  // namespace biasaudit
