#include "biasaudit/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <unordered_map>
#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {

using nlohmann::json;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// CDF of q + e with q ~ U[0, 1] and e ~ N(0, sd^2).
double latent_cdf(double z, double sd) {
    if (sd <= 0.0) return std::clamp(z, 0.0, 1.0);
    auto g = [](double t) { return t * normal_cdf(t) + normal_pdf(t); };
    return std::clamp(sd * (g(z / sd) - g((z - 1.0) / sd)), 0.0, 1.0);
}

double latent_quantile(double u, double sd) {
    if (u <= 0.0) return -std::numeric_limits<double>::infinity();
    if (u >= 1.0) return std::numeric_limits<double>::infinity();
    double lo = -1.0 - 10.0 * sd;
    double hi = 2.0 + 10.0 * sd;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (latent_cdf(mid, sd) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Maps a latent-scale value onto the score scale: class k's quantile band of the
// latent distribution lands on [k - 0.5, k + 0.5], so rounding recovers the class.
class ScoreScale {
public:
    ScoreScale(const std::array<double, kScoreLevels>& distribution, double sd) : sd_(sd) {
        double acc = 0.0;
        for (std::size_t k = 0; k < kScoreLevels; ++k) {
            lower_[k] = acc;
            acc += distribution[k];
            upper_[k] = k + 1 == kScoreLevels ? 1.0 : acc;
        }
    }

    double operator()(double latent) const {
        const double u = latent_cdf(latent, sd_);
        for (std::size_t k = 0; k < kScoreLevels; ++k) {
            const double width = upper_[k] - lower_[k];
            if (width <= 0.0) continue;
            if (u <= upper_[k] || k + 1 == kScoreLevels) {
                const double frac = std::clamp((u - lower_[k]) / width, 0.0, 1.0);
                return static_cast<double>(k) - 0.5 + frac;
            }
        }
        return kMaxScore + 0.5;
    }

private:
    double sd_;
    std::array<double, kScoreLevels> lower_{};
    std::array<double, kScoreLevels> upper_{};
};

std::vector<GroupLabel> allocate_labels(std::size_t n, double m_share, Rng& rng) {
    const double exact = m_share * static_cast<double>(n);
    std::size_t m = static_cast<std::size_t>(std::floor(exact + 1e-9));
    // Largest remainder over two classes; a tie goes to M.
    if (m < n && exact - static_cast<double>(m) >= 0.5 - 1e-9) ++m;
    std::vector<GroupLabel> labels(n, GroupLabel::F);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(m), GroupLabel::M);
    rng.shuffle(std::span<GroupLabel>(labels));
    return labels;
}

std::string render(std::string_view fragment, GroupLabel gender) {
    const bool female = gender == GroupLabel::F;
    std::string out;
    std::size_t i = 0;
    while (i < fragment.size()) {
        if (fragment[i] == '{') {
            const auto close = fragment.find('}', i);
            if (close != std::string_view::npos) {
                const std::string_view key = fragment.substr(i + 1, close - i - 1);
                if (key == "subj") out += female ? "she" : "he";
                else if (key == "obj") out += female ? "her" : "him";
                else if (key == "poss") out += female ? "her" : "his";
                else out.append(fragment.substr(i, close - i + 1));
                i = close + 1;
                continue;
            }
        }
        out.push_back(fragment[i++]);
    }
    return out;
}

std::string sentence_case(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

GroupLabel parse_label_strict(const std::string& text) {
    auto label = parse_group_label(text);
    if (!label || *label == GroupLabel::Unspecified) throw ValidationError("group label must be M or F");
    return *label;
}

}  // namespace

std::array<double, kScoreLevels - 1> latent_thresholds(const std::array<double, kScoreLevels>& distribution,
                                                       double noise_sd) {
    std::array<double, kScoreLevels - 1> out{};
    double acc = 0.0;
    for (std::size_t k = 0; k + 1 < kScoreLevels; ++k) {
        acc += distribution[k];
        out[k] = latent_quantile(acc, noise_sd);
    }
    return out;
}

SynthConfig SynthConfig::from_json(std::string_view text) {
    SynthConfig c;
    try {
        const json j = json::parse(text);
        c.n = j.value("n", c.n);
        if (j.contains("score_distribution")) {
            const auto d = j["score_distribution"].get<std::vector<double>>();
            if (d.size() != kScoreLevels) throw ValidationError("score_distribution needs four entries");
            std::copy(d.begin(), d.end(), c.score_distribution.begin());
        }
        c.student_m_share = j.value("student_m_share", c.student_m_share);
        c.assessor_m_share = j.value("assessor_m_share", c.assessor_m_share);
        if (j.contains("biased_group")) {
            const auto& g = j["biased_group"];
            c.biased_dimension = parse_dimension(g.value("dimension", std::string("student")));
            c.biased_label = parse_label_strict(g.value("label", std::string("F")));
        }
        c.beta_score = j.value("beta_score", c.beta_score);
        c.beta_text = j.value("beta_text", c.beta_text);
        c.noise_sd = j.value("noise_sd", c.noise_sd);
        c.seed = j.value("seed", c.seed);
        if (j.contains("templates")) c.templates = j["templates"].get<std::string>();
        for (const auto& inj : j.value("injections", json::array())) {
            ThemeInjection t;
            t.name = inj.at("name").get<std::string>();
            t.phrases = inj.value("phrases", std::vector<std::string>{});
            t.rate_m = inj.at("rate_m").get<double>();
            t.rate_f = inj.at("rate_f").get<double>();
            t.dimension = parse_dimension(inj.value("dimension", std::string("student")));
            c.injections.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed synth config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string SynthConfig::to_json() const {
    nlohmann::ordered_json j;
    j["n"] = n;
    j["score_distribution"] = score_distribution;
    j["student_m_share"] = student_m_share;
    j["assessor_m_share"] = assessor_m_share;
    j["biased_group"] = {{"dimension", std::string(to_string(biased_dimension))},
                         {"label", std::string(to_string(biased_label))}};
    j["beta_score"] = beta_score;
    j["beta_text"] = beta_text;
    j["noise_sd"] = noise_sd;
    auto& inj = j["injections"] = nlohmann::ordered_json::array();
    for (const auto& t : injections) {
        nlohmann::ordered_json e;
        e["name"] = t.name;
        if (!t.phrases.empty()) e["phrases"] = t.phrases;
        e["rate_m"] = t.rate_m;
        e["rate_f"] = t.rate_f;
        e["dimension"] = std::string(to_string(t.dimension));
        inj.push_back(std::move(e));
    }
    j["seed"] = seed;
    if (!templates.empty()) j["templates"] = templates.string();
    return j.dump(2);
}

void SynthConfig::validate() const {
    if (n < 1) throw ValidationError("synth n must be at least 1");
    double total = 0.0;
    for (double p : score_distribution) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("score distribution entries must be non-negative");
        total += p;
    }
    if (total == 0.0) throw ValidationError("score distribution has no mass");
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("score distribution must sum to 1");
    for (double s : {student_m_share, assessor_m_share}) {
        if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("group shares must lie in [0, 1]");
    }
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ValidationError("noise_sd must be non-negative");
    if (!std::isfinite(beta_score) || !std::isfinite(beta_text)) throw ValidationError("biases must be finite");
    if (biased_label == GroupLabel::Unspecified) throw ValidationError("biased group must be M or F");
    if (beta_score != 0.0 || beta_text != 0.0) {
        const double share = biased_dimension == Dimension::Student ? student_m_share : assessor_m_share;
        const double group_share = biased_label == GroupLabel::M ? share : 1.0 - share;
        if (group_share <= 0.0) throw ValidationError("biased group has no members");
    }
    for (const auto& t : injections) {
        if (!(t.rate_m >= 0.0 && t.rate_m <= 1.0) || !(t.rate_f >= 0.0 && t.rate_f <= 1.0))
            throw ValidationError("injection rates must lie in [0, 1]");
    }
}

TemplateBank TemplateBank::load(const std::filesystem::path& path) {
    TemplateBank bank;
    try {
        const json j = json::parse(read_file(path));
        const auto& bands = j.at("bands");
        if (bands.size() != kScoreLevels) throw ValidationError("template file needs four valence bands");
        for (std::size_t k = 0; k < kScoreLevels; ++k) {
            bank.bands[k] = bands[k].get<std::vector<std::string>>();
            if (bank.bands[k].empty()) throw ValidationError("empty valence band in template file");
        }
        bank.neutral = j.value("neutral", std::vector<std::string>{});
        if (j.contains("theme_phrases"))
            bank.theme_phrases = j["theme_phrases"].get<std::map<std::string, std::vector<std::string>>>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed template file: ") + e.what());
    }
    return bank;
}

std::filesystem::path TemplateBank::default_path() {
    return std::filesystem::path(BIASAUDIT_DATA_DIR) / "synth" / "fragments.json";
}

std::vector<std::string> inject_theme(std::vector<EvaluationRecord>& records, const ThemeInjection& injection,
                                      const std::vector<std::string>& phrases, Rng& rng) {
    if (phrases.empty()) throw ValidationError("theme injection '" + injection.name + "' has no phrases");
    std::vector<std::string> hit;
    for (auto& r : records) {
        const GroupLabel label = r.label(injection.dimension);
        double rate = 0.0;
        if (label == GroupLabel::M) rate = injection.rate_m;
        else if (label == GroupLabel::F) rate = injection.rate_f;
        // Draw unconditionally so the stream does not depend on the rates.
        const double u = rng.uniform();
        const std::size_t pick = static_cast<std::size_t>(rng.below(phrases.size()));
        if (u < rate) {
            r.comment += ' ' + sentence_case(phrases[pick]) + '.';
            hit.push_back(r.id);
        }
    }
    return hit;
}

SynthCorpus generate(const SynthConfig& config) {
    config.validate();
    const TemplateBank bank = TemplateBank::load(config.templates.empty() ? TemplateBank::default_path() : config.templates);
    const ScoreScale scale(config.score_distribution, config.noise_sd);

    Rng label_rng(derive_seed(config.seed, 0));
    const auto students = allocate_labels(config.n, config.student_m_share, label_rng);
    const auto assessors = allocate_labels(config.n, config.assessor_m_share, label_rng);

    Rng rng(derive_seed(config.seed, 1));
    std::vector<EvaluationRecord> records;
    std::vector<TruthRecord> truth;
    records.reserve(config.n);
    truth.reserve(config.n);
    const int width = static_cast<int>(std::to_string(config.n).size());
    for (std::size_t i = 0; i < config.n; ++i) {
        EvaluationRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "syn-%0*zu", width, i);
        r.id = id;
        r.student_gender = students[i];
        r.assessor_gender = assessors[i];

        TruthRecord t;
        t.id = r.id;
        const bool biased = r.label(config.biased_dimension) == config.biased_label;
        t.score_bias = biased ? config.beta_score : 0.0;
        t.text_bias = biased ? config.beta_text : 0.0;
        t.latent = rng.uniform();
        t.noise = config.noise_sd * rng.normal();
        t.continuous = scale(t.latent + t.noise) + t.score_bias;
        r.global_score = round_score(t.continuous);
        t.valence = std::clamp(scale(t.latent) + t.text_bias, 0.0, static_cast<double>(kMaxScore));

        // Each fragment comes from the band below or above the valence, in proportion
        // to how close the valence is to each, so the expected band equals the valence.
        const std::size_t fragments = 2 + static_cast<std::size_t>(rng.below(3));
        const std::size_t lower = static_cast<std::size_t>(std::floor(t.valence));
        const double frac = t.valence - static_cast<double>(lower);
        std::vector<std::string> sentences;
        for (std::size_t f = 0; f < fragments; ++f) {
            std::size_t band = std::min<std::size_t>(lower + (rng.uniform() < frac ? 1 : 0), kMaxScore);
            const auto& pool = bank.bands[band];
            sentences.push_back(render(pool[rng.below(pool.size())], r.student_gender));
        }
        if (!bank.neutral.empty()) {
            const bool add_neutral = rng.uniform() < 0.5;
            const std::size_t pick = static_cast<std::size_t>(rng.below(bank.neutral.size()));
            const std::size_t where = static_cast<std::size_t>(rng.below(sentences.size() + 1));
            if (add_neutral)
                sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(where),
                                 render(bank.neutral[pick], r.student_gender));
        }
        std::string comment;
        for (const auto& s : sentences) {
            if (!comment.empty()) comment += ' ';
            comment += sentence_case(s) + '.';
        }
        r.comment = std::move(comment);
        records.push_back(std::move(r));
        truth.push_back(std::move(t));
    }

    for (std::size_t k = 0; k < config.injections.size(); ++k) {
        const auto& inj = config.injections[k];
        std::vector<std::string> phrases = inj.phrases;
        if (phrases.empty()) {
            auto it = bank.theme_phrases.find(inj.name);
            if (it == bank.theme_phrases.end())
                throw ValidationError("no phrases for injected theme '" + inj.name + "'");
            phrases = it->second;
        }
        Rng inj_rng(derive_seed(config.seed, 2 + k));
        std::unordered_map<std::string, std::size_t> row_of;
        for (std::size_t i = 0; i < truth.size(); ++i) row_of.emplace(truth[i].id, i);
        for (const auto& id : inject_theme(records, inj, phrases, inj_rng)) truth[row_of.at(id)].injected.push_back(inj.name);
    }

    Provenance prov{"synth:seed=" + std::to_string(config.seed), std::chrono::system_clock::now()};
    return SynthCorpus{Dataset(std::move(records), std::move(prov)), std::move(truth)};
}

std::string truth_to_jsonl(const std::vector<TruthRecord>& truth) {
    std::string out;
    for (const auto& t : truth) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["latent"] = t.latent;
        j["noise"] = t.noise;
        j["continuous_score"] = t.continuous;
        j["valence"] = t.valence;
        j["score_bias"] = t.score_bias;
        j["text_bias"] = t.text_bias;
        j["injected"] = t.injected;
        out += j.dump();
        out += '\n';
    }
    return out;
}

PowerResult power_experiment(const SynthConfig& config, std::size_t n_seeds, double alpha,
                             const PipelineOptions& pipeline) {
    if (n_seeds < 1) throw ValidationError("power experiment needs at least one seed");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1)");
    PowerResult out;
    std::size_t rejected = 0;
    const Dimension student[] = {Dimension::Student};
    for (std::size_t s = 0; s < n_seeds; ++s) {
        SynthConfig c = config;
        c.seed = config.seed + s;
        const SynthCorpus corpus = generate(c);
        PipelineOptions opts = pipeline;
        opts.seed = c.seed;
        const PipelineRun run = run_residual_pipeline(corpus.dataset, opts);
        const auto grouped = group_residuals(run.residuals, run.dataset, student);

        SeedOutcome o;
        o.seed = c.seed;
        const ResidualSet* m = nullptr;
        const ResidualSet* f = nullptr;
        for (const auto& g : grouped.groups) {
            (g.group.parts.front().second == GroupLabel::M ? m : f) = &g;
        }
        if (!m || !f || m->n() < 2 || f->n() < 2) {
            o.degenerate = true;
        } else {
            const auto cmp = compare_two(*m, *f);
            o.mean_difference = cmp.mean_difference;
            o.degenerate = cmp.test.degenerate;
            o.p_value = cmp.test.p_value;
            o.rejected = !o.degenerate && cmp.test.p_value < alpha;
        }
        rejected += o.rejected ? 1 : 0;
        out.seeds.push_back(o);
    }
    out.rate = static_cast<double>(rejected) / static_cast<double>(n_seeds);
    out.standard_error = std::sqrt(out.rate * (1.0 - out.rate) / static_cast<double>(n_seeds));
    return out;
}

}  // namespace biasaudit
