#include "biasaudit/lexicon_audit.hpp"

#include <set>

#include "json.hpp"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {

TermPattern TermPattern::parse(std::string_view text) {
    TermPattern p;
    p.text_ = to_lower_ascii(normalize_whitespace(text));
    if (p.text_.empty()) throw ValidationError("empty term pattern");
    const auto star = p.text_.find('*');
    std::string_view body = p.text_;
    if (star != std::string::npos) {
        if (star + 1 != p.text_.size())
            throw ValidationError("term pattern '" + p.text_ + "': '*' is only allowed as the final character");
        body = body.substr(0, star);
        const auto tail = tokenize(body.substr(body.empty() ? 0 : body.size() - 1));
        if (body.empty() || tail.empty())
            throw ValidationError("term pattern '" + p.text_ + "': '*' must follow a word");
        p.prefix_ = true;
    }
    p.words_ = tokenize(body);
    if (p.words_.empty()) throw ValidationError("term pattern '" + p.text_ + "' contains no word");
    return p;
}

bool TermPattern::matches_at(std::span<const std::string> tokens, std::size_t pos) const {
    if (pos + words_.size() > tokens.size()) return false;
    for (std::size_t k = 0; k + 1 < words_.size(); ++k) {
        if (tokens[pos + k] != words_[k]) return false;
    }
    const std::string& last = tokens[pos + words_.size() - 1];
    return prefix_ ? last.starts_with(words_.back()) : last == words_.back();
}

ThemeLexicon parse_lexicon(std::string_view json_text) {
    ThemeLexicon lex;
    std::set<std::string> names;
    try {
        const auto j = nlohmann::json::parse(json_text);
        for (const auto& t : j.at("themes")) {
            Theme theme;
            theme.name = t.at("name").get<std::string>();
            if (trim(theme.name).empty()) throw ValidationError("theme with an empty name");
            if (!names.insert(theme.name).second) throw ValidationError("duplicate theme '" + theme.name + "'");
            for (const auto& term : t.at("terms")) theme.patterns.push_back(TermPattern::parse(term.get<std::string>()));
            if (theme.patterns.empty()) throw ValidationError("theme '" + theme.name + "' has no terms");
            if (t.contains("examples")) {
                theme.examples = t["examples"].get<std::vector<std::string>>();
            } else {
                for (std::size_t k = 0; k < theme.patterns.size() && k < 3; ++k)
                    theme.examples.push_back(theme.patterns[k].text());
            }
            lex.themes.push_back(std::move(theme));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed lexicon: ") + e.what());
    }
    return lex;
}

ThemeLexicon load_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file(path)); }

std::filesystem::path default_lexicon_path() {
    return std::filesystem::path(BIASAUDIT_DATA_DIR) / "lexicon" / "default_themes.json";
}

namespace {

bool any_match(std::span<const std::string> tokens, std::span<const TermPattern> theme) {
    for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
        for (const auto& p : theme) {
            if (p.matches_at(tokens, pos)) return true;
        }
    }
    return false;
}

struct Coded {
    GroupLabel label;
    std::vector<std::string> tokens;
};

std::vector<Coded> tokenize_records(std::span<const EvaluationRecord> records, Dimension dimension) {
    std::vector<Coded> out;
    out.reserve(records.size());
    std::size_t first = 0, second = 0;
    for (const auto& r : records) {
        const GroupLabel label = r.label(dimension);
        if (label == GroupLabel::Unspecified) continue;
        (label == GroupLabel::M ? first : second) += 1;
        out.push_back({label, tokenize(r.comment)});
    }
    if (first == 0 || second == 0)
        throw ValidationError("theme comparison on " + std::string(to_string(dimension)) +
                              " needs records labelled both M and F");
    return out;
}

ContingencyTable2x2 contingency(const std::vector<Coded>& coded, std::span<const TermPattern> theme) {
    ContingencyTable2x2 t;
    for (const auto& c : coded) {
        const bool hit = any_match(c.tokens, theme);
        if (c.label == GroupLabel::M) (hit ? t.a : t.b) += 1;
        else (hit ? t.c : t.d) += 1;
    }
    return t;
}

}  // namespace

int code_comment(std::string_view comment, std::span<const TermPattern> theme) {
    const auto tokens = tokenize(comment);
    return any_match(tokens, theme) ? 1 : 0;
}

ContingencyTable2x2 theme_contingency(std::span<const EvaluationRecord> records, std::span<const TermPattern> theme,
                                      Dimension dimension) {
    return contingency(tokenize_records(records, dimension), theme);
}

std::vector<ThemeResult> audit_themes(std::span<const EvaluationRecord> records, const ThemeLexicon& lexicon,
                                      Dimension dimension) {
    if (lexicon.themes.empty()) throw ValidationError("lexicon has no themes");
    const auto coded = tokenize_records(records, dimension);
    std::vector<ThemeResult> results;
    std::vector<double> raw;
    for (const auto& theme : lexicon.themes) {
        ThemeResult r;
        r.theme = theme.name;
        r.examples = theme.examples;
        r.counts = contingency(coded, theme.patterns);
        r.first_n = r.counts.a + r.counts.b;
        r.second_n = r.counts.c + r.counts.d;
        r.first_percent = 100.0 * static_cast<double>(r.counts.a) / static_cast<double>(r.first_n);
        r.second_percent = 100.0 * static_cast<double>(r.counts.c) / static_cast<double>(r.second_n);
        r.odds = odds_ratio(r.counts);
        r.p_raw = fisher_exact_two_sided(r.counts);
        raw.push_back(r.p_raw);
        results.push_back(std::move(r));
    }
    const auto corrected = holm_bonferroni(raw);
    for (std::size_t k = 0; k < results.size(); ++k) results[k].p_corrected = corrected[k];
    return results;
}

}  // namespace biasaudit
