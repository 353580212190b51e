#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "biasaudit/ingest.hpp"
#include "biasaudit/stats.hpp"

namespace biasaudit {

/// A dictionary entry: one or more words, the last of which may end in '*'
/// to match any token with that prefix.
class TermPattern {
public:
    static TermPattern parse(std::string_view text);

    const std::string& text() const noexcept { return text_; }
    /// True if the pattern occurs at `tokens[pos]`.
    bool matches_at(std::span<const std::string> tokens, std::size_t pos) const;

private:
    std::string text_;
    std::vector<std::string> words_;
    bool prefix_ = false;  // last word is a prefix
};

struct Theme {
    std::string name;
    std::vector<TermPattern> patterns;
    std::vector<std::string> examples;  // shown in reports; defaults to the first three terms
};

struct ThemeLexicon {
    std::vector<Theme> themes;
};

/// JSON {"themes": [{"name": ..., "terms": [...], "examples": [...]?}, ...]}.
ThemeLexicon parse_lexicon(std::string_view json_text);
ThemeLexicon load_lexicon(const std::filesystem::path& path);

/// Path of the bundled 16-theme lexicon.
std::filesystem::path default_lexicon_path();

/// 1 if any pattern occurs in the tokenized comment, else 0.
int code_comment(std::string_view comment, std::span<const TermPattern> theme);

struct GroupPair {
    GroupLabel first = GroupLabel::M;
    GroupLabel second = GroupLabel::F;
};

/// Rows are (M, F), columns (theme present, absent). Unspecified records are skipped.
/// Both labels must have at least one record.
ContingencyTable2x2 theme_contingency(std::span<const EvaluationRecord> records,
                                      std::span<const TermPattern> theme, Dimension dimension);

struct ThemeResult {
    std::string theme;
    std::vector<std::string> examples;
    ContingencyTable2x2 counts;
    std::size_t first_n = 0;
    std::size_t second_n = 0;
    double first_percent = 0.0;
    double second_percent = 0.0;
    OddsRatio odds;
    double p_raw = 1.0;
    double p_corrected = 1.0;
};

/// Fisher test per theme with Holm correction across every theme in the lexicon.
std::vector<ThemeResult> audit_themes(std::span<const EvaluationRecord> records,
                                      const ThemeLexicon& lexicon, Dimension dimension);

}  // namespace biasaudit
