#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "biasaudit/ingest.hpp"

namespace biasaudit {

/// Half-open range [start, end) in code points.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
};

struct MaskPlan {
    enum class Source { Gazetteer, ExternalAnnotation };
    std::vector<Span> spans;  // sorted, non-overlapping
    Source source = Source::ExternalAnnotation;
};

/// Case-insensitive whole-token name list. Multi-word terms match as a unit.
class Gazetteer {
public:
    Gazetteer() = default;
    explicit Gazetteer(std::vector<std::string> terms);

    static Gazetteer load(const std::filesystem::path& path);

    /// Spans of every term occurrence in `text`; longest match wins where terms overlap.
    MaskPlan plan(std::string_view text) const;
    bool empty() const noexcept { return terms_.empty(); }

private:
    std::vector<std::string> terms_;  // lowercased, longest first
};

/// Span annotation file: JSONL of {"id": ..., "spans": [[start, end], ...]}.
std::map<std::string, std::vector<Span>> load_span_annotations(const std::filesystem::path& path);

std::size_t code_point_count(std::string_view utf8);

/// Replaces every span with "x" and normalizes whitespace. Overlapping spans are
/// merged; a span past the end of the text throws ValidationError.
std::string mask_entities(std::string_view text, std::vector<Span> spans);
std::string mask_entities(std::string_view text, const Gazetteer& gazetteer);

/// he/she -> they, him -> them, his -> their/theirs, her -> their/them,
/// hers -> theirs, himself/herself -> themself. Output is lowercase.
///
/// "her" and "his" read as determiners when the next token (separated only by
/// whitespace) is alphabetic and not in a short list of verbs and function
/// words; otherwise "her" is an object and "his" a standalone pronoun. The rule
/// is a heuristic and misreads some constructions.
std::string neutralize_pronouns(std::string_view text);

/// The gendered surface forms neutralize_pronouns rewrites.
const std::vector<std::string>& gendered_forms();

struct MaskSource {
    const Gazetteer* gazetteer = nullptr;
    const std::vector<Span>* spans = nullptr;  // external annotation for this record
};

/// comment := lowercase(neutralize_pronouns(mask_entities(comment))). Throws
/// ValidationError when nothing is left of the comment.
EvaluationRecord preprocess(const EvaluationRecord& record, MaskSource masks = {});

}  // namespace biasaudit
