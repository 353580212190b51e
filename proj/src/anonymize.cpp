#include "biasaudit/anonymize.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "biasaudit/errors.hpp"
#include "biasaudit/fileio.hpp"
#include "biasaudit/text.hpp"

namespace biasaudit {
namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' ||
           c >= 0x80;
}

bool is_alpha(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

// Byte offset of each code point start, plus the total length.
std::vector<std::size_t> code_point_offsets(std::string_view utf8) {
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < utf8.size(); ++i) {
        if ((static_cast<unsigned char>(utf8[i]) & 0xC0) != 0x80) offsets.push_back(i);
    }
    offsets.push_back(utf8.size());
    return offsets;
}

std::size_t byte_to_code_point(const std::vector<std::size_t>& offsets, std::size_t byte) {
    return static_cast<std::size_t>(std::lower_bound(offsets.begin(), offsets.end(), byte) - offsets.begin());
}

// Tokens after which "her"/"his" is read as an object or standalone pronoun.
const std::set<std::string, std::less<>>& non_noun_followers() {
    static const std::set<std::string, std::less<>> words{
        "a", "about", "after", "again", "also", "am", "an", "and", "are", "as", "at", "be", "because",
        "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "down", "during",
        "feel", "for", "from", "get", "go", "had", "has", "have", "here", "how", "if", "in", "into", "is",
        "it", "know", "learn", "less", "let", "make", "may", "might", "more", "most", "must", "nor", "not",
        "now", "of", "off", "on", "or", "out", "over", "see", "shall", "should", "since", "so", "than",
        "that", "the", "then", "there", "these", "this", "those", "through", "to", "today", "tomorrow",
        "tonight", "too", "up", "very", "was", "well", "were", "what", "when", "where", "which", "while",
        "who", "whom", "why", "will", "with", "without", "would", "yesterday", "yet"};
    return words;
}

}  // namespace

std::size_t code_point_count(std::string_view utf8) { return code_point_offsets(utf8).size() - 1; }

Gazetteer::Gazetteer(std::vector<std::string> terms) {
    for (auto& t : terms) {
        std::string norm = to_lower_ascii(normalize_whitespace(t));
        if (!norm.empty()) terms_.push_back(std::move(norm));
    }
    std::sort(terms_.begin(), terms_.end(), [](const std::string& a, const std::string& b) {
        return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
    terms_.erase(std::unique(terms_.begin(), terms_.end()), terms_.end());
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::vector<std::string> terms;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) nl = content.size();
        std::string line = trim(std::string_view(content).substr(pos, nl - pos));
        if (!line.empty() && line.front() != '#') terms.push_back(std::move(line));
        pos = nl + 1;
    }
    return Gazetteer(std::move(terms));
}

MaskPlan Gazetteer::plan(std::string_view text) const {
    MaskPlan plan;
    plan.source = MaskPlan::Source::Gazetteer;
    const std::string lower = to_lower_ascii(text);
    std::vector<std::pair<std::size_t, std::size_t>> taken;  // byte ranges
    for (const std::string& term : terms_) {  // longest first
        std::size_t pos = 0;
        while ((pos = lower.find(term, pos)) != std::string::npos) {
            const std::size_t end = pos + term.size();
            const bool left_ok = pos == 0 || !is_word_byte(static_cast<unsigned char>(term.front())) ||
                                 !is_word_byte(static_cast<unsigned char>(lower[pos - 1]));
            const bool right_ok = end == lower.size() || !is_word_byte(static_cast<unsigned char>(term.back())) ||
                                  !is_word_byte(static_cast<unsigned char>(lower[end]));
            const bool overlaps = std::any_of(taken.begin(), taken.end(), [&](const auto& r) {
                return pos < r.second && r.first < end;
            });
            if (left_ok && right_ok && !overlaps) taken.emplace_back(pos, end);
            pos += 1;
        }
    }
    std::sort(taken.begin(), taken.end());
    const auto offsets = code_point_offsets(text);
    for (const auto& [b, e] : taken)
        plan.spans.push_back({byte_to_code_point(offsets, b), byte_to_code_point(offsets, e)});
    return plan;
}

std::map<std::string, std::vector<Span>> load_span_annotations(const std::filesystem::path& path) {
    const std::string content = read_file(path);
    std::map<std::string, std::vector<Span>> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) nl = content.size();
        std::string_view line = std::string_view(content).substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            std::vector<Span> spans;
            for (const auto& s : j.at("spans")) {
                const long long start = s.at(0).get<long long>();
                const long long end = s.at(1).get<long long>();
                if (start < 0 || end < start)
                    throw ValidationError("span annotation line " + std::to_string(line_no) + ": invalid span");
                spans.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end)});
            }
            auto& dst = out[j.at("id").get<std::string>()];
            dst.insert(dst.end(), spans.begin(), spans.end());
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("span annotation line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string mask_entities(std::string_view text, std::vector<Span> spans) {
    const auto offsets = code_point_offsets(text);
    const std::size_t length = offsets.size() - 1;
    for (const Span& s : spans) {
        if (s.start > s.end || s.end > length)
            throw ValidationError("span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                  ") out of bounds for text of length " + std::to_string(length));
    }
    std::erase_if(spans, [](const Span& s) { return s.start == s.end; });
    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    });
    std::vector<Span> merged;
    for (const Span& s : spans) {
        if (!merged.empty() && s.start < merged.back().end) merged.back().end = std::max(merged.back().end, s.end);
        else merged.push_back(s);
    }
    std::string out(text);
    for (auto it = merged.rbegin(); it != merged.rend(); ++it) {
        const std::size_t b = offsets[it->start];
        const std::size_t e = offsets[it->end];
        out.replace(b, e - b, "x");
    }
    return normalize_whitespace(out);
}

std::string mask_entities(std::string_view text, const Gazetteer& gazetteer) {
    return mask_entities(text, gazetteer.plan(text).spans);
}

const std::vector<std::string>& gendered_forms() {
    static const std::vector<std::string> forms{"he", "she", "him", "his", "her", "hers", "himself", "herself"};
    return forms;
}

std::string neutralize_pronouns(std::string_view text) {
    const std::string lower = to_lower_ascii(text);
    std::string out;
    out.reserve(lower.size() + 16);
    std::size_t i = 0;
    while (i < lower.size()) {
        const auto c = static_cast<unsigned char>(lower[i]);
        if (!is_alpha(c)) {
            out.push_back(lower[i++]);
            continue;
        }
        // Only pure letter runs bounded by non-word bytes are candidates.
        std::size_t end = i;
        while (end < lower.size() && is_alpha(static_cast<unsigned char>(lower[end]))) ++end;
        const bool glued_left = i > 0 && is_word_byte(static_cast<unsigned char>(lower[i - 1])) &&
                                lower[i - 1] != '\'';
        const bool glued_right = end < lower.size() && is_word_byte(static_cast<unsigned char>(lower[end])) &&
                                 lower[end] != '\'';
        const std::string_view word = std::string_view(lower).substr(i, end - i);
        if (glued_left || glued_right) {
            out.append(word);
            i = end;
            continue;
        }
        auto next_is_noun_like = [&] {
            std::size_t j = end;
            if (j >= lower.size() || !is_space(static_cast<unsigned char>(lower[j]))) return false;
            while (j < lower.size() && is_space(static_cast<unsigned char>(lower[j]))) ++j;
            std::size_t k = j;
            while (k < lower.size() && is_alpha(static_cast<unsigned char>(lower[k]))) ++k;
            if (k == j) return false;
            return !non_noun_followers().contains(std::string_view(lower).substr(j, k - j));
        };
        if (word == "he" || word == "she") out += "they";
        else if (word == "him") out += "them";
        else if (word == "hers") out += "theirs";
        else if (word == "himself" || word == "herself") out += "themself";
        else if (word == "his") out += next_is_noun_like() ? "their" : "theirs";
        else if (word == "her") out += next_is_noun_like() ? "their" : "them";
        else out.append(word);
        i = end;
    }
    return out;
}

EvaluationRecord preprocess(const EvaluationRecord& record, MaskSource masks) {
    EvaluationRecord out = record;
    std::string text = masks.spans ? mask_entities(record.comment, *masks.spans) : normalize_whitespace(record.comment);
    if (masks.gazetteer && !masks.gazetteer->empty()) text = mask_entities(text, *masks.gazetteer);
    text = to_lower_ascii(normalize_whitespace(neutralize_pronouns(text)));
    const auto tokens = tokenize(text);
    if (tokens.empty() || std::all_of(tokens.begin(), tokens.end(), [](const std::string& t) { return t == "x"; }))
        throw ValidationError("record '" + record.id + "': comment is empty after masking");
    out.comment = std::move(text);
    return out;
}

}  // namespace biasaudit
