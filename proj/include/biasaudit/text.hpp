#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace biasaudit {

/// Lowercased maximal runs of letters, digits and apostrophes. Bytes outside
/// ASCII are treated as letters so UTF-8 words stay whole.
std::vector<std::string> tokenize(std::string_view text);

std::string to_lower_ascii(std::string_view text);

/// Collapses whitespace runs to single spaces and trims both ends.
std::string normalize_whitespace(std::string_view text);

std::size_t count_words(std::string_view text);

std::string trim(std::string_view text);

}  // namespace biasaudit
