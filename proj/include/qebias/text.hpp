#pragma once
// Tokenization shared by edit validation, BLEU and gender word matching.

#include <string>
#include <string_view>
#include <vector>

namespace qebias {

using Tokens = std::vector<std::string>;

// Splits UTF-8 text on Unicode whitespace and emits every punctuation
// code point as its own token. Case is preserved. Invalid UTF-8 bytes are
// treated as ordinary word characters so the function never throws.
Tokens tokenize(std::string_view text);

// Simple case folding for ASCII and the Latin-1/Latin Extended-A and
// Greek/Cyrillic basic blocks. Used for the optional case-insensitive
// word matching; everything else passes through unchanged.
std::string fold_case(std::string_view text);

bool is_unicode_whitespace(char32_t cp);
bool is_unicode_punctuation(char32_t cp);

}  // namespace qebias
