#pragma once

#include <string>
#include <string_view>

namespace udkit::utf8 {

// Throws std::invalid_argument on malformed input.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);
std::string encode(char32_t ch);

}  // namespace udkit::utf8
