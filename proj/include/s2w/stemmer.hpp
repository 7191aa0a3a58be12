#pragma once

#include <string>

namespace s2w {

// Porter stemming algorithm (the classic 1980 definition, steps 1a-5b).
// Input is expected lowercased; non-alphabetic tokens pass through.
std::string porter_stem(const std::string& word);

}  // namespace s2w
