#include "s2w/stemmer.hpp"

#include <cctype>

namespace s2w {

namespace {

bool is_alpha_word(const std::string& w) {
  for (char c : w) {
    if (!std::islower(static_cast<unsigned char>(c))) return false;
  }
  return !w.empty();
}

// A consonant at position i (Porter's definition: y is a consonant when it
// follows a vowel position or starts the word).
bool is_consonant(const std::string& w, int i) {
  const char c = w[static_cast<std::size_t>(i)];
  if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
  if (c == 'y') return i == 0 ? true : !is_consonant(w, i - 1);
  return true;
}

// The measure m: number of VC sequences in the stem.
int measure(const std::string& w) {
  int m = 0;
  int i = 0;
  const int n = static_cast<int>(w.size());
  while (i < n && is_consonant(w, i)) ++i;
  while (i < n) {
    while (i < n && !is_consonant(w, i)) ++i;
    if (i >= n) break;
    ++m;
    while (i < n && is_consonant(w, i)) ++i;
  }
  return m;
}

bool contains_vowel(const std::string& w) {
  for (int i = 0; i < static_cast<int>(w.size()); ++i) {
    if (!is_consonant(w, i)) return true;
  }
  return false;
}

bool double_consonant(const std::string& w) {
  const int n = static_cast<int>(w.size());
  if (n < 2) return false;
  return w[n - 1] == w[n - 2] && is_consonant(w, n - 1);
}

// *o: stem ends cvc where the final c is not w, x or y.
bool cvc_ending(const std::string& w) {
  const int n = static_cast<int>(w.size());
  if (n < 3) return false;
  if (!is_consonant(w, n - 3) || is_consonant(w, n - 2) || !is_consonant(w, n - 1)) {
    return false;
  }
  const char c = w[n - 1];
  return c != 'w' && c != 'x' && c != 'y';
}

bool ends_with(const std::string& w, const std::string& suffix) {
  return w.size() >= suffix.size() &&
         w.compare(w.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string stem_of(const std::string& w, const std::string& suffix) {
  return w.substr(0, w.size() - suffix.size());
}

// Replaces `suffix` by `repl` when the remaining stem has measure > min_m.
bool replace_if_m(std::string& w, const std::string& suffix,
                  const std::string& repl, int min_m) {
  if (!ends_with(w, suffix)) return false;
  const std::string stem = stem_of(w, suffix);
  if (measure(stem) > min_m) w = stem + repl;
  return true;  // suffix matched; no further rules in this group apply
}

}  // namespace

std::string porter_stem(const std::string& word) {
  if (!is_alpha_word(word) || word.size() <= 2) return word;
  std::string w = word;

  // Step 1a
  if (ends_with(w, "sses")) {
    w = stem_of(w, "es");
  } else if (ends_with(w, "ies")) {
    w = stem_of(w, "es");
  } else if (ends_with(w, "ss")) {
    // unchanged
  } else if (ends_with(w, "s")) {
    w = stem_of(w, "s");
  }

  // Step 1b
  bool step1b_fixup = false;
  if (ends_with(w, "eed")) {
    if (measure(stem_of(w, "eed")) > 0) w = stem_of(w, "d");
  } else if (ends_with(w, "ed") && contains_vowel(stem_of(w, "ed"))) {
    w = stem_of(w, "ed");
    step1b_fixup = true;
  } else if (ends_with(w, "ing") && contains_vowel(stem_of(w, "ing"))) {
    w = stem_of(w, "ing");
    step1b_fixup = true;
  }
  if (step1b_fixup) {
    if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
      w += "e";
    } else if (double_consonant(w) && !ends_with(w, "l") && !ends_with(w, "s") &&
               !ends_with(w, "z")) {
      w.pop_back();
    } else if (measure(w) == 1 && cvc_ending(w)) {
      w += "e";
    }
  }

  // Step 1c
  if (ends_with(w, "y") && contains_vowel(stem_of(w, "y"))) {
    w[w.size() - 1] = 'i';
  }

  // Step 2 (m > 0 suffix mappings)
  static const std::pair<const char*, const char*> kStep2[] = {
      {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
      {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
      {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"},
      {"ation", "ate"},   {"ator", "ate"},    {"alism", "al"},  {"iveness", "ive"},
      {"fulness", "ful"}, {"ousness", "ous"}, {"aliti", "al"},  {"iviti", "ive"},
      {"biliti", "ble"},
  };
  for (const auto& [suffix, repl] : kStep2) {
    if (replace_if_m(w, suffix, repl, 0)) break;
  }

  // Step 3 (m > 0)
  static const std::pair<const char*, const char*> kStep3[] = {
      {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
      {"ical", "ic"},  {"ful", ""},   {"ness", ""},
  };
  for (const auto& [suffix, repl] : kStep3) {
    if (replace_if_m(w, suffix, repl, 0)) break;
  }

  // Step 4 (m > 1 deletions)
  static const char* kStep4[] = {
      "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
      "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize",
  };
  bool step4_matched = false;
  for (const char* suffix : kStep4) {
    if (!ends_with(w, suffix)) continue;
    const std::string stem = stem_of(w, suffix);
    if (measure(stem) > 1) {
      w = stem;
    }
    step4_matched = true;
    break;
  }
  // "ion" deletes only after s/t (so -sion/-tion reduce, -nion does not).
  if (!step4_matched && ends_with(w, "ion")) {
    const std::string stem = stem_of(w, "ion");
    if (measure(stem) > 1 && !stem.empty() &&
        (stem.back() == 's' || stem.back() == 't')) {
      w = stem;
    }
  }

  // Step 5a
  if (ends_with(w, "e")) {
    const std::string stem = stem_of(w, "e");
    const int m = measure(stem);
    if (m > 1 || (m == 1 && !cvc_ending(stem))) w = stem;
  }
  // Step 5b
  if (measure(w) > 1 && double_consonant(w) && ends_with(w, "l")) {
    w.pop_back();
  }
  return w;
}

}  // namespace s2w
