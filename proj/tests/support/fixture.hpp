#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "s2w/corpus.hpp"

namespace s2w::testing {

// Deterministic synthetic dataset written in the on-disk layout the loader
// expects (hierarchies/, screenshots/, summaries.csv, sfa.csv,
// app_details.csv, split lists). Expected statistics are accumulated by the
// generator itself with plain arithmetic, independent of the library code
// under test.
struct FixtureOptions {
  int num_apps = 10;
  int screens_per_app = 5;
  int summaries_per_screen = 5;
  int screen_width = 144;
  int screen_height = 256;
  bool with_sfa = true;
  bool with_app_details = true;
  bool append_stop_phrases = true;
  std::uint64_t seed = 7;
};

struct FixtureInfo {
  std::string root;
  std::string summaries_csv;
  std::string app_details_csv;
  std::string glove_path;
  std::vector<std::string> screen_ids;
  std::vector<std::string> app_ids;

  // Expected statistics, by construction.
  std::size_t expected_screens = 0;
  std::size_t expected_summaries = 0;
  std::size_t expected_apps = 0;
  std::map<s2w::Split, s2w::SplitStats> expected_split_stats;
  double expected_mean_summary_length = 0.0;  // post stop-phrase removal
  double expected_sfa_coverage = 0.0;
  double expected_sfa_mean_iou = 0.0;
  std::size_t expected_sfa_boxes = 0;

  // Raw summary strings as written, per screen id (file order).
  std::map<std::string, std::vector<std::string>> summaries;
};

// The standard 50-screen fixture (10 apps x 5 screens, 5 summaries each).
FixtureInfo write_standard_fixture(const std::string& dir,
                                   const FixtureOptions& options = {});

// 10 screens, one summary each, strongly distinguishable features; used by
// training overfit checks. All apps are placed in the train split.
FixtureInfo write_overfit_fixture(const std::string& dir);

// Small word-vector file covering the fixture vocabulary.
void write_glove_fixture(const std::string& path, int dim,
                         const std::vector<std::string>& extra_tokens,
                         std::uint64_t seed);

// All words the fixtures draw from (element texts, summaries, descriptions).
const std::vector<std::string>& fixture_word_pool();

// Creates a unique scratch directory under the system temp dir.
std::string make_temp_dir(const std::string& hint);

}  // namespace s2w::testing
