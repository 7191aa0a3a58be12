#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "s2w/geometry.hpp"
#include "s2w/view_hierarchy.hpp"

namespace s2w {

enum class Split { kTrain = 0, kValidation = 1, kTest = 2 };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

// A fully ingested screen: hierarchy, screenshot reference, annotations.
struct Screen {
  std::string screen_id;
  std::string app_id;
  UiTree tree;
  std::string screenshot_path;  // relative to the corpus root
  int screenshot_width = 0;
  int screenshot_height = 0;
  std::vector<std::string> summaries;  // 1..5, whitespace-trimmed, non-empty
  std::vector<Rect> sfa_boxes;         // 0..5, clipped to the screenshot
  std::optional<std::string> app_description;
};

struct SplitStats {
  std::size_t apps = 0;
  std::size_t screens = 0;
  std::size_t summaries = 0;
};

class Corpus {
 public:
  std::map<std::string, Screen> screens;          // screen_id -> screen
  std::map<Split, std::set<std::string>> splits;  // split -> app ids
  std::string root_dir;                           // for screenshot access

  bool has_splits() const { return !splits.empty(); }
  std::optional<Split> split_of_app(const std::string& app_id) const;
  std::vector<const Screen*> screens_in(Split split) const;  // sorted by id
  std::set<std::string> app_ids() const;
  std::size_t summary_count() const;
  SplitStats stats(Split split) const;

  std::string screenshot_abs_path(const Screen& screen) const;
};

struct LoadReport {
  struct Skip {
    std::string screen_id;
    std::string reason;
  };
  std::size_t screens_loaded = 0;
  std::size_t summaries_loaded = 0;
  std::vector<Skip> skipped;
  std::size_t sfa_boxes_clipped = 0;
  std::size_t empty_summaries_dropped = 0;
  std::size_t extra_summaries_dropped = 0;
};

// Loads every screen referenced by the summaries CSV. Screens missing their
// hierarchy or screenshot are recorded in the report and skipped, not fatal.
// `app_details_file` may be empty.
Corpus load_corpus(const std::string& root_dir,
                   const std::string& summaries_file,
                   const std::string& app_details_file,
                   LoadReport* report = nullptr);

// Populates corpus.splits from app-id lists. Throws DataError when an app
// appears in two lists or a corpus app is not covered.
void assign_splits(Corpus& corpus,
                   const std::map<Split, std::vector<std::string>>& lists);

// Reads train_apps.txt / val_apps.txt / test_apps.txt (one app id per line).
std::map<Split, std::vector<std::string>> read_split_lists(
    const std::string& dir);

// Removes each stop phrase as a whole-phrase, case-insensitive match and
// collapses surplus whitespace. Total: if removal would empty the summary the
// (collapsed) original is returned and *emptied_flag is set. Idempotent.
std::string strip_stop_phrases(const std::string& summary,
                               const std::vector<std::string>& stop_phrases,
                               bool* emptied_flag = nullptr);

// The default stop-phrase list ("in the app" variants); the list is data, a
// config file can substitute it (one phrase per line, '#' comments).
const std::vector<std::string>& default_stop_phrases();
std::vector<std::string> load_stop_phrases(const std::string& path);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus_file(const std::string& path);

}  // namespace s2w
