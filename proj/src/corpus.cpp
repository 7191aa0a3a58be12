#include "s2w/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2w/csv.hpp"
#include "s2w/errors.hpp"
#include "s2w/image.hpp"
#include "s2w/log.hpp"
#include "s2w/serialize.hpp"

namespace fs = std::filesystem;

namespace s2w {

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation" || name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split name: " + name);
}

std::optional<Split> Corpus::split_of_app(const std::string& app_id) const {
  for (const auto& [split, apps] : splits) {
    if (apps.count(app_id)) return split;
  }
  return std::nullopt;
}

std::vector<const Screen*> Corpus::screens_in(Split split) const {
  std::vector<const Screen*> out;
  auto it = splits.find(split);
  if (it == splits.end()) return out;
  for (const auto& [id, screen] : screens) {
    if (it->second.count(screen.app_id)) out.push_back(&screen);
  }
  return out;
}

std::set<std::string> Corpus::app_ids() const {
  std::set<std::string> ids;
  for (const auto& [id, screen] : screens) ids.insert(screen.app_id);
  return ids;
}

std::size_t Corpus::summary_count() const {
  std::size_t n = 0;
  for (const auto& [id, screen] : screens) n += screen.summaries.size();
  return n;
}

SplitStats Corpus::stats(Split split) const {
  SplitStats stats;
  std::set<std::string> apps;
  for (const Screen* screen : screens_in(split)) {
    apps.insert(screen->app_id);
    stats.screens += 1;
    stats.summaries += screen->summaries.size();
  }
  stats.apps = apps.size();
  return stats;
}

std::string Corpus::screenshot_abs_path(const Screen& screen) const {
  if (root_dir.empty()) return screen.screenshot_path;
  return (fs::path(root_dir) / screen.screenshot_path).string();
}

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool in_space = true;  // swallows leading whitespace
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
    } else {
      if (in_space && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_space = false;
    }
  }
  return out;
}

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// One removal pass over all phrases; returns whether anything changed.
bool remove_phrases_once(std::string& text,
                         const std::vector<std::string>& phrases_lower) {
  bool changed = false;
  for (const std::string& phrase : phrases_lower) {
    if (phrase.empty()) continue;
    std::string lower = ascii_lower(text);
    std::string rebuilt;
    std::size_t pos = 0;
    while (pos < text.size()) {
      const std::size_t hit = lower.find(phrase, pos);
      if (hit == std::string::npos) {
        rebuilt.append(text, pos, text.size() - pos);
        break;
      }
      const bool left_ok = hit == 0 || !is_word_char(lower[hit - 1]);
      const std::size_t after = hit + phrase.size();
      const bool right_ok = after >= lower.size() || !is_word_char(lower[after]);
      if (left_ok && right_ok) {
        rebuilt.append(text, pos, hit - pos);
        rebuilt.push_back(' ');
        pos = after;
        changed = true;
      } else {
        rebuilt.append(text, pos, hit + 1 - pos);
        pos = hit + 1;
      }
    }
    text = rebuilt;
  }
  return changed;
}

std::map<std::string, std::string> read_app_details(const std::string& path) {
  std::map<std::string, std::string> details;
  if (path.empty()) return details;
  auto rows = read_csv_file(path);
  if (rows.empty()) return details;
  if (rows[0].size() < 2 || trim(rows[0][0]) != "appId" ||
      trim(rows[0][1]) != "description") {
    throw SchemaError("app details CSV must have header appId,description: " +
                      path);
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 2) continue;
    const std::string app_id = trim(rows[i][0]);
    if (app_id.empty()) continue;
    details.emplace(app_id, rows[i][1]);
  }
  return details;
}

struct SfaRow {
  int labeler = 0;
  Rect box;
};

std::map<std::string, std::vector<SfaRow>> read_sfa(const std::string& path) {
  std::map<std::string, std::vector<SfaRow>> sfa;
  if (!fs::exists(path)) return sfa;
  auto rows = read_csv_file(path);
  if (rows.empty()) return sfa;
  const std::vector<std::string> expect = {"screenId", "labelerIndex", "left",
                                           "top",      "right",        "bottom"};
  if (rows[0].size() < expect.size()) {
    throw SchemaError("sfa CSV header must be screenId,labelerIndex,left,top,right,bottom");
  }
  for (std::size_t c = 0; c < expect.size(); ++c) {
    if (trim(rows[0][c]) != expect[c]) {
      throw SchemaError("sfa CSV header must be screenId,labelerIndex,left,top,right,bottom");
    }
  }
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() < 6) continue;
    try {
      SfaRow row;
      row.labeler = std::stoi(rows[i][1]);
      row.box = Rect{std::stoi(rows[i][2]), std::stoi(rows[i][3]),
                     std::stoi(rows[i][4]), std::stoi(rows[i][5])}
                    .normalized();
      sfa[trim(rows[i][0])].push_back(row);
    } catch (const std::exception&) {
      throw ParseError("sfa CSV: bad numeric field at data row " +
                       std::to_string(i));
    }
  }
  return sfa;
}

std::string find_screenshot(const fs::path& dir, const std::string& screen_id) {
  for (const char* ext : {".jpg", ".png", ".jpeg"}) {
    fs::path candidate = dir / (screen_id + ext);
    if (fs::exists(candidate)) return candidate.string();
  }
  return {};
}

}  // namespace

std::string strip_stop_phrases(const std::string& summary,
                               const std::vector<std::string>& stop_phrases,
                               bool* emptied_flag) {
  if (emptied_flag) *emptied_flag = false;
  std::vector<std::string> phrases_lower;
  phrases_lower.reserve(stop_phrases.size());
  for (const auto& p : stop_phrases) phrases_lower.push_back(ascii_lower(collapse_whitespace(p)));

  std::string text = collapse_whitespace(summary);
  const std::string original = text;
  // Removal can create new adjacencies that form a stop phrase, so iterate
  // to a fixpoint; each pass strictly shrinks the string.
  for (std::size_t pass = 0; pass <= summary.size(); ++pass) {
    std::string before = text;
    remove_phrases_once(text, phrases_lower);
    text = collapse_whitespace(text);
    if (text == before) break;
  }
  if (text.empty() && !original.empty()) {
    if (emptied_flag) *emptied_flag = true;
    return original;
  }
  return text;
}

const std::vector<std::string>& default_stop_phrases() {
  static const std::vector<std::string> phrases = {
      "in the app",  "in this app", "in an app", "in a app",
      "of the app",  "of this app", "on the app", "on this app",
  };
  return phrases;
}

std::vector<std::string> load_stop_phrases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stop-phrase file: " + path);
  std::vector<std::string> phrases;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    phrases.push_back(t);
  }
  return phrases;
}

Corpus load_corpus(const std::string& root_dir,
                   const std::string& summaries_file,
                   const std::string& app_details_file, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;

  auto rows = read_csv_file(summaries_file);
  if (!rows.empty()) {
    if (rows[0].size() < 2 || trim(rows[0][0]) != "screenId" ||
        trim(rows[0][1]) != "summary") {
      throw SchemaError("summaries CSV must have header screenId,summary: " +
                        summaries_file);
    }
  }
  // screen id -> summaries in file order
  std::map<std::string, std::vector<std::string>> by_screen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty() || (rows[i].size() == 1 && trim(rows[i][0]).empty())) continue;
    if (rows[i].size() < 2) {
      throw SchemaError("summaries CSV row " + std::to_string(i) +
                        " has fewer than 2 fields");
    }
    const std::string screen_id = trim(rows[i][0]);
    const std::string summary = trim(rows[i][1]);
    if (screen_id.empty()) continue;
    if (summary.empty()) {
      rep.empty_summaries_dropped += 1;
      by_screen[screen_id];  // the screen stays referenced
      continue;
    }
    by_screen[screen_id].push_back(summary);
  }

  const auto app_details = read_app_details(app_details_file);
  const auto sfa = read_sfa((fs::path(root_dir) / "sfa.csv").string());

  Corpus corpus;
  corpus.root_dir = root_dir;
  const fs::path hier_dir = fs::path(root_dir) / "hierarchies";
  const fs::path shot_dir = fs::path(root_dir) / "screenshots";

  for (const auto& [screen_id, summaries] : by_screen) {
    const fs::path hier_path = hier_dir / (screen_id + ".json");
    if (!fs::exists(hier_path)) {
      rep.skipped.push_back({screen_id, "missing hierarchy file"});
      continue;
    }
    Screen screen;
    screen.screen_id = screen_id;
    try {
      std::ifstream in(hier_path);
      std::ostringstream buf;
      buf << in.rdbuf();
      screen.tree = parse_view_hierarchy(buf.str());
    } catch (const Error& e) {
      rep.skipped.push_back({screen_id, std::string("hierarchy: ") + e.what()});
      continue;
    }
    if (screen.tree.size() == 0) {
      rep.skipped.push_back({screen_id, "zero parseable elements"});
      continue;
    }

    const std::string shot = find_screenshot(shot_dir, screen_id);
    if (shot.empty()) {
      rep.skipped.push_back({screen_id, "missing screenshot"});
      continue;
    }
    const auto dims = probe_image_dims(shot);
    if (!dims) {
      rep.skipped.push_back({screen_id, "unreadable screenshot"});
      continue;
    }
    screen.screenshot_path = fs::relative(shot, root_dir).string();
    screen.screenshot_width = dims->first;
    screen.screenshot_height = dims->second;

    screen.summaries = summaries;
    if (screen.summaries.empty()) {
      rep.skipped.push_back({screen_id, "no non-empty summaries"});
      continue;
    }
    if (screen.summaries.size() > 5) {
      rep.extra_summaries_dropped += screen.summaries.size() - 5;
      screen.summaries.resize(5);
    }

    screen.app_id = screen.tree.package_name();
    if (screen.app_id.empty()) screen.app_id = "unknown." + screen_id;
    if (auto it = app_details.find(screen.app_id); it != app_details.end()) {
      screen.app_description = it->second;
    }

    if (auto it = sfa.find(screen_id); it != sfa.end()) {
      std::vector<SfaRow> boxes = it->second;
      std::stable_sort(boxes.begin(), boxes.end(),
                       [](const SfaRow& a, const SfaRow& b) {
                         return a.labeler < b.labeler;
                       });
      const Rect screen_rect{0, 0, screen.screenshot_width,
                             screen.screenshot_height};
      for (const SfaRow& row : boxes) {
        if (screen.sfa_boxes.size() >= 5) break;
        const Rect clipped = intersect(row.box, screen_rect);
        if (clipped != row.box) rep.sfa_boxes_clipped += 1;
        screen.sfa_boxes.push_back(clipped);
      }
    }

    rep.summaries_loaded += screen.summaries.size();
    corpus.screens.emplace(screen_id, std::move(screen));
  }
  rep.screens_loaded = corpus.screens.size();
  if (!rep.skipped.empty()) {
    log_warn("load_corpus: skipped " + std::to_string(rep.skipped.size()) +
             " screen(s); first: " + rep.skipped.front().screen_id + " (" +
             rep.skipped.front().reason + ")");
  }
  return corpus;
}

void assign_splits(Corpus& corpus,
                   const std::map<Split, std::vector<std::string>>& lists) {
  std::map<std::string, Split> seen;
  std::map<Split, std::set<std::string>> splits;
  for (const auto& [split, apps] : lists) {
    for (const std::string& app : apps) {
      auto [it, inserted] = seen.emplace(app, split);
      if (!inserted) {
        throw DataError("app '" + app + "' appears in both " +
                        split_name(it->second) + " and " + split_name(split) +
                        " split lists");
      }
      splits[split].insert(app);
    }
  }
  for (const auto& [id, screen] : corpus.screens) {
    if (!seen.count(screen.app_id)) {
      throw DataError("app '" + screen.app_id +
                      "' (screen " + id + ") is not covered by any split list");
    }
  }
  corpus.splits = std::move(splits);
}

std::map<Split, std::vector<std::string>> read_split_lists(
    const std::string& dir) {
  const std::map<Split, std::string> files = {
      {Split::kTrain, "train_apps.txt"},
      {Split::kValidation, "val_apps.txt"},
      {Split::kTest, "test_apps.txt"},
  };
  std::map<Split, std::vector<std::string>> lists;
  for (const auto& [split, name] : files) {
    const fs::path path = fs::path(dir) / name;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open split list: " + path.string());
    std::string line;
    while (std::getline(in, line)) {
      const std::string app = trim(line);
      if (!app.empty()) lists[split].push_back(app);
    }
    lists[split];  // present even when empty
  }
  return lists;
}

namespace {

void write_tree(BinaryWriter& w, const UiTree& tree) {
  w.str(tree.activity_name);
  w.i32(tree.root_id);
  w.u64(tree.nodes.size());
  for (const UiElement& el : tree.nodes) {
    w.i32(el.node_id);
    w.str(el.class_name);
    w.u8(el.clickable ? 1 : 0);
    w.u8(el.visible_to_user ? 1 : 0);
    w.i32(el.bounds.left);
    w.i32(el.bounds.top);
    w.i32(el.bounds.right);
    w.i32(el.bounds.bottom);
    w.u8(el.text ? 1 : 0);
    if (el.text) w.str(*el.text);
    w.i32_vec(el.children);
    w.i32(el.pre_order);
    w.i32(el.post_order);
    w.i32(el.depth);
    w.u8(el.degenerate_bounds ? 1 : 0);
  }
}

UiTree read_tree(BinaryReader& r) {
  UiTree tree;
  tree.activity_name = r.str();
  tree.root_id = r.i32();
  tree.nodes.resize(r.u64());
  for (UiElement& el : tree.nodes) {
    el.node_id = r.i32();
    el.class_name = r.str();
    el.clickable = r.u8() != 0;
    el.visible_to_user = r.u8() != 0;
    el.bounds.left = r.i32();
    el.bounds.top = r.i32();
    el.bounds.right = r.i32();
    el.bounds.bottom = r.i32();
    if (r.u8()) el.text = r.str();
    el.children = r.i32_vec();
    el.pre_order = r.i32();
    el.post_order = r.i32();
    el.depth = r.i32();
    el.degenerate_bounds = r.u8() != 0;
  }
  return tree;
}

constexpr char kCorpusMagic[4] = {'S', '2', 'W', 'C'};
constexpr std::uint32_t kCorpusVersion = 1;

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  BinaryWriter w(path);
  w.magic(kCorpusMagic, kCorpusVersion);
  w.str(corpus.root_dir);
  w.u64(corpus.screens.size());
  for (const auto& [id, screen] : corpus.screens) {
    w.str(screen.screen_id);
    w.str(screen.app_id);
    write_tree(w, screen.tree);
    w.str(screen.screenshot_path);
    w.i32(screen.screenshot_width);
    w.i32(screen.screenshot_height);
    w.u64(screen.summaries.size());
    for (const auto& s : screen.summaries) w.str(s);
    w.u64(screen.sfa_boxes.size());
    for (const Rect& b : screen.sfa_boxes) {
      w.i32(b.left);
      w.i32(b.top);
      w.i32(b.right);
      w.i32(b.bottom);
    }
    w.u8(screen.app_description ? 1 : 0);
    if (screen.app_description) w.str(*screen.app_description);
  }
  w.u64(corpus.splits.size());
  for (const auto& [split, apps] : corpus.splits) {
    w.i32(static_cast<int>(split));
    w.u64(apps.size());
    for (const auto& app : apps) w.str(app);
  }
  w.close();
}

Corpus load_corpus_file(const std::string& path) {
  BinaryReader r(path);
  const std::uint32_t version = r.magic(kCorpusMagic);
  if (version != kCorpusVersion) {
    throw SchemaError("unsupported corpus file version " +
                      std::to_string(version) + " in " + path);
  }
  Corpus corpus;
  corpus.root_dir = r.str();
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    Screen screen;
    screen.screen_id = r.str();
    screen.app_id = r.str();
    screen.tree = read_tree(r);
    screen.screenshot_path = r.str();
    screen.screenshot_width = r.i32();
    screen.screenshot_height = r.i32();
    const std::uint64_t ns = r.u64();
    for (std::uint64_t j = 0; j < ns; ++j) screen.summaries.push_back(r.str());
    const std::uint64_t nb = r.u64();
    for (std::uint64_t j = 0; j < nb; ++j) {
      Rect b;
      b.left = r.i32();
      b.top = r.i32();
      b.right = r.i32();
      b.bottom = r.i32();
      screen.sfa_boxes.push_back(b);
    }
    if (r.u8()) screen.app_description = r.str();
    corpus.screens.emplace(screen.screen_id, std::move(screen));
  }
  const std::uint64_t nsplits = r.u64();
  for (std::uint64_t i = 0; i < nsplits; ++i) {
    const Split split = static_cast<Split>(r.i32());
    const std::uint64_t napps = r.u64();
    for (std::uint64_t j = 0; j < napps; ++j) corpus.splits[split].insert(r.str());
  }
  return corpus;
}

}  // namespace s2w
