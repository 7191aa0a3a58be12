#include "support/fixture.hpp"

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "s2w/csv.hpp"
#include "s2w/image.hpp"
#include "s2w/rng.hpp"

namespace fs = std::filesystem;

namespace s2w::testing {

namespace {

const std::vector<std::string> kNouns = {
    "login",   "settings", "search",  "profile", "checkout",
    "gallery", "playlist", "weather", "news",    "calendar",
};
const std::vector<std::string> kObjects = {
    "results", "options", "photos",  "songs",  "articles",
    "events",  "items",   "filters", "fields", "buttons",
};
const std::vector<std::string> kVerbs = {
    "displaying", "showing", "listing", "offering", "presenting",
};
const std::vector<std::string> kKinds = {
    "music", "travel", "shopping", "fitness", "banking",
    "social", "recipe", "learning", "photo",  "podcast",
};
const std::vector<std::string> kClasses = {
    "android.widget.FrameLayout", "android.widget.LinearLayout",
    "android.widget.TextView",    "android.widget.Button",
    "android.widget.ImageView",   "android.widget.RecyclerView",
};

std::string two_digit(int n) {
  std::ostringstream os;
  os << (n < 10 ? "0" : "") << n;
  return os.str();
}

std::string screen_name(int i) {
  std::ostringstream os;
  os << "s" << (i < 100 ? "0" : "") << (i < 10 ? "0" : "") << i;
  return os.str();
}

// Plain rectangle arithmetic, intentionally separate from s2w::iou.
double rect_iou(int al, int at, int ar, int ab, int bl, int bt, int br,
                int bb) {
  const long iw = std::max(0, std::min(ar, br) - std::max(al, bl));
  const long ih = std::max(0, std::min(ab, bb) - std::max(at, bt));
  const double inter = static_cast<double>(iw) * ih;
  const double area_a = static_cast<double>(ar - al) * (ab - at);
  const double area_b = static_cast<double>(br - bl) * (bb - bt);
  const double uni = area_a + area_b - inter;
  return uni <= 0 ? 0.0 : inter / uni;
}

struct NodeSpec {
  std::string cls;
  int bounds[4];
  bool clickable = false;
  bool visible = true;
  std::string text;  // empty = no text
  std::vector<NodeSpec> children;
};

void node_json(std::ostringstream& os, const NodeSpec& node) {
  os << "{\"class\":\"" << node.cls << "\",\"bounds\":[" << node.bounds[0]
     << "," << node.bounds[1] << "," << node.bounds[2] << "," << node.bounds[3]
     << "],\"clickable\":" << (node.clickable ? "true" : "false")
     << ",\"visible-to-user\":" << (node.visible ? "true" : "false");
  if (!node.text.empty()) os << ",\"text\":\"" << node.text << "\"";
  if (!node.children.empty()) {
    os << ",\"children\":[";
    for (std::size_t i = 0; i < node.children.size(); ++i) {
      if (i) os << ",";
      node_json(os, node.children[i]);
    }
    os << "]";
  }
  os << "}";
}

std::string hierarchy_json(const std::string& activity, const NodeSpec& root) {
  std::ostringstream os;
  os << "{\"activity_name\":\"" << activity << "\",\"activity\":{\"root\":";
  node_json(os, root);
  os << "}}";
  return os.str();
}

// Fills element bounds with per-element colors over a dark background.
void paint_screenshot(ImageRgb& img, const NodeSpec& node, int& counter) {
  const int idx = counter++;
  if (node.visible) {
    const std::uint8_t r = static_cast<std::uint8_t>(40 + (idx * 53) % 200);
    const std::uint8_t g = static_cast<std::uint8_t>(40 + (idx * 97) % 200);
    const std::uint8_t b = static_cast<std::uint8_t>(40 + (idx * 151) % 200);
    const int x0 = std::clamp(node.bounds[0], 0, img.width);
    const int x1 = std::clamp(node.bounds[2], 0, img.width);
    const int y0 = std::clamp(node.bounds[1], 0, img.height);
    const int y1 = std::clamp(node.bounds[3], 0, img.height);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        std::uint8_t* px = img.at(x, y);
        px[0] = r;
        px[1] = g;
        px[2] = b;
      }
    }
  }
  for (const NodeSpec& child : node.children) paint_screenshot(img, child, counter);
}

int count_words(const std::string& s) {
  int words = 0;
  bool in_word = false;
  for (char c : s) {
    if (c == ' ') {
      in_word = false;
    } else if (!in_word) {
      ++words;
      in_word = true;
    }
  }
  return words;
}

}  // namespace

const std::vector<std::string>& fixture_word_pool() {
  static const std::vector<std::string> pool = [] {
    std::vector<std::string> words;
    for (const auto& v : {kNouns, kObjects, kVerbs, kKinds}) {
      words.insert(words.end(), v.begin(), v.end());
    }
    words.insert(words.end(), {"page", "screen", "menu", "list", "view",
                               "with", "for", "and", "new", "tab", "popup",
                               "application", "sign", "account", "user"});
    return words;
  }();
  return pool;
}

void write_glove_fixture(const std::string& path, int dim,
                         const std::vector<std::string>& extra_tokens,
                         std::uint64_t seed) {
  std::vector<std::string> tokens = fixture_word_pool();
  tokens.insert(tokens.end(), extra_tokens.begin(), extra_tokens.end());
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  std::ofstream out(path);
  Rng rng(seed);
  for (const auto& token : tokens) {
    out << token;
    for (int d = 0; d < dim; ++d) out << " " << rng.uniform(-0.5, 0.5);
    out << "\n";
  }
}

std::string make_temp_dir(const std::string& hint) {
  static std::uint64_t counter = 0;
  const fs::path base = fs::temp_directory_path() / "s2w_tests";
  fs::create_directories(base);
  fs::path dir;
  do {
    dir = base / (hint + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++));
  } while (fs::exists(dir));
  fs::create_directories(dir);
  return dir.string();
}

FixtureInfo write_standard_fixture(const std::string& dir,
                                   const FixtureOptions& options) {
  FixtureInfo info;
  info.root = dir;
  fs::create_directories(fs::path(dir) / "hierarchies");
  fs::create_directories(fs::path(dir) / "screenshots");

  Rng rng(options.seed);
  const int W = options.screen_width;
  const int H = options.screen_height;
  const int total_screens = options.num_apps * options.screens_per_app;

  CsvWriter summaries_csv((fs::path(dir) / "summaries.csv").string());
  summaries_csv.write_row({"screenId", "summary"});
  CsvWriter sfa_csv((fs::path(dir) / "sfa.csv").string());
  if (options.with_sfa) {
    sfa_csv.write_row({"screenId", "labelerIndex", "left", "top", "right",
                       "bottom"});
  }

  long long total_summary_words = 0;
  std::size_t total_summaries = 0;
  double coverage_sum = 0.0;
  std::size_t coverage_boxes = 0;
  double iou_screen_sum = 0.0;
  std::size_t iou_screens = 0;

  for (int a = 0; a < options.num_apps; ++a) {
    info.app_ids.push_back("com.fixture.app" + two_digit(a));
  }

  std::map<std::string, SplitStats> split_stats;
  auto split_of_app = [&](int a) {
    const int train_apps = (options.num_apps * 6 + 9) / 10;
    const int val_apps = std::max(1, options.num_apps / 5);
    if (a < train_apps) return Split::kTrain;
    if (a < train_apps + val_apps) return Split::kValidation;
    return Split::kTest;
  };

  for (int i = 0; i < total_screens; ++i) {
    const int app_index = i / options.screens_per_app;
    const std::string app_id = info.app_ids[app_index];
    const std::string sid = screen_name(i);
    info.screen_ids.push_back(sid);
    Rng srng = rng.fork(1000 + i);

    // Hierarchy: full-screen root with 3..8 children, one of which may be
    // invisible; children get deterministic texts from the word pool.
    NodeSpec root;
    root.cls = "android.widget.FrameLayout";
    root.bounds[0] = 0;
    root.bounds[1] = 0;
    root.bounds[2] = W;
    root.bounds[3] = H;
    const int child_count = 3 + static_cast<int>(srng.below(6));
    for (int c = 0; c < child_count; ++c) {
      NodeSpec child;
      child.cls = kClasses[srng.below(kClasses.size())];
      const int ch = H / (child_count + 1);
      child.bounds[0] = 4 + static_cast<int>(srng.below(8));
      child.bounds[1] = c * ch + 2;
      child.bounds[2] = W - 4 - static_cast<int>(srng.below(8));
      child.bounds[3] = (c + 1) * ch;
      child.clickable = srng.below(2) == 0;
      child.visible = srng.below(8) != 0;  // occasionally invisible
      if (srng.below(3) != 0) {
        child.text = kNouns[srng.below(kNouns.size())] + " " +
                     kObjects[srng.below(kObjects.size())];
      }
      if (c == 0) {
        NodeSpec leaf = child;
        leaf.cls = "android.widget.TextView";
        leaf.bounds[1] = child.bounds[1] + 2;
        leaf.bounds[3] = std::max(child.bounds[1] + 6, child.bounds[3] - 2);
        leaf.children.clear();
        leaf.text = kKinds[srng.below(kKinds.size())];
        child.children.push_back(leaf);
      }
      root.children.push_back(child);
    }
    const std::string activity = app_id + "/" + app_id + ".MainActivity";
    std::ofstream hier(fs::path(dir) / "hierarchies" / (sid + ".json"));
    hier << hierarchy_json(activity, root);
    hier.close();

    ImageRgb shot = ImageRgb::solid(W, H, 24, 24, 28);
    int counter = i;
    paint_screenshot(shot, root, counter);
    save_image_png(shot, (fs::path(dir) / "screenshots" / (sid + ".png")).string());

    // Summaries: plain lowercase words joined by single spaces; some carry a
    // trailing stop phrase that removal is expected to strip.
    for (int s = 0; s < options.summaries_per_screen; ++s) {
      std::string base = kNouns[srng.below(kNouns.size())] + " page " +
                         kVerbs[srng.below(kVerbs.size())] + " " +
                         kObjects[srng.below(kObjects.size())];
      if (srng.below(2) == 0) {
        base += " for " + kKinds[srng.below(kKinds.size())] + " users";
      }
      const int base_words = count_words(base);
      std::string written = base;
      if (options.append_stop_phrases && srng.below(2) == 0) {
        written += " in the app";
      }
      summaries_csv.write_row({sid, written});
      info.summaries[sid].push_back(written);
      total_summary_words += base_words;  // stop phrase does not count
      total_summaries += 1;
    }

    // SFA boxes: five shifted copies of a base box; stats by construction.
    if (options.with_sfa) {
      const int bw = W / 2 + static_cast<int>(srng.below(W / 4));
      const int bh = H / 2 + static_cast<int>(srng.below(H / 4));
      const int dx = 2 + static_cast<int>(srng.below(5));
      const int dy = 1 + static_cast<int>(srng.below(4));
      std::vector<std::array<int, 4>> boxes;
      for (int k = 0; k < 5; ++k) {
        const int l = 4 + k * dx;
        const int t = 4 + k * dy;
        const int r = std::min(W, l + bw);
        const int b = std::min(H, t + bh);
        boxes.push_back({l, t, r, b});
        sfa_csv.write_row({sid, std::to_string(k), std::to_string(l),
                           std::to_string(t), std::to_string(r),
                           std::to_string(b)});
        coverage_sum += static_cast<double>((r - l)) * (b - t) /
                        (static_cast<double>(W) * H);
        coverage_boxes += 1;
      }
      double pair_sum = 0.0;
      int pairs = 0;
      for (std::size_t p = 0; p < boxes.size(); ++p) {
        for (std::size_t q = p + 1; q < boxes.size(); ++q) {
          pair_sum += rect_iou(boxes[p][0], boxes[p][1], boxes[p][2],
                               boxes[p][3], boxes[q][0], boxes[q][1],
                               boxes[q][2], boxes[q][3]);
          ++pairs;
        }
      }
      iou_screen_sum += pair_sum / pairs;
      iou_screens += 1;
    }

    const Split split = split_of_app(app_index);
    auto& st = split_stats[std::string(split_name(split))];
    st.screens += 1;
    st.summaries += options.summaries_per_screen;
  }
  summaries_csv.close();
  sfa_csv.close();

  // app_details.csv: most apps get a description, the last two do not.
  if (options.with_app_details) {
    info.app_details_csv = (fs::path(dir) / "app_details.csv").string();
    CsvWriter details(info.app_details_csv);
    details.write_row({"appId", "description"});
    Rng drng = rng.fork(77);
    for (int a = 0; a < options.num_apps - 2; ++a) {
      std::string desc = "a " + kKinds[drng.below(kKinds.size())] +
                         " application with " +
                         kObjects[drng.below(kObjects.size())] + " and " +
                         kObjects[drng.below(kObjects.size())];
      details.write_row({info.app_ids[a], desc});
    }
  }

  // Split lists.
  {
    std::ofstream train(fs::path(dir) / "train_apps.txt");
    std::ofstream val(fs::path(dir) / "val_apps.txt");
    std::ofstream test(fs::path(dir) / "test_apps.txt");
    for (int a = 0; a < options.num_apps; ++a) {
      const Split split = split_of_app(a);
      auto& st = split_stats[std::string(split_name(split))];
      st.apps += 1;
      (split == Split::kTrain ? train
       : split == Split::kValidation ? val
                                     : test)
          << info.app_ids[a] << "\n";
    }
  }

  info.summaries_csv = (fs::path(dir) / "summaries.csv").string();
  info.glove_path = (fs::path(dir) / "glove.txt").string();
  write_glove_fixture(info.glove_path, 16, {}, options.seed + 13);

  info.expected_screens = total_screens;
  info.expected_summaries = total_summaries;
  info.expected_apps = options.num_apps;
  for (const auto& [name, st] : split_stats) {
    info.expected_split_stats[split_from_name(name)] = st;
  }
  info.expected_mean_summary_length =
      static_cast<double>(total_summary_words) / total_summaries;
  if (coverage_boxes > 0) info.expected_sfa_coverage = coverage_sum / coverage_boxes;
  if (iou_screens > 0) info.expected_sfa_mean_iou = iou_screen_sum / iou_screens;
  info.expected_sfa_boxes = coverage_boxes;
  return info;
}

FixtureInfo write_overfit_fixture(const std::string& dir) {
  FixtureInfo info;
  info.root = dir;
  fs::create_directories(fs::path(dir) / "hierarchies");
  fs::create_directories(fs::path(dir) / "screenshots");
  const int W = 128, H = 160;

  const std::vector<std::string> summaries = {
      "login page for music streaming",
      "settings menu with privacy options",
      "search results listing travel deals",
      "profile screen showing user details",
      "checkout page with payment fields",
      "gallery view presenting photo albums",
      "playlist screen offering song choices",
      "weather page displaying daily forecast",
      "news feed listing fresh articles",
      "calendar view showing monthly events",
  };
  const std::string app_id = "com.fixture.overfit";
  info.app_ids.push_back(app_id);

  CsvWriter summaries_csv((fs::path(dir) / "summaries.csv").string());
  summaries_csv.write_row({"screenId", "summary"});

  std::vector<std::string> extra_tokens;
  for (int i = 0; i < 10; ++i) {
    const std::string sid = screen_name(i);
    info.screen_ids.push_back(sid);

    NodeSpec root;
    root.cls = "android.widget.FrameLayout";
    root.bounds[0] = 0;
    root.bounds[1] = 0;
    root.bounds[2] = W;
    root.bounds[3] = H;
    // Four children whose texts echo the summary words.
    std::vector<std::string> words;
    {
      std::istringstream ss(summaries[i]);
      std::string w;
      while (ss >> w) words.push_back(w);
    }
    extra_tokens.insert(extra_tokens.end(), words.begin(), words.end());
    for (int c = 0; c < 4; ++c) {
      NodeSpec child;
      child.cls = kClasses[(i + c) % kClasses.size()];
      child.bounds[0] = 8;
      child.bounds[1] = c * (H / 4) + 4;
      child.bounds[2] = W - 8;
      child.bounds[3] = (c + 1) * (H / 4) - 4;
      child.clickable = c % 2 == 0;
      if (c < static_cast<int>(words.size())) {
        child.text = words[c] + " " + words[(c + 1) % words.size()];
      }
      root.children.push_back(child);
    }
    std::ofstream hier(fs::path(dir) / "hierarchies" / (sid + ".json"));
    hier << hierarchy_json(app_id + "/" + app_id + ".Main", root);
    hier.close();

    ImageRgb shot = ImageRgb::solid(
        W, H, static_cast<std::uint8_t>(20 + i * 23),
        static_cast<std::uint8_t>(235 - i * 19), static_cast<std::uint8_t>(60 + i * 13));
    int counter = i * 11;
    paint_screenshot(shot, root, counter);
    save_image_png(shot, (fs::path(dir) / "screenshots" / (sid + ".png")).string());

    summaries_csv.write_row({sid, summaries[i]});
    info.summaries[sid].push_back(summaries[i]);
  }
  summaries_csv.close();

  info.app_details_csv = (fs::path(dir) / "app_details.csv").string();
  {
    CsvWriter details(info.app_details_csv);
    details.write_row({"appId", "description"});
    details.write_row({app_id, "a fixture application for overfit checks"});
  }
  {
    std::ofstream train(fs::path(dir) / "train_apps.txt");
    train << app_id << "\n";
    std::ofstream val(fs::path(dir) / "val_apps.txt");
    std::ofstream test(fs::path(dir) / "test_apps.txt");
  }
  info.summaries_csv = (fs::path(dir) / "summaries.csv").string();
  info.glove_path = (fs::path(dir) / "glove.txt").string();
  write_glove_fixture(info.glove_path, 16, extra_tokens, 99);
  info.expected_screens = 10;
  info.expected_summaries = 10;
  info.expected_apps = 1;
  return info;
}

}  // namespace s2w::testing
