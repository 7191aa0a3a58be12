#pragma once

#include <optional>
#include <string>
#include <vector>

#include "s2w/geometry.hpp"

namespace s2w {

// One node of a parsed RICO-style view hierarchy.
struct UiElement {
  int node_id = 0;
  std::string class_name;
  bool clickable = false;
  bool visible_to_user = true;
  Rect bounds;
  std::optional<std::string> text;
  std::vector<int> children;  // ordered node ids
  int pre_order = 0;
  int post_order = 0;
  int depth = 0;
  bool degenerate_bounds = false;  // zero-area bounds, kept but flagged

  bool operator==(const UiElement&) const = default;
};

struct UiTree {
  std::vector<UiElement> nodes;  // indexed by node_id
  int root_id = 0;
  std::string activity_name;  // e.g. "com.example.app/com.example.Main"

  std::size_t size() const { return nodes.size(); }
  const UiElement& root() const { return nodes[root_id]; }
  const UiElement& node(int id) const { return nodes[id]; }

  // Package name prefix of activity_name ("" when unavailable).
  std::string package_name() const;

  bool operator==(const UiTree&) const = default;
};

// Parses a RICO view-hierarchy JSON document. Accepts either a bare node
// object or the full capture format with an "activity"/"root" wrapper.
// Throws ParseError (with byte offset) on malformed JSON and SchemaError
// (naming the node path) when required fields are missing.
UiTree parse_view_hierarchy(const std::string& json_text);

// Canonical JSON form; parse(serialize(t)) == t field-wise.
std::string serialize_view_hierarchy(const UiTree& tree);

// Recomputes pre/post/depth from the children lists (used by builders).
void compute_traversal_orders(UiTree& tree);

}  // namespace s2w
