#include "s2w/view_hierarchy.hpp"

#include <nlohmann/json.hpp>

#include "s2w/errors.hpp"

namespace s2w {

using nlohmann::json;

std::string UiTree::package_name() const {
  const auto slash = activity_name.find('/');
  if (slash == std::string::npos) return activity_name;
  return activity_name.substr(0, slash);
}

namespace {

struct ParseContext {
  UiTree tree;
};

const json* find_field(const json& node, std::initializer_list<const char*> names) {
  for (const char* name : names) {
    auto it = node.find(name);
    if (it != node.end() && !it->is_null()) return &*it;
  }
  return nullptr;
}

// Depth-first construction; node ids are assigned in document order.
int parse_node(ParseContext& ctx, const json& node, const std::string& path,
               int depth) {
  if (!node.is_object()) {
    throw SchemaError("expected node object at " + path);
  }
  const int id = static_cast<int>(ctx.tree.nodes.size());
  ctx.tree.nodes.emplace_back();
  {
    UiElement& el = ctx.tree.nodes[id];
    el.node_id = id;
    el.depth = depth;

    if (const json* cls = find_field(node, {"class", "class_name"})) {
      if (cls->is_string()) el.class_name = cls->get<std::string>();
    }
    const json* bounds = find_field(node, {"bounds"});
    if (bounds == nullptr) {
      throw SchemaError("missing bounds at node " + path);
    }
    if (!bounds->is_array() || bounds->size() != 4) {
      throw SchemaError("bounds must be a 4-int array at node " + path);
    }
    for (const auto& v : *bounds) {
      if (!v.is_number()) {
        throw SchemaError("bounds must be numeric at node " + path);
      }
    }
    Rect r{(*bounds)[0].get<int>(), (*bounds)[1].get<int>(),
           (*bounds)[2].get<int>(), (*bounds)[3].get<int>()};
    el.bounds = r.normalized();
    el.degenerate_bounds = el.bounds.area() == 0;

    if (const json* clickable = find_field(node, {"clickable"})) {
      if (clickable->is_boolean()) el.clickable = clickable->get<bool>();
    }
    el.visible_to_user = true;
    if (const json* vis =
            find_field(node, {"visible-to-user", "visible_to_user"})) {
      if (vis->is_boolean()) el.visible_to_user = vis->get<bool>();
    } else if (const json* visibility = find_field(node, {"visibility"})) {
      if (visibility->is_string()) {
        el.visible_to_user = visibility->get<std::string>() == "visible";
      }
    }
    if (const json* text = find_field(node, {"text"})) {
      if (text->is_string()) {
        std::string t = text->get<std::string>();
        if (!t.empty()) el.text = std::move(t);
      }
    }
  }

  std::vector<int> child_ids;
  if (const json* children = find_field(node, {"children"})) {
    if (!children->is_array()) {
      throw SchemaError("children must be an array at node " + path);
    }
    int index = 0;
    for (const auto& child : *children) {
      if (child.is_null()) {
        ++index;
        continue;  // RICO emits null entries for pruned children
      }
      const std::string child_path =
          path + ".children[" + std::to_string(index) + "]";
      child_ids.push_back(parse_node(ctx, child, child_path, depth + 1));
      ++index;
    }
  }
  ctx.tree.nodes[id].children = std::move(child_ids);
  return id;
}

void assign_orders(UiTree& tree, int id, int depth, int& pre_counter,
                   int& post_counter) {
  UiElement& el = tree.nodes[id];
  el.depth = depth;
  el.pre_order = pre_counter++;
  for (int child : el.children) {
    assign_orders(tree, child, depth + 1, pre_counter, post_counter);
  }
  tree.nodes[id].post_order = post_counter++;
}

json node_to_json(const UiTree& tree, int id) {
  const UiElement& el = tree.node(id);
  json node = json::object();
  node["class"] = el.class_name;
  node["bounds"] = {el.bounds.left, el.bounds.top, el.bounds.right,
                    el.bounds.bottom};
  node["clickable"] = el.clickable;
  node["visible-to-user"] = el.visible_to_user;
  if (el.text) node["text"] = *el.text;
  if (!el.children.empty()) {
    json children = json::array();
    for (int child : el.children) children.push_back(node_to_json(tree, child));
    node["children"] = std::move(children);
  }
  return node;
}

}  // namespace

void compute_traversal_orders(UiTree& tree) {
  int pre = 0, post = 0;
  assign_orders(tree, tree.root_id, 0, pre, post);
}

UiTree parse_view_hierarchy(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("view hierarchy JSON parse error at byte " +
                     std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) {
    throw SchemaError("view hierarchy document must be a JSON object");
  }

  // Unwrap the capture format when present.
  const json* root = &doc;
  std::string root_path = "root";
  std::string activity_name;
  if (const json* name = find_field(doc, {"activity_name"})) {
    if (name->is_string()) activity_name = name->get<std::string>();
  }
  if (const json* activity = find_field(doc, {"activity"})) {
    if (const json* inner = find_field(*activity, {"root"})) {
      root = inner;
      root_path = "activity.root";
    }
  } else if (const json* top_root = find_field(doc, {"root"})) {
    root = top_root;
  }

  ParseContext ctx;
  ctx.tree.activity_name = std::move(activity_name);
  ctx.tree.root_id = parse_node(ctx, *root, root_path, 0);
  compute_traversal_orders(ctx.tree);
  return ctx.tree;
}

std::string serialize_view_hierarchy(const UiTree& tree) {
  json doc = json::object();
  if (!tree.activity_name.empty()) doc["activity_name"] = tree.activity_name;
  doc["activity"] = json::object();
  doc["activity"]["root"] = node_to_json(tree, tree.root_id);
  return doc.dump();
}

}  // namespace s2w
