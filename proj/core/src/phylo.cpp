#include "icphylo/phylo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace icp {

namespace {

struct NewickParser {
  std::string_view text;
  std::size_t pos = 0;
  std::vector<PhyloNode> nodes;

  char peek() const { return pos < text.size() ? text[pos] : '\0'; }

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  [[noreturn]] void fail(const std::string& msg) const { throw NewickParseError(msg, pos); }

  bool is_label_char(char c) const {
    return c != '(' && c != ')' && c != ',' && c != ':' && c != ';' && c != '\0' &&
           !std::isspace(static_cast<unsigned char>(c));
  }

  std::string read_label() {
    std::string out;
    while (pos < text.size() && is_label_char(text[pos])) out.push_back(text[pos++]);
    return out;
  }

  double read_length() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
            text[pos] == '-' || text[pos] == '+' || text[pos] == 'e' || text[pos] == 'E'))
      ++pos;
    if (pos == start) fail("expected branch length");
    double v = 0;
    try {
      v = std::stod(std::string(text.substr(start, pos - start)));
    } catch (const std::exception&) {
      pos = start;
      fail("malformed branch length");
    }
    if (!std::isfinite(v) || v < 0) {
      pos = start;
      fail("branch length must be finite and >= 0");
    }
    return v;
  }

  // Returns (node id, had explicit length, length).
  int parse_clade(bool* has_len, double* len) {
    skip_ws();
    int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    if (peek() == '(') {
      ++pos;
      while (true) {
        bool child_has_len = false;
        double child_len = 0;
        int child = parse_clade(&child_has_len, &child_len);
        if (!child_has_len) fail("missing branch length");
        nodes[child].parent = id;
        nodes[child].length = child_len;
        nodes[id].children.push_back(child);
        skip_ws();
        if (peek() == ',') {
          ++pos;
          continue;
        }
        if (peek() == ')') {
          ++pos;
          break;
        }
        fail("expected ',' or ')'");
      }
      skip_ws();
      // optional internal label, ignored for indexing but stored
      nodes[id].label = read_label();
      if (!nodes[id].children.empty()) nodes[id].label.clear();
    } else {
      std::string label = read_label();
      if (label.empty()) fail("expected tip label or '('");
      nodes[id].label = std::move(label);
    }
    skip_ws();
    *has_len = false;
    if (peek() == ':') {
      ++pos;
      *len = read_length();
      *has_len = true;
    }
    return id;
  }
};

}  // namespace

Phylogeny Phylogeny::parse_newick(std::string_view text) {
  NewickParser p{text};
  p.skip_ws();
  bool has_len = false;
  double len = 0;
  int root = p.parse_clade(&has_len, &len);
  p.skip_ws();
  if (p.peek() != ';') p.fail("expected ';'");
  ++p.pos;
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing characters after ';'");

  Phylogeny t;
  t.nodes_ = std::move(p.nodes);
  t.root_ = root;
  t.root_stem_ = has_len ? len : 0.0;
  t.build_index();
  return t;
}

std::vector<Phylogeny> Phylogeny::parse_newick_lines(std::string_view text) {
  std::vector<Phylogeny> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    bool blank = true;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
    if (!blank) out.push_back(parse_newick(line));
    if (end == text.size()) break;
    start = end + 1;
  }
  return out;
}

void Phylogeny::build_index() {
  tips_.clear();
  tip_map_.clear();
  for (int i = 0; i < node_count(); ++i) {
    if (nodes_[i].children.empty()) {
      if (nodes_[i].label.empty()) throw PhyloError("tip with empty label");
      tips_.push_back(i);
      auto [it, inserted] = tip_map_.emplace(nodes_[i].label, i);
      if (!inserted) throw PhyloError("duplicate tip label: " + nodes_[i].label);
    }
  }
}

int Phylogeny::tip_index(const std::string& label) const {
  auto it = tip_map_.find(label);
  if (it == tip_map_.end()) throw UnknownLabelError(label);
  return it->second;
}

std::vector<std::string> Phylogeny::tip_labels() const {
  std::vector<std::string> out;
  out.reserve(tips_.size());
  for (int t : tips_) out.push_back(nodes_[t].label);
  return out;
}

void Phylogeny::set_root_stem_length(double len) {
  if (!std::isfinite(len) || len < 0) throw PhyloError("root stem length must be finite and >= 0");
  root_stem_ = len;
}

double Phylogeny::height() const {
  double best = 0;
  for (int t : tips_) best = std::max(best, depth(t));
  return best;
}

double Phylogeny::depth(int id) const {
  double d = 0;
  for (int v = id; v != root_; v = nodes_[v].parent) d += nodes_[v].length;
  return d;
}

bool Phylogeny::is_ancestor(int anc, int node) const {
  for (int v = node;; v = nodes_[v].parent) {
    if (v == anc) return true;
    if (v == root_) return false;
  }
}

int Phylogeny::mrca_nodes(const std::vector<int>& node_ids) const {
  if (node_ids.empty()) throw PhyloError("mrca of empty node set");
  // Walk up from the first node marking ancestors, then intersect.
  std::vector<uint8_t> on_path(nodes_.size(), 0);
  for (int v = node_ids[0];; v = nodes_[v].parent) {
    on_path[v] = 1;
    if (v == root_) break;
  }
  int mrca = node_ids[0];
  for (std::size_t i = 1; i < node_ids.size(); ++i) {
    int v = node_ids[i];
    while (!on_path[v]) v = nodes_[v].parent;
    // v is the meeting point; keep the deeper of mrca and v that is
    // ancestral to both, i.e. move mrca up until it covers v.
    while (!is_ancestor(mrca, v)) mrca = nodes_[mrca].parent;
  }
  return mrca;
}

int Phylogeny::mrca(const std::vector<std::string>& tip_labels) const {
  if (tip_labels.empty()) throw PhyloError("mrca of empty tip set");
  std::vector<int> ids;
  ids.reserve(tip_labels.size());
  for (const auto& l : tip_labels) ids.push_back(tip_index(l));
  return mrca_nodes(ids);
}

std::vector<int> Phylogeny::postorder() const {
  std::vector<int> order;
  order.reserve(nodes_.size());
  std::vector<std::pair<int, bool>> stack{{root_, false}};
  while (!stack.empty()) {
    auto [v, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(v);
    } else {
      stack.emplace_back(v, true);
      for (int c : nodes_[v].children) stack.emplace_back(c, false);
    }
  }
  return order;
}

std::pair<Phylogeny, int> Phylogeny::graft_tip(int at, const std::string& label) const {
  if (at < 0 || at >= node_count()) throw PhyloError("graft point out of range");
  Phylogeny t = *this;
  int tip = t.node_count();
  PhyloNode n;
  n.parent = at;
  n.length = 0.0;  // infinitesimal: exactly zero, P(0) = I
  n.label = label;
  t.nodes_.push_back(std::move(n));
  t.nodes_[at].children.push_back(tip);
  t.build_index();
  return {std::move(t), tip};
}

BranchClassification classify_branches(const Phylogeny& tree,
                                       const std::vector<std::string>& present_tips,
                                       std::string trait_id) {
  if (present_tips.empty()) throw PhyloError("classify_branches: empty present-tip set");
  return classify_branches_mrca(tree, tree.mrca(present_tips), std::move(trait_id));
}

BranchClassification classify_branches_mrca(const Phylogeny& tree, int m,
                                            std::string trait_id) {
  if (m < 0 || m >= tree.node_count()) throw PhyloError("classify_branches: bad MRCA node");
  BranchClassification cls;
  cls.trait_id = std::move(trait_id);
  cls.is_birth.assign(tree.node_count(), 0);
  for (int v = m;; v = tree.node(v).parent) {
    cls.is_birth[v] = 1;  // branch into v; the root entry is the root stem
    if (v == tree.root()) break;
  }
  return cls;
}

}  // namespace icp
