#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace icp {

class PhyloError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Newick syntax error; offset is the 0-based character position.
class NewickParseError : public PhyloError {
 public:
  NewickParseError(const std::string& msg, std::size_t offset)
      : PhyloError(msg + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownLabelError : public PhyloError {
 public:
  explicit UnknownLabelError(const std::string& label)
      : PhyloError("unknown tip label: " + label) {}
};

struct PhyloNode {
  int parent = -1;              // -1 marks the root
  std::vector<int> children;    // empty for tips
  double length = 0.0;          // branch length to parent, time units
  std::string label;            // nonempty for tips
};

/// Rooted, dated phylogeny. Immutable after construction; grafting returns a
/// new value. Node ids are dense indices, internal only.
class Phylogeny {
 public:
  Phylogeny() = default;

  /// Parses a single Newick tree. Branch lengths are required on all
  /// non-root edges; a length on the root is kept as the root stem length.
  /// Multifurcations are accepted.
  static Phylogeny parse_newick(std::string_view text);

  /// One tree per line; blank lines skipped.
  static std::vector<Phylogeny> parse_newick_lines(std::string_view text);

  int root() const { return root_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const PhyloNode& node(int id) const { return nodes_.at(id); }
  bool is_tip(int id) const { return nodes_.at(id).children.empty(); }
  const std::vector<int>& tips() const { return tips_; }
  int tip_count() const { return static_cast<int>(tips_.size()); }

  int tip_index(const std::string& label) const;
  bool has_tip(const std::string& label) const { return tip_map_.count(label) > 0; }
  std::vector<std::string> tip_labels() const;

  /// Length of the conceptual branch above the root (the root stem).
  double root_stem_length() const { return root_stem_; }
  void set_root_stem_length(double len);

  /// Max root-to-tip distance (excludes the root stem).
  double height() const;

  /// Deepest node ancestral to every listed tip. A single label returns
  /// that tip's own node.
  int mrca(const std::vector<std::string>& tip_labels) const;
  int mrca_nodes(const std::vector<int>& node_ids) const;

  /// Depth (sum of branch lengths) from the root to a node.
  double depth(int id) const;

  /// True if `anc` lies on the path from the root to `node` (inclusive).
  bool is_ancestor(int anc, int node) const;

  /// Children before parents; root last.
  std::vector<int> postorder() const;

  /// New tree with an extra tip attached at `at` by a zero-length branch.
  /// Returns the tree and the grafted tip's node id.
  std::pair<Phylogeny, int> graft_tip(int at, const std::string& label) const;

 private:
  void build_index();

  std::vector<PhyloNode> nodes_;
  int root_ = -1;
  double root_stem_ = 0.0;
  std::vector<int> tips_;
  std::unordered_map<std::string, int> tip_map_;
};

/// Partition of branches for one trait. The branch "above" node v is
/// identified by v itself; the root entry stands for the root stem.
struct BranchClassification {
  std::string trait_id;
  std::vector<uint8_t> is_birth;  // indexed by node id
  int grafted_tip = -1;           // -1 when no reconstruction tip is present

  bool birth(int node_id) const { return is_birth.at(node_id) != 0; }
};

/// Branches ancestral to the MRCA of the present tips (inclusive of the
/// branch into the MRCA, and always of the root stem) are birth loci;
/// everything else is not. The MRCA of a single present tip is that tip.
BranchClassification classify_branches(const Phylogeny& tree,
                                       const std::vector<std::string>& present_tips,
                                       std::string trait_id = {});

/// Same partition from an already-resolved MRCA node id. Needed when the
/// MRCA is a former tip that grafting turned into an internal node.
BranchClassification classify_branches_mrca(const Phylogeny& tree, int mrca_node,
                                            std::string trait_id = {});

}  // namespace icp
