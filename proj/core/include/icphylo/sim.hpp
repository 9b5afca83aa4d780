#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icphylo/models.hpp"
#include "icphylo/rng.hpp"

namespace icp {

class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  ModelKind kind = ModelKind::CognateClass;
  GlobalParams globals;  // true log-means and sigmas
  int n_traits = 100;    // class: trait count; concept: traits per concept
  int n_concepts = 1;    // concept kind only
  std::uint64_t seed = 1;
  bool condition_on_observed = true;
  /// Root stem for class traits as a fraction of tree height, matching the
  /// inference-side default; ignored when root_stem_length is set.
  double root_stem_factor = 0.5;
  std::optional<double> root_stem_length;

  void validate() const;
};

struct SimEvent {
  int node = -1;      // branch above this node (root id: the root stem)
  double time = 0;    // from the top of the branch
  TraitState from = TraitState::Absent;
  TraitState to = TraitState::Absent;
  bool is_birth = false;
};

/// One simulated trait with its latent history, for test introspection.
struct SimTrait {
  TraitMatrix trait;
  std::vector<SimEvent> events;
  std::vector<TraitState> node_states;  // state at the bottom of each branch
  int birth_node = -1;                  // class kind: branch carrying the birth
  int mrca = -1;                        // class kind: -1 when all tips absent
  int rejections = 0;                   // conditioning retries used
};

inline constexpr long kRejectionCap = 1000000;

/// Event-driven simulation of one trait. Class kind: the trait is born at
/// most once (first birth among racing absent lineages, at the shared
/// birth rates), the born state rides frozen down to the MRCA of the
/// eventually-present tips, and evolves under the non-birth process below
/// it. Concept kind: one homoplastic CTM from an ABSENT root. With
/// conditioning, rejection-samples until some tip is non-absent
/// (error past the rejection cap).
SimTrait simulate_trait(const Phylogeny& tree, ModelKind kind, const Rates& rates, Rng& rng,
                        bool condition_on_observed, const std::string& trait_id,
                        const std::string& concept_id = {});

struct SimDataset {
  std::vector<SimTrait> traits;
  std::vector<std::string> unit_ids;                   // trait ids (class) or concept ids
  std::vector<std::array<double, 3>> unit_true_ratios;  // per unit
  std::array<double, 3> true_ratios{};                 // from the global log-means
};

/// Batch simulation: draws per-unit offsets from the hierarchy, simulates
/// every trait, and records the truth needed by recovery tests. The tree's
/// root stem is set per config for class traits.
SimDataset simulate_dataset(const Phylogeny& tree, const SimConfig& config);

std::vector<TraitMatrix> dataset_traits(const SimDataset& dataset);
std::string truth_to_json(const SimDataset& dataset, const SimConfig& config);

}  // namespace icp
