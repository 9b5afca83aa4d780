#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "icphylo/ctm.hpp"
#include "icphylo/phylo.hpp"
#include "icphylo/traits.hpp"

namespace icp {

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { CognateClass, CognateConcept };

/// Global log-mean rates, ordered (lambda-, lambda+, rho-+, rho+-, mu-, mu+),
/// plus the standard deviations of the log-normal rate hierarchies.
/// Cognate-class models carry 4 sigmas (rho-+, rho+-, mu-, mu+); concept
/// models carry 6, aligned with the log-mean order.
struct GlobalParams {
  std::array<double, 6> log_mean{};
  std::vector<double> sigma;
};

inline int sigma_count(ModelKind kind) { return kind == ModelKind::CognateClass ? 4 : 6; }

/// Non-centered local offsets for one unit (trait or concept): rate =
/// exp(log_mean + sigma * z). Layout depends on kind and state support; see
/// unit_dim below.
struct UnitOffsets {
  std::vector<double> z;
};

struct Rates {
  double lambda_minus = 0, lambda_plus = 0;
  double rho_mp = 0, rho_pm = 0;
  double mu_minus = 0, mu_plus = 0;
};

/// Offset vector length for a unit. Class traits: 2 loss offsets, plus 2
/// mutation offsets when both -IC and +IC are attested. Concepts: always 6.
int unit_dim(ModelKind kind, const StateSupport& support);

/// Concrete rates for one unit. Class kind: birth rates are shared
/// (exp of the global log-means, no local variation); rho is zero when the
/// trait does not attest both -IC and +IC. Concept kind: all six rates vary
/// per concept; rho zeroing still follows the trait's support.
Rates unit_rates(ModelKind kind, const GlobalParams& globals, const UnitOffsets& local,
                 const StateSupport& support);

/// Standard-normal log-density on the global log-means (scale configurable),
/// HalfNormal(0,1) on each sigma, Normal(0,1) on every local offset.
/// Returns -inf for sigma <= 0 or non-finite inputs.
double log_prior(ModelKind kind, const GlobalParams& globals,
                 const std::vector<UnitOffsets>& locals, double prior_scale = 1.0);

/// (birth, mutation, loss) = (exp(l-0 - l+0), exp(r+-0 - r-+0), exp(m+0 - m-0)).
std::array<double, 3> rate_ratios(const GlobalParams& globals);

struct ModelOptions {
  double prior_scale = 1.0;
  /// Root stem length for cognate-class trees as a fraction of tree height;
  /// ignored when root_stem_length is set explicitly.
  double root_stem_factor = 0.5;
  std::optional<double> root_stem_length;
  /// Tree tips outside the analysis language set are marginalized out with
  /// uninformative (1,1,1) rows.
  std::set<std::string> uninformative_tips;
};

/// The assembled log-posterior over one tree: per-trait ascertainment-
/// corrected pruning likelihoods plus the hierarchical prior. Immutable and
/// safe to share across sampler chains.
class PosteriorModel {
 public:
  PosteriorModel(ModelKind kind, const Phylogeny& tree, std::vector<TraitMatrix> traits,
                 ModelOptions options = {});

  ModelKind kind() const { return kind_; }
  int n_traits() const { return static_cast<int>(traits_.size()); }

  /// Units: traits for the class model, concepts for the concept model.
  int n_units() const { return static_cast<int>(units_.size()); }
  const std::string& unit_id(int u) const { return units_.at(u).id; }
  int unit_offset_dim(int u) const { return units_.at(u).dim; }
  const std::vector<int>& unit_traits(int u) const { return units_.at(u).trait_indices; }
  const StateSupport& trait_support(int d) const { return prepared_.at(d).support; }
  const StateSupport& unit_support(int u) const { return units_.at(u).support; }

  double log_prior(const GlobalParams& g, const std::vector<UnitOffsets>& locals) const;

  /// Sum of corrected log-likelihoods over the unit's traits; -inf instead
  /// of exceptions for parameter combinations the sampler must reject.
  double unit_log_lik(int u, const GlobalParams& g, const UnitOffsets& local) const;

  double total_log_lik(const GlobalParams& g, const std::vector<UnitOffsets>& locals) const;
  double log_posterior(const GlobalParams& g, const std::vector<UnitOffsets>& locals) const;

  /// Per-unit ratio triple (birth, mutation, loss) at the unit's rates.
  std::array<double, 3> unit_ratios(int u, const GlobalParams& g,
                                    const UnitOffsets& local) const;

  double root_stem() const { return root_stem_; }

 private:
  struct PreparedTrait {
    Phylogeny tree;  // grafted copy for class traits; shared base otherwise
    BranchClassification cls;
    bool has_cls = false;
    TipRows rows;
    TipRows abs_rows;
    StateSupport support;
    int unit = 0;
  };
  struct Unit {
    std::string id;
    std::vector<int> trait_indices;
    StateSupport support;  // union over member traits
    int dim = 0;
  };

  double trait_log_lik(int d, const Rates& r) const;

  ModelKind kind_;
  Phylogeny base_tree_;
  std::vector<TraitMatrix> traits_;
  ModelOptions options_;
  double root_stem_ = 0.0;
  std::vector<PreparedTrait> prepared_;
  std::vector<Unit> units_;
};

}  // namespace icp
