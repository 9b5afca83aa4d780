#include "icphylo/sim.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

namespace icp {

namespace {

// Outgoing rates from `s` under the non-birth (class) process; ABSENT is
// absorbing.
void nonbirth_rates(const Rates& r, TraitState s, double out[3]) {
  out[0] = out[1] = out[2] = 0;
  if (s == TraitState::MinusIc) {
    out[0] = r.mu_minus;
    out[2] = r.rho_mp;
  } else if (s == TraitState::PlusIc) {
    out[0] = r.mu_plus;
    out[1] = r.rho_pm;
  }
}

// Outgoing rates under the homoplastic concept process.
void concept_rates(const Rates& r, TraitState s, double out[3]) {
  nonbirth_rates(r, s, out);
  if (s == TraitState::Absent) {
    out[1] = r.lambda_minus;
    out[2] = r.lambda_plus;
  }
}

struct Simulator {
  const Phylogeny& tree;
  const Rates& rates;
  Rng& rng;
  SimTrait& out;
  bool homoplastic = false;

  // Gillespie along the branch above `node`, starting in `s` at offset
  // `t0` from the top; returns the state at the bottom.
  TraitState evolve_branch(int node, TraitState s, double t0) {
    double len = node == tree.root() ? tree.root_stem_length() : tree.node(node).length;
    double t = t0;
    double r[3];
    while (true) {
      if (homoplastic)
        concept_rates(rates, s, r);
      else
        nonbirth_rates(rates, s, r);
      double total = r[0] + r[1] + r[2];
      if (total <= 0) break;
      t += rng.exponential(total);
      if (t >= len) break;
      double u = rng.uniform(0, total);
      TraitState to = u < r[0]                ? TraitState::Absent
                      : u < r[0] + r[1]       ? TraitState::MinusIc
                                              : TraitState::PlusIc;
      out.events.push_back({node, t, s, to, false});
      s = to;
    }
    return s;
  }

  // Full subtree simulation from state `s_top` at the top of `node`'s branch.
  void gillespie_down(int node, TraitState s_top, double t0 = 0.0) {
    TraitState s = evolve_branch(node, s_top, t0);
    out.node_states[node] = s;
    for (int c : tree.node(node).children) gillespie_down(c, s, 0.0);
  }

  bool subtree_has_present(int node) const {
    if (tree.is_tip(node)) return out.node_states[node] != TraitState::Absent;
    for (int c : tree.node(node).children)
      if (subtree_has_present(c)) return true;
    return false;
  }

  void reset_subtree(int node) {
    out.node_states[node] = TraitState::Absent;
    for (int c : tree.node(node).children) reset_subtree(c);
  }

  // Rides the born state frozen down the tree until it reaches the node
  // that becomes the MRCA of the present tips: children are simulated under
  // the non-birth process; if exactly one child subtree keeps the trait
  // alive, that simulation is discarded and the frozen state moves into the
  // child (its branch is then a birth locus). Ties the post-hoc branch
  // classification and the generative story together.
  void freeze_down(int node, TraitState s) {
    out.node_states[node] = s;
    if (tree.is_tip(node)) {
      out.mrca = node;  // singleton MRCA
      return;
    }
    std::vector<std::size_t> marks;
    std::vector<int> alive;
    for (int c : tree.node(node).children) {
      marks.push_back(out.events.size());
      gillespie_down(c, s);
      if (subtree_has_present(c)) alive.push_back(c);
    }
    if (alive.size() == 1) {
      int c = alive[0];
      const auto& children = tree.node(node).children;
      for (std::size_t i = 0; i < children.size(); ++i)
        if (children[i] == c) {
          std::size_t lo = marks[i];
          std::size_t hi = i + 1 < marks.size() ? marks[i + 1] : out.events.size();
          out.events.erase(out.events.begin() + lo, out.events.begin() + hi);
          break;
        }
      reset_subtree(c);
      freeze_down(c, s);
    } else if (!alive.empty()) {
      out.mrca = node;
    }
    // alive empty: the trait died out everywhere below; all-absent pattern.
  }
};

}  // namespace

void SimConfig::validate() const {
  if (n_traits < 1) throw SimError("trait count must be >= 1");
  if (kind == ModelKind::CognateConcept && n_concepts < 1)
    throw SimError("concept count must be >= 1");
  for (double s : globals.sigma)
    if (!(s >= 0)) throw SimError("sigma values must be >= 0");
  if (static_cast<int>(globals.sigma.size()) != sigma_count(kind))
    throw SimError("wrong sigma count for model kind");
}

SimTrait simulate_trait(const Phylogeny& tree, ModelKind kind, const Rates& rates, Rng& rng,
                        bool condition_on_observed, const std::string& trait_id,
                        const std::string& concept_id) {
  for (double r : {rates.lambda_minus, rates.lambda_plus, rates.rho_mp, rates.rho_pm,
                   rates.mu_minus, rates.mu_plus})
    if (!(r >= 0)) throw SimError("rates must be >= 0");

  SimTrait out;
  out.trait.id = trait_id;
  for (long attempt = 0;; ++attempt) {
    if (attempt >= kRejectionCap)
      throw SimError("trait " + trait_id +
                     ": rejection cap exceeded; rates too low to observe the trait");
    out.events.clear();
    out.node_states.assign(tree.node_count(), TraitState::Absent);
    out.birth_node = -1;
    out.mrca = -1;

    Simulator sim{tree, rates, rng, out, kind == ModelKind::CognateConcept};
    if (kind == ModelKind::CognateClass) {
      // Race: every absent lineage runs a birth clock; the earliest birth
      // anywhere in the tree (stem included) wins and absorbs the rest.
      double lambda = rates.lambda_minus + rates.lambda_plus;
      if (lambda > 0) {
        double best_time = std::numeric_limits<double>::infinity();
        int best_node = -1;
        double best_offset = 0;
        for (int v = 0; v < tree.node_count(); ++v) {
          double len = v == tree.root() ? tree.root_stem_length() : tree.node(v).length;
          double top = v == tree.root() ? -tree.root_stem_length()
                                        : tree.depth(tree.node(v).parent);
          double e = rng.exponential(lambda);
          if (e < len && top + e < best_time) {
            best_time = top + e;
            best_node = v;
            best_offset = e;
          }
        }
        if (best_node >= 0) {
          TraitState born = rng.uniform(0, lambda) < rates.lambda_minus ? TraitState::MinusIc
                                                                        : TraitState::PlusIc;
          out.events.push_back({best_node, best_offset, TraitState::Absent, born, true});
          out.birth_node = best_node;
          sim.freeze_down(best_node, born);
        }
      }
    } else {
      sim.gillespie_down(tree.root(), TraitState::Absent);
    }

    bool observed = false;
    for (int t : tree.tips())
      if (out.node_states[t] != TraitState::Absent) {
        observed = true;
        break;
      }
    if (observed || !condition_on_observed) {
      out.rejections = static_cast<int>(attempt);
      break;
    }
  }

  out.trait.kind = kind == ModelKind::CognateClass ? TraitKind::CognateClass
                                                   : TraitKind::CognateConcept;
  out.trait.concept_id = concept_id;
  for (int t : tree.tips()) {
    TraitState s = out.node_states[t];
    if (s == TraitState::Absent) continue;  // defaulted rows
    StateRow row{};
    row[static_cast<int>(s)] = 1.0;
    out.trait.rows[tree.node(t).label] = row;
  }
  if (kind == ModelKind::CognateClass && out.mrca >= 0)
    out.trait.recon_state = out.node_states[out.mrca];
  return out;
}

SimDataset simulate_dataset(const Phylogeny& tree, const SimConfig& config) {
  config.validate();
  Phylogeny t = tree;
  if (config.kind == ModelKind::CognateClass)
    t.set_root_stem_length(config.root_stem_length ? *config.root_stem_length
                                                   : config.root_stem_factor * t.height());

  StateSupport full;
  full.attested = {TraitState::Absent, TraitState::MinusIc, TraitState::PlusIc};

  SimDataset ds;
  ds.true_ratios = rate_ratios(config.globals);

  const int n_units = config.kind == ModelKind::CognateClass ? config.n_traits
                                                             : config.n_concepts;
  const int traits_per_unit = config.kind == ModelKind::CognateClass ? 1 : config.n_traits;

  Rng master(config.seed);
  int trait_idx = 0;
  for (int u = 0; u < n_units; ++u) {
    UnitOffsets local;
    local.z.resize(unit_dim(config.kind, full));
    for (auto& z : local.z) z = master.normal();
    Rates r = unit_rates(config.kind, config.globals, local, full);

    char buf[32];
    std::string concept_id;
    if (config.kind == ModelKind::CognateConcept) {
      std::snprintf(buf, sizeof buf, "c%03d", u);
      concept_id = buf;
    }
    ds.unit_ids.push_back(config.kind == ModelKind::CognateConcept
                              ? concept_id
                              : (std::snprintf(buf, sizeof buf, "t%04d", u), std::string(buf)));
    ds.unit_true_ratios.push_back(
        {r.lambda_minus / r.lambda_plus, r.rho_pm / r.rho_mp, r.mu_plus / r.mu_minus});

    for (int k = 0; k < traits_per_unit; ++k, ++trait_idx) {
      std::string id;
      if (config.kind == ModelKind::CognateClass) {
        id = ds.unit_ids.back();
      } else {
        std::snprintf(buf, sizeof buf, "%s_t%04d", concept_id.c_str(), k);
        id = buf;
      }
      Rng trait_rng = Rng::stream(config.seed, 0x5150000 + trait_idx);
      ds.traits.push_back(simulate_trait(t, config.kind, r, trait_rng,
                                         config.condition_on_observed, id, concept_id));
    }
  }
  return ds;
}

std::vector<TraitMatrix> dataset_traits(const SimDataset& dataset) {
  std::vector<TraitMatrix> out;
  out.reserve(dataset.traits.size());
  for (const auto& s : dataset.traits) out.push_back(s.trait);
  return out;
}

std::string truth_to_json(const SimDataset& dataset, const SimConfig& config) {
  nlohmann::json j;
  j["kind"] = config.kind == ModelKind::CognateClass ? "class" : "concept";
  j["seed"] = config.seed;
  j["log_mean"] = config.globals.log_mean;
  j["sigma"] = config.globals.sigma;
  j["true_ratios"] = {{"birth", dataset.true_ratios[0]},
                      {"mutation", dataset.true_ratios[1]},
                      {"loss", dataset.true_ratios[2]}};
  j["units"] = nlohmann::json::array();
  for (std::size_t u = 0; u < dataset.unit_ids.size(); ++u) {
    j["units"].push_back({{"id", dataset.unit_ids[u]},
                          {"birth", dataset.unit_true_ratios[u][0]},
                          {"mutation", dataset.unit_true_ratios[u][1]},
                          {"loss", dataset.unit_true_ratios[u][2]}});
  }
  return j.dump(2);
}

}  // namespace icp
