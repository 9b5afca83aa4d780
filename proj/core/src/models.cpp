#include "icphylo/models.hpp"

#include <cmath>
#include <limits>

namespace icp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);

double log_normal_pdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kLogSqrt2Pi;
}

double log_half_normal_pdf(double x) {
  if (x <= 0) return kNegInf;
  return std::log(2.0) - 0.5 * x * x - kLogSqrt2Pi;
}

// Log rates (lambda-, lambda+, rho-+, rho+-, mu-, mu+) before support
// zeroing. Local offsets are non-centered: log rate = mean + sigma * z.
std::array<double, 6> unit_log_rates(ModelKind kind, const GlobalParams& g,
                                     const UnitOffsets& local, const StateSupport& support) {
  std::array<double, 6> lr{};
  if (kind == ModelKind::CognateClass) {
    const bool rho = support.rho_active();
    const int expect = rho ? 4 : 2;
    if (static_cast<int>(local.z.size()) != expect)
      throw ModelError("unit offset vector has wrong length");
    lr[0] = g.log_mean[0];
    lr[1] = g.log_mean[1];
    int k = 0;
    lr[2] = rho ? g.log_mean[2] + g.sigma.at(0) * local.z[k++] : g.log_mean[2];
    lr[3] = rho ? g.log_mean[3] + g.sigma.at(1) * local.z[k++] : g.log_mean[3];
    lr[4] = g.log_mean[4] + g.sigma.at(2) * local.z[k++];
    lr[5] = g.log_mean[5] + g.sigma.at(3) * local.z[k++];
  } else {
    if (local.z.size() != 6) throw ModelError("concept offset vector must have length 6");
    for (int i = 0; i < 6; ++i) lr[i] = g.log_mean[i] + g.sigma.at(i) * local.z[i];
  }
  return lr;
}

}  // namespace

int unit_dim(ModelKind kind, const StateSupport& support) {
  if (kind == ModelKind::CognateConcept) return 6;
  return support.rho_active() ? 4 : 2;
}

Rates unit_rates(ModelKind kind, const GlobalParams& globals, const UnitOffsets& local,
                 const StateSupport& support) {
  auto lr = unit_log_rates(kind, globals, local, support);
  Rates r;
  r.lambda_minus = std::exp(lr[0]);
  r.lambda_plus = std::exp(lr[1]);
  const bool rho = support.rho_active();
  r.rho_mp = rho ? std::exp(lr[2]) : 0.0;
  r.rho_pm = rho ? std::exp(lr[3]) : 0.0;
  r.mu_minus = std::exp(lr[4]);
  r.mu_plus = std::exp(lr[5]);
  return r;
}

double log_prior(ModelKind kind, const GlobalParams& globals,
                 const std::vector<UnitOffsets>& locals, double prior_scale) {
  if (static_cast<int>(globals.sigma.size()) != sigma_count(kind))
    throw ModelError("wrong sigma count for model kind");
  double lp = 0;
  for (double m : globals.log_mean) {
    if (!std::isfinite(m)) return kNegInf;
    lp += log_normal_pdf(m, 0.0, prior_scale);
  }
  for (double s : globals.sigma) {
    if (!std::isfinite(s) || s <= 0) return kNegInf;
    lp += log_half_normal_pdf(s);
  }
  for (const auto& u : locals)
    for (double z : u.z) {
      if (!std::isfinite(z)) return kNegInf;
      lp += log_normal_pdf(z, 0.0, 1.0);
    }
  return lp;
}

std::array<double, 3> rate_ratios(const GlobalParams& g) {
  return {std::exp(g.log_mean[0] - g.log_mean[1]), std::exp(g.log_mean[3] - g.log_mean[2]),
          std::exp(g.log_mean[5] - g.log_mean[4])};
}

PosteriorModel::PosteriorModel(ModelKind kind, const Phylogeny& tree,
                               std::vector<TraitMatrix> traits, ModelOptions options)
    : kind_(kind), base_tree_(tree), traits_(std::move(traits)), options_(std::move(options)) {
  if (kind_ == ModelKind::CognateClass) {
    root_stem_ = options_.root_stem_length
                     ? *options_.root_stem_length
                     : options_.root_stem_factor * base_tree_.height();
    base_tree_.set_root_stem_length(root_stem_);
  } else {
    root_stem_ = base_tree_.root_stem_length();
  }

  std::size_t universe = 0;
  for (int t : base_tree_.tips())
    if (!options_.uninformative_tips.count(base_tree_.node(t).label)) ++universe;

  std::map<std::string, int> concept_index;
  prepared_.reserve(traits_.size());
  for (std::size_t d = 0; d < traits_.size(); ++d) {
    const TraitMatrix& tm = traits_[d];
    tm.validate();
    for (const auto& [tip, row] : tm.rows)
      if (!base_tree_.has_tip(tip))
        throw ModelError("trait " + tm.id + ": tip label not in tree: " + tip);

    PreparedTrait p;
    p.support = state_support(tm, universe);

    if (kind_ == ModelKind::CognateClass) {
      if (tm.kind != TraitKind::CognateClass)
        throw ModelError("trait " + tm.id + " is not a cognate-class trait");
      // The reconstructed ancestral state is an observation too: a recon
      // differing from every tip state attests a -IC/+IC flip, so it must
      // count toward the support that gates the mutation rates.
      p.support.attested.insert(*tm.recon_state);
      auto present = tm.present_tips();
      int m = base_tree_.mrca(present);
      auto [grafted, tip_id] = base_tree_.graft_tip(m, "@recon:" + tm.id);
      p.tree = std::move(grafted);
      // Node ids are stable under grafting, so the base-tree MRCA id still
      // names the right node (which may now be internal, for singletons).
      p.cls = classify_branches_mrca(p.tree, m, tm.id);
      p.cls.grafted_tip = tip_id;
      p.has_cls = true;

      p.rows.assign(p.tree.node_count(), Vector3::Ones());
      p.abs_rows.assign(p.tree.node_count(), Vector3::Ones());
      for (int v = 0; v < p.tree.node_count(); ++v) {
        const std::string& label = p.tree.node(v).label;
        if (v == tip_id) {
          Vector3 recon = Vector3::Zero();
          recon[static_cast<int>(*tm.recon_state)] = 1.0;
          p.rows[v] = recon;
          p.abs_rows[v] = recon;
        } else if (label.empty() || options_.uninformative_tips.count(label)) {
          // internal node, or tip marginalized out in both patterns
        } else {
          StateRow r = tm.row_for(label);
          p.rows[v] = Vector3(r[0], r[1], r[2]);
          p.abs_rows[v] = Vector3(1, 0, 0);
        }
      }
    } else {
      if (tm.kind != TraitKind::CognateConcept)
        throw ModelError("trait " + tm.id + " is not a cognate-concept trait");
      p.tree = base_tree_;
      p.rows.assign(p.tree.node_count(), Vector3::Ones());
      p.abs_rows.assign(p.tree.node_count(), Vector3::Ones());
      for (int t : p.tree.tips()) {
        const std::string& label = p.tree.node(t).label;
        if (options_.uninformative_tips.count(label)) continue;
        StateRow r = tm.row_for(label);
        p.rows[t] = Vector3(r[0], r[1], r[2]);
        p.abs_rows[t] = Vector3(1, 0, 0);
      }
    }

    if (kind_ == ModelKind::CognateClass) {
      Unit u;
      u.id = tm.id;
      u.trait_indices = {static_cast<int>(d)};
      u.support = p.support;
      u.dim = unit_dim(kind_, p.support);
      p.unit = static_cast<int>(units_.size());
      units_.push_back(std::move(u));
    } else {
      auto [it, fresh] = concept_index.emplace(tm.concept_id, static_cast<int>(units_.size()));
      if (fresh) {
        Unit u;
        u.id = tm.concept_id;
        u.dim = 6;
        units_.push_back(std::move(u));
      }
      Unit& u = units_[it->second];
      u.trait_indices.push_back(static_cast<int>(d));
      for (auto s : p.support.attested) u.support.attested.insert(s);
      p.unit = it->second;
    }
    prepared_.push_back(std::move(p));
  }
}

double PosteriorModel::log_prior(const GlobalParams& g,
                                 const std::vector<UnitOffsets>& locals) const {
  return icp::log_prior(kind_, g, locals, options_.prior_scale);
}

double PosteriorModel::trait_log_lik(int d, const Rates& r) const {
  const PreparedTrait& p = prepared_[d];
  Matrix3 qb, qn;
  if (kind_ == ModelKind::CognateClass) {
    qb = build_q_birth(r.lambda_minus, r.lambda_plus);
    qn = build_q_nonbirth(r.mu_minus, r.mu_plus, r.rho_mp, r.rho_pm);
  } else {
    qn = build_q_concept(r.lambda_minus, r.lambda_plus, r.mu_minus, r.mu_plus, r.rho_mp,
                         r.rho_pm);
    qb = qn;
  }
  const Vector3 prior = absent_root_prior();
  const BranchClassification* cls = p.has_cls ? &p.cls : nullptr;
  double ll = prune_log_likelihood(p.rows, p.tree, cls, qb, qn, prior);
  if (ll == kNegInf) return kNegInf;
  double ll_abs = prune_log_likelihood(p.abs_rows, p.tree, cls, qb, qn, prior);
  if (ll_abs > std::log1p(-1e-12)) return kNegInf;  // degenerate: nothing observable
  return ascertainment_correct_log(ll, ll_abs);
}

double PosteriorModel::unit_log_lik(int u, const GlobalParams& g,
                                    const UnitOffsets& local) const {
  double total = 0;
  for (int d : units_.at(u).trait_indices) {
    Rates r = unit_rates(kind_, g, local, prepared_[d].support);
    double ll;
    try {
      ll = trait_log_lik(d, r);
    } catch (const CtmError&) {
      // Numeric breakdown (e.g. expm overflow at absurd proposed rates) is
      // a rejectable point, not a hard error.
      return kNegInf;
    }
    if (ll == kNegInf) return kNegInf;
    total += ll;
  }
  return total;
}

double PosteriorModel::total_log_lik(const GlobalParams& g,
                                     const std::vector<UnitOffsets>& locals) const {
  if (static_cast<int>(locals.size()) != n_units())
    throw ModelError("locals size does not match unit count");
  double total = 0;
  for (int u = 0; u < n_units(); ++u) {
    double ll = unit_log_lik(u, g, locals[u]);
    if (ll == kNegInf) return kNegInf;
    total += ll;
  }
  return total;
}

double PosteriorModel::log_posterior(const GlobalParams& g,
                                     const std::vector<UnitOffsets>& locals) const {
  double lp = log_prior(g, locals);
  if (lp == kNegInf) return kNegInf;
  double ll = total_log_lik(g, locals);
  if (ll == kNegInf) return kNegInf;
  return lp + ll;
}

std::array<double, 3> PosteriorModel::unit_ratios(int u, const GlobalParams& g,
                                                  const UnitOffsets& local) const {
  auto lr = unit_log_rates(kind_, g, local, units_.at(u).support);
  return {std::exp(lr[0] - lr[1]), std::exp(lr[3] - lr[2]), std::exp(lr[5] - lr[4])};
}

}  // namespace icp
