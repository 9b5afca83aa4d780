#include "icphylo/ctm.hpp"

#include <cmath>

namespace icp {

namespace {

void check_rate(double r, const char* name) {
  if (!(r >= 0) || !std::isfinite(r)) throw CtmError(std::string("negative or non-finite rate: ") + name);
}

}  // namespace

Matrix3 build_q_birth(double lambda_minus, double lambda_plus) {
  check_rate(lambda_minus, "lambda-");
  check_rate(lambda_plus, "lambda+");
  Matrix3 q = Matrix3::Zero();
  q(0, 1) = lambda_minus;
  q(0, 2) = lambda_plus;
  q(0, 0) = -(lambda_minus + lambda_plus);
  return q;
}

Matrix3 build_q_nonbirth(double mu_minus, double mu_plus, double rho_mp, double rho_pm) {
  check_rate(mu_minus, "mu-");
  check_rate(mu_plus, "mu+");
  check_rate(rho_mp, "rho-+");
  check_rate(rho_pm, "rho+-");
  Matrix3 q = Matrix3::Zero();
  q(1, 0) = mu_minus;
  q(1, 2) = rho_mp;
  q(1, 1) = -(mu_minus + rho_mp);
  q(2, 0) = mu_plus;
  q(2, 1) = rho_pm;
  q(2, 2) = -(mu_plus + rho_pm);
  return q;
}

Matrix3 build_q_concept(double lambda_minus, double lambda_plus, double mu_minus,
                        double mu_plus, double rho_mp, double rho_pm) {
  Matrix3 q = build_q_nonbirth(mu_minus, mu_plus, rho_mp, rho_pm);
  check_rate(lambda_minus, "lambda-");
  check_rate(lambda_plus, "lambda+");
  q(0, 1) = lambda_minus;
  q(0, 2) = lambda_plus;
  q(0, 0) = -(lambda_minus + lambda_plus);
  return q;
}

Matrix3 expm(const Matrix3& q, double t) {
  if (!(t >= 0) || !std::isfinite(t)) throw CtmError("expm: time must be finite and >= 0");
  if (t == 0.0) return Matrix3::Identity();

  Matrix3 a = q * t;
  double norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    a /= std::pow(2.0, squarings);
  }

  Matrix3 p = Matrix3::Identity();
  Matrix3 term = Matrix3::Identity();
  for (int k = 1; k <= 40; ++k) {
    term = (term * a) / static_cast<double>(k);
    p += term;
    if (term.cwiseAbs().maxCoeff() < 1e-16) break;
  }
  for (int s = 0; s < squarings; ++s) p = p * p;

  // Stochasticity guard: clip tiny negatives and renormalize rows.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j)
      if (p(i, j) < 0) {
        if (p(i, j) < -1e-12) throw CtmError("expm: negative transition probability");
        p(i, j) = 0;
      }
    double rs = p.row(i).sum();
    if (std::abs(rs - 1.0) > 1e-9) throw CtmError("expm: row sum drifted beyond guard");
    p.row(i) /= rs;
  }
  return p;
}

Vector3 absent_root_prior() { return Vector3(1.0, 0.0, 0.0); }

const Matrix3& ExpmCache::at(double t) {
  auto it = cache_.find(t);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(t, expm(q_, t)).first->second;
}

double prune_log_likelihood(const TipRows& rows, const Phylogeny& tree,
                            const BranchClassification* cls, const Matrix3& q_birth,
                            const Matrix3& q_nonbirth, const Vector3& root_prior) {
  ExpmCache pb(q_birth);
  ExpmCache pn(q_nonbirth);
  auto branch_p = [&](int node_id, double len) -> const Matrix3& {
    bool birth = cls != nullptr && cls->birth(node_id);
    return birth ? pb.at(len) : pn.at(len);
  };

  std::vector<Vector3> partial(tree.node_count());
  double log_scale = 0.0;
  for (int v : tree.postorder()) {
    if (tree.is_tip(v)) {
      partial[v] = rows.at(v);
    } else {
      // Internal rows are usually (1,1,1); a former tip that gained a
      // grafted child keeps its observation here.
      Vector3 acc = rows.at(v);
      for (int c : tree.node(v).children)
        acc = acc.cwiseProduct(branch_p(c, tree.node(c).length) * partial[c]);
      double mx = acc.maxCoeff();
      if (mx <= 0.0) return -std::numeric_limits<double>::infinity();
      acc /= mx;
      log_scale += std::log(mx);
      partial[v] = acc;
    }
  }

  Vector3 at_stem_top = partial[tree.root()];
  double stem = tree.root_stem_length();
  if (stem > 0.0 || cls != nullptr)
    at_stem_top = branch_p(tree.root(), stem) * at_stem_top;
  double l = root_prior.dot(at_stem_top);
  if (l <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(l) + log_scale;
}

double ascertainment_correct_log(double log_raw, double log_p_all_absent) {
  double p_abs = std::exp(log_p_all_absent);
  if (p_abs >= 1.0 - 1e-12) throw CtmError("ascertainment: P(all absent) ~ 1, degenerate model");
  return log_raw - std::log1p(-p_abs);
}

}  // namespace icp
