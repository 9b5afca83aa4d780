#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "icphylo/phylo.hpp"

namespace icp {

class CtmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix3 = Eigen::Matrix3d;
using Vector3 = Eigen::Vector3d;

/// Generator on birth loci: ABSENT may transition to -IC/+IC, born states
/// are frozen (zero rows).
Matrix3 build_q_birth(double lambda_minus, double lambda_plus);

/// Generator on non-birth loci: ABSENT is absorbing (no rebirth); -IC/+IC
/// may die (mu) or flip (rho).
Matrix3 build_q_nonbirth(double mu_minus, double mu_plus, double rho_mp, double rho_pm);

/// Homoplastic generator for cognate-concept traits: all six off-diagonals.
Matrix3 build_q_concept(double lambda_minus, double lambda_plus, double mu_minus,
                        double mu_plus, double rho_mp, double rho_pm);

/// exp(Q t) by scaling-and-squaring with a truncated series. Exact identity
/// at t = 0; rows renormalized under a 1e-9 guard.
Matrix3 expm(const Matrix3& q, double t);

/// Point mass on ABSENT; both models start every trait absent.
Vector3 absent_root_prior();

/// Memoizes exp(Q t) per branch length for one generator.
class ExpmCache {
 public:
  explicit ExpmCache(const Matrix3& q) : q_(q) {}
  const Matrix3& at(double t);

 private:
  Matrix3 q_;
  std::unordered_map<double, Matrix3> cache_;
};

/// Likelihood rows indexed by node id. Tips carry observations; internal
/// entries are multiplied in too and should be (1,1,1) unless the node is a
/// former tip holding an observation (graft-at-tip case).
using TipRows = std::vector<Vector3>;

/// Felsenstein pruning over a (possibly grafted) tree with branch-dependent
/// generators. When `cls` is null every branch (and the root stem) uses
/// `q_nonbirth`, the homoplastic case. Returns the log-likelihood; -inf for
/// impossible data/parameter combinations.
double prune_log_likelihood(const TipRows& rows, const Phylogeny& tree,
                            const BranchClassification* cls, const Matrix3& q_birth,
                            const Matrix3& q_nonbirth, const Vector3& root_prior);

/// log(raw / (1 - p_all_absent)) on the log scale.
/// Throws when p_all_absent >= 1 - 1e-12 (degenerate model).
double ascertainment_correct_log(double log_raw, double log_p_all_absent);

}  // namespace icp
