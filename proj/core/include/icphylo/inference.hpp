#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icphylo/models.hpp"

namespace icp {

class InferenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChainConfig {
  int chains = 4;
  int iterations = 2000;
  double burn_in = 0.5;  // fraction discarded, adaptation confined here
  std::uint64_t seed = 1;
  int adapt_window = 50;
  int threads = 0;  // 0: one thread per chain

  void validate() const;
  int burn_iterations() const { return static_cast<int>(iterations * burn_in); }
  int retained() const { return iterations - burn_iterations(); }
};

struct PosteriorSample {
  int tree_id = 0;
  int chain = 0;
  int iteration = 0;  // >= burn-in boundary
  GlobalParams globals;
  std::array<double, 3> ratios{};                  // birth, mutation, loss
  std::vector<std::array<double, 3>> unit_ratios;  // per concept; empty for class models
};

struct ChainRun {
  int chain = 0;
  std::vector<PosteriorSample> samples;
  double global_accept_rate = 0;
};

/// Names of the scalars monitored for convergence: the six global log-means
/// and the three derived ratios.
std::vector<std::string> monitored_scalar_names();

struct RunResult {
  int tree_id = 0;
  std::vector<ChainRun> chains;
  std::map<std::string, double> psrf_by_scalar;
  bool converged = false;
};

/// Runs config.chains adaptive Metropolis-within-Gibbs chains (joint global
/// block with covariance adaptation, independent per-unit offset blocks) and
/// gates convergence at split-R < 1.1 on every monitored scalar.
/// Initialization is jittered and retried up to 10 times per chain.
RunResult sample(const PosteriorModel& model, const ChainConfig& config, int tree_id = 0);

/// Split potential scale reduction factor over >= 2 equal-length chains,
/// clamped below at 1.0 (values under 1 are estimator noise). Zero-variance
/// chains yield 1.0 when they agree and +inf when they do not.
double psrf(const std::vector<std::vector<double>>& chains);

inline constexpr double kPsrfThreshold = 1.1;

struct PoolResult {
  std::vector<PosteriorSample> samples;
  std::vector<int> excluded_trees;
};

/// Concatenates retained samples across converged tree-runs; non-converged
/// runs are excluded and reported. Errors when nothing converged.
PoolResult pool(const std::vector<RunResult>& runs);

struct Interval {
  double lo = 0;
  double hi = 0;
  double width() const { return hi - lo; }
};

/// Shortest contiguous interval containing ceil(mass*n) sorted samples.
/// Requires >= 100 samples.
Interval hdi(std::vector<double> samples, double mass = 0.95);

struct BaselineRange {
  double median = 0;
  double lo = 0;
  double hi = 0;
};

struct RatioSummary {
  std::string name;
  double median = 0;
  Interval hdi95;
  double pct_gt_1 = 0;  // percent of samples > 1
  bool decisive_vs_1 = false;
  std::optional<BaselineRange> baseline;
  bool decisive_vs_baseline = false;
};

struct SummaryReport {
  std::size_t n_samples = 0;
  std::vector<RatioSummary> ratios;  // birth, mutation, loss
};

/// Medians, 95% HDIs, percent-greater-than-1 and decisiveness flags; a
/// ratio is decisive vs 1 when its HDI excludes 1 and decisive vs baseline
/// when the HDI is disjoint from the baseline range.
SummaryReport summarize(const std::vector<PosteriorSample>& pooled,
                        const std::map<std::string, BaselineRange>& baselines = {});

struct ContrastMatrix {
  std::string rate_name;                    // birth, mutation or loss
  std::vector<std::string> concepts;        // ordered by rank, more salient first
  std::vector<std::vector<double>> pct;     // pct[i][j]: % samples ratio(i) > ratio(j)
  std::vector<std::vector<bool>> decisive;  // pct >= 95
  std::vector<std::string> unranked;        // concepts missing ranks, placed last
};

inline constexpr double kContrastDecisivePct = 95.0;

/// Percent of joint posterior samples in which one concept's ratio exceeds
/// another's, for the given rate index (0 birth, 1 mutation, 2 loss).
ContrastMatrix pairwise_contrasts(const std::vector<PosteriorSample>& pooled,
                                  const std::vector<std::string>& unit_ids,
                                  const std::map<std::string, int>& ranking, int rate_index);

void write_samples_csv(const std::vector<PosteriorSample>& samples, std::ostream& out);
void write_contrasts_csv(const ContrastMatrix& m, std::ostream& out);
std::string summary_to_json(const SummaryReport& report);

}  // namespace icp
