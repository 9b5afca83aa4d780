#include "icphylo/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "icphylo/rng.hpp"

namespace icp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();

struct ChainState {
  Eigen::VectorXd theta;  // [log_mean x6, log sigma x k]
  std::vector<UnitOffsets> locals;
  double prior_jac = kNegInf;
  std::vector<double> unit_ll;
  double total_ll = kNegInf;
};

GlobalParams unpack(const Eigen::VectorXd& theta, int nsigma) {
  GlobalParams g;
  for (int i = 0; i < 6; ++i) g.log_mean[i] = theta[i];
  g.sigma.resize(nsigma);
  for (int i = 0; i < nsigma; ++i) g.sigma[i] = std::exp(theta[6 + i]);
  return g;
}

double log_jacobian(const Eigen::VectorXd& theta, int nsigma) {
  double j = 0;
  for (int i = 0; i < nsigma; ++i) j += theta[6 + i];
  return j;
}

class ChainSampler {
 public:
  ChainSampler(const PosteriorModel& model, const ChainConfig& cfg, int chain_id, int tree_id)
      : model_(model),
        cfg_(cfg),
        chain_id_(chain_id),
        tree_id_(tree_id),
        rng_(Rng::stream(cfg.seed, static_cast<std::uint64_t>(tree_id) * 1000 + chain_id)),
        nsigma_(sigma_count(model.kind())),
        dim_(6 + nsigma_) {}

  ChainRun run() {
    initialize();
    const int burn = cfg_.burn_iterations();
    ChainRun out;
    out.chain = chain_id_;
    out.samples.reserve(cfg_.retained());
    long accepted = 0, proposed = 0;
    // Several alternating global/local sub-sweeps per recorded iteration:
    // cheap decorrelation that the global-vs-local coupling of the
    // hierarchy needs, without touching the iteration/burn-in contract.
    constexpr int kSweeps = 10;
    for (int it = 0; it < cfg_.iterations; ++it) {
      bool adapting = it < burn;
      for (int rep = 0; rep < kSweeps; ++rep) {
        accepted += global_update(adapting, it);
        ++proposed;
        local_updates(adapting, it);
      }
      if (it >= burn) out.samples.push_back(record(it));
    }
    out.global_accept_rate = static_cast<double>(accepted) / proposed;
    return out;
  }

 private:
  void initialize() {
    for (int attempt = 0; attempt < 10; ++attempt) {
      ChainState s;
      s.theta.resize(dim_);
      for (int i = 0; i < 6; ++i) s.theta[i] = 0.3 * rng_.normal();
      for (int i = 0; i < nsigma_; ++i) s.theta[6 + i] = std::log(0.5) + 0.2 * rng_.normal();
      s.locals.resize(model_.n_units());
      for (int u = 0; u < model_.n_units(); ++u) {
        s.locals[u].z.resize(model_.unit_offset_dim(u));
        for (auto& z : s.locals[u].z) z = 0.1 * rng_.normal();
      }
      GlobalParams g = unpack(s.theta, nsigma_);
      s.prior_jac = model_.log_prior(g, s.locals) + log_jacobian(s.theta, nsigma_);
      if (s.prior_jac == kNegInf) continue;
      s.unit_ll.resize(model_.n_units());
      s.total_ll = 0;
      bool ok = true;
      for (int u = 0; u < model_.n_units(); ++u) {
        s.unit_ll[u] = model_.unit_log_lik(u, g, s.locals[u]);
        if (s.unit_ll[u] == kNegInf) {
          ok = false;
          break;
        }
        s.total_ll += s.unit_ll[u];
      }
      if (!ok) continue;
      state_ = std::move(s);
      setup_adaptation();
      return;
    }
    throw InferenceError("chain " + std::to_string(chain_id_) +
                         ": no finite initialization after 10 jittered attempts");
  }

  void setup_adaptation() {
    chol_ = Eigen::MatrixXd::Identity(dim_, dim_) * 0.1;
    log_scale_ = 0.0;
    mean_ = state_.theta;
    cov_ = Eigen::MatrixXd::Zero(dim_, dim_);
    n_adapt_ = 1;
    local_log_step_.assign(model_.n_units(), std::log(0.2));
  }

  bool global_update(bool adapting, int it) {
    Eigen::VectorXd noise(dim_);
    for (int i = 0; i < dim_; ++i) noise[i] = rng_.normal();
    Eigen::VectorXd prop = state_.theta + std::exp(log_scale_) * (chol_ * noise);

    GlobalParams g = unpack(prop, nsigma_);
    double prior = model_.log_prior(g, state_.locals) + log_jacobian(prop, nsigma_);
    double alpha = 0.0;
    bool accepted = false;
    if (prior != kNegInf) {
      double total = 0;
      std::vector<double> lls(model_.n_units());
      bool finite = true;
      for (int u = 0; u < model_.n_units(); ++u) {
        lls[u] = model_.unit_log_lik(u, g, state_.locals[u]);
        if (lls[u] == kNegInf) {
          finite = false;
          break;
        }
        total += lls[u];
      }
      if (finite) {
        double delta = prior + total - state_.prior_jac - state_.total_ll;
        alpha = std::min(1.0, std::exp(delta));
        if (rng_.uniform() < alpha) {
          state_.theta = prop;
          state_.prior_jac = prior;
          state_.unit_ll = std::move(lls);
          state_.total_ll = total;
          accepted = true;
        }
      }
    }

    if (adapting) {
      double gamma = std::min(0.05, 1.0 / std::sqrt(it + 1.0));
      log_scale_ += gamma * (alpha - 0.234);
      // Haario-style running covariance of the chain history.
      ++n_adapt_;
      Eigen::VectorXd d = state_.theta - mean_;
      mean_ += d / n_adapt_;
      cov_ += (d * (state_.theta - mean_).transpose() - cov_) / n_adapt_;
      if (n_adapt_ > 2 * dim_ && it % cfg_.adapt_window == 0) {
        Eigen::MatrixXd c =
            cov_ * (2.38 * 2.38 / dim_) + Eigen::MatrixXd::Identity(dim_, dim_) * 1e-8;
        Eigen::LLT<Eigen::MatrixXd> llt(c);
        if (llt.info() == Eigen::Success) chol_ = llt.matrixL();
      }
    }
    return accepted;
  }

  void local_updates(bool adapting, int it) {
    GlobalParams g = unpack(state_.theta, nsigma_);
    for (int u = 0; u < model_.n_units(); ++u) {
      UnitOffsets prop = state_.locals[u];
      double dprior = 0;
      double step = std::exp(local_log_step_[u]);
      for (auto& z : prop.z) {
        double old = z;
        z += step * rng_.normal();
        dprior += 0.5 * (old * old - z * z);
      }
      double ll = model_.unit_log_lik(u, g, prop);
      double alpha = 0.0;
      if (ll != kNegInf) {
        alpha = std::min(1.0, std::exp(dprior + ll - state_.unit_ll[u]));
        if (rng_.uniform() < alpha) {
          state_.locals[u] = std::move(prop);
          state_.prior_jac += dprior;
          state_.total_ll += ll - state_.unit_ll[u];
          state_.unit_ll[u] = ll;
        }
      }
      if (adapting) {
        double gamma = std::min(0.05, 1.0 / std::sqrt(it + 1.0));
        local_log_step_[u] += gamma * (alpha - 0.3);
      }
    }
  }

  PosteriorSample record(int it) const {
    PosteriorSample s;
    s.tree_id = tree_id_;
    s.chain = chain_id_;
    s.iteration = it;
    s.globals = unpack(state_.theta, nsigma_);
    s.ratios = rate_ratios(s.globals);
    if (model_.kind() == ModelKind::CognateConcept) {
      s.unit_ratios.resize(model_.n_units());
      for (int u = 0; u < model_.n_units(); ++u)
        s.unit_ratios[u] = model_.unit_ratios(u, s.globals, state_.locals[u]);
    }
    return s;
  }

  const PosteriorModel& model_;
  const ChainConfig& cfg_;
  int chain_id_, tree_id_;
  Rng rng_;
  int nsigma_, dim_;
  ChainState state_;

  Eigen::MatrixXd chol_;
  double log_scale_ = 0;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  long n_adapt_ = 0;
  std::vector<double> local_log_step_;
};

double scalar_value(const PosteriorSample& s, int idx) {
  return idx < 6 ? s.globals.log_mean[idx] : s.ratios[idx - 6];
}

}  // namespace

void ChainConfig::validate() const {
  if (chains < 1 || iterations < 1) throw InferenceError("chain and iteration counts must be >= 1");
  if (burn_in < 0 || burn_in >= 1) throw InferenceError("burn-in fraction must be in [0,1)");
}

std::vector<std::string> monitored_scalar_names() {
  return {"lambda_minus_0", "lambda_plus_0", "rho_mp_0",       "rho_pm_0",      "mu_minus_0",
          "mu_plus_0",      "ratio_birth",   "ratio_mutation", "ratio_loss"};
}

RunResult sample(const PosteriorModel& model, const ChainConfig& config, int tree_id) {
  config.validate();
  RunResult res;
  res.tree_id = tree_id;
  res.chains.resize(config.chains);

  int nthreads = config.threads > 0 ? config.threads : config.chains;
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mu;
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int c = next.fetch_add(1); c < config.chains; c = next.fetch_add(1)) {
      try {
        res.chains[c] = ChainSampler(model, config, c, tree_id).run();
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  for (int t = 0; t < std::min(nthreads, config.chains); ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);

  auto names = monitored_scalar_names();
  if (config.chains >= 2 && config.retained() >= 10) {
    res.converged = true;
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::vector<std::vector<double>> series(config.chains);
      for (int c = 0; c < config.chains; ++c) {
        series[c].reserve(res.chains[c].samples.size());
        for (const auto& s : res.chains[c].samples)
          series[c].push_back(scalar_value(s, static_cast<int>(k)));
      }
      double r = psrf(series);
      res.psrf_by_scalar[names[k]] = r;
      if (!(r < kPsrfThreshold)) res.converged = false;
    }
  } else {
    res.converged = true;  // cannot assess with a single chain
  }
  return res;
}

double psrf(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InferenceError("psrf needs at least 2 chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains)
    if (c.size() != n) throw InferenceError("psrf needs equal-length chains");
  if (n < 10) throw InferenceError("psrf needs chains of length >= 10");

  // Split each chain in half.
  std::vector<std::vector<double>> half;
  std::size_t hn = n / 2;
  for (const auto& c : chains) {
    half.emplace_back(c.begin() + (n - 2 * hn), c.begin() + (n - 2 * hn) + hn);
    half.emplace_back(c.end() - hn, c.end());
  }

  const std::size_t m = half.size();
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    double mu = std::accumulate(half[j].begin(), half[j].end(), 0.0) / hn;
    double v = 0;
    for (double x : half[j]) v += (x - mu) * (x - mu);
    means[j] = mu;
    vars[j] = v / (hn - 1);
  }
  double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(hn) / (m - 1);

  if (w == 0.0) return b == 0.0 ? 1.0 : kInf;
  double var_plus = (static_cast<double>(hn - 1) / hn) * w + b / hn;
  return std::max(1.0, std::sqrt(var_plus / w));
}

PoolResult pool(const std::vector<RunResult>& runs) {
  PoolResult out;
  for (const auto& r : runs) {
    if (!r.converged) {
      out.excluded_trees.push_back(r.tree_id);
      continue;
    }
    for (const auto& c : r.chains)
      out.samples.insert(out.samples.end(), c.samples.begin(), c.samples.end());
  }
  if (out.samples.empty()) throw InferenceError("pool: no run reached convergence");
  return out;
}

Interval hdi(std::vector<double> samples, double mass) {
  if (samples.size() < 100) throw InferenceError("hdi needs at least 100 samples");
  if (!(mass > 0 && mass < 1)) throw InferenceError("hdi mass must be in (0,1)");
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  const std::size_t k = static_cast<std::size_t>(std::ceil(mass * n));
  Interval best{samples.front(), samples[k - 1]};
  for (std::size_t i = 1; i + k <= n; ++i) {
    double width = samples[i + k - 1] - samples[i];
    if (width < best.width()) best = {samples[i], samples[i + k - 1]};
  }
  return best;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SummaryReport summarize(const std::vector<PosteriorSample>& pooled,
                        const std::map<std::string, BaselineRange>& baselines) {
  if (pooled.empty()) throw InferenceError("summarize: empty sample set");
  SummaryReport rep;
  rep.n_samples = pooled.size();
  const char* names[3] = {"birth", "mutation", "loss"};
  for (int r = 0; r < 3; ++r) {
    std::vector<double> v;
    v.reserve(pooled.size());
    for (const auto& s : pooled) v.push_back(s.ratios[r]);
    RatioSummary rs;
    rs.name = names[r];
    rs.median = median_of(v);
    rs.hdi95 = hdi(v, 0.95);
    std::size_t gt = std::count_if(v.begin(), v.end(), [](double x) { return x > 1.0; });
    rs.pct_gt_1 = 100.0 * static_cast<double>(gt) / v.size();
    rs.decisive_vs_1 = rs.hdi95.lo > 1.0 || rs.hdi95.hi < 1.0;
    auto it = baselines.find(rs.name);
    if (it != baselines.end()) {
      rs.baseline = it->second;
      rs.decisive_vs_baseline = rs.hdi95.lo > it->second.hi || rs.hdi95.hi < it->second.lo;
    }
    rep.ratios.push_back(std::move(rs));
  }
  return rep;
}

ContrastMatrix pairwise_contrasts(const std::vector<PosteriorSample>& pooled,
                                  const std::vector<std::string>& unit_ids,
                                  const std::map<std::string, int>& ranking, int rate_index) {
  if (unit_ids.size() < 2) throw InferenceError("pairwise_contrasts needs >= 2 concepts");
  if (pooled.empty()) throw InferenceError("pairwise_contrasts: empty sample set");
  for (const auto& s : pooled)
    if (s.unit_ratios.size() != unit_ids.size())
      throw InferenceError("sample lacks per-concept ratios");

  ContrastMatrix m;
  const char* names[3] = {"birth", "mutation", "loss"};
  m.rate_name = names[rate_index];

  std::vector<std::size_t> order(unit_ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = ranking.find(unit_ids[a]), rb = ranking.find(unit_ids[b]);
    bool ha = ra != ranking.end(), hb = rb != ranking.end();
    if (ha != hb) return ha;  // ranked concepts first
    if (ha) return ra->second < rb->second;
    return unit_ids[a] < unit_ids[b];
  });
  for (std::size_t i : order) {
    m.concepts.push_back(unit_ids[i]);
    if (!ranking.count(unit_ids[i])) m.unranked.push_back(unit_ids[i]);
  }

  const std::size_t c = order.size();
  m.pct.assign(c, std::vector<double>(c, std::numeric_limits<double>::quiet_NaN()));
  m.decisive.assign(c, std::vector<bool>(c, false));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      if (i == j) continue;
      std::size_t cnt = 0;
      for (const auto& s : pooled)
        if (s.unit_ratios[order[i]][rate_index] > s.unit_ratios[order[j]][rate_index]) ++cnt;
      m.pct[i][j] = 100.0 * static_cast<double>(cnt) / pooled.size();
      m.decisive[i][j] = m.pct[i][j] >= kContrastDecisivePct;
    }
  return m;
}

void write_samples_csv(const std::vector<PosteriorSample>& samples, std::ostream& out) {
  const std::size_t nsigma = samples.empty() ? 0 : samples.front().globals.sigma.size();
  static const char* sigma4[] = {"sigma_rho_mp", "sigma_rho_pm", "sigma_mu_minus",
                                 "sigma_mu_plus"};
  static const char* sigma6[] = {"sigma_lambda_minus", "sigma_lambda_plus", "sigma_rho_mp",
                                 "sigma_rho_pm",       "sigma_mu_minus",    "sigma_mu_plus"};
  out << "tree_id,chain,iteration,lambda_minus_0,lambda_plus_0,rho_mp_0,rho_pm_0,mu_minus_0,"
         "mu_plus_0";
  for (std::size_t i = 0; i < nsigma; ++i)
    out << ',' << (nsigma == 4 ? sigma4[i] : sigma6[i]);
  out << ",ratio_birth,ratio_mutation,ratio_loss\n";
  out.precision(10);
  for (const auto& s : samples) {
    out << s.tree_id << ',' << s.chain << ',' << s.iteration;
    for (double m : s.globals.log_mean) out << ',' << m;
    for (double sg : s.globals.sigma) out << ',' << sg;
    for (double r : s.ratios) out << ',' << r;
    out << '\n';
  }
}

void write_contrasts_csv(const ContrastMatrix& m, std::ostream& out) {
  out << "rate," << m.rate_name << "\nconcept";
  for (const auto& c : m.concepts) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < m.concepts.size(); ++i) {
    out << m.concepts[i];
    for (std::size_t j = 0; j < m.concepts.size(); ++j) {
      out << ',';
      if (i != j) out << m.pct[i][j];
    }
    out << '\n';
  }
}

std::string summary_to_json(const SummaryReport& report) {
  nlohmann::json j;
  j["n_samples"] = report.n_samples;
  j["ratios"] = nlohmann::json::array();
  for (const auto& r : report.ratios) {
    nlohmann::json jr;
    jr["name"] = r.name;
    jr["median"] = r.median;
    jr["hdi_95"] = {r.hdi95.lo, r.hdi95.hi};
    jr["pct_gt_1"] = r.pct_gt_1;
    jr["decisive_vs_1"] = r.decisive_vs_1;
    if (r.baseline) {
      jr["baseline"] = {{"median", r.baseline->median},
                        {"range", {r.baseline->lo, r.baseline->hi}}};
      jr["decisive_vs_baseline"] = r.decisive_vs_baseline;
    }
    j["ratios"].push_back(std::move(jr));
  }
  return j.dump(2);
}

}  // namespace icp
