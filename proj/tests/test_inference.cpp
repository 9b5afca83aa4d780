#include <doctest.h>

#include <cmath>
#include <sstream>

#include "icphylo/inference.hpp"
#include "icphylo/rng.hpp"

using namespace icp;

namespace {

PosteriorSample ratio_sample(double birth, double mutation, double loss) {
  PosteriorSample s;
  s.ratios = {birth, mutation, loss};
  return s;
}

std::vector<PosteriorSample> concept_samples(const std::vector<std::array<double, 3>>& a,
                                             const std::vector<std::array<double, 3>>& b,
                                             const std::vector<std::array<double, 3>>& c = {}) {
  std::vector<PosteriorSample> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    PosteriorSample s;
    s.unit_ratios = {a[i], b[i]};
    if (!c.empty()) s.unit_ratios.push_back(c[i]);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("monitored scalars are the six log-means and three ratios") {
  auto names = monitored_scalar_names();
  CHECK(names.size() == 9);
  CHECK(names.front() == "lambda_minus_0");
  CHECK(names.back() == "ratio_loss");
}

TEST_CASE("psrf is exactly 1 when every split half agrees") {
  // Chains whose halves are identical: all 2m split sequences coincide, so
  // between-sequence variance is zero and the clamp yields exactly 1.0.
  Rng rng(3);
  std::vector<double> half(50);
  for (auto& x : half) x = rng.normal();
  std::vector<double> chain;
  chain.insert(chain.end(), half.begin(), half.end());
  chain.insert(chain.end(), half.begin(), half.end());
  double r = psrf({chain, chain});
  CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("psrf separates N(0,1) from N(10,1) chains") {
  Rng rng(4);
  std::vector<double> a(500), b(500);
  for (auto& x : a) x = rng.normal();
  for (auto& x : b) x = 10.0 + rng.normal();
  CHECK(psrf({a, b}) > 3.0);
}

TEST_CASE("psrf flags degenerate chains instead of crashing") {
  std::vector<double> flat(20, 2.0), other(20, 3.0);
  CHECK(psrf({flat, flat}) == 1.0);
  CHECK(std::isinf(psrf({flat, other})));
}

TEST_CASE("psrf input validation") {
  std::vector<double> a(20, 1.0);
  CHECK_THROWS_AS(psrf({a}), InferenceError);
  CHECK_THROWS_AS(psrf({a, std::vector<double>(5, 1.0)}), InferenceError);
}

TEST_CASE("hdi on a standard normal") {
  Rng rng(5);
  std::vector<double> x(1000000);
  for (auto& v : x) v = rng.normal();
  auto iv = hdi(x, 0.95);
  CHECK(iv.lo == doctest::Approx(-1.96).epsilon(0.011));
  CHECK(iv.hi == doctest::Approx(1.96).epsilon(0.011));
}

TEST_CASE("hdi on uniform draws has width about the mass") {
  Rng rng(6);
  std::vector<double> x(200000);
  for (auto& v : x) v = rng.uniform();
  CHECK(hdi(x, 0.95).width() == doctest::Approx(0.95).epsilon(0.01));
}

TEST_CASE("hdi degenerate and error cases") {
  std::vector<double> same(200, 7.0);
  auto iv = hdi(same, 0.95);
  CHECK(iv.lo == 7.0);
  CHECK(iv.hi == 7.0);
  CHECK_THROWS_AS(hdi(std::vector<double>(99, 1.0), 0.95), InferenceError);
  CHECK_THROWS_AS(hdi(same, 1.5), InferenceError);
}

TEST_CASE("hdi mass guarantee") {
  Rng rng(7);
  std::vector<double> x(1000);
  for (auto& v : x) v = rng.normal() + 0.3 * rng.normal() * rng.normal();
  auto iv = hdi(x, 0.9);
  std::size_t inside = 0;
  for (double v : x) inside += (v >= iv.lo && v <= iv.hi);
  CHECK(inside >= static_cast<std::size_t>(std::ceil(0.9 * x.size())));
}

TEST_CASE("pool concatenates converged runs and reports the rest") {
  RunResult a, b, c;
  a.tree_id = 0;
  a.converged = true;
  a.chains.resize(1);
  a.chains[0].samples.assign(10, ratio_sample(1, 1, 1));
  b = a;
  b.tree_id = 1;
  c.tree_id = 2;
  c.converged = false;
  c.chains.resize(1);
  c.chains[0].samples.assign(10, ratio_sample(9, 9, 9));

  auto p = pool({a, b, c});
  CHECK(p.samples.size() == 20);
  CHECK(p.excluded_trees == std::vector<int>{2});
  CHECK_THROWS_AS(pool({c}), InferenceError);
}

TEST_CASE("summarize decisiveness flags") {
  SUBCASE("constant samples beat both the null and the baseline") {
    std::vector<PosteriorSample> s(200, ratio_sample(2.0, 2.0, 2.0));
    auto rep = summarize(s, {{"birth", {1.0, 0.5, 1.5}}});
    CHECK(rep.ratios[0].median == doctest::Approx(2.0));
    CHECK(rep.ratios[0].pct_gt_1 == doctest::Approx(100.0));
    CHECK(rep.ratios[0].decisive_vs_1);
    CHECK(rep.ratios[0].decisive_vs_baseline);
  }
  SUBCASE("HDI straddling 1 is not decisive") {
    Rng rng(8);
    std::vector<PosteriorSample> s;
    for (int i = 0; i < 2000; ++i) {
      double r = 1.005 + 0.05 * rng.normal();  // HDI like [0.9, 1.11]
      s.push_back(ratio_sample(r, r, r));
    }
    auto rep = summarize(s);
    CHECK(!rep.ratios[2].decisive_vs_1);
  }
  SUBCASE("decisive vs 1 but baseline range overlaps") {
    Rng rng(9);
    std::vector<PosteriorSample> s;
    for (int i = 0; i < 2000; ++i) {
      double r = 1.6 + 0.18 * rng.normal();  // HDI like [1.23, 1.99]
      s.push_back(ratio_sample(r, r, r));
    }
    auto rep = summarize(s, {{"mutation", {2.00, 0.85, 7.02}}});
    CHECK(rep.ratios[1].decisive_vs_1);
    CHECK(!rep.ratios[1].decisive_vs_baseline);
  }
}

TEST_CASE("pairwise contrasts") {
  SUBCASE("complete separation is decisive") {
    std::vector<std::array<double, 3>> a(40, {5, 5, 5}), b(40, {2, 2, 2});
    auto m = pairwise_contrasts(concept_samples(a, b), {"A", "B"}, {{"A", 1}, {"B", 2}}, 2);
    CHECK(m.pct[0][1] == doctest::Approx(100.0));
    CHECK(m.decisive[0][1]);
    CHECK(m.pct[1][0] == doctest::Approx(0.0));
    CHECK(!m.decisive[1][0]);
  }
  SUBCASE("identical samples sit at 50 percent") {
    Rng rng(10);
    std::vector<std::array<double, 3>> a, b;
    for (int i = 0; i < 4000; ++i) {
      a.push_back({std::exp(rng.normal()), 1, 1});
      b.push_back({std::exp(rng.normal()), 1, 1});
    }
    auto m = pairwise_contrasts(concept_samples(a, b), {"A", "B"}, {}, 0);
    CHECK(m.pct[0][1] == doctest::Approx(50.0).epsilon(0.05));
    CHECK(!m.decisive[0][1]);
  }
  SUBCASE("counts match brute-force pair enumeration on 3 concepts") {
    Rng rng(11);
    std::vector<std::array<double, 3>> a, b, c;
    for (int i = 0; i < 500; ++i) {
      a.push_back({1, 1, rng.uniform()});
      b.push_back({1, 1, rng.uniform() * 1.4});
      c.push_back({1, 1, rng.uniform() + 0.2});
    }
    auto samples = concept_samples(a, b, c);
    auto m = pairwise_contrasts(samples, {"c1", "c2", "c3"},
                                {{"c1", 1}, {"c2", 2}, {"c3", 3}}, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if (i == j) continue;
        std::size_t count = 0;
        for (const auto& s : samples)
          if (s.unit_ratios[i][2] > s.unit_ratios[j][2]) ++count;
        CHECK(m.pct[i][j] == doctest::Approx(100.0 * count / samples.size()));
        CHECK(m.decisive[i][j] == (m.pct[i][j] >= 95.0));
      }
  }
  SUBCASE("ranking orders rows; unranked concepts go last") {
    std::vector<std::array<double, 3>> a(40, {1, 1, 3}), b(40, {1, 1, 2}),
        c(40, {1, 1, 1});
    auto m = pairwise_contrasts(concept_samples(a, b, c), {"alpha", "beta", "gamma"},
                                {{"gamma", 1}, {"alpha", 2}}, 2);
    CHECK(m.concepts == std::vector<std::string>{"gamma", "alpha", "beta"});
    CHECK(m.unranked == std::vector<std::string>{"beta"});
  }
}

TEST_CASE("prior-only sampling recovers the prior marginals") {
  auto tree = Phylogeny::parse_newick("(A:1,B:1):0;");
  PosteriorModel model(ModelKind::CognateClass, tree, {});
  ChainConfig cfg;
  cfg.chains = 4;
  cfg.iterations = 4000;
  cfg.seed = 99;
  auto run = sample(model, cfg);
  CHECK(run.converged);
  std::vector<double> lm0;
  for (const auto& c : run.chains)
    for (const auto& s : c.samples) lm0.push_back(s.globals.log_mean[0]);
  CHECK(lm0.size() == 4 * 2000);
  double mean = 0, var = 0;
  for (double v : lm0) mean += v;
  mean /= lm0.size();
  for (double v : lm0) var += (v - mean) * (v - mean);
  var /= lm0.size() - 1;
  CHECK(std::abs(mean) < 0.15);
  CHECK(var == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("sampling is bit-reproducible for a fixed seed") {
  auto tree = Phylogeny::parse_newick("(A:1,B:1.5):0;");
  TraitMatrix t;
  t.id = "t1";
  t.kind = TraitKind::CognateClass;
  t.recon_state = TraitState::MinusIc;
  t.rows["A"] = {0, 1, 0};
  PosteriorModel model(ModelKind::CognateClass, tree, {t});
  ChainConfig cfg;
  cfg.chains = 2;
  cfg.iterations = 200;
  cfg.seed = 42;
  auto r1 = sample(model, cfg);
  auto r2 = sample(model, cfg);
  REQUIRE(r1.chains.size() == r2.chains.size());
  for (std::size_t c = 0; c < r1.chains.size(); ++c) {
    REQUIRE(r1.chains[c].samples.size() == r2.chains[c].samples.size());
    for (std::size_t i = 0; i < r1.chains[c].samples.size(); ++i) {
      CHECK(r1.chains[c].samples[i].globals.log_mean ==
            r2.chains[c].samples[i].globals.log_mean);
      CHECK(r1.chains[c].samples[i].ratios == r2.chains[c].samples[i].ratios);
    }
  }
}

TEST_CASE("sample sizes follow the chain configuration") {
  auto tree = Phylogeny::parse_newick("(A:1,B:1):0;");
  PosteriorModel model(ModelKind::CognateClass, tree, {});
  ChainConfig cfg;
  cfg.chains = 3;
  cfg.iterations = 100;
  cfg.seed = 1;
  auto run = sample(model, cfg, 7);
  CHECK(run.tree_id == 7);
  REQUIRE(run.chains.size() == 3);
  for (const auto& c : run.chains) {
    CHECK(c.samples.size() == 50);
    for (const auto& s : c.samples) CHECK(s.iteration >= 50);
  }
  CHECK(run.psrf_by_scalar.size() == 9);
}

TEST_CASE("csv and json serialization") {
  std::vector<PosteriorSample> s(1, ratio_sample(2, 1, 0.5));
  s[0].globals.sigma = {0.1, 0.2, 0.3, 0.4};
  std::ostringstream csv;
  write_samples_csv(s, csv);
  CHECK(csv.str().find("ratio_birth") != std::string::npos);
  CHECK(csv.str().find("sigma_mu_plus") != std::string::npos);

  std::vector<PosteriorSample> many(200, s[0]);
  auto rep = summarize(many, {{"birth", {1, 0.5, 1.5}}});
  auto js = summary_to_json(rep);
  CHECK(js.find("\"hdi_95\"") != std::string::npos);
  CHECK(js.find("\"baseline\"") != std::string::npos);
}

}  // TEST_SUITE
