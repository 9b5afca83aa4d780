#include <benchmark/benchmark.h>

#include <cmath>
#include <functional>
#include <vector>

#include "icphylo/ctm.hpp"
#include "icphylo/inference.hpp"
#include "icphylo/lexproc.hpp"
#include "icphylo/phylo.hpp"
#include "icphylo/rng.hpp"

using namespace icp;

namespace {

Phylogeny balanced_tree(int depth) {
  int label = 0;
  std::function<std::string(int)> build = [&](int d) -> std::string {
    if (d == 0) return "L" + std::to_string(label++) + ":0.25";
    return "(" + build(d - 1) + "," + build(d - 1) + "):0.25";
  };
  std::string inner = build(depth);
  // Strip the inner root length and terminate.
  return Phylogeny::parse_newick(inner.substr(0, inner.rfind(':')) + ":0;");
}

void bm_expm(benchmark::State& state) {
  Matrix3 q = build_q_concept(0.8, 0.5, 0.6, 0.4, 0.7, 0.3);
  double t = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(expm(q, t));
    t += 1e-6;  // defeat any memoization
  }
}
BENCHMARK(bm_expm);

void bm_prune_16_tips(benchmark::State& state) {
  auto tree = balanced_tree(4);
  tree.set_root_stem_length(0.5);
  Matrix3 qb = build_q_birth(0.8, 0.5);
  Matrix3 qn = build_q_nonbirth(0.6, 0.4, 0.7, 0.3);
  std::vector<std::string> present;
  for (int t : tree.tips()) present.push_back(tree.node(t).label);
  auto cls = classify_branches(tree, present);
  TipRows rows(tree.node_count(), Vector3::Ones());
  for (int t : tree.tips()) rows[t] = Vector3(0, 1, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(
        prune_log_likelihood(rows, tree, &cls, qb, qn, absent_root_prior()));
}
BENCHMARK(bm_prune_16_tips);

void bm_detect_ic(benchmark::State& state) {
  SegmentTable table;
  for (const char* c : {"d", "k", "t", "b"}) table.add(c, SegClass::Consonant);
  for (const char* v : {"a", "e", "i"}) table.add(v, SegClass::Vowel);
  auto form = normalize("d e k d e k a t i b a t", table);
  for (auto _ : state) benchmark::DoNotOptimize(detect_ic(form, table));
}
BENCHMARK(bm_detect_ic);

void bm_psrf(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::vector<double>> chains(4, std::vector<double>(1000));
  for (auto& c : chains)
    for (auto& x : c) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(psrf(chains));
}
BENCHMARK(bm_psrf);

}  // namespace

BENCHMARK_MAIN();
