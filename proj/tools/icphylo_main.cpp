// icphylo: batch CLI for coding word lists, running analyses, computing
// baselines and simulating datasets. Subcommands: code, analyze, baseline,
// simulate. Every option may come from a JSON config (--config); explicit
// flags win. All randomness hangs off one --seed.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "icphylo/baselines.hpp"
#include "icphylo/inference.hpp"
#include "icphylo/lexproc.hpp"
#include "icphylo/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  in >> j;
  return j;
}

// Backfills option values from a JSON config for options the user did not
// pass explicitly, so that flags override the file.
void apply_config(CLI::App& cmd, const std::string& config_path) {
  if (config_path.empty()) return;
  json cfg = load_json_file(config_path);
  for (auto& [key, value] : cfg.items()) {
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (!opt) throw std::runtime_error("config key not recognized: " + key);
    if (opt->count() > 0) continue;  // explicit flag wins
    std::string s = value.is_string() ? value.get<std::string>() : value.dump();
    opt->add_result(s);
    opt->run_callback();
  }
}

void write_file(const fs::path& path, const std::string& content) {
  // Write via a temp file and rename so partial output never lands.
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

std::map<std::string, int> load_counts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::map<std::string, int> counts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string lang, num;
    if (!std::getline(ss, lang, '\t') || !std::getline(ss, num, '\t'))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected language<TAB>count");
    counts[lang] = std::stoi(num);
  }
  return counts;
}

std::map<std::string, int> load_ranking(const std::string& path) {
  // Same two-column shape: concept <TAB> rank (1 = most salient).
  return load_counts(path);
}

std::set<std::string> load_allow_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') out.insert(line);
  return out;
}

std::vector<icp::WordEntry> filter_entries(std::vector<icp::WordEntry> entries,
                                           const std::string& allow_path) {
  if (allow_path.empty()) return entries;
  auto allow = load_allow_list(allow_path);
  std::erase_if(entries, [&](const icp::WordEntry& e) { return !allow.count(e.cognate_id); });
  return entries;
}

// ---------------------------------------------------------------- code ----

int run_code(const std::string& wordlist_path, const std::string& etyma_path,
             const std::string& segments_path, const std::string& out_path, bool use_lcs,
             int min_reflexes, double min_coverage) {
  auto table = icp::SegmentTable::load_file(segments_path);
  auto entries = icp::load_wordlist_file(wordlist_path);
  auto etyma = icp::load_etyma_file(etyma_path);

  std::map<std::string, std::vector<icp::WordEntry>> by_language;
  for (const auto& e : entries) by_language[e.language].push_back(e);

  // One cognate-class trait per etymon; the etymon's own coding is the
  // reconstruction state.
  std::map<std::string, icp::TraitMatrix> traits;
  for (const auto& et : etyma) {
    icp::TraitMatrix tm;
    tm.id = et.cognate_id;
    tm.kind = icp::TraitKind::CognateClass;
    tm.recon_state = icp::detect_ic(icp::normalize(et.form, table), table)
                         ? icp::TraitState::PlusIc
                         : icp::TraitState::MinusIc;
    traits.emplace(et.cognate_id, std::move(tm));
  }

  std::vector<std::string> languages;
  for (const auto& [lang, lang_entries] : by_language) {
    languages.push_back(lang);
    auto coded = icp::code_language(lang_entries, etyma, table, use_lcs);
    for (const auto& [cid, states] : coded) {
      icp::StateRow row{};
      for (auto s : states) row[static_cast<int>(s)] = 1.0;
      traits.at(cid).rows[lang] = row;
    }
  }

  std::vector<icp::TraitMatrix> trait_vec;
  for (auto& [cid, tm] : traits)
    if (!tm.rows.empty()) trait_vec.push_back(std::move(tm));

  auto filtered = icp::filter_dataset(trait_vec, languages, min_reflexes, min_coverage);

  std::ostringstream body;
  icp::serialize_traits(filtered.traits, body);
  write_file(out_path, body.str());
  if (!filtered.dropped.empty()) {
    std::ostringstream rep;
    icp::write_drop_report(filtered.dropped, rep);
    std::cerr << rep.str();
  }
  std::cerr << "coded " << filtered.traits.size() << " traits over "
            << filtered.languages.size() << " languages -> " << out_path << "\n";
  return 0;
}

// ------------------------------------------------------------- analyze ----

struct AnalyzeOpts {
  std::string model = "class";
  std::string tree_file, traits_file, out_dir;
  std::string ranking_file, baseline_birth, baseline_mutation;
  std::string contrast_rate = "loss";
  int trees = 25, chains = 4, iters = 2000;
  std::uint64_t seed = 1;
  int threads = 0;
  double root_stem_factor = 0.5;
};

int run_analyze(const AnalyzeOpts& o) {
  icp::ModelKind kind =
      o.model == "concept" ? icp::ModelKind::CognateConcept : icp::ModelKind::CognateClass;

  std::ifstream tf(o.tree_file);
  if (!tf) throw std::runtime_error("cannot open " + o.tree_file);
  std::stringstream tbuf;
  tbuf << tf.rdbuf();
  auto trees = icp::Phylogeny::parse_newick_lines(tbuf.str());
  if (static_cast<int>(trees.size()) < o.trees)
    throw std::runtime_error("requested " + std::to_string(o.trees) + " trees but " +
                             o.tree_file + " holds only " + std::to_string(trees.size()));
  trees.resize(o.trees);

  auto traits = icp::load_traits_file(o.traits_file);
  fs::create_directories(o.out_dir);

  int nthreads = o.threads > 0 ? o.threads
                               : std::max(1u, std::thread::hardware_concurrency());

  // Tree-runs are scheduled across the worker pool; chains inside one run
  // are serial so the pool size bounds total parallelism.
  std::vector<icp::RunResult> runs(trees.size());
  std::vector<std::vector<std::string>> unit_ids(trees.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < trees.size(); i = next.fetch_add(1)) {
      try {
        icp::ModelOptions mo;
        mo.root_stem_factor = o.root_stem_factor;
        icp::PosteriorModel model(kind, trees[i], traits, mo);
        icp::ChainConfig cc;
        cc.chains = o.chains;
        cc.iterations = o.iters;
        cc.seed = o.seed;
        cc.threads = 1;
        runs[i] = icp::sample(model, cc, static_cast<int>(i));
        unit_ids[i].reserve(model.n_units());
        for (int u = 0; u < model.n_units(); ++u) unit_ids[i].push_back(model.unit_id(u));
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(nthreads, static_cast<int>(trees.size())); ++t)
    pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);

  icp::PoolResult pooled;
  try {
    pooled = icp::pool(runs);
  } catch (const icp::InferenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  for (int t : pooled.excluded_trees)
    std::cerr << "tree " << t << " failed convergence; excluded\n";

  {
    std::ostringstream csv;
    icp::write_samples_csv(pooled.samples, csv);
    write_file(fs::path(o.out_dir) / "samples.csv", csv.str());
  }

  std::map<std::string, icp::BaselineRange> baselines;
  auto load_range = [](const std::string& path) {
    json j = load_json_file(path);
    return icp::BaselineRange{j.at("median"), j.at("min"), j.at("max")};
  };
  if (!o.baseline_birth.empty()) baselines["birth"] = load_range(o.baseline_birth);
  if (!o.baseline_mutation.empty()) baselines["mutation"] = load_range(o.baseline_mutation);

  auto report = icp::summarize(pooled.samples, baselines);
  json summary = json::parse(icp::summary_to_json(report));
  summary["model"] = o.model;
  summary["trees_run"] = trees.size();
  summary["trees_converged"] = trees.size() - pooled.excluded_trees.size();
  summary["psrf"] = json::object();
  for (const auto& r : runs) {
    json p = json::object();
    for (const auto& [name, v] : r.psrf_by_scalar) p[name] = v;
    summary["psrf"][std::to_string(r.tree_id)] = std::move(p);
  }
  write_file(fs::path(o.out_dir) / "summary.json", summary.dump(2));

  if (kind == icp::ModelKind::CognateConcept) {
    std::map<std::string, int> ranking;
    if (!o.ranking_file.empty()) ranking = load_ranking(o.ranking_file);
    int rate_index = o.contrast_rate == "birth" ? 0 : o.contrast_rate == "mutation" ? 1 : 2;
    auto contrasts =
        icp::pairwise_contrasts(pooled.samples, unit_ids.front(), ranking, rate_index);
    std::ostringstream csv;
    icp::write_contrasts_csv(contrasts, csv);
    write_file(fs::path(o.out_dir) / "contrasts.csv", csv.str());
  }

  std::cerr << "pooled " << pooled.samples.size() << " samples -> " << o.out_dir << "\n";
  return 0;
}

// ------------------------------------------------------------ baseline ----

int run_baseline(const std::string& kind, const std::string& counts_path,
                 const std::string& wordlist_path, const std::string& segments_path,
                 const std::string& allow_path, int iters, int min_entries, double smoothing,
                 std::uint64_t seed, int threads, const std::string& out_path) {
  icp::BaselineReport report;
  if (kind == "inventory") {
    report = icp::inventory_birth_bound(load_counts(counts_path));
  } else if (kind == "lexicon") {
    auto table = icp::SegmentTable::load_file(segments_path);
    auto entries = filter_entries(icp::load_wordlist_file(wordlist_path), allow_path);
    std::map<std::string, icp::LexiconCounts> counts;
    for (const auto& e : entries) {
      auto form = icp::normalize(e.form, table);
      auto& c = counts[e.language];
      (icp::detect_ic(form, table) ? c.plus_ic : c.minus_ic) += 1;
    }
    report = icp::lexicon_birth_ratio(counts);
  } else if (kind == "soundchange") {
    auto table = icp::SegmentTable::load_file(segments_path);
    auto entries = filter_entries(icp::load_wordlist_file(wordlist_path), allow_path);
    std::map<std::string, std::vector<icp::SegmentedForm>> lexica;
    for (const auto& e : entries) lexica[e.language].push_back(icp::normalize(e.form, table));
    icp::SoundChangeConfig cfg;
    cfg.iterations = iters;
    cfg.min_entries = min_entries;
    cfg.smoothing = smoothing;
    cfg.seed = seed;
    cfg.threads = threads;
    report = icp::sound_change_sim(lexica, table, cfg);
  } else {
    throw std::runtime_error("unknown baseline kind: " + kind);
  }

  std::string out = icp::baseline_to_json(report);
  if (out_path.empty())
    std::cout << out << "\n";
  else
    write_file(out_path, out);
  return 0;
}

// ------------------------------------------------------------ simulate ----

int run_simulate(const std::string& tree_file, const std::string& config_path,
                 const std::string& out_dir, std::uint64_t seed_override, bool has_seed) {
  json cfg = load_json_file(config_path);
  icp::SimConfig sc;
  std::string kind = cfg.value("kind", "class");
  sc.kind = kind == "concept" ? icp::ModelKind::CognateConcept : icp::ModelKind::CognateClass;
  if (cfg.contains("log_mean")) {
    auto lm = cfg.at("log_mean").get<std::vector<double>>();
    if (lm.size() != 6) throw std::runtime_error("log_mean must have 6 entries");
    std::copy(lm.begin(), lm.end(), sc.globals.log_mean.begin());
  }
  sc.globals.sigma = cfg.value("sigma", std::vector<double>(icp::sigma_count(sc.kind), 0.0));
  sc.n_traits = cfg.value("n_traits", 100);
  sc.n_concepts = cfg.value("n_concepts", 1);
  sc.seed = has_seed ? seed_override : cfg.value("seed", std::uint64_t{1});
  sc.condition_on_observed = cfg.value("condition_on_observed", true);
  sc.root_stem_factor = cfg.value("root_stem_factor", 0.5);
  if (cfg.contains("root_stem_length")) sc.root_stem_length = cfg.at("root_stem_length");

  std::ifstream tf(tree_file);
  if (!tf) throw std::runtime_error("cannot open " + tree_file);
  std::stringstream tbuf;
  tbuf << tf.rdbuf();
  auto trees = icp::Phylogeny::parse_newick_lines(tbuf.str());
  if (trees.empty()) throw std::runtime_error("no trees in " + tree_file);

  auto dataset = icp::simulate_dataset(trees.front(), sc);

  fs::create_directories(out_dir);
  std::ostringstream body;
  icp::serialize_traits(icp::dataset_traits(dataset), body);
  write_file(fs::path(out_dir) / "traits.tsv", body.str());
  write_file(fs::path(out_dir) / "truth.json", icp::truth_to_json(dataset, sc));
  std::cerr << "simulated " << dataset.traits.size() << " traits -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phylogenetic inference of identical-consonant trait dynamics"};
  app.require_subcommand(1);

  std::string config_path;

  // code
  auto* code = app.add_subcommand("code", "Code word lists into trait matrices");
  std::string wordlist, etyma, segments, code_out = "traits.tsv";
  bool use_lcs = false;
  int min_reflexes = 0;
  double min_coverage = 0.0;
  code->add_option("--wordlist", wordlist)->required();
  code->add_option("--etyma", etyma)->required();
  code->add_option("--segments", segments)->required();
  code->add_option("--out", code_out);
  code->add_flag("--lcs", use_lcs, "Reduce multiple reflexes to their LCS first");
  code->add_option("--min-reflexes", min_reflexes);
  code->add_option("--min-coverage", min_coverage);

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Run the Bayesian analysis over tree samples");
  AnalyzeOpts ao;
  analyze->add_option("--config", config_path, "JSON config; explicit flags override");
  analyze->add_option("--model", ao.model)->check(CLI::IsMember({"class", "concept"}));
  analyze->add_option("--tree-file", ao.tree_file);
  analyze->add_option("--traits", ao.traits_file);
  analyze->add_option("--out", ao.out_dir);
  analyze->add_option("--trees", ao.trees);
  analyze->add_option("--chains", ao.chains);
  analyze->add_option("--iters", ao.iters);
  analyze->add_option("--seed", ao.seed);
  analyze->add_option("--threads", ao.threads);
  analyze->add_option("--root-stem-factor", ao.root_stem_factor);
  analyze->add_option("--ranking", ao.ranking_file);
  analyze->add_option("--baseline-birth", ao.baseline_birth);
  analyze->add_option("--baseline-mutation", ao.baseline_mutation);
  analyze->add_option("--contrast-rate", ao.contrast_rate)
      ->check(CLI::IsMember({"birth", "mutation", "loss"}));

  // baseline
  auto* baseline = app.add_subcommand("baseline", "Compute neutral baselines");
  std::string bkind, counts_path, ballow, bout;
  int biters = 5000, bmin_entries = 500, bthreads = 0;
  double bsmooth = 0.5;
  std::uint64_t bseed = 1;
  baseline->add_option("--kind", bkind)
      ->required()
      ->check(CLI::IsMember({"inventory", "lexicon", "soundchange"}));
  baseline->add_option("--counts", counts_path);
  baseline->add_option("--wordlist", wordlist);
  baseline->add_option("--segments", segments);
  baseline->add_option("--allow", ballow, "Restrict to listed cognate ids");
  baseline->add_option("--iters", biters);
  baseline->add_option("--min-entries", bmin_entries);
  baseline->add_option("--smoothing", bsmooth);
  baseline->add_option("--seed", bseed);
  baseline->add_option("--threads", bthreads);
  baseline->add_option("--out", bout);

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Forward-simulate a dataset");
  std::string sim_tree, sim_config, sim_out = "simdata";
  std::uint64_t sim_seed = 1;
  simulate->add_option("--tree-file", sim_tree)->required();
  simulate->add_option("--sim-config", sim_config)->required();
  simulate->add_option("--out", sim_out);
  auto* sim_seed_opt = simulate->add_option("--seed", sim_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (code->parsed())
      return run_code(wordlist, etyma, segments, code_out, use_lcs, min_reflexes, min_coverage);
    if (analyze->parsed()) {
      apply_config(*analyze, config_path);
      if (ao.tree_file.empty() || ao.traits_file.empty() || ao.out_dir.empty())
        throw std::runtime_error("analyze needs --tree-file, --traits and --out");
      return run_analyze(ao);
    }
    if (baseline->parsed())
      return run_baseline(bkind, counts_path, wordlist, segments, ballow, biters, bmin_entries,
                          bsmooth, bseed, bthreads, bout);
    if (simulate->parsed())
      return run_simulate(sim_tree, sim_config, sim_out, sim_seed, sim_seed_opt->count() > 0);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
