#include "icphylo/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "icphylo/rng.hpp"

namespace icp {

namespace {

void finish_summary(BaselineReport& rep) {
  if (rep.per_language.empty())
    throw BaselineError("baseline has no usable languages");
  std::vector<double> v;
  v.reserve(rep.per_language.size());
  for (const auto& [lang, x] : rep.per_language) v.push_back(x);
  std::sort(v.begin(), v.end());
  rep.min = v.front();
  rep.max = v.back();
  std::size_t n = v.size();
  rep.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Applies one substitution/deletion at the positions selected by `type` and
// returns the form after geminate collapse.
SegmentedForm apply_change(const SegmentedForm& form, const SegmentTable& table,
                           const std::string& input, int type, const std::string& output) {
  SegmentedForm out;
  const std::size_t n = form.size();
  std::vector<std::size_t> new_index(n + 1);
  std::size_t kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    new_index[i] = kept;
    bool eligible = form.segments[i] == input;
    if (eligible) {
      if (type == 1) eligible = i == 0;
      else if (type == 2) eligible = i > 0 && i + 1 < n;
    }
    if (!eligible) {
      out.segments.push_back(form.segments[i]);
      ++kept;
    } else if (!output.empty()) {
      out.segments.push_back(output);
      ++kept;
    }
    // deletion: segment dropped
  }
  new_index[n] = kept;
  for (std::size_t b : form.boundaries) {
    std::size_t nb = new_index[b];
    if (nb > 0 && nb < out.segments.size()) out.boundaries.insert(nb);
  }
  return collapse_geminates(out, table);
}

}  // namespace

BaselineReport inventory_birth_bound(const std::map<std::string, int>& consonant_counts) {
  if (consonant_counts.empty()) throw BaselineError("no consonant counts given");
  BaselineReport rep;
  rep.kind = BaselineKind::BirthInventory;
  for (const auto& [lang, s] : consonant_counts) {
    if (s < 2)
      throw BaselineError("language " + lang + ": consonant count must be >= 2, got " +
                          std::to_string(s));
    rep.per_language[lang] = s - 1;
  }
  finish_summary(rep);
  return rep;
}

BaselineReport lexicon_birth_ratio(const std::map<std::string, LexiconCounts>& counts) {
  if (counts.empty()) throw BaselineError("empty wordlist");
  BaselineReport rep;
  rep.kind = BaselineKind::BirthLexicon;
  for (const auto& [lang, c] : counts) {
    if (c.plus_ic <= 0) {
      rep.skipped.push_back(lang);
      continue;
    }
    rep.per_language[lang] = static_cast<double>(c.minus_ic) / c.plus_ic;
  }
  finish_summary(rep);
  return rep;
}

double apply_change_ratio(const std::vector<SegmentedForm>& lexicon, const SegmentTable& table,
                          const std::string& input, int type, const std::string& output,
                          double smoothing) {
  long n_pm = 0, n_mp = 0;  // +IC -> -IC and -IC -> +IC
  for (const auto& form : lexicon) {
    bool before = detect_ic(form, table);
    bool after = detect_ic(apply_change(form, table, input, type, output), table);
    if (before && !after) ++n_pm;
    else if (!before && after) ++n_mp;
  }
  return (n_pm + smoothing) / (n_mp + smoothing);
}

BaselineReport sound_change_sim(
    const std::map<std::string, std::vector<SegmentedForm>>& wordlists, const SegmentTable& table,
    const SoundChangeConfig& config) {
  if (wordlists.empty()) throw BaselineError("empty wordlist");
  if (config.iterations < 1) throw BaselineError("iteration count must be >= 1");

  BaselineReport rep;
  rep.kind = BaselineKind::MutationSim;

  struct Job {
    std::string language;
    const std::vector<SegmentedForm>* lexicon;
    std::uint64_t stream;
    double result = 0;
  };
  std::vector<Job> jobs;
  std::uint64_t stream_id = 0;
  for (const auto& [lang, lexicon] : wordlists) {
    std::uint64_t id = stream_id++;
    if (lexicon.size() < config.min_entries) {
      rep.skipped.push_back(lang);
      continue;
    }
    jobs.push_back({lang, &lexicon, id});
  }
  if (jobs.empty()) throw BaselineError("no language reaches the minimum entry count");

  auto run_job = [&](Job& job) {
    // Attested consonant + vowel inventory.
    std::set<std::string> inv_set;
    for (const auto& form : *job.lexicon)
      for (const auto& seg : form.segments)
        if (table.classify(seg) != SegClass::Other) inv_set.insert(seg);
    if (inv_set.empty()) throw BaselineError("language " + job.language + ": empty inventory");
    std::vector<std::string> inventory(inv_set.begin(), inv_set.end());

    Rng rng = Rng::stream(config.seed, job.stream);
    double sum = 0;
    for (int it = 0; it < config.iterations; ++it) {
      const std::string& input = inventory[rng.below(inventory.size())];
      int type = static_cast<int>(rng.below(3));
      std::string output;
      if (type == 0) {
        output = inventory[rng.below(inventory.size())];
      } else {
        // Positional changes also allow deletion (encoded as empty output).
        std::uint64_t k = rng.below(inventory.size() + 1);
        if (k < inventory.size()) output = inventory[k];
      }
      sum += apply_change_ratio(*job.lexicon, table, input, type, output, config.smoothing);
    }
    job.result = sum / config.iterations;
  };

  int nthreads = config.threads > 0 ? config.threads
                                    : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min<int>(nthreads, static_cast<int>(jobs.size()));
  if (nthreads <= 1) {
    for (auto& job : jobs) run_job(job);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&]() {
      for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
        try {
          run_job(jobs[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }

  for (const auto& job : jobs) rep.per_language[job.language] = job.result;
  finish_summary(rep);
  return rep;
}

std::string baseline_to_json(const BaselineReport& report) {
  static const char* names[] = {"BIRTH_INVENTORY", "BIRTH_LEXICON", "MUTATION_SIM"};
  nlohmann::json j;
  j["kind"] = names[static_cast<int>(report.kind)];
  j["per_language"] = report.per_language;
  j["skipped"] = report.skipped;
  j["median"] = report.median;
  j["min"] = report.min;
  j["max"] = report.max;
  return j.dump(2);
}

}  // namespace icp
