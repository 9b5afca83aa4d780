#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "icphylo/lexproc.hpp"

namespace icp {

class BaselineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BaselineKind { BirthInventory, BirthLexicon, MutationSim };

struct BaselineReport {
  BaselineKind kind = BaselineKind::BirthInventory;
  std::map<std::string, double> per_language;
  std::vector<std::string> skipped;  // languages excluded, with the reason in logs
  double median = 0;
  double min = 0;
  double max = 0;
};

/// Upper bound on the cognate-class birth ratio: S - 1 for a language with S
/// consonants. Counts below 2 are an error.
BaselineReport inventory_birth_bound(const std::map<std::string, int>& consonant_counts);

/// Per-language counts of coded forms without vs with identical consonants.
struct LexiconCounts {
  long minus_ic = 0;
  long plus_ic = 0;
};

/// (#-IC forms) / (#+IC forms) per language; languages with no +IC forms are
/// skipped and reported.
BaselineReport lexicon_birth_ratio(const std::map<std::string, LexiconCounts>& counts);

struct SoundChangeConfig {
  int iterations = 5000;
  std::size_t min_entries = 500;  // languages below this are skipped
  double smoothing = 0.5;         // c in (n+- + c)/(n-+ + c)
  std::uint64_t seed = 1;
  int threads = 0;  // 0: hardware concurrency
};

/// Neutral sound-change Monte Carlo: each iteration draws an input segment
/// uniformly from the language's attested inventory, a change type uniformly
/// from {unconditioned, word-initial, word-medial}, and an output segment
/// uniformly from the inventory (deletion also allowed for the positional
/// types), applies the change across the lexicon, and compares IC coding
/// before and after. Ratios (n+- + c)/(n-+ + c) are averaged per language.
BaselineReport sound_change_sim(
    const std::map<std::string, std::vector<SegmentedForm>>& wordlists, const SegmentTable& table,
    const SoundChangeConfig& config = {});

/// Single-iteration core, exposed for tests: applies one (input, type,
/// output) change across the lexicon and returns the smoothed ratio.
/// `output` empty means deletion. Type: 0 unconditioned, 1 word-initial,
/// 2 word-medial.
double apply_change_ratio(const std::vector<SegmentedForm>& lexicon, const SegmentTable& table,
                          const std::string& input, int type, const std::string& output,
                          double smoothing);

std::string baseline_to_json(const BaselineReport& report);

}  // namespace icp
