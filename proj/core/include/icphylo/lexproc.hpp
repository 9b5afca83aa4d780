#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "icphylo/traits.hpp"

namespace icp {

class LexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SegClass { Consonant, Vowel, Other };

/// Symbol -> class mapping. Multi-character symbols act as digraphs and are
/// resolved by longest match when tokenizing undelimited text.
class SegmentTable {
 public:
  void add(const std::string& symbol, SegClass cls);
  SegClass classify(const std::string& symbol) const;  // throws LexError on unknown symbol
  bool known(const std::string& symbol) const { return table_.count(symbol) > 0; }
  const std::map<std::string, SegClass>& symbols() const { return table_; }

  /// TSV: symbol <tab> class, class in {C, V, O} (or CONSONANT/VOWEL/OTHER).
  static SegmentTable load(std::istream& in);
  static SegmentTable load_file(const std::string& path);

 private:
  std::map<std::string, SegClass> table_;
  std::size_t max_symbol_len_ = 0;
  friend struct Tokenizer;
};

/// Sequence of segments with morpheme-boundary positions. A boundary at
/// index k sits between segments k-1 and k.
struct SegmentedForm {
  std::vector<std::string> segments;
  std::set<std::size_t> boundaries;

  std::size_t size() const { return segments.size(); }
  bool boundary_between(std::size_t i, std::size_t j) const {
    for (std::size_t k = i + 1; k <= j; ++k)
      if (boundaries.count(k)) return true;
    return false;
  }
  std::string joined() const;
};

/// Tokenize, merge digraphs (longest match), turn '+'/'-' into boundaries,
/// strip the geminate marker, and collapse runs of identical adjacent
/// consonants within a morpheme. Space-delimited input is taken as
/// pre-segmented; otherwise digraphs are resolved greedily.
SegmentedForm normalize(const std::string& raw, const SegmentTable& table);

/// Geminate collapse only, for forms that are already segmented (used by the
/// sound-change simulation after applying a change).
SegmentedForm collapse_geminates(const SegmentedForm& form, const SegmentTable& table);

/// True iff two identical consonants are separated by exactly one vowel with
/// no morpheme boundary between them.
bool detect_ic(const SegmentedForm& form, const SegmentTable& table);

struct AlignmentCosts {
  double match = 0.0;
  double mismatch = 1.0;
  double mismatch_same_class = 0.5;  // consonant-consonant (and vowel-vowel)
  double indel = 1.0;
};

struct AlignedSpan {
  std::size_t begin = 0;  // reflex segment range [begin, end)
  std::size_t end = 0;
  double cost = 0.0;
};

/// Semi-global alignment: the etymon is aligned in full, end gaps on the
/// reflex are free, so the returned contiguous reflex span is the cheapest
/// region homologous with the etymon. Ties break leftmost, then shortest.
AlignedSpan align_etymon(const SegmentedForm& etymon, const SegmentedForm& reflex,
                         const SegmentTable& table, const AlignmentCosts& costs = {});

SegmentedForm extract_span(const SegmentedForm& reflex, const AlignedSpan& span);

/// Longest common subsequence of >= 2 forms, folded pairwise left to right;
/// ties broken by leftmost occurrence in the first form. Empty LCS is an
/// error (non-relatable forms).
SegmentedForm lcs_base(const std::vector<SegmentedForm>& forms);

struct WordEntry {
  std::string language;
  std::string cognate_id;
  std::string form;  // raw, normalized on use
};

/// TSV: language <tab> cognate_id <tab> form.
std::vector<WordEntry> load_wordlist(std::istream& in);
std::vector<WordEntry> load_wordlist_file(const std::string& path);

struct Etymon {
  std::string cognate_id;
  std::string form;
};

/// TSV: cognate_id <tab> form.
std::vector<Etymon> load_etyma(std::istream& in);
std::vector<Etymon> load_etyma_file(const std::string& path);

/// States attested by one language for each cognate id: each reflex is
/// aligned to its etymon and the aligned span coded via detect_ic; a
/// language may attest both -IC and +IC for one etymon. When `use_lcs` is
/// set, languages with several reflexes of a cognate id are first reduced to
/// their longest common subsequence.
std::map<std::string, std::set<TraitState>> code_language(
    const std::vector<WordEntry>& entries, const std::vector<Etymon>& etyma,
    const SegmentTable& table, bool use_lcs = false);

}  // namespace icp
