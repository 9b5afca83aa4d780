#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace icp {

class TraitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed ordering for matrix indexing.
enum class TraitState : int { Absent = 0, MinusIc = 1, PlusIc = 2 };

const char* to_string(TraitState s);
TraitState parse_trait_state(const std::string& token);  // "ABSENT", "-IC", "+IC"

enum class TraitKind { CognateClass, CognateConcept };

using StateRow = std::array<double, 3>;  // {0,1} likelihood entries

inline constexpr StateRow kAbsentRow{1.0, 0.0, 0.0};

/// Per-tip likelihood rows for one trait. Tips not listed default to
/// ABSENT with certainty (etymological sources list only reflexes).
struct TraitMatrix {
  std::string id;
  TraitKind kind = TraitKind::CognateClass;
  std::string concept_id;                       // required iff kind == CognateConcept
  std::optional<TraitState> recon_state;        // required iff kind == CognateClass
  std::map<std::string, StateRow> rows;         // tip label -> row

  StateRow row_for(const std::string& tip) const {
    auto it = rows.find(tip);
    return it == rows.end() ? kAbsentRow : it->second;
  }

  /// Tips with a 1 in a non-ABSENT column.
  std::vector<std::string> present_tips() const;

  void validate() const;
};

/// Attested-state set; ABSENT counts only when some tip is unambiguously
/// absent (explicitly listed or defaulted).
struct StateSupport {
  std::string trait_id;
  std::set<TraitState> attested;

  bool has(TraitState s) const { return attested.count(s) > 0; }
  bool full() const { return attested.size() == 3; }
  /// -IC <-> +IC transitions informative only when both states attested.
  bool rho_active() const { return has(TraitState::MinusIc) && has(TraitState::PlusIc); }
};

/// Union of columns containing a 1 across explicit rows; ABSENT is added
/// when a row is exactly absent-certain or when `universe_size` exceeds the
/// number of explicit rows (defaulted tips).
StateSupport state_support(const TraitMatrix& trait, std::size_t universe_size = 0);

/// TSV columns: trait_id, kind, concept_id, recon_state, tip_label, state.
/// kind in {class, concept}; empty concept_id/recon_state written as "*".
std::vector<TraitMatrix> load_traits(std::istream& in);
std::vector<TraitMatrix> load_traits_file(const std::string& path);
void serialize_traits(const std::vector<TraitMatrix>& traits, std::ostream& out);

struct DropRecord {
  std::string entity;  // language or trait id
  std::string reason;
};

struct FilterResult {
  std::vector<TraitMatrix> traits;
  std::vector<std::string> languages;  // retained
  std::vector<DropRecord> dropped;
};

/// Paper filters: drop languages with <= min_reflexes present traits, then
/// traits present in <= min_coverage of remaining languages (both strict
/// "more than"). Rows of dropped languages are removed from every trait.
FilterResult filter_dataset(const std::vector<TraitMatrix>& traits,
                            const std::vector<std::string>& languages,
                            int min_reflexes, double min_coverage);

void write_drop_report(const std::vector<DropRecord>& dropped, std::ostream& out);

}  // namespace icp
