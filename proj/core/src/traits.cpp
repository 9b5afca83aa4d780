#include "icphylo/traits.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace icp {

const char* to_string(TraitState s) {
  switch (s) {
    case TraitState::Absent: return "ABSENT";
    case TraitState::MinusIc: return "-IC";
    case TraitState::PlusIc: return "+IC";
  }
  return "?";
}

TraitState parse_trait_state(const std::string& token) {
  if (token == "ABSENT") return TraitState::Absent;
  if (token == "-IC") return TraitState::MinusIc;
  if (token == "+IC") return TraitState::PlusIc;
  throw TraitError("unknown state token: '" + token + "'");
}

std::vector<std::string> TraitMatrix::present_tips() const {
  std::vector<std::string> out;
  for (const auto& [tip, row] : rows)
    if (row[1] > 0 || row[2] > 0) out.push_back(tip);
  return out;
}

void TraitMatrix::validate() const {
  if (id.empty()) throw TraitError("trait with empty id");
  if (kind == TraitKind::CognateClass && !recon_state.has_value())
    throw TraitError("cognate-class trait " + id + " lacks recon_state");
  if (kind == TraitKind::CognateClass && recon_state == TraitState::Absent)
    throw TraitError("trait " + id + ": recon_state must be -IC or +IC");
  if (kind == TraitKind::CognateConcept && concept_id.empty())
    throw TraitError("cognate-concept trait " + id + " lacks concept_id");
  bool any_present = false;
  for (const auto& [tip, row] : rows) {
    if (row[0] + row[1] + row[2] <= 0)
      throw TraitError("trait " + id + ", tip " + tip + ": all-zero likelihood row");
    if (row[1] > 0 || row[2] > 0) any_present = true;
  }
  if (!any_present)
    throw TraitError("trait " + id + ": no tip attests a non-ABSENT state");
}

StateSupport state_support(const TraitMatrix& trait, std::size_t universe_size) {
  StateSupport s;
  s.trait_id = trait.id;
  for (const auto& [tip, row] : trait.rows) {
    if (row[1] > 0) s.attested.insert(TraitState::MinusIc);
    if (row[2] > 0) s.attested.insert(TraitState::PlusIc);
    if (row[0] > 0 && row[1] == 0 && row[2] == 0) s.attested.insert(TraitState::Absent);
  }
  if (universe_size > trait.rows.size()) s.attested.insert(TraitState::Absent);
  return s;
}

namespace {

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<TraitMatrix> load_traits(std::istream& in) {
  std::map<std::string, TraitMatrix> by_id;
  std::vector<std::string> order;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tsv(line);
    if (f.size() == 6 && f[0] == "trait_id") continue;  // header
    if (f.size() != 6)
      throw TraitError("line " + std::to_string(lineno) + ": expected 6 TSV columns, got " +
                       std::to_string(f.size()));
    const std::string& id = f[0];
    TraitKind kind;
    if (f[1] == "class")
      kind = TraitKind::CognateClass;
    else if (f[1] == "concept")
      kind = TraitKind::CognateConcept;
    else
      throw TraitError("line " + std::to_string(lineno) + ": unknown kind '" + f[1] + "'");

    auto it = by_id.find(id);
    if (it == by_id.end()) {
      TraitMatrix t;
      t.id = id;
      t.kind = kind;
      if (f[2] != "*") t.concept_id = f[2];
      if (f[3] != "*") {
        try {
          t.recon_state = parse_trait_state(f[3]);
        } catch (const TraitError&) {
          throw TraitError("line " + std::to_string(lineno) + ": bad recon_state '" + f[3] + "'");
        }
      }
      it = by_id.emplace(id, std::move(t)).first;
      order.push_back(id);
    } else if (it->second.kind != kind) {
      throw TraitError("line " + std::to_string(lineno) + ": trait " + id +
                       " changes kind mid-file");
    }

    TraitState st;
    try {
      st = parse_trait_state(f[5]);
    } catch (const TraitError&) {
      throw TraitError("line " + std::to_string(lineno) + ": unknown state token '" + f[5] + "'");
    }
    StateRow& row = it->second.rows.try_emplace(f[4], StateRow{0, 0, 0}).first->second;
    row[static_cast<int>(st)] = 1.0;
  }

  std::vector<TraitMatrix> out;
  out.reserve(order.size());
  for (const auto& id : order) {
    by_id[id].validate();
    out.push_back(std::move(by_id[id]));
  }
  return out;
}

std::vector<TraitMatrix> load_traits_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraitError("cannot open traits file: " + path);
  return load_traits(in);
}

void serialize_traits(const std::vector<TraitMatrix>& traits, std::ostream& out) {
  out << "trait_id\tkind\tconcept_id\trecon_state\ttip_label\tstate\n";
  for (const auto& t : traits) {
    const char* kind = t.kind == TraitKind::CognateClass ? "class" : "concept";
    std::string cid = t.concept_id.empty() ? "*" : t.concept_id;
    std::string recon = t.recon_state ? to_string(*t.recon_state) : "*";
    for (const auto& [tip, row] : t.rows) {
      for (int s = 0; s < 3; ++s)
        if (row[s] > 0)
          out << t.id << '\t' << kind << '\t' << cid << '\t' << recon << '\t' << tip << '\t'
              << to_string(static_cast<TraitState>(s)) << '\n';
    }
  }
}

FilterResult filter_dataset(const std::vector<TraitMatrix>& traits,
                            const std::vector<std::string>& languages,
                            int min_reflexes, double min_coverage) {
  if (min_reflexes < 0) throw TraitError("min_reflexes must be >= 0");
  if (min_coverage < 0 || min_coverage > 1) throw TraitError("min_coverage must be in [0,1]");

  FilterResult res;

  std::map<std::string, int> reflex_count;
  for (const auto& l : languages) reflex_count[l] = 0;
  for (const auto& t : traits)
    for (const auto& tip : t.present_tips()) {
      auto it = reflex_count.find(tip);
      if (it != reflex_count.end()) ++it->second;
    }

  std::set<std::string> kept_langs;
  for (const auto& l : languages) {
    if (reflex_count[l] > min_reflexes) {
      kept_langs.insert(l);
    } else {
      res.dropped.push_back({l, "language has " + std::to_string(reflex_count[l]) +
                                    " reflexes (needs more than " +
                                    std::to_string(min_reflexes) + ")"});
    }
  }
  res.languages.assign(kept_langs.begin(), kept_langs.end());

  const double n_langs = static_cast<double>(kept_langs.size());
  for (const auto& t : traits) {
    TraitMatrix kept = t;
    for (auto it = kept.rows.begin(); it != kept.rows.end();) {
      if (kept_langs.count(it->first))
        ++it;
      else
        it = kept.rows.erase(it);
    }
    int present = static_cast<int>(kept.present_tips().size());
    if (static_cast<double>(present) > min_coverage * n_langs && present > 0) {
      res.traits.push_back(std::move(kept));
    } else {
      res.dropped.push_back({t.id, "trait present in " + std::to_string(present) + " of " +
                                       std::to_string(kept_langs.size()) + " languages"});
    }
  }
  if (res.traits.empty() || res.languages.empty())
    throw TraitError("filter_dataset: filters removed everything; check thresholds");
  return res;
}

void write_drop_report(const std::vector<DropRecord>& dropped, std::ostream& out) {
  out << "entity\treason\n";
  for (const auto& d : dropped) out << d.entity << '\t' << d.reason << '\n';
}

}  // namespace icp
