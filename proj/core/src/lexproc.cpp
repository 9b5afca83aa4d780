#include "icphylo/lexproc.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

namespace icp {

namespace {

const std::string kGeminateMarker = "ː";  // IPA length mark

SegClass parse_seg_class(const std::string& token, int lineno) {
  if (token == "C" || token == "CONSONANT") return SegClass::Consonant;
  if (token == "V" || token == "VOWEL") return SegClass::Vowel;
  if (token == "O" || token == "OTHER") return SegClass::Other;
  throw LexError("segment table line " + std::to_string(lineno) + ": unknown class '" + token +
                 "'");
}

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

bool is_boundary_token(const std::string& s) { return s == "+" || s == "-"; }

std::string strip_geminate_marker(const std::string& seg) {
  std::string out = seg;
  for (std::size_t p = out.find(kGeminateMarker); p != std::string::npos;
       p = out.find(kGeminateMarker))
    out.erase(p, kGeminateMarker.size());
  return out;
}

}  // namespace

void SegmentTable::add(const std::string& symbol, SegClass cls) {
  if (symbol.empty()) throw LexError("empty segment symbol");
  table_[symbol] = cls;
  max_symbol_len_ = std::max(max_symbol_len_, symbol.size());
}

SegClass SegmentTable::classify(const std::string& symbol) const {
  auto it = table_.find(symbol);
  if (it == table_.end()) throw LexError("unclassifiable symbol: '" + symbol + "'");
  return it->second;
}

SegmentTable SegmentTable::load(std::istream& in) {
  SegmentTable t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tsv(line);
    if (f.size() == 2 && f[0] == "symbol") continue;
    if (f.size() != 2)
      throw LexError("segment table line " + std::to_string(lineno) + ": expected 2 columns");
    t.add(f[0], parse_seg_class(f[1], lineno));
  }
  return t;
}

SegmentTable SegmentTable::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LexError("cannot open segment table: " + path);
  return load(in);
}

std::string SegmentedForm::joined() const {
  std::string out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (i) out.push_back(' ');
    if (boundaries.count(i)) out += "+ ";
    out += segments[i];
  }
  return out;
}

namespace {

// Longest-match tokenization of undelimited text.
std::vector<std::string> tokenize_greedy(const std::string& raw, const SegmentTable& table,
                                         std::size_t max_len) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] == '+' || raw[i] == '-' || raw[i] == ' ') {
      out.emplace_back(1, raw[i]);
      ++i;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t len = std::min(max_len, raw.size() - i); len >= 1; --len) {
      std::string cand = raw.substr(i, len);
      if (table.known(strip_geminate_marker(cand)) || table.known(cand)) {
        best = len;
        break;
      }
    }
    if (best == 0) {
      // Surface the offending unit: a single UTF-8 code point.
      std::size_t len = 1;
      while (i + len < raw.size() && (static_cast<unsigned char>(raw[i + len]) & 0xc0) == 0x80)
        ++len;
      throw LexError("unclassifiable symbol: '" + raw.substr(i, len) + "'");
    }
    out.push_back(raw.substr(i, best));
    i += best;
  }
  return out;
}

}  // namespace

SegmentedForm normalize(const std::string& raw, const SegmentTable& table) {
  if (raw.empty()) throw LexError("cannot normalize an empty form");

  std::vector<std::string> tokens;
  if (raw.find(' ') != std::string::npos) {
    std::istringstream ss(raw);
    std::string tok;
    while (ss >> tok) tokens.push_back(tok);
  } else {
    std::size_t max_len = 1;
    for (const auto& [sym, cls] : table.symbols()) max_len = std::max(max_len, sym.size() + 2);
    tokens = tokenize_greedy(raw, table, max_len);
  }

  SegmentedForm form;
  for (auto& tok : tokens) {
    if (tok == " ") continue;
    if (is_boundary_token(tok)) {
      if (!form.segments.empty()) form.boundaries.insert(form.segments.size());
      continue;
    }
    std::string seg = strip_geminate_marker(tok);
    if (seg.empty()) continue;  // bare length mark attaches to the previous segment
    table.classify(seg);        // unknown symbols are hard errors
    form.segments.push_back(std::move(seg));
  }
  if (form.segments.empty()) throw LexError("form reduced to nothing: '" + raw + "'");
  return collapse_geminates(form, table);
}

SegmentedForm collapse_geminates(const SegmentedForm& form, const SegmentTable& table) {
  SegmentedForm out;
  for (std::size_t i = 0; i < form.segments.size(); ++i) {
    bool at_boundary = form.boundaries.count(i) > 0;
    if (at_boundary && !out.segments.empty()) out.boundaries.insert(out.segments.size());
    const std::string& seg = form.segments[i];
    if (!at_boundary && !out.segments.empty() && out.segments.back() == seg &&
        table.classify(seg) == SegClass::Consonant &&
        !out.boundaries.count(out.segments.size()))
      continue;  // doubled consonant within a morpheme
    out.segments.push_back(seg);
  }
  return out;
}

bool detect_ic(const SegmentedForm& form, const SegmentTable& table) {
  for (std::size_t i = 0; i + 2 < form.segments.size(); ++i) {
    if (form.segments[i] != form.segments[i + 2]) continue;
    if (table.classify(form.segments[i]) != SegClass::Consonant) continue;
    if (table.classify(form.segments[i + 1]) != SegClass::Vowel) continue;
    if (form.boundary_between(i, i + 2)) continue;
    return true;
  }
  return false;
}

AlignedSpan align_etymon(const SegmentedForm& etymon, const SegmentedForm& reflex,
                         const SegmentTable& table, const AlignmentCosts& costs) {
  if (etymon.segments.empty() || reflex.segments.empty())
    throw LexError("align_etymon: both forms must be nonempty");
  const std::size_t m = etymon.size(), n = reflex.size();

  auto sub_cost = [&](std::size_t i, std::size_t j) {
    const std::string& a = etymon.segments[i - 1];
    const std::string& b = reflex.segments[j - 1];
    if (a == b) return costs.match;
    SegClass ca = table.classify(a), cb = table.classify(b);
    return ca == cb && ca != SegClass::Other ? costs.mismatch_same_class : costs.mismatch;
  };

  std::vector<std::vector<double>> d(m + 1, std::vector<double>(n + 1, 0.0));
  // Free reflex prefix: d[0][j] = 0. Etymon gaps always cost.
  for (std::size_t i = 1; i <= m; ++i) d[i][0] = d[i - 1][0] + costs.indel;
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + sub_cost(i, j), d[i - 1][j] + costs.indel,
                          d[i][j - 1] + costs.indel});

  // Free reflex suffix: the alignment may end at any column. Strict < keeps
  // the leftmost end on ties.
  AlignedSpan best;
  best.cost = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j <= n; ++j)
    if (d[m][j] < best.cost - 1e-12) {
      best.cost = d[m][j];
      best.end = j;
    }

  // Deterministic traceback: diagonal, then up, then left; up over left
  // keeps the span short for the chosen end.
  std::size_t i = m, j = best.end;
  const double eps = 1e-9;
  while (i > 0) {
    if (j > 0 && std::abs(d[i - 1][j - 1] + sub_cost(i, j) - d[i][j]) < eps) {
      --i;
      --j;
    } else if (std::abs(d[i - 1][j] + costs.indel - d[i][j]) < eps) {
      --i;
    } else {
      --j;
    }
  }
  best.begin = j;
  return best;
}

SegmentedForm extract_span(const SegmentedForm& reflex, const AlignedSpan& span) {
  SegmentedForm out;
  for (std::size_t k = span.begin; k < span.end; ++k) {
    if (k > span.begin && reflex.boundaries.count(k))
      out.boundaries.insert(out.segments.size());
    out.segments.push_back(reflex.segments[k]);
  }
  return out;
}

namespace {

std::vector<std::string> lcs_pair(const std::vector<std::string>& a,
                                  const std::vector<std::string>& b) {
  const std::size_t m = a.size(), n = b.size();
  std::vector<std::vector<int>> len(m + 1, std::vector<int>(n + 1, 0));
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      len[i][j] = a[i - 1] == b[j - 1] ? len[i - 1][j - 1] + 1
                                       : std::max(len[i - 1][j], len[i][j - 1]);
  // Leftmost-in-first-form tie break: when moving back, prefer dropping from
  // b, so matched positions in a sit as far left as possible.
  std::vector<std::string> out;
  std::size_t i = m, j = n;
  while (i > 0 && j > 0) {
    if (a[i - 1] == b[j - 1]) {
      out.push_back(a[i - 1]);
      --i;
      --j;
    } else if (len[i - 1][j] >= len[i][j - 1]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

SegmentedForm lcs_base(const std::vector<SegmentedForm>& forms) {
  if (forms.size() < 2) throw LexError("lcs_base needs at least two forms");
  std::vector<std::string> acc = forms[0].segments;
  for (std::size_t k = 1; k < forms.size(); ++k) acc = lcs_pair(acc, forms[k].segments);
  if (acc.empty()) throw LexError("lcs_base: forms share no common subsequence");
  SegmentedForm out;
  out.segments = std::move(acc);
  return out;
}

std::vector<WordEntry> load_wordlist(std::istream& in) {
  std::vector<WordEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tsv(line);
    if (f.size() == 3 && f[0] == "language") continue;
    if (f.size() != 3)
      throw LexError("wordlist line " + std::to_string(lineno) + ": expected 3 columns");
    out.push_back({f[0], f[1], f[2]});
  }
  return out;
}

std::vector<WordEntry> load_wordlist_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LexError("cannot open wordlist: " + path);
  return load_wordlist(in);
}

std::vector<Etymon> load_etyma(std::istream& in) {
  std::vector<Etymon> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tsv(line);
    if (f.size() == 2 && f[0] == "cognate_id") continue;
    if (f.size() != 2)
      throw LexError("etyma line " + std::to_string(lineno) + ": expected 2 columns");
    out.push_back({f[0], f[1]});
  }
  return out;
}

std::vector<Etymon> load_etyma_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LexError("cannot open etyma file: " + path);
  return load_etyma(in);
}

std::map<std::string, std::set<TraitState>> code_language(
    const std::vector<WordEntry>& entries, const std::vector<Etymon>& etyma,
    const SegmentTable& table, bool use_lcs) {
  std::map<std::string, SegmentedForm> etymon_forms;
  for (const auto& e : etyma) etymon_forms[e.cognate_id] = normalize(e.form, table);

  std::map<std::string, std::vector<SegmentedForm>> reflexes;
  for (const auto& w : entries) {
    try {
      reflexes[w.cognate_id].push_back(normalize(w.form, table));
    } catch (const LexError& e) {
      throw LexError(std::string(e.what()) + " (language " + w.language + ", cognate " +
                     w.cognate_id + ", form '" + w.form + "')");
    }
  }

  std::map<std::string, std::set<TraitState>> out;
  for (auto& [cid, forms] : reflexes) {
    auto et = etymon_forms.find(cid);
    if (et == etymon_forms.end()) throw LexError("no etymon for cognate id " + cid);
    std::vector<SegmentedForm> bases;
    if (use_lcs && forms.size() >= 2) {
      try {
        bases.push_back(lcs_base(forms));
      } catch (const LexError&) {
        bases = forms;  // non-relatable forms: code each reflex on its own
      }
    } else {
      bases = forms;
    }
    for (const auto& base : bases) {
      AlignedSpan span = align_etymon(et->second, base, table);
      SegmentedForm aligned = extract_span(base, span);
      bool ic = !aligned.segments.empty() ? detect_ic(aligned, table) : detect_ic(base, table);
      out[cid].insert(ic ? TraitState::PlusIc : TraitState::MinusIc);
    }
  }
  return out;
}

}  // namespace icp
