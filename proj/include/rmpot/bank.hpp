#pragma once

// Domain-labelled question bank with exact cosine retrieval.
//
// On disk: one header line {"version": 1, "dim": d, "domains": [...]} and
// then one {"id", "question", "solution", "domain", "vector"} object per line.
// Centroids are not stored; they are recomputed on load.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "rmpot/core.hpp"
#include "rmpot/gateway.hpp"

namespace rmpot {

inline constexpr int kBankFormatVersion = 1;
inline constexpr int kDefaultRetrievalK = 5;

// Dot product of two unit vectors, clamped to [-1, 1].
inline double cosine_sim(const EmbeddingVec& u, const EmbeddingVec& v) {
  if (u.dim() != v.dim())
    throw DimensionMismatch("cosine_sim over dims " + std::to_string(u.dim()) + " and " +
                            std::to_string(v.dim()));
  double dot = 0.0;
  for (std::size_t i = 0; i < u.dim(); ++i) dot += u.values[i] * v.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

struct BankPair {
  std::string id;
  std::string question;
  std::string solution;
  std::string domain;
};

struct BankEntry {
  std::string id;
  std::string question;
  std::string solution;
  std::string domain;
  EmbeddingVec vector;
};

struct Domain {
  std::string name;
  EmbeddingVec centroid;
  std::size_t size = 0;
};

struct ScoredEntry {
  const BankEntry* entry = nullptr;
  double similarity = 0.0;
};

class Bank {
 public:
  Bank() = default;

  // Entries are kept sorted by id; that order also fixes the centroid
  // summation so input order never changes a centroid.
  explicit Bank(std::vector<BankEntry> entries) : entries_(std::move(entries)) {
    if (entries_.empty()) throw PreconditionError("a bank needs at least one entry");
    std::sort(entries_.begin(), entries_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    dim_ = entries_.front().vector.dim();
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (i > 0 && entries_[i - 1].id == e.id) throw DuplicateId("duplicate bank entry id '" + e.id + "'");
      if (e.domain.empty()) throw PreconditionError("bank entry '" + e.id + "' has no domain");
      if (e.vector.dim() != dim_)
        throw DimensionMismatch("bank entry '" + e.id + "' has dim " + std::to_string(e.vector.dim()) +
                                ", expected " + std::to_string(dim_));
    }
    std::map<std::string, std::vector<long double>> sums;
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries_) {
      auto& s = sums[e.domain];
      s.resize(dim_, 0.0L);
      for (std::size_t d = 0; d < dim_; ++d) s[d] += e.vector.values[d];
      ++counts[e.domain];
    }
    for (auto& [name, s] : sums) {
      std::vector<double> mean(dim_);
      for (std::size_t d = 0; d < dim_; ++d) mean[d] = static_cast<double>(s[d] / counts[name]);
      domains_.push_back({name, normalized(std::move(mean)), counts[name]});
    }
  }

  const std::vector<BankEntry>& entries() const { return entries_; }
  const std::vector<Domain>& domains() const { return domains_; }  // sorted by name
  std::size_t dim() const { return dim_; }

  // Nearest centroid; ties go to the lexicographically smaller name.
  const Domain& classify(const EmbeddingVec& query) const {
    if (domains_.empty()) throw PreconditionError("bank has no domains");
    const Domain* best = nullptr;
    double best_sim = 0.0;
    for (const auto& d : domains_) {
      double s = cosine_sim(query, d.centroid);
      if (!best || s > best_sim) {
        best = &d;
        best_sim = s;
      }
    }
    return *best;
  }

  // The k most similar entries of `domain`, descending; ties by smaller id.
  std::vector<ScoredEntry> top_k(const EmbeddingVec& query, const std::string& domain, int k) const {
    if (k < 0) throw PreconditionError("k must be non-negative");
    std::vector<ScoredEntry> scored;
    for (const auto& e : entries_)
      if (e.domain == domain) scored.push_back({&e, cosine_sim(query, e.vector)});
    auto keep = std::min(scored.size(), static_cast<std::size_t>(k));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      [](const ScoredEntry& a, const ScoredEntry& b) {
                        if (a.similarity != b.similarity) return a.similarity > b.similarity;
                        return a.entry->id < b.entry->id;
                      });
    scored.resize(keep);
    return scored;
  }

  void save(const std::filesystem::path& path) const {
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw ConfigError("cannot write bank file '" + tmp.string() + "'");
      nlohmann::json names = nlohmann::json::array();
      for (const auto& d : domains_) names.push_back(d.name);
      out << nlohmann::json{{"version", kBankFormatVersion}, {"dim", dim_}, {"domains", names}}.dump() << '\n';
      for (const auto& e : entries_)
        out << nlohmann::json{{"id", e.id},
                              {"question", e.question},
                              {"solution", e.solution},
                              {"domain", e.domain},
                              {"vector", e.vector.values}}
                   .dump()
            << '\n';
      if (!out.flush()) throw ConfigError("failed writing bank file '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw ConfigError("cannot replace bank file '" + path.string() + "': " + ec.message());
  }

  static Bank load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open bank file '" + path.string() + "'");
    std::string line;
    int lineno = 0;
    nlohmann::json header;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim_view(line).empty()) continue;
      header = nlohmann::json::parse(line, nullptr, false);
      break;
    }
    if (header.is_discarded() || !header.is_object() || !header.contains("dim"))
      throw ParseError("bank header is missing or malformed", static_cast<std::size_t>(lineno));
    if (header.value("version", 0) != kBankFormatVersion)
      throw ParseError("unsupported bank version", static_cast<std::size_t>(lineno));
    const auto dim = header["dim"].get<std::size_t>();

    std::vector<BankEntry> entries;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim_view(line).empty()) continue;
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object())
        throw ParseError("bank record is not a JSON object", static_cast<std::size_t>(lineno));
      try {
        BankEntry e{j.at("id").get<std::string>(), j.at("question").get<std::string>(),
                    j.at("solution").get<std::string>(), j.at("domain").get<std::string>(),
                    EmbeddingVec{j.at("vector").get<std::vector<double>>()}};
        if (e.vector.dim() != dim)
          throw DimensionMismatch("bank record '" + e.id + "' does not match header dim");
        entries.push_back(std::move(e));
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("bank record: ") + ex.what(), static_cast<std::size_t>(lineno));
      }
    }
    Bank bank(std::move(entries));
    if (header.contains("domains")) {
      std::vector<std::string> listed = header["domains"].get<std::vector<std::string>>();
      std::vector<std::string> actual;
      for (const auto& d : bank.domains()) actual.push_back(d.name);
      std::sort(listed.begin(), listed.end());
      if (listed != actual) throw ParseError("bank header domains disagree with its records", 1);
    }
    return bank;
  }

 private:
  std::vector<BankEntry> entries_;
  std::vector<Domain> domains_;
  std::size_t dim_ = 0;
};

// JSONL input for bank building: {"id"?, "question", "solution", "domain"}.
// Records without an id get "entry-{line}".
inline std::vector<BankPair> load_bank_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open bank input '" + path.string() + "'");
  std::vector<BankPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("bank input record is not a JSON object", lineno);
    try {
      out.push_back({j.contains("id") ? j["id"].get<std::string>() : "entry-" + std::to_string(lineno),
                     j.at("question").get<std::string>(), j.at("solution").get<std::string>(),
                     j.at("domain").get<std::string>()});
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("bank input record: ") + ex.what(), lineno);
    }
  }
  return out;
}

// Embeds each question (never the solution) and assembles the bank.
inline Bank build_bank(const std::vector<BankPair>& pairs, Gateway& gateway) {
  if (pairs.empty()) throw PreconditionError("cannot build a bank from no pairs");
  std::set<std::string> ids;
  std::vector<std::string> questions;
  for (const auto& p : pairs) {
    if (!ids.insert(p.id).second) throw DuplicateId("duplicate bank entry id '" + p.id + "'");
    if (trim_view(p.domain).empty()) throw PreconditionError("bank pair '" + p.id + "' has no domain");
    questions.push_back(p.question);
  }
  auto vectors = gateway.embed(questions);
  std::vector<BankEntry> entries;
  entries.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i)
    entries.push_back({pairs[i].id, pairs[i].question, pairs[i].solution, pairs[i].domain, std::move(vectors[i])});
  return Bank(std::move(entries));
}

inline const Domain& classify_domain(const Problem& p, const Bank& bank, Gateway& gateway) {
  return bank.classify(gateway.embed({p.text}).front());
}

inline std::vector<BankEntry> retrieve_topk(const Problem& p, const Bank& bank, Gateway& gateway,
                                            int k = kDefaultRetrievalK) {
  auto query = gateway.embed({p.text}).front();
  const auto& domain = bank.classify(query);
  std::vector<BankEntry> out;
  for (const auto& s : bank.top_k(query, domain.name, k)) out.push_back(*s.entry);
  return out;
}

}  // namespace rmpot
