#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmpot/core.hpp"
#include "rmpot/gateway.hpp"

namespace rmpot {

inline constexpr std::string_view kNaivePrefix =
    "Reformulate the following math problem, try to change the sentence structure of the problem: ";

inline constexpr std::string_view kInContextHeader =
    "Reformulate math problems by changing their sentence structure while preserving all quantities "
    "and the asked question. Follow the examples.";

inline constexpr int kReformulationRetries = 3;

struct Reformulation {
  std::string parent_id;
  std::string text;
  ReformMode mode = ReformMode::Naive;
  int index = 0;
  // the slot stayed empty after every retry and holds the original text
  bool degenerate = false;
};

struct ExemplarPair {
  std::string original;
  std::string reformulated;
  double margin = 0.0;
};

inline std::string build_naive_prompt(const Problem& p) { return std::string(kNaivePrefix) + p.text; }

inline std::string build_incontext_prompt(const Problem& p, const std::vector<ExemplarPair>& exemplars) {
  if (exemplars.empty()) throw EmptyExemplars("in-context reformulation needs at least one exemplar");
  for (std::size_t i = 1; i < exemplars.size(); ++i)
    if (exemplars[i].margin > exemplars[i - 1].margin)
      throw PreconditionError("exemplars must be sorted by descending margin");
  std::string out(kInContextHeader);
  out += "\n\n";
  for (const auto& e : exemplars) out += "Original: " + e.original + "\nReformulated: " + e.reformulated + "\n";
  out += "Original: " + p.text + "\nReformulated:";
  return out;
}

inline std::string build_reformulation_prompt(const Problem& p, ReformMode mode,
                                              const std::vector<ExemplarPair>& exemplars) {
  switch (mode) {
    case ReformMode::Naive: return build_naive_prompt(p);
    case ReformMode::InContext: return build_incontext_prompt(p, exemplars);
    case ReformMode::None: break;
  }
  throw PreconditionError("reformulation requested with mode none");
}

// One request for K samples (seed_index 0). Slots that come back blank are
// resampled one at a time with seed_index K, K+1, ... for up to three extra
// draws in total; slots still blank fall back to the original text.
inline std::vector<Reformulation> reformulate(const Problem& p, const PipelineConfig& cfg, Gateway& gateway,
                                              const std::vector<ExemplarPair>& exemplars = {}) {
  if (cfg.reform_mode == ReformMode::None) throw PreconditionError("reformulate needs mode naive or incontext");
  const auto prompt = build_reformulation_prompt(p, cfg.reform_mode, exemplars);
  auto texts = gateway.chat(make_chat_request(prompt, cfg, cfg.K, 0));

  std::vector<Reformulation> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i)
    out.push_back({p.id, trim(texts[i]), cfg.reform_mode, static_cast<int>(i), false});

  int retry = 0;
  for (auto& slot : out) {
    while (slot.text.empty() && retry < kReformulationRetries) {
      auto again = gateway.chat(make_chat_request(prompt, cfg, 1, cfg.K + retry));
      ++retry;
      slot.text = trim(again.front());
    }
    if (slot.text.empty()) {
      spdlog::warn("problem {}: reformulation slot {} stayed empty, using the original text", p.id, slot.index);
      slot.text = p.text;
      slot.degenerate = true;
    }
  }
  return out;
}

struct ExemplarSelection {
  std::vector<ExemplarPair> pairs;
  bool truncated = false;  // fewer candidates than requested
};

inline ExemplarSelection select_exemplars(std::vector<ExemplarPair> candidates, int m) {
  if (candidates.empty()) throw EmptyExemplars("no exemplar candidates");
  if (m < 1) throw PreconditionError("exemplar count must be positive");
  for (const auto& c : candidates)
    if (!(c.margin >= -1.0 && c.margin <= 1.0))
      throw PreconditionError("exemplar margin outside [-1, 1]");
  std::stable_sort(candidates.begin(), candidates.end(), [](const ExemplarPair& a, const ExemplarPair& b) {
    if (a.margin != b.margin) return a.margin > b.margin;
    return a.original < b.original;
  });
  ExemplarSelection sel;
  if (static_cast<std::size_t>(m) > candidates.size()) {
    sel.truncated = true;
    spdlog::warn("requested {} exemplars but only {} candidates exist", m, candidates.size());
  } else {
    candidates.resize(static_cast<std::size_t>(m));
  }
  sel.pairs = std::move(candidates);
  return sel;
}

// JSONL, one {"original", "reformulated", "margin"} object per line.
inline std::vector<ExemplarPair> load_exemplars(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open exemplar file '" + path.string() + "'");
  std::vector<ExemplarPair> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError("exemplar record is not a JSON object", lineno);
    try {
      out.push_back({j.at("original").get<std::string>(), j.at("reformulated").get<std::string>(),
                     j.at("margin").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("exemplar record: ") + e.what(), lineno);
    }
  }
  return out;
}

inline void save_exemplars(const std::filesystem::path& path, const std::vector<ExemplarPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write exemplar file '" + path.string() + "'");
  for (const auto& p : pairs)
    out << nlohmann::json{{"original", p.original}, {"reformulated", p.reformulated}, {"margin", p.margin}}.dump()
        << '\n';
}

}  // namespace rmpot
