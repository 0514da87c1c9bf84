#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rmpot/decimal.hpp"
#include "rmpot/errors.hpp"

namespace rmpot {

// ---------------------------------------------------------------------------
// string helpers shared by the other modules

inline std::string_view trim_view(std::string_view s) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool is_identifier(std::string_view s) {
  if (s.empty()) return false;
  auto head = static_cast<unsigned char>(s.front());
  if (!(std::isalpha(head) || head == '_')) return false;
  return std::all_of(s.begin() + 1, s.end(), [](char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || u == '_';
  });
}

// Numeric literal as written in datasets and option lists: "1,250", "$18",
// "-3.5". Thousands separators and a leading currency sign are dropped.
inline std::optional<Decimal> parse_loose_number(std::string_view raw) {
  std::string s = trim(raw);
  std::string cleaned;
  cleaned.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == ',') continue;
    if (c == '$' && (cleaned.empty() || cleaned == "-")) continue;
    cleaned.push_back(c);
  }
  return Decimal::parse(cleaned);
}

// ---------------------------------------------------------------------------
// domain types

enum class DatasetKind { GSM8K, AQUA, SVAMP, CUSTOM };

inline DatasetKind parse_dataset_kind(std::string_view s) {
  auto l = to_lower(s);
  if (l == "gsm8k") return DatasetKind::GSM8K;
  if (l == "aqua") return DatasetKind::AQUA;
  if (l == "svamp") return DatasetKind::SVAMP;
  if (l == "custom") return DatasetKind::CUSTOM;
  throw UnknownKind("unknown dataset kind '" + std::string(s) + "'");
}

inline std::string display_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::GSM8K: return "GSM8K";
    case DatasetKind::AQUA: return "AQuA";
    case DatasetKind::SVAMP: return "SVAMP";
    case DatasetKind::CUSTOM: return "Custom";
  }
  return "?";
}

struct Option {
  char label = 'A';
  std::string text;
};

struct GoldAnswer {
  enum class Kind { Numeric, Choice };

  Kind kind = Kind::Numeric;
  Decimal numeric_value;
  char choice_label = 0;

  static GoldAnswer numeric(Decimal v) { return {Kind::Numeric, std::move(v), 0}; }
  static GoldAnswer choice(char label) { return {Kind::Choice, Decimal{}, label}; }

  std::string str() const {
    return kind == Kind::Numeric ? numeric_value.str() : std::string(1, choice_label);
  }
};

struct Problem {
  std::string id;
  std::string text;
  std::vector<Option> options;
  GoldAnswer gold;
  DatasetKind dataset_kind = DatasetKind::CUSTOM;
};

// Throws PreconditionError when text is blank or option labels are not
// unique members of `allowed_labels`.
inline void validate_problem(const Problem& p, std::string_view allowed_labels = "ABCDE") {
  if (trim_view(p.text).empty()) throw PreconditionError("problem '" + p.id + "' has empty text");
  std::set<char> seen;
  for (const auto& o : p.options) {
    if (allowed_labels.find(o.label) == std::string_view::npos)
      throw PreconditionError("problem '" + p.id + "' has invalid option label '" +
                              std::string(1, o.label) + "'");
    if (!seen.insert(o.label).second)
      throw PreconditionError("problem '" + p.id + "' repeats option label '" +
                              std::string(1, o.label) + "'");
  }
}

enum class ReformMode { Naive, InContext, None };

inline ReformMode parse_reform_mode(std::string_view s) {
  auto l = to_lower(s);
  if (l == "naive") return ReformMode::Naive;
  if (l == "incontext" || l == "in-context" || l == "in_context") return ReformMode::InContext;
  if (l == "none") return ReformMode::None;
  throw ConfigError("unknown reformulation mode '" + std::string(s) + "'");
}

inline std::string to_string(ReformMode m) {
  switch (m) {
    case ReformMode::Naive: return "naive";
    case ReformMode::InContext: return "incontext";
    case ReformMode::None: return "none";
  }
  return "?";
}

inline std::string display_name(ReformMode m) {
  switch (m) {
    case ReformMode::Naive: return "Naive";
    case ReformMode::InContext: return "In-Context";
    case ReformMode::None: return "None";
  }
  return "?";
}

struct PipelineConfig {
  int K = 4;
  int N = 16;
  double temperature = 0.7;
  double top_p = 0.8;
  int top_k = 3;
  ReformMode reform_mode = ReformMode::Naive;
  int fewshot_k = 5;
  std::string result_var = "ans";
  double sandbox_timeout_s = 10.0;
  double numeric_tol = 1e-6;

  int incontext_exemplars = 3;
  int mem_limit_mb = 512;
  // Option labels accepted on problems; CUSTOM datasets may widen this.
  std::string choice_labels = "ABCDE";
  // Pick numeric options by nearest value locally instead of asking the LLM.
  bool local_choice_match = true;
  int workers = 1;

  int paths_per_form() const { return N / K; }
};

inline PipelineConfig validate_config(const PipelineConfig& cfg) {
  if (cfg.K < 1) throw ConfigError("K must be a positive integer");
  if (cfg.N < 1) throw ConfigError("N must be a positive integer");
  if (cfg.N % cfg.K != 0) throw ConfigError("K must divide N");
  if (!std::isfinite(cfg.temperature) || cfg.temperature < 0)
    throw ConfigError("temperature must be a non-negative real");
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (cfg.top_k < 1) throw ConfigError("top_k must be a positive integer");
  if (cfg.fewshot_k < 0) throw ConfigError("fewshot_k must be non-negative");
  if (!is_identifier(cfg.result_var)) throw ConfigError("result_var must be a valid identifier");
  if (!(cfg.sandbox_timeout_s > 0) || !std::isfinite(cfg.sandbox_timeout_s))
    throw ConfigError("sandbox_timeout_s must be a positive real");
  if (!(cfg.numeric_tol > 0) || !std::isfinite(cfg.numeric_tol))
    throw ConfigError("numeric_tol must be a positive real");
  if (cfg.incontext_exemplars < 1) throw ConfigError("incontext_exemplars must be positive");
  if (cfg.mem_limit_mb < 1) throw ConfigError("mem_limit_mb must be positive");
  if (cfg.workers < 1) throw ConfigError("workers must be positive");
  if (cfg.choice_labels.empty()) throw ConfigError("choice_labels must not be empty");
  std::set<char> seen;
  for (char c : cfg.choice_labels) {
    if (c < 'A' || c > 'Z') throw ConfigError("choice_labels must be uppercase letters");
    if (!seen.insert(c).second) throw ConfigError("choice_labels must be unique");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// flat key/value config documents
//
//   # comment
//   K = 4
//   reform_mode = "naive"
//
// Values may be bare or double-quoted. Section headers are rejected: the
// document is flat.

using ConfigEntries = std::map<std::string, std::string>;

inline ConfigEntries parse_config_text(std::string_view text) {
  ConfigEntries out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    // a '#' inside quotes is part of the value
    if (hash != std::string::npos) {
      auto q = line.find('"');
      if (q == std::string::npos || q > hash) line.erase(hash);
    }
    auto body = trim_view(line);
    if (body.empty()) continue;
    if (body.front() == '[') throw ParseError("sections are not supported in config files", lineno);
    auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key = value", lineno);
    auto key = trim(body.substr(0, eq));
    auto value = trim(body.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", lineno);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    if (!out.emplace(key, value).second) throw ParseError("duplicate key '" + key + "'", lineno);
  }
  return out;
}

inline ConfigEntries load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

namespace detail {

inline int config_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double config_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' expects a real, got '" + v + "'");
  }
}

inline bool config_bool(const std::string& key, const std::string& v) {
  auto l = to_lower(v);
  if (l == "true" || l == "1" || l == "yes") return true;
  if (l == "false" || l == "0" || l == "no") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace detail

// Applies every PipelineConfig key found in `entries`, removing it. Keys left
// behind belong to other components (or are unknown).
inline void apply_config(ConfigEntries& entries, PipelineConfig& cfg) {
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    auto v = it->second;
    entries.erase(it);
    return v;
  };
  if (auto v = take("K")) cfg.K = detail::config_int("K", *v);
  if (auto v = take("N")) cfg.N = detail::config_int("N", *v);
  if (auto v = take("temperature")) cfg.temperature = detail::config_real("temperature", *v);
  if (auto v = take("top_p")) cfg.top_p = detail::config_real("top_p", *v);
  if (auto v = take("top_k")) cfg.top_k = detail::config_int("top_k", *v);
  if (auto v = take("reform_mode")) cfg.reform_mode = parse_reform_mode(*v);
  if (auto v = take("fewshot_k")) cfg.fewshot_k = detail::config_int("fewshot_k", *v);
  if (auto v = take("result_var")) cfg.result_var = *v;
  if (auto v = take("sandbox_timeout_s"))
    cfg.sandbox_timeout_s = detail::config_real("sandbox_timeout_s", *v);
  if (auto v = take("numeric_tol")) cfg.numeric_tol = detail::config_real("numeric_tol", *v);
  if (auto v = take("incontext_exemplars"))
    cfg.incontext_exemplars = detail::config_int("incontext_exemplars", *v);
  if (auto v = take("mem_limit_mb")) cfg.mem_limit_mb = detail::config_int("mem_limit_mb", *v);
  if (auto v = take("choice_labels")) cfg.choice_labels = *v;
  if (auto v = take("local_choice_match"))
    cfg.local_choice_match = detail::config_bool("local_choice_match", *v);
  if (auto v = take("workers")) cfg.workers = detail::config_int("workers", *v);
}

// ---------------------------------------------------------------------------
// answers

enum class InvalidReason { None, ExecError, Timeout, MissingVar, NonNumeric, NoCode };

inline std::string to_string(InvalidReason r) {
  switch (r) {
    case InvalidReason::None: return "none";
    case InvalidReason::ExecError: return "exec_error";
    case InvalidReason::Timeout: return "timeout";
    case InvalidReason::MissingVar: return "missing_var";
    case InvalidReason::NonNumeric: return "non_numeric";
    case InvalidReason::NoCode: return "no_code";
  }
  return "?";
}

struct Answer {
  enum class Kind { Numeric, Choice, Invalid };

  Kind kind = Kind::Invalid;
  Decimal numeric_value;
  char choice_label = 0;
  InvalidReason invalid_reason = InvalidReason::ExecError;

  static Answer numeric(Decimal v) { return {Kind::Numeric, std::move(v), 0, InvalidReason::None}; }
  static Answer choice(char label) { return {Kind::Choice, Decimal{}, label, InvalidReason::None}; }
  static Answer invalid(InvalidReason why) { return {Kind::Invalid, Decimal{}, 0, why}; }

  bool valid() const { return kind != Kind::Invalid; }

  std::string str() const {
    switch (kind) {
      case Kind::Numeric: return numeric_value.str();
      case Kind::Choice: return std::string(1, choice_label);
      case Kind::Invalid: return "INVALID(" + to_string(invalid_reason) + ")";
    }
    return "?";
  }
};

// ---------------------------------------------------------------------------
// gold answers

// GSM8K: the number after the final "#### " marker. AQuA: the correct-option
// letter. SVAMP: the numeric Answer field. CUSTOM: a number, else a letter.
inline GoldAnswer parse_gold_answer(std::string_view raw, DatasetKind kind,
                                    std::string_view allowed_labels = "ABCDE") {
  auto as_choice = [&](std::string_view s) -> std::optional<GoldAnswer> {
    auto t = trim_view(s);
    if (t.size() == 1 && allowed_labels.find(t.front()) != std::string_view::npos)
      return GoldAnswer::choice(t.front());
    return std::nullopt;
  };
  switch (kind) {
    case DatasetKind::GSM8K: {
      static constexpr std::string_view marker = "#### ";
      auto pos = raw.rfind(marker);
      if (pos == std::string_view::npos) throw ParseError("GSM8K answer lacks a '#### ' marker");
      auto rest = raw.substr(pos + marker.size());
      auto nl = rest.find('\n');
      if (nl != std::string_view::npos) rest = rest.substr(0, nl);
      auto v = parse_loose_number(rest);
      if (!v) throw ParseError("GSM8K final answer is not a decimal literal: '" + trim(rest) + "'");
      return GoldAnswer::numeric(*v);
    }
    case DatasetKind::AQUA: {
      if (auto c = as_choice(raw)) return *c;
      throw ParseError("AQuA correct field is not an option letter: '" + trim(raw) + "'");
    }
    case DatasetKind::SVAMP: {
      auto v = parse_loose_number(raw);
      if (!v) throw ParseError("SVAMP Answer is not numeric: '" + trim(raw) + "'");
      return GoldAnswer::numeric(*v);
    }
    case DatasetKind::CUSTOM: {
      if (auto v = parse_loose_number(raw)) return GoldAnswer::numeric(*v);
      if (auto c = as_choice(raw)) return *c;
      throw ParseError("answer is neither numeric nor an option letter: '" + trim(raw) + "'");
    }
  }
  throw UnknownKind("unknown dataset kind");
}

}  // namespace rmpot
