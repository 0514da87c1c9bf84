#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmpot/core.hpp"
#include "rmpot/sandbox.hpp"

namespace rmpot {

inline constexpr int kAnswerSignificantDigits = 6;

// Finds an option label in free text. Tried in order: a reply equal to an
// option's text; a leading label ("B", "(B)", "B) 21", "B: ..."); "answer is
// B"; the last standalone label naming one of `options`.
inline std::optional<char> parse_choice_letter(std::string_view text, const std::vector<Option>& options) {
  auto has = [&](char c) {
    return std::any_of(options.begin(), options.end(), [&](const Option& o) { return o.label == c; });
  };
  auto standalone = [](std::string_view t, std::size_t i) {
    bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(t[i - 1]));
    bool right = i + 1 == t.size() || !std::isalnum(static_cast<unsigned char>(t[i + 1]));
    return left && right;
  };
  auto t = trim_view(text);
  if (t.empty()) return std::nullopt;
  for (const auto& o : options)
    if (!o.text.empty() && trim_view(o.text) == t) return o.label;

  std::size_t lead = t.front() == '(' ? 1 : 0;
  if (lead < t.size() && has(t[lead]) && standalone(t, lead)) {
    std::size_t next = lead + 1;
    if (next == t.size() || std::string_view(").: ").find(t[next]) != std::string_view::npos) return t[lead];
  }

  auto lower = to_lower(t);
  for (auto pos = lower.find("answer is"); pos != std::string::npos; pos = lower.find("answer is", pos + 1)) {
    std::size_t i = pos + 9;
    while (i < t.size() && (t[i] == ' ' || t[i] == '(' || t[i] == ':')) ++i;
    if (i < t.size() && has(t[i]) && standalone(t, i)) return t[i];
  }

  for (std::size_t i = t.size(); i-- > 0;)
    if (has(t[i]) && standalone(t, i)) return t[i];
  return std::nullopt;
}

inline Answer normalize_answer(const ExecOutcome& exec, const std::vector<Option>& options = {}) {
  switch (exec.status) {
    case ExecStatus::Ok: break;
    case ExecStatus::Timeout: return Answer::invalid(InvalidReason::Timeout);
    case ExecStatus::MissingVar: return Answer::invalid(InvalidReason::MissingVar);
    case ExecStatus::SyntaxError:
    case ExecStatus::RuntimeError:
    case ExecStatus::SandboxFailure: return Answer::invalid(InvalidReason::ExecError);
  }
  if (exec.value_is_numeric) {
    if (auto d = Decimal::parse(exec.value)) return Answer::numeric(d->round_significant(kAnswerSignificantDigits));
    return Answer::invalid(InvalidReason::NonNumeric);
  }
  if (!options.empty())
    if (auto c = parse_choice_letter(exec.value, options)) return Answer::choice(*c);
  return Answer::invalid(InvalidReason::NonNumeric);
}

inline bool numbers_equivalent(const Decimal& a, const Decimal& b, double tol) {
  long double x = a.to_long_double();
  long double y = b.to_long_double();
  long double scale = std::max({1.0L, std::fabs(x), std::fabs(y)});
  return std::fabs(x - y) <= static_cast<long double>(tol) * scale;
}

inline bool answers_equivalent(const Answer& a, const Answer& b, double tol) {
  if (!a.valid() || !b.valid() || a.kind != b.kind) return false;
  if (a.kind == Answer::Kind::Choice) return a.choice_label == b.choice_label;
  return a.numeric_value == b.numeric_value || numbers_equivalent(a.numeric_value, b.numeric_value, tol);
}

struct VoteResult {
  Answer winner = Answer::invalid(InvalidReason::ExecError);
  // cluster representative -> size, in first-seen order
  std::vector<std::pair<Answer, int>> tally;
  int valid_count = 0;
  int invalid_count = 0;
  bool tie_broken = false;
};

// Answers must be in (form, seed_index) order: that order decides cluster
// representatives and breaks ties.
inline VoteResult majority_vote(const std::vector<Answer>& answers, double tol) {
  if (answers.empty()) throw PreconditionError("majority_vote needs at least one path");
  VoteResult r;
  for (const auto& a : answers) {
    if (!a.valid()) {
      ++r.invalid_count;
      continue;
    }
    ++r.valid_count;
    auto it = std::find_if(r.tally.begin(), r.tally.end(),
                           [&](const auto& cluster) { return answers_equivalent(cluster.first, a, tol); });
    if (it == r.tally.end()) {
      r.tally.emplace_back(a, 1);
    } else {
      ++it->second;
    }
  }
  if (r.tally.empty()) {
    // report the most common failure reason, earliest first on ties
    std::vector<std::pair<InvalidReason, int>> reasons;
    for (const auto& a : answers) {
      auto it = std::find_if(reasons.begin(), reasons.end(),
                             [&](const auto& p) { return p.first == a.invalid_reason; });
      if (it == reasons.end()) {
        reasons.emplace_back(a.invalid_reason, 1);
      } else {
        ++it->second;
      }
    }
    auto best = std::max_element(reasons.begin(), reasons.end(),
                                 [](const auto& x, const auto& y) { return x.second < y.second; });
    r.winner = Answer::invalid(best->first);
    return r;
  }
  // clusters are in first-seen order, so the first maximal one holds the
  // earliest path among the tied
  auto best = std::max_element(r.tally.begin(), r.tally.end(),
                               [](const auto& x, const auto& y) { return x.second < y.second; });
  r.winner = best->first;
  r.tie_broken = std::count_if(r.tally.begin(), r.tally.end(),
                               [&](const auto& c) { return c.second == best->second; }) > 1;
  return r;
}

inline bool matches_gold(const Answer& a, const GoldAnswer& gold, double tol) {
  if (!a.valid()) return false;
  if (gold.kind == GoldAnswer::Kind::Choice)
    return a.kind == Answer::Kind::Choice && a.choice_label == gold.choice_label;
  return a.kind == Answer::Kind::Numeric &&
         (a.numeric_value == gold.numeric_value || numbers_equivalent(a.numeric_value, gold.numeric_value, tol));
}

inline bool score(const VoteResult& vote, const GoldAnswer& gold, double tol) {
  return matches_gold(vote.winner, gold, tol);
}

}  // namespace rmpot
