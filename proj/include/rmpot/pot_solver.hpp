#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "rmpot/bank.hpp"
#include "rmpot/core.hpp"
#include "rmpot/gateway.hpp"
#include "rmpot/parallel.hpp"
#include "rmpot/sandbox.hpp"
#include "rmpot/votebox.hpp"

namespace rmpot {

// source_form value for paths solved from the unreformulated statement
inline constexpr int kOriginalForm = -1;

struct SurfaceForm {
  int id = kOriginalForm;
  std::string text;
};

struct ReasoningPath {
  int source_form = kOriginalForm;
  int seed_index = 0;
  std::string raw_completion;
  std::optional<std::string> code;
  std::optional<ExecOutcome> exec;
  Answer answer;
  std::string error;  // gateway failure that produced this slot, if any
};

inline std::string render_options(const std::vector<Option>& options) {
  std::string out;
  for (const auto& o : options) {
    if (!out.empty()) out += ' ';
    out += std::string(1, o.label) + ")" + o.text;
  }
  return out;
}

inline std::string build_solver_prompt(const std::string& text, const std::vector<BankEntry>& fewshot,
                                       const std::string& result_var) {
  if (!is_identifier(result_var)) throw PreconditionError("result_var is not an identifier");
  std::string out =
      "Write a program that solves the problem; store the final numeric answer in a variable named " +
      result_var +
      "; output only code in one fenced block. Do not read input and do not use the network or files.\n\n";
  for (const auto& e : fewshot) {
    out += "Question: " + e.question + "\nSolution:\n";
    if (e.solution.find("```") != std::string::npos) {
      out += e.solution;
    } else {
      out += "```python\n" + e.solution + "\n```";
    }
    out += "\n\n";
  }
  out += "Question: " + text;
  return out;
}

inline std::optional<std::string> extract_code(std::string_view completion) {
  static constexpr std::string_view fence = "```";
  auto open = completion.find(fence);
  if (open != std::string_view::npos) {
    const std::size_t after = open + fence.size();
    const std::size_t eol = std::min(completion.find('\n', after), completion.size());
    const std::string_view first_line(completion.data() + after, eol - after);
    std::string_view body;
    if (auto close = first_line.find(fence); close != std::string_view::npos) {
      body = first_line.substr(0, close);  // ```ans = 2```
    } else {
      bool tag = std::all_of(first_line.begin(), first_line.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '_' || c == ' ' ||
               c == '\r';
      });
      const std::size_t start = tag ? std::min(eol + 1, completion.size()) : after;
      body = std::string_view(completion.data() + start, completion.size() - start);
      auto end = body.find(fence);
      if (end != std::string_view::npos) body = body.substr(0, end);
    }
    while (!body.empty() && (body.front() == '\n' || body.front() == '\r')) body.remove_prefix(1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    if (body.empty()) return std::nullopt;
    return std::string(body);
  }

  static const std::regex code_like(
      R"(^\s*(import\s+\w|from\s+[\w.]+\s+import\s|def\s+\w+\s*\(|[A-Za-z_]\w*(\s*\[[^\]]*\])?\s*([-+*/%]|//|\*\*)?=[^=]))");
  std::size_t pos = 0;
  while (pos < completion.size()) {
    auto eol = completion.find('\n', pos);
    auto line = completion.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (!trim_view(line).empty()) {
      std::string l(line);
      if (std::regex_search(l, code_like)) return trim(completion);
      return std::nullopt;
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return std::nullopt;
}

namespace solver_detail {

inline std::string choice_prompt(const std::string& text, const std::vector<Option>& options, const Answer& value) {
  return "Problem: " + text + "\nOptions: " + render_options(options) + "\nThe computed answer is " + value.str() +
         ". Identify the closest match among the options. Reply with the option letter only.";
}

}  // namespace solver_detail

// Maps a numeric answer onto the options. All-numeric options are matched
// locally by nearest value (ties to the smaller label); otherwise, or when
// local matching is disabled, the LLM picks.
inline Answer resolve_choice(const Answer& value, const std::vector<Option>& options, const std::string& text,
                             Gateway& gateway, const PipelineConfig& cfg) {
  if (options.empty() || value.kind != Answer::Kind::Numeric) return value;
  if (cfg.local_choice_match) {
    std::vector<std::pair<char, Decimal>> numeric;
    for (const auto& o : options) {
      auto v = parse_loose_number(o.text);
      if (!v) break;
      numeric.emplace_back(o.label, *v);
    }
    if (numeric.size() == options.size()) {
      std::sort(numeric.begin(), numeric.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      const long double target = value.numeric_value.to_long_double();
      char best = 0;
      long double best_gap = 0;
      for (const auto& [label, v] : numeric) {
        long double gap = std::fabs(v.to_long_double() - target);
        if (!best || gap < best_gap) {
          best = label;
          best_gap = gap;
        }
      }
      return Answer::choice(best);
    }
  }
  auto reply = gateway.chat(make_chat_request(solver_detail::choice_prompt(text, options, value), cfg, 1, 0));
  if (auto c = parse_choice_letter(reply.front(), options)) return Answer::choice(*c);
  return Answer::invalid(InvalidReason::NonNumeric);
}

// Statement shown to the solver for one surface form.
inline std::string solver_statement(const std::string& text, const std::vector<Option>& options) {
  if (options.empty()) return text;
  return text + "\nOptions: " + render_options(options);
}

// Executes one completion and normalizes its answer.
inline void run_path(ReasoningPath& path, const std::string& statement, const std::vector<Option>& options,
                     const PipelineConfig& cfg, Gateway& gateway, Sandbox& sandbox) {
  path.code = extract_code(path.raw_completion);
  if (!path.code) {
    path.answer = Answer::invalid(InvalidReason::NoCode);
    return;
  }
  SandboxRequest req{*path.code, cfg.result_var, cfg.sandbox_timeout_s, cfg.mem_limit_mb};
  try {
    path.exec = sandbox.run(req);
  } catch (const Error& e) {
    path.exec = ExecOutcome::failure(ExecStatus::SandboxFailure, e.what());
  }
  path.answer = normalize_answer(*path.exec, options);
  if (!options.empty() && path.answer.kind == Answer::Kind::Numeric) {
    try {
      path.answer = resolve_choice(path.answer, options, statement, gateway, cfg);
    } catch (const GatewayError& e) {
      path.error = e.what();
      path.answer = Answer::invalid(InvalidReason::ExecError);
    }
  }
}

// N paths, N/K per form. Form i draws seed_index i*(N/K) .. (i+1)*(N/K)-1.
// A gateway failure on one form fills that form's slots with EXEC_ERROR
// paths; the other forms are unaffected.
inline std::vector<ReasoningPath> solve_paths(const std::vector<SurfaceForm>& forms, const PipelineConfig& cfg,
                                              const std::vector<BankEntry>& fewshot, Gateway& gateway,
                                              Sandbox& sandbox, const std::vector<Option>& options = {}) {
  if (forms.size() != static_cast<std::size_t>(cfg.K))
    throw PreconditionError("solve_paths needs exactly K=" + std::to_string(cfg.K) + " forms, got " +
                            std::to_string(forms.size()));
  const int per_form = cfg.paths_per_form();
  std::vector<ReasoningPath> paths(static_cast<std::size_t>(cfg.N));
  std::vector<std::string> statements(forms.size());

  parallel_for(forms.size(), cfg.workers, [&](std::size_t f) {
    statements[f] = solver_statement(forms[f].text, options);
    const int base = static_cast<int>(f) * per_form;
    std::vector<std::string> completions;
    std::string failure;
    try {
      completions = gateway.chat(
          make_chat_request(build_solver_prompt(statements[f], fewshot, cfg.result_var), cfg, per_form, base));
    } catch (const GatewayError& e) {
      failure = e.what();
      spdlog::warn("form {}: {}", forms[f].id, failure);
    }
    for (int j = 0; j < per_form; ++j) {
      auto& p = paths[static_cast<std::size_t>(base + j)];
      p.source_form = forms[f].id;
      p.seed_index = base + j;
      if (static_cast<std::size_t>(j) < completions.size()) {
        p.raw_completion = completions[static_cast<std::size_t>(j)];
      } else {
        p.error = failure.empty() ? "no completion" : failure;
        p.answer = Answer::invalid(InvalidReason::ExecError);
      }
    }
  });

  parallel_for(paths.size(), cfg.workers, [&](std::size_t i) {
    auto& p = paths[i];
    if (!p.error.empty()) return;
    run_path(p, statements[i / static_cast<std::size_t>(per_form)], options, cfg, gateway, sandbox);
  });
  return paths;
}

inline std::vector<Answer> answers_of(const std::vector<ReasoningPath>& paths) {
  std::vector<Answer> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.answer);
  return out;
}

inline VoteResult majority_vote(const std::vector<ReasoningPath>& paths, double tol) {
  return majority_vote(answers_of(paths), tol);
}

}  // namespace rmpot
