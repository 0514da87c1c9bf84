#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmpot/bank.hpp"
#include "rmpot/core.hpp"
#include "rmpot/gateway.hpp"
#include "rmpot/parallel.hpp"
#include "rmpot/pot_solver.hpp"
#include "rmpot/reformulator.hpp"
#include "rmpot/sandbox.hpp"
#include "rmpot/votebox.hpp"

namespace rmpot {

// ---------------------------------------------------------------------------
// datasets

namespace eval_detail {

inline std::string json_text(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) return v.dump();
  throw ParseError("expected a string or number, got " + v.dump());
}

// "A)21" / "A) 21" / "(A) 21" / "A: 21"
inline Option parse_option(const std::string& raw, std::string_view allowed) {
  auto t = trim_view(raw);
  if (!t.empty() && t.front() == '(') t.remove_prefix(1);
  if (t.size() >= 2 && allowed.find(t[0]) != std::string_view::npos && (t[1] == ')' || t[1] == ':' || t[1] == '.'))
    return {t[0], trim(t.substr(2))};
  throw ParseError("option is not of the form 'A)text': '" + raw + "'");
}

inline std::vector<Option> parse_options(const nlohmann::json& v, std::string_view allowed) {
  std::vector<Option> out;
  if (v.is_array()) {
    for (const auto& o : v) out.push_back(parse_option(o.get<std::string>(), allowed));
  } else if (v.is_object()) {
    for (const auto& [label, text] : v.items()) {
      if (label.size() != 1) throw ParseError("option label must be one letter: '" + label + "'");
      out.push_back({label[0], json_text(text)});
    }
  } else {
    throw ParseError("options must be an array or object");
  }
  return out;
}

inline Problem problem_from_record(const nlohmann::json& j, DatasetKind kind, std::size_t index,
                                   std::string_view allowed) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  Problem p;
  p.dataset_kind = kind;
  try {
    switch (kind) {
      case DatasetKind::GSM8K:
        p.id = "gsm8k-" + std::to_string(index);
        p.text = j.at("question").get<std::string>();
        p.gold = parse_gold_answer(j.at("answer").get<std::string>(), kind, allowed);
        break;
      case DatasetKind::AQUA:
        p.id = "aqua-" + std::to_string(index);
        p.text = j.at("question").get<std::string>();
        p.options = parse_options(j.at("options"), allowed);
        p.gold = parse_gold_answer(j.at("correct").get<std::string>(), kind, allowed);
        break;
      case DatasetKind::SVAMP:
        p.id = j.contains("ID") ? json_text(j["ID"]) : "svamp-" + std::to_string(index);
        p.text = trim(j.at("Body").get<std::string>()) + " " + trim(j.at("Question").get<std::string>());
        p.gold = parse_gold_answer(json_text(j.at("Answer")), kind, allowed);
        break;
      case DatasetKind::CUSTOM:
        p.id = j.contains("id") ? json_text(j["id"]) : "item-" + std::to_string(index);
        p.text = j.contains("question") ? j["question"].get<std::string>() : j.at("text").get<std::string>();
        if (j.contains("options")) p.options = parse_options(j["options"], allowed);
        p.gold = parse_gold_answer(json_text(j.at("answer")), kind, allowed);
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(e.what());
  }
  if (kind == DatasetKind::AQUA || !p.options.empty()) {
    if (p.gold.kind == GoldAnswer::Kind::Choice &&
        std::none_of(p.options.begin(), p.options.end(), [&](const Option& o) { return o.label == p.gold.choice_label; }))
      throw ParseError("gold label '" + std::string(1, p.gold.choice_label) + "' is not among the options");
  }
  validate_problem(p, allowed);
  return p;
}

}  // namespace eval_detail

// GSM8K and CUSTOM are JSONL; AQuA is JSONL or a JSON array; SVAMP is a JSON
// array or JSONL. Errors carry the 1-based line (JSONL) or record number.
inline std::vector<Problem> load_dataset(const std::filesystem::path& path, DatasetKind kind,
                                         std::string_view allowed_labels = "ABCDE") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<Problem> out;
  auto body = trim_view(text);
  if (body.empty()) {
    spdlog::warn("dataset '{}' is empty", path.string());
    return out;
  }

  if (body.front() == '[') {
    auto arr = nlohmann::json::parse(body, nullptr, false);
    if (arr.is_discarded()) throw ParseError("dataset '" + path.string() + "' is not valid JSON");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      try {
        out.push_back(eval_detail::problem_from_record(arr[i], kind, i, allowed_labels));
      } catch (const ParseError& e) {
        throw ParseError("record " + std::to_string(i + 1) + ": " + e.what());
      } catch (const PreconditionError& e) {
        throw ParseError("record " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    return out;
  }

  std::istringstream lines(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (trim_view(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("invalid JSON", lineno);
    try {
      out.push_back(eval_detail::problem_from_record(j, kind, out.size(), allowed_labels));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), lineno);
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return out;
}

// Keeps `limit` problems chosen by a seeded Fisher-Yates shuffle (64-bit
// Mersenne Twister, j = draw mod (i+1)), returned in dataset order.
// limit <= 0 or >= size keeps everything.
inline std::vector<Problem> sample_problems(std::vector<Problem> problems, int limit, std::uint64_t seed) {
  if (limit <= 0 || static_cast<std::size_t>(limit) >= problems.size()) return problems;
  std::vector<std::size_t> idx(problems.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i-- > 1;) std::swap(idx[i], idx[rng() % (i + 1)]);
  idx.resize(static_cast<std::size_t>(limit));
  std::sort(idx.begin(), idx.end());
  std::vector<Problem> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(std::move(problems[i]));
  return out;
}

// ---------------------------------------------------------------------------
// methods

enum class Method { CoT, SC, PoT, RmPoT };

inline Method parse_method(std::string_view s) {
  auto t = to_lower(trim_view(s));
  if (t == "cot") return Method::CoT;
  if (t == "sc") return Method::SC;
  if (t == "pot") return Method::PoT;
  if (t == "rm-pot" || t == "rmpot" || t == "rm_pot") return Method::RmPoT;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected cot, sc, pot or rm-pot)");
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::CoT: return "cot";
    case Method::SC: return "sc";
    case Method::PoT: return "pot";
    case Method::RmPoT: return "rm-pot";
  }
  return "?";
}

inline std::string display_name(Method m) {
  switch (m) {
    case Method::CoT: return "CoT";
    case Method::SC: return "SC";
    case Method::PoT: return "PoT";
    case Method::RmPoT: return "RM-PoT";
  }
  return "?";
}

inline std::string build_cot_prompt(const Problem& p) {
  std::string out =
      "Solve the following math problem step by step. Finish with a line of the form \"The answer is <number>\"";
  out += p.options.empty() ? ".\n\n" : ", naming the option letter of the correct choice.\n\n";
  out += "Question: " + solver_statement(p.text, p.options);
  return out;
}

// Final answer of a text-only solution: whatever follows the last "answer
// is", else the last number in the reply.
inline Answer extract_cot_answer(std::string_view reply, const std::vector<Option>& options) {
  std::string text(reply);
  std::string lower = to_lower(text);
  std::string tail = text;
  if (auto pos = lower.rfind("answer is"); pos != std::string::npos) tail = text.substr(pos + 9);
  if (!options.empty())
    if (auto c = parse_choice_letter(tail, options)) return Answer::choice(*c);
  static const std::regex number(R"([-+]?\$?\d[\d,]*(\.\d+)?|[-+]?\.\d+)");
  std::optional<Decimal> last;
  for (auto it = std::sregex_iterator(tail.begin(), tail.end(), number); it != std::sregex_iterator(); ++it)
    if (auto v = parse_loose_number(it->str())) last = v;
  if (!last) return Answer::invalid(InvalidReason::NonNumeric);
  return Answer::numeric(last->round_significant(kAnswerSignificantDigits));
}

// Everything one problem run needs besides the config.
struct PipelineContext {
  Gateway& gateway;
  Sandbox& sandbox;
  const Bank* bank = nullptr;
  std::vector<ExemplarPair> exemplars;  // in-context reformulation, sorted
};

struct ProblemResult {
  std::string id;
  bool correct = false;
  VoteResult vote;
  std::vector<Reformulation> reformulations;
  std::vector<BankEntry> fewshot;
  std::vector<ReasoningPath> paths;
  std::string error;
};

inline void check_method_config(Method method, const PipelineConfig& cfg) {
  switch (method) {
    case Method::CoT:
    case Method::SC:
    case Method::PoT:
      if (cfg.K != 1) throw ConfigError(display_name(method) + " runs without reformulation and needs K=1");
      break;
    case Method::RmPoT:
      if (cfg.reform_mode == ReformMode::None) throw ConfigError("RM-PoT needs reform mode naive or incontext");
      break;
  }
}

namespace eval_detail {

inline std::vector<ReasoningPath> text_paths(const Problem& p, const PipelineConfig& cfg, int samples,
                                             Gateway& gateway) {
  auto replies = gateway.chat(make_chat_request(build_cot_prompt(p), cfg, samples, 0));
  std::vector<ReasoningPath> paths;
  for (std::size_t i = 0; i < replies.size(); ++i) {
    ReasoningPath path;
    path.seed_index = static_cast<int>(i);
    path.raw_completion = replies[i];
    path.answer = extract_cot_answer(replies[i], p.options);
    if (!p.options.empty() && path.answer.kind == Answer::Kind::Numeric)
      path.answer = resolve_choice(path.answer, p.options, p.text, gateway, cfg);
    paths.push_back(std::move(path));
  }
  return paths;
}

}  // namespace eval_detail

// One problem through one method: (reformulate) -> retrieve -> solve -> vote.
inline ProblemResult run_problem(const Problem& p, const PipelineConfig& cfg, Method method, PipelineContext& ctx) {
  ProblemResult r;
  r.id = p.id;
  switch (method) {
    case Method::CoT:
      r.paths = eval_detail::text_paths(p, cfg, 1, ctx.gateway);
      break;
    case Method::SC:
      r.paths = eval_detail::text_paths(p, cfg, cfg.N, ctx.gateway);
      break;
    case Method::PoT:
    case Method::RmPoT: {
      std::vector<SurfaceForm> forms;
      if (method == Method::RmPoT) {
        r.reformulations = reformulate(p, cfg, ctx.gateway, ctx.exemplars);
        for (const auto& ref : r.reformulations) forms.push_back({ref.index, ref.text});
      } else {
        forms.push_back({kOriginalForm, p.text});
      }
      if (ctx.bank && cfg.fewshot_k > 0) r.fewshot = retrieve_topk(p, *ctx.bank, ctx.gateway, cfg.fewshot_k);
      r.paths = solve_paths(forms, cfg, r.fewshot, ctx.gateway, ctx.sandbox, p.options);
      break;
    }
  }
  r.vote = majority_vote(r.paths, cfg.numeric_tol);
  r.correct = score(r.vote, p.gold, cfg.numeric_tol);
  return r;
}

// ---------------------------------------------------------------------------
// runs

struct RunReport {
  std::string dataset;
  Method method = Method::RmPoT;
  int K = 1;
  int N = 1;
  ReformMode mode = ReformMode::None;
  int correct = 0;
  int total = 0;
  std::vector<ProblemResult> per_problem;

  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
  std::string accuracy_percent() const { return total ? format_percent(correct, total) : "0.0"; }
};

// Problems run concurrently up to cfg.workers; each problem's own paths then
// run serially. A failing problem is scored incorrect with its error kept.
inline RunReport evaluate(const std::vector<Problem>& problems, const std::string& dataset,
                          const PipelineConfig& cfg, Method method, PipelineContext& ctx) {
  validate_config(cfg);
  check_method_config(method, cfg);
  RunReport report;
  report.dataset = dataset;
  report.method = method;
  report.K = cfg.K;
  report.N = cfg.N;
  report.mode = method == Method::RmPoT ? cfg.reform_mode : ReformMode::None;
  report.total = static_cast<int>(problems.size());
  report.per_problem.resize(problems.size());

  PipelineConfig inner = cfg;
  if (problems.size() > 1) inner.workers = 1;
  parallel_for(problems.size(), cfg.workers, [&](std::size_t i) {
    auto& slot = report.per_problem[i];
    try {
      slot = run_problem(problems[i], inner, method, ctx);
    } catch (const std::exception& e) {
      slot = ProblemResult{};
      slot.id = problems[i].id;
      slot.error = e.what();
      slot.vote.invalid_count = cfg.N;
      spdlog::warn("problem {}: {}", problems[i].id, e.what());
    }
  });
  for (const auto& r : report.per_problem) report.correct += r.correct ? 1 : 0;
  return report;
}

struct AblationCell {
  ReformMode mode = ReformMode::Naive;
  int K = 1;
  std::optional<RunReport> report;
  std::string error;
};

// One RM-PoT run per (mode, K) with N fixed; a cell that cannot run records
// its error and the remaining cells still complete.
inline std::vector<AblationCell> ablate(const std::vector<Problem>& problems, const std::string& dataset,
                                        const std::vector<int>& Ks, const std::vector<ReformMode>& modes,
                                        const PipelineConfig& cfg, PipelineContext& ctx) {
  std::vector<AblationCell> cells;
  for (auto mode : modes) {
    for (int k : Ks) {
      AblationCell cell;
      cell.mode = mode;
      cell.K = k;
      try {
        PipelineConfig c = cfg;
        c.K = k;
        c.reform_mode = mode;
        cell.report = evaluate(problems, dataset, c, Method::RmPoT, ctx);
      } catch (const std::exception& e) {
        cell.error = e.what();
        spdlog::warn("ablation cell {} K={}: {}", to_string(mode), k, e.what());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// solve rates

struct Rate {
  int hits = 0;
  int total = 0;

  double value() const { return total ? static_cast<double>(hits) / total : 0.0; }
  std::string percent() const { return format_percent(hits, total); }
};

inline Rate solve_rate(const std::vector<ReasoningPath>& paths, const GoldAnswer& gold, double tol) {
  if (paths.empty()) throw PreconditionError("solve_rate needs at least one path");
  Rate r{0, static_cast<int>(paths.size())};
  for (const auto& p : paths) r.hits += matches_gold(p.answer, gold, tol) ? 1 : 0;
  return r;
}

inline double solve_rate_diff(const std::vector<ReasoningPath>& original, const std::vector<ReasoningPath>& reformed,
                              const GoldAnswer& gold, double tol) {
  return solve_rate(reformed, gold, tol).value() - solve_rate(original, gold, tol).value();
}

struct SolveRateReport {
  std::string problem_id;
  Rate sr_original;
  std::vector<Rate> sr_reformulated;
  std::vector<double> sr_diff;
  std::vector<ExemplarPair> candidates;  // one per reformulation, margin = diff
};

// N paths on the original statement and N paths on each of the K
// reformulations.
inline SolveRateReport measure_solve_rates(const Problem& p, const PipelineConfig& cfg, PipelineContext& ctx) {
  if (cfg.reform_mode == ReformMode::None) throw ConfigError("solve rates need reform mode naive or incontext");
  PipelineConfig single = cfg;
  single.K = 1;
  std::vector<BankEntry> fewshot;
  if (ctx.bank && cfg.fewshot_k > 0) fewshot = retrieve_topk(p, *ctx.bank, ctx.gateway, cfg.fewshot_k);

  SolveRateReport rep;
  rep.problem_id = p.id;
  auto original = solve_paths({{kOriginalForm, p.text}}, single, fewshot, ctx.gateway, ctx.sandbox, p.options);
  rep.sr_original = solve_rate(original, p.gold, cfg.numeric_tol);
  for (const auto& ref : reformulate(p, cfg, ctx.gateway, ctx.exemplars)) {
    auto paths = solve_paths({{ref.index, ref.text}}, single, fewshot, ctx.gateway, ctx.sandbox, p.options);
    auto rate = solve_rate(paths, p.gold, cfg.numeric_tol);
    double diff = rate.value() - rep.sr_original.value();
    rep.sr_reformulated.push_back(rate);
    rep.sr_diff.push_back(diff);
    rep.candidates.push_back({p.text, ref.text, diff});
  }
  return rep;
}

struct HistogramBin {
  double low = 0;
  double high = 0;
  int count = 0;
};

// Bins over [-1, 1]; a value on an edge belongs to the bin it opens, and 1.0
// falls in the last bin.
inline std::vector<HistogramBin> diff_histogram(const std::vector<double>& diffs, double bin_width) {
  if (!(bin_width > 0)) throw PreconditionError("bin width must be positive");
  const double exact = 2.0 / bin_width;
  const auto bins = static_cast<long>(std::llround(exact));
  if (bins < 1 || std::fabs(exact - static_cast<double>(bins)) > 1e-9)
    throw PreconditionError("bin width must divide 2 into a whole number of bins");
  std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
  for (long i = 0; i < bins; ++i) {
    out[static_cast<std::size_t>(i)].low = -1.0 + static_cast<double>(i) * bin_width;
    out[static_cast<std::size_t>(i)].high = -1.0 + static_cast<double>(i + 1) * bin_width;
  }
  for (double d : diffs) {
    if (!(d >= -1.0 - 1e-9 && d <= 1.0 + 1e-9)) throw PreconditionError("solve-rate difference outside [-1, 1]");
    auto idx = static_cast<long>(std::floor((d + 1.0) / bin_width + 1e-9));
    idx = std::clamp(idx, 0L, bins - 1);
    ++out[static_cast<std::size_t>(idx)].count;
  }
  return out;
}

namespace eval_detail {

inline std::string edge_text(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9f", x);
  auto d = Decimal::parse(buf);
  return d ? d->str() : buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace eval_detail

inline std::string emit_diff_histogram(const std::vector<SolveRateReport>& reports, double bin_width) {
  std::vector<double> diffs;
  for (const auto& r : reports) diffs.insert(diffs.end(), r.sr_diff.begin(), r.sr_diff.end());
  std::string out = "bin_low,bin_high,count\n";
  for (const auto& b : diff_histogram(diffs, bin_width))
    out += eval_detail::edge_text(b.low) + "," + eval_detail::edge_text(b.high) + "," + std::to_string(b.count) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// tables

// A cell is an accuracy fraction; empty when the run did not happen.
using TableCell = std::optional<Decimal>;

struct AccuracyTable {
  std::vector<std::string> datasets;
  std::vector<std::pair<std::string, std::vector<TableCell>>> rows;  // method label -> cells
};

struct AblationRow {
  std::string mode;  // display label
  int K = 1;
  std::vector<TableCell> cells;
};

struct AblationTable {
  std::vector<std::string> datasets;
  std::vector<AblationRow> rows;
};

namespace eval_detail {

inline std::string cell_text(const TableCell& c) { return c ? format_percent(*c) : "-"; }

inline Decimal fraction(int num, int den) {
  // exact when den divides a power of ten; otherwise 12 significant digits,
  // which cannot move a one-decimal percentage
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12e", static_cast<double>(num) / den);
  return *Decimal::parse(buf);
}

}  // namespace eval_detail

// Tab-separated, first header cell empty:
//   \tGSM8K\tAQuA\tSVAMP
//   CoT\t75.6\t63.2\t86.3
inline std::string emit_accuracy_tsv(const AccuracyTable& t) {
  std::string out;
  for (const auto& d : t.datasets) out += "\t" + d;
  out += "\n";
  for (const auto& [label, cells] : t.rows) {
    out += label;
    for (const auto& c : cells) out += "\t" + eval_detail::cell_text(c);
    out += "\n";
  }
  return out;
}

inline std::string emit_accuracy_csv(const AccuracyTable& t) {
  std::string out = "method";
  for (const auto& d : t.datasets) out += "," + eval_detail::csv_field(d);
  out += "\n";
  for (const auto& [label, cells] : t.rows) {
    out += eval_detail::csv_field(label);
    for (const auto& c : cells) out += "," + eval_detail::cell_text(c);
    out += "\n";
  }
  return out;
}

// The mode label appears only on the first row of its group:
//   \tK\tGSM8K\tAQuA\tSVAMP
//   Naive\t1\t78.2\t66.0\t86.9
//   \t2\t79.8\t67.7\t88.4
inline std::string emit_ablation_tsv(const AblationTable& t) {
  std::string out = "\tK";
  for (const auto& d : t.datasets) out += "\t" + d;
  out += "\n";
  const std::string* previous = nullptr;
  for (const auto& r : t.rows) {
    out += (previous && *previous == r.mode) ? std::string{} : r.mode;
    previous = &r.mode;
    out += "\t" + std::to_string(r.K);
    for (const auto& c : r.cells) out += "\t" + eval_detail::cell_text(c);
    out += "\n";
  }
  return out;
}

inline std::string emit_ablation_csv(const AblationTable& t) {
  std::string out = "mode,K";
  for (const auto& d : t.datasets) out += "," + eval_detail::csv_field(d);
  out += "\n";
  for (const auto& r : t.rows) {
    out += eval_detail::csv_field(r.mode) + "," + std::to_string(r.K);
    for (const auto& c : r.cells) out += "," + eval_detail::cell_text(c);
    out += "\n";
  }
  return out;
}

// Rows in CoT, SC, PoT, RM-PoT order; columns in first-seen dataset order.
inline AccuracyTable accuracy_table(const std::vector<RunReport>& reports) {
  AccuracyTable t;
  for (const auto& r : reports)
    if (std::find(t.datasets.begin(), t.datasets.end(), r.dataset) == t.datasets.end()) t.datasets.push_back(r.dataset);
  for (auto m : {Method::CoT, Method::SC, Method::PoT, Method::RmPoT}) {
    std::vector<TableCell> cells(t.datasets.size());
    bool any = false;
    for (const auto& r : reports) {
      if (r.method != m || r.total == 0) continue;
      auto col = std::find(t.datasets.begin(), t.datasets.end(), r.dataset) - t.datasets.begin();
      cells[static_cast<std::size_t>(col)] = eval_detail::fraction(r.correct, r.total);
      any = true;
    }
    if (any) t.rows.emplace_back(display_name(m), std::move(cells));
  }
  return t;
}

// `grids` holds one ablate() result per dataset.
inline AblationTable ablation_table(const std::vector<std::vector<AblationCell>>& grids) {
  AblationTable t;
  for (const auto& g : grids)
    for (const auto& c : g)
      if (c.report && std::find(t.datasets.begin(), t.datasets.end(), c.report->dataset) == t.datasets.end())
        t.datasets.push_back(c.report->dataset);
  std::vector<std::pair<ReformMode, int>> keys;
  for (const auto& g : grids)
    for (const auto& c : g)
      if (std::find(keys.begin(), keys.end(), std::make_pair(c.mode, c.K)) == keys.end())
        keys.emplace_back(c.mode, c.K);
  for (const auto& [mode, k] : keys) {
    AblationRow row{display_name(mode), k, std::vector<TableCell>(t.datasets.size())};
    for (const auto& g : grids)
      for (const auto& c : g) {
        if (c.mode != mode || c.K != k || !c.report || c.report->total == 0) continue;
        auto col = std::find(t.datasets.begin(), t.datasets.end(), c.report->dataset) - t.datasets.begin();
        row.cells[static_cast<std::size_t>(col)] = eval_detail::fraction(c.report->correct, c.report->total);
      }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// report files

inline nlohmann::ordered_json answer_json(const Answer& a) {
  nlohmann::ordered_json j;
  switch (a.kind) {
    case Answer::Kind::Numeric:
      j["kind"] = "numeric";
      j["value"] = a.numeric_value.str();
      break;
    case Answer::Kind::Choice:
      j["kind"] = "choice";
      j["value"] = std::string(1, a.choice_label);
      break;
    case Answer::Kind::Invalid:
      j["kind"] = "invalid";
      j["reason"] = to_string(a.invalid_reason);
      break;
  }
  return j;
}

inline nlohmann::ordered_json vote_json(const VoteResult& v) {
  nlohmann::ordered_json tally = nlohmann::ordered_json::array();
  for (const auto& [a, n] : v.tally) tally.push_back({{"answer", a.str()}, {"count", n}});
  return {{"winner", answer_json(v.winner)},
          {"tally", tally},
          {"valid_count", v.valid_count},
          {"invalid_count", v.invalid_count},
          {"tie_broken", v.tie_broken}};
}

inline nlohmann::ordered_json path_json(const ReasoningPath& p) {
  nlohmann::ordered_json j;
  j["form"] = p.source_form;
  j["seed_index"] = p.seed_index;
  j["status"] = p.exec ? to_string(p.exec->status) : (p.code ? "not_run" : (p.error.empty() ? "no_code" : "gateway_error"));
  j["answer"] = p.answer.str();
  if (p.exec && !p.exec->error_message.empty()) j["error"] = p.exec->error_message;
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

inline nlohmann::ordered_json report_json(const RunReport& r) {
  nlohmann::ordered_json problems = nlohmann::ordered_json::array();
  for (const auto& p : r.per_problem) {
    nlohmann::ordered_json pj;
    pj["id"] = p.id;
    pj["correct"] = p.correct;
    pj["vote"] = vote_json(p.vote);
    if (!p.reformulations.empty()) {
      nlohmann::ordered_json forms = nlohmann::ordered_json::array();
      for (const auto& f : p.reformulations)
        forms.push_back({{"index", f.index}, {"text", f.text}, {"degenerate", f.degenerate}});
      pj["reformulations"] = forms;
    }
    if (!p.fewshot.empty()) {
      nlohmann::ordered_json ids = nlohmann::ordered_json::array();
      for (const auto& e : p.fewshot) ids.push_back(e.id);
      pj["fewshot"] = ids;
    }
    nlohmann::ordered_json paths = nlohmann::ordered_json::array();
    for (const auto& path : p.paths) paths.push_back(path_json(path));
    pj["paths"] = paths;
    if (!p.error.empty()) pj["error"] = p.error;
    problems.push_back(pj);
  }
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["method"] = display_name(r.method);
  j["K"] = r.K;
  j["N"] = r.N;
  j["reform_mode"] = to_string(r.mode);
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["accuracy"] = r.accuracy();
  j["accuracy_percent"] = r.accuracy_percent();
  j["per_problem"] = problems;
  return j;
}

inline std::string results_csv(const RunReport& r) {
  std::string out = "id,correct,winner,valid_count,invalid_count,tie_broken,error\n";
  for (const auto& p : r.per_problem)
    out += eval_detail::csv_field(p.id) + "," + (p.correct ? "1" : "0") + "," + eval_detail::csv_field(p.vote.winner.str()) +
           "," + std::to_string(p.vote.valid_count) + "," + std::to_string(p.vote.invalid_count) + "," +
           (p.vote.tie_broken ? "1" : "0") + "," + eval_detail::csv_field(p.error) + "\n";
  return out;
}

inline std::string summary_csv(const std::vector<RunReport>& reports) {
  std::string out = "dataset,method,K,N,reform_mode,correct,total,accuracy,accuracy_percent\n";
  for (const auto& r : reports) {
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.6f", r.accuracy());
    out += eval_detail::csv_field(r.dataset) + "," + display_name(r.method) + "," + std::to_string(r.K) + "," +
           std::to_string(r.N) + "," + to_string(r.mode) + "," + std::to_string(r.correct) + "," +
           std::to_string(r.total) + "," + acc + "," + r.accuracy_percent() + "\n";
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out.flush()) throw ConfigError("failed writing '" + path.string() + "'");
}

}  // namespace rmpot
