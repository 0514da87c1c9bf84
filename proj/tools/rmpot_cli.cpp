// rmpot: reformulate, retrieve, solve by program and vote.
//
//   rmpot solve --mock-script oracle.json --text "..." --k 4 --n 16
//   rmpot eval --dataset test.jsonl --kind gsm8k --out runs/gsm8k
//   rmpot ablate --dataset test.jsonl --kind svamp --k 1,2,4 --modes naive,incontext
//   rmpot bank build --input pairs.jsonl --out bank.jsonl
//
// Exit codes: 0 success, 1 config or I/O error, 2 no valid answer (solve).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>

#include "rmpot/http_transport.hpp"
#include "rmpot/rmpot.hpp"

namespace fs = std::filesystem;
using namespace rmpot;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNoAnswer = 2;

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

int default_workers() {
  auto hw = static_cast<int>(std::thread::hardware_concurrency());
  return std::clamp(hw, 1, 16);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!trim_view(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!trim_view(cur).empty()) out.push_back(trim(cur));
  return out;
}

// Flags shared by every command that talks to the provider.
struct ProviderFlags {
  std::string config_path;
  std::string mock_script;
  std::optional<std::string> base_url;
  std::optional<std::string> model;
  std::optional<std::string> embed_model;
  std::optional<std::string> cache_dir;
  bool no_cache = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "Flat key = value config file")->check(CLI::ExistingFile);
    app->add_option("--mock-script", mock_script, "Scripted mock provider (JSON); no network traffic")
        ->check(CLI::ExistingFile);
    app->add_option("--base-url", base_url, "Provider base URL (default: $RMPOT_BASE_URL)");
    app->add_option("--model", model, "Chat model name");
    app->add_option("--embed-model", embed_model, "Embedding model name");
    app->add_option("--cache-dir", cache_dir, "Response cache directory (default: $RMPOT_CACHE_DIR or .rmpot-cache)");
    app->add_flag("--no-cache", no_cache, "Disable the response cache");
  }
};

// Pipeline flags; each overrides the config file, which overrides defaults.
struct PipelineFlags {
  std::optional<int> k;
  std::optional<int> n;
  std::optional<std::string> mode;
  std::optional<int> fewshot;
  std::optional<double> timeout;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<int> top_k;
  std::optional<std::string> result_var;
  std::optional<int> workers;
  std::string bank;
  std::string exemplars;
  std::string interpreter = "python3";
  std::string shim;

  void attach(CLI::App* app, bool with_k = true) {
    if (with_k) app->add_option("--k", k, "Number of reformulated surface forms K (must divide N)");
    app->add_option("--n", n, "Total reasoning paths N per problem");
    app->add_option("--mode", mode, "Reformulation mode: naive|incontext|none");
    app->add_option("--fewshot", fewshot, "Few-shot exemplars retrieved from the bank");
    app->add_option("--timeout", timeout, "Per-program execution timeout in seconds");
    app->add_option("--temperature", temperature, "Sampling temperature");
    app->add_option("--top-p", top_p, "Nucleus sampling top_p");
    app->add_option("--top-k", top_k, "Sampling top_k");
    app->add_option("--result-var", result_var, "Variable holding the program's answer");
    app->add_option("--workers", workers, "Concurrent workers (default: logical cores, at most 16)");
    app->add_option("--bank", bank, "Question bank for few-shot retrieval")->check(CLI::ExistingFile);
    app->add_option("--exemplars", exemplars, "Exemplar pairs (JSONL) for in-context reformulation")
        ->check(CLI::ExistingFile);
    app->add_option("--interpreter", interpreter, "Interpreter used to run --shim")->capture_default_str();
    app->add_option("--shim", shim, "Sandbox shim script; without it programs run in the built-in evaluator");
  }
};

struct Runtime {
  PipelineConfig cfg;
  GatewayOptions gateway_options;
  std::shared_ptr<MockTransport> mock;
  std::unique_ptr<Gateway> gateway;
  std::unique_ptr<Sandbox> sandbox;
  std::optional<Bank> bank;
  std::vector<ExemplarPair> exemplars;

  PipelineContext context() { return {*gateway, *sandbox, bank ? &*bank : nullptr, exemplars}; }
};

std::string take(ConfigEntries& entries, const char* key, std::string fallback = {}) {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  auto v = it->second;
  entries.erase(it);
  return v;
}

Runtime make_runtime(const ProviderFlags& pf, const PipelineFlags* pl, bool need_sandbox) {
  Runtime rt;
  rt.cfg.workers = default_workers();
  ConfigEntries entries;
  if (!pf.config_path.empty()) entries = load_config_file(pf.config_path);
  apply_config(entries, rt.cfg);
  apply_config(entries, rt.gateway_options);
  auto base_url = pf.base_url ? *pf.base_url : take(entries, "base_url", env("RMPOT_BASE_URL").value_or(""));
  auto cache_dir = pf.cache_dir ? *pf.cache_dir
                                : take(entries, "cache_dir", env("RMPOT_CACHE_DIR").value_or(".rmpot-cache"));
  if (!entries.empty()) throw ConfigError("unknown config key '" + entries.begin()->first + "'");

  if (pf.model) rt.gateway_options.chat_model = *pf.model;
  if (pf.embed_model) rt.gateway_options.embedding_model = *pf.embed_model;
  if (pl) {
    if (pl->k) rt.cfg.K = *pl->k;
    if (pl->n) rt.cfg.N = *pl->n;
    if (pl->mode) rt.cfg.reform_mode = parse_reform_mode(*pl->mode);
    if (pl->fewshot) rt.cfg.fewshot_k = *pl->fewshot;
    if (pl->timeout) rt.cfg.sandbox_timeout_s = *pl->timeout;
    if (pl->temperature) rt.cfg.temperature = *pl->temperature;
    if (pl->top_p) rt.cfg.top_p = *pl->top_p;
    if (pl->top_k) rt.cfg.top_k = *pl->top_k;
    if (pl->result_var) rt.cfg.result_var = *pl->result_var;
    if (pl->workers) rt.cfg.workers = *pl->workers;
  }

  std::shared_ptr<Transport> transport;
  if (!pf.mock_script.empty()) {
    rt.mock = MockTransport::from_file(pf.mock_script);
    transport = rt.mock;
  } else if (!base_url.empty()) {
    transport = std::make_shared<HttpTransport>(base_url, env("RMPOT_API_KEY").value_or(""));
  } else {
    throw ConfigError("no provider configured: pass --base-url, set RMPOT_BASE_URL, or use --mock-script");
  }
  std::optional<ResponseCache> cache;
  if (!pf.no_cache) cache.emplace(cache_dir);
  rt.gateway = std::make_unique<Gateway>(transport, rt.gateway_options, std::move(cache));

  if (need_sandbox) {
    if (pl && !pl->shim.empty()) {
      rt.sandbox = std::make_unique<SubprocessSandbox>(pl->interpreter, pl->shim);
    } else {
      rt.sandbox = std::make_unique<FakeSandbox>();
    }
  }
  if (pl && !pl->bank.empty()) rt.bank = Bank::load(pl->bank);
  if (pl && !pl->exemplars.empty()) {
    auto all = load_exemplars(pl->exemplars);
    if (!all.empty()) rt.exemplars = select_exemplars(std::move(all), rt.cfg.incontext_exemplars).pairs;
  }
  return rt;
}

void print_gateway_stats(const Runtime& rt) {
  auto s = rt.gateway->stats();
  std::cerr << "network requests: " << s.network_requests << " (cache hits " << s.cache_hits << ", misses "
            << s.cache_misses << ", retries " << s.retries << ")\n";
}

std::vector<Option> parse_option_flags(const std::vector<std::string>& raw, std::string_view labels) {
  std::vector<Option> out;
  for (const auto& r : raw) out.push_back(eval_detail::parse_option(r, labels));
  return out;
}

// ---------------------------------------------------------------------------
// commands

struct SolveArgs {
  std::string text;
  std::vector<std::string> options;
  std::string method = "rm-pot";
};

int cmd_solve(const ProviderFlags& pf, const PipelineFlags& pl, const SolveArgs& args) {
  auto rt = make_runtime(pf, &pl, true);
  auto method = parse_method(args.method);
  if (method == Method::RmPoT && rt.cfg.reform_mode == ReformMode::None) method = Method::PoT;
  if (method != Method::RmPoT) rt.cfg.K = 1;
  validate_config(rt.cfg);
  check_method_config(method, rt.cfg);

  Problem p;
  p.id = "cli";
  p.text = args.text;
  p.options = parse_option_flags(args.options, rt.cfg.choice_labels);
  validate_problem(p, rt.cfg.choice_labels);

  auto ctx = rt.context();
  auto r = run_problem(p, rt.cfg, method, ctx);
  std::cout << "winner: " << r.vote.winner.str() << "\n";
  std::cout << "tally:";
  if (r.vote.tally.empty()) std::cout << " (empty)";
  for (const auto& [a, n] : r.vote.tally) std::cout << " " << a.str() << " x" << n;
  std::cout << "\nvalid: " << r.vote.valid_count << "  invalid: " << r.vote.invalid_count
            << "  tie_broken: " << (r.vote.tie_broken ? "yes" : "no") << "\n";
  for (const auto& f : r.reformulations)
    std::cout << "form " << f.index << (f.degenerate ? " (original fallback)" : "") << ": " << f.text << "\n";
  std::cout << "form\tseed\tstatus\tanswer\n";
  for (const auto& path : r.paths) {
    auto j = path_json(path);
    std::cout << (path.source_form == kOriginalForm ? std::string("orig") : std::to_string(path.source_form)) << "\t"
              << path.seed_index << "\t" << j["status"].get<std::string>() << "\t" << path.answer.str() << "\n";
  }
  print_gateway_stats(rt);
  return r.vote.winner.valid() ? kExitOk : kExitNoAnswer;
}

struct DatasetArgs {
  std::string dataset;
  std::string kind;
  int limit = 0;
  std::uint64_t seed = 0;
  std::string out = "rmpot-out";

  void attach(CLI::App* app) {
    app->add_option("--dataset", dataset, "Dataset file in its published format")->required()->check(CLI::ExistingFile);
    app->add_option("--kind", kind, "Dataset kind: gsm8k|aqua|svamp|custom")->required();
    app->add_option("--limit", limit, "Evaluate a seeded random subset of this size (0 = all)");
    app->add_option("--seed", seed, "Seed for --limit sampling");
    app->add_option("--out", out, "Output directory for reports")->capture_default_str();
  }

  std::vector<Problem> load(std::string_view labels) const {
    auto problems = load_dataset(dataset, parse_dataset_kind(kind), labels);
    return sample_problems(std::move(problems), limit, seed);
  }
};

struct EvalArgs {
  std::string methods = "rm-pot";
  bool solve_rates = false;
  double bin_width = 0.25;
};

int cmd_eval(const ProviderFlags& pf, const PipelineFlags& pl, const DatasetArgs& ds, const EvalArgs& args) {
  auto rt = make_runtime(pf, &pl, true);
  validate_config(rt.cfg);
  auto problems = ds.load(rt.cfg.choice_labels);
  const auto name = display_name(parse_dataset_kind(ds.kind));
  const fs::path out = ds.out;
  auto ctx = rt.context();

  std::vector<RunReport> reports;
  for (const auto& m : split_list(args.methods)) {
    auto method = parse_method(m);
    PipelineConfig cfg = rt.cfg;
    if (method != Method::RmPoT) cfg.K = 1;
    auto report = evaluate(problems, name, cfg, method, ctx);
    write_text_file(out / ("report-" + to_string(method) + ".json"), report_json(report).dump(2) + "\n");
    write_text_file(out / ("results-" + to_string(method) + ".csv"), results_csv(report));
    std::cout << name << " " << display_name(method) << " K=" << report.K << " N=" << report.N << " "
              << to_string(report.mode) << ": " << report.correct << "/" << report.total << " correct ("
              << report.accuracy_percent() << "%)\n";
    reports.push_back(std::move(report));
  }
  write_text_file(out / "summary.csv", summary_csv(reports));
  auto table = accuracy_table(reports);
  write_text_file(out / "table.csv", emit_accuracy_csv(table));
  write_text_file(out / "table.tsv", emit_accuracy_tsv(table));

  if (args.solve_rates) {
    std::vector<SolveRateReport> rates;
    std::vector<ExemplarPair> candidates;
    std::string csv = "id,sr_original,form,sr_reformulated,sr_diff\n";
    for (const auto& p : problems) {
      auto r = measure_solve_rates(p, rt.cfg, ctx);
      for (std::size_t i = 0; i < r.sr_reformulated.size(); ++i)
        csv += eval_detail::csv_field(p.id) + "," + r.sr_original.percent() + "," + std::to_string(i) + "," +
               r.sr_reformulated[i].percent() + "," + eval_detail::edge_text(r.sr_diff[i]) + "\n";
      candidates.insert(candidates.end(), r.candidates.begin(), r.candidates.end());
      rates.push_back(std::move(r));
    }
    write_text_file(out / "solve_rates.csv", csv);
    write_text_file(out / "histogram.csv", emit_diff_histogram(rates, args.bin_width));
    if (!candidates.empty()) save_exemplars(out / "exemplar_candidates.jsonl", candidates);
  }
  print_gateway_stats(rt);
  return kExitOk;
}

struct AblateArgs {
  std::string ks = "1,2,4";
  std::string modes = "naive,incontext";
};

int cmd_ablate(const ProviderFlags& pf, const PipelineFlags& pl, const DatasetArgs& ds, const AblateArgs& args) {
  auto rt = make_runtime(pf, &pl, true);
  std::vector<int> ks;
  for (const auto& k : split_list(args.ks)) ks.push_back(detail::config_int("--k", k));
  std::vector<ReformMode> modes;
  for (const auto& m : split_list(args.modes)) modes.push_back(parse_reform_mode(m));
  if (ks.empty() || modes.empty()) throw ConfigError("ablate needs at least one K and one mode");
  for (int k : ks) {
    PipelineConfig c = rt.cfg;
    c.K = k;
    validate_config(c);
  }
  auto problems = ds.load(rt.cfg.choice_labels);
  const auto name = display_name(parse_dataset_kind(ds.kind));
  auto ctx = rt.context();
  auto cells = ablate(problems, name, ks, modes, rt.cfg, ctx);

  nlohmann::ordered_json grid = nlohmann::ordered_json::array();
  for (const auto& c : cells) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(c.mode);
    j["K"] = c.K;
    if (c.report) {
      j["report"] = report_json(*c.report);
      std::cout << name << " " << display_name(c.mode) << " K=" << c.K << ": " << c.report->correct << "/"
                << c.report->total << " correct (" << c.report->accuracy_percent() << "%)\n";
    } else {
      j["error"] = c.error;
      std::cout << name << " " << display_name(c.mode) << " K=" << c.K << ": failed: " << c.error << "\n";
    }
    grid.push_back(j);
  }
  const fs::path out = ds.out;
  write_text_file(out / "ablation.json", grid.dump(2) + "\n");
  auto table = ablation_table({cells});
  write_text_file(out / "ablation.csv", emit_ablation_csv(table));
  write_text_file(out / "ablation.tsv", emit_ablation_tsv(table));
  print_gateway_stats(rt);
  return kExitOk;
}

int cmd_reformulate(const ProviderFlags& pf, const PipelineFlags& pl, const std::string& text) {
  auto rt = make_runtime(pf, &pl, false);
  validate_config(rt.cfg);
  Problem p;
  p.id = "cli";
  p.text = text;
  for (const auto& r : reformulate(p, rt.cfg, *rt.gateway, rt.exemplars))
    std::cout << "[" << r.index << "]" << (r.degenerate ? " (original fallback)" : "") << " " << r.text << "\n";
  print_gateway_stats(rt);
  return kExitOk;
}

int cmd_bank_build(const ProviderFlags& pf, const std::string& input, const std::string& out) {
  auto rt = make_runtime(pf, nullptr, false);
  auto bank = build_bank(load_bank_pairs(input), *rt.gateway);
  bank.save(out);
  std::cout << "wrote " << bank.entries().size() << " entries in " << bank.domains().size() << " domains (dim "
            << bank.dim() << ") to " << out << "\n";
  for (const auto& d : bank.domains()) std::cout << "  " << d.name << ": " << d.size << "\n";
  print_gateway_stats(rt);
  return kExitOk;
}

int cmd_bank_query(const ProviderFlags& pf, const std::string& bank_path, const std::string& text, int k) {
  auto rt = make_runtime(pf, nullptr, false);
  auto bank = Bank::load(bank_path);
  auto query = rt.gateway->embed({text}).front();
  const auto& domain = bank.classify(query);
  std::cout << "domain: " << domain.name << "\n";
  int rank = 1;
  for (const auto& s : bank.top_k(query, domain.name, k)) {
    char sim[32];
    std::snprintf(sim, sizeof(sim), "%.6f", s.similarity);
    std::cout << rank++ << "\t" << s.entry->id << "\t" << sim << "\t" << s.entry->question << "\n";
  }
  print_gateway_stats(rt);
  return kExitOk;
}

fs::path resolve_cache_dir(const std::optional<std::string>& flag) {
  if (flag) return *flag;
  return env("RMPOT_CACHE_DIR").value_or(".rmpot-cache");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reformulate math problems, solve them as programs, and vote over the answers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rmpot 1.0.0");
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  ProviderFlags pf;
  PipelineFlags pl;
  SolveArgs solve_args;
  DatasetArgs ds;
  EvalArgs eval_args;
  AblateArgs ablate_args;
  std::string text;
  std::string bank_input;
  std::string bank_out;
  std::string bank_path;
  int bank_k = kDefaultRetrievalK;
  std::optional<std::string> cache_dir_flag;

  auto* solve = app.add_subcommand("solve", "Solve one problem and print the vote");
  pf.attach(solve);
  pl.attach(solve);
  solve->add_option("--text", solve_args.text, "Problem statement")->required();
  solve->add_option("--option", solve_args.options, "Answer option like 'A)21' (repeatable)");
  solve->add_option("--method", solve_args.method, "cot|sc|pot|rm-pot")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "Evaluate methods on a dataset and write reports");
  pf.attach(eval);
  pl.attach(eval);
  ds.attach(eval);
  eval->add_option("--methods", eval_args.methods, "Comma-separated methods: cot,sc,pot,rm-pot")->capture_default_str();
  eval->add_flag("--solve-rates", eval_args.solve_rates,
                 "Also measure per-problem solve rates, their histogram and exemplar candidates");
  eval->add_option("--bin-width", eval_args.bin_width, "Histogram bin width over [-1, 1]")->capture_default_str();

  auto* abl = app.add_subcommand("ablate", "Run the K x reformulation-mode grid on a dataset");
  pf.attach(abl);
  pl.attach(abl, false);
  ds.attach(abl);
  abl->add_option("--k", ablate_args.ks, "Comma-separated K values")->capture_default_str();
  abl->add_option("--modes", ablate_args.modes, "Comma-separated modes")->capture_default_str();

  auto* ref = app.add_subcommand("reformulate", "Print K reformulations of a problem");
  pf.attach(ref);
  pl.attach(ref);
  ref->add_option("--text", text, "Problem statement")->required();

  auto add_bank_build = [&](CLI::App* cmd) {
    pf.attach(cmd);
    cmd->add_option("--input", bank_input, "Pairs JSONL: question, solution, domain[, id]")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", bank_out, "Bank file to write")->required();
  };
  auto add_bank_query = [&](CLI::App* cmd) {
    pf.attach(cmd);
    cmd->add_option("--bank", bank_path, "Bank file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--text", text, "Query problem text")->required();
    cmd->add_option("--k", bank_k, "Entries to return")->capture_default_str();
  };
  auto* bank_build = app.add_subcommand("bank-build", "Embed question/solution pairs into a bank file");
  add_bank_build(bank_build);
  auto* bank_query = app.add_subcommand("bank-query", "Classify a problem and list its nearest bank entries");
  add_bank_query(bank_query);
  auto* bank = app.add_subcommand("bank", "Bank management (build, query)");
  bank->require_subcommand(1);
  auto* bank_build2 = bank->add_subcommand("build", "Same as bank-build");
  add_bank_build(bank_build2);
  auto* bank_query2 = bank->add_subcommand("query", "Same as bank-query");
  add_bank_query(bank_query2);

  auto* cache_stats = app.add_subcommand("cache-stats", "Summarize the response cache");
  cache_stats->add_option("--cache-dir", cache_dir_flag, "Cache directory (default: $RMPOT_CACHE_DIR or .rmpot-cache)");
  auto* cache_clear = app.add_subcommand("cache-clear", "Delete every cache record");
  cache_clear->add_option("--cache-dir", cache_dir_flag, "Cache directory (default: $RMPOT_CACHE_DIR or .rmpot-cache)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  spdlog::set_pattern("[%l] %v");

  try {
    if (*solve) return cmd_solve(pf, pl, solve_args);
    if (*eval) return cmd_eval(pf, pl, ds, eval_args);
    if (*abl) return cmd_ablate(pf, pl, ds, ablate_args);
    if (*ref) return cmd_reformulate(pf, pl, text);
    if (*bank_build || *bank_build2) return cmd_bank_build(pf, bank_input, bank_out);
    if (*bank_query || *bank_query2) return cmd_bank_query(pf, bank_path, text, bank_k);
    if (*cache_stats) {
      auto dir = resolve_cache_dir(cache_dir_flag);
      if (!fs::exists(dir)) throw ConfigError("cache directory '" + dir.string() + "' does not exist");
      auto s = ResponseCache(dir).stats();
      std::cout << "directory: " << dir.string() << "\nrecords: " << s.records << "\nbytes: " << s.bytes
                << "\ncorrupt: " << s.corrupt << "\n";
      return kExitOk;
    }
    if (*cache_clear) {
      auto dir = resolve_cache_dir(cache_dir_flag);
      if (!fs::exists(dir)) {
        std::cout << "removed 0 records\n";
        return kExitOk;
      }
      std::cout << "removed " << ResponseCache(dir).clear() << " records\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
