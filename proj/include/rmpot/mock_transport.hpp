#pragma once

// Scripted stand-in for an OpenAI-compatible provider.
//
// Script document:
//
//   {
//     "chat": [
//       {"match": "Reformulate", "completions": ["...", "..."]},
//       {"regex": "Question: .*apples", "completions": ["```python\nans = 7\n```"]}
//     ],
//     "default_completions": ["ans = 0"],
//     "embeddings": {"dim": 32, "vectors": {"some text": [0.1, 0.2]}}
//   }
//
// A chat request is answered by the first rule whose `match` substring (or
// `regex`) occurs in the last user message. Choice i of a request with seed s
// is completions[(s + i) % size], so replies depend only on the request and
// never on call order. Texts without an explicit vector embed as hashed
// bag-of-words features of width `dim`.

#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmpot/gateway.hpp"

namespace rmpot {

struct MockRule {
  std::string match;
  std::optional<std::regex> pattern;
  std::string pattern_text;
  std::vector<std::string> completions;
};

struct MockCall {
  std::string path;
  std::string prompt;  // last user message, or joined inputs for embeddings
  int n = 1;
  int seed = 0;
};

class MockTransport final : public Transport {
 public:
  MockTransport() = default;

  static std::shared_ptr<MockTransport> from_json(const nlohmann::json& script) {
    auto ptr = std::make_shared<MockTransport>();
    auto& t = *ptr;
    if (script.contains("chat")) {
      for (const auto& r : script.at("chat")) {
        MockRule rule;
        rule.match = r.value("match", std::string{});
        if (r.contains("regex")) {
          rule.pattern_text = r.at("regex").get<std::string>();
          rule.pattern.emplace(rule.pattern_text);
        }
        rule.completions = r.at("completions").get<std::vector<std::string>>();
        if (rule.completions.empty()) throw ParseError("mock rule has no completions");
        t.rules_.push_back(std::move(rule));
      }
    }
    if (script.contains("default_completions"))
      t.default_completions_ = script.at("default_completions").get<std::vector<std::string>>();
    if (script.contains("embeddings")) {
      const auto& e = script.at("embeddings");
      t.embed_dim_ = e.value("dim", t.embed_dim_);
      if (e.contains("vectors"))
        for (const auto& [text, vec] : e.at("vectors").items())
          t.vectors_[text] = vec.get<std::vector<double>>();
    }
    return ptr;
  }

  static std::shared_ptr<MockTransport> from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock script '" + path + "'");
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("mock script '" + path + "' is not valid JSON");
    return from_json(j);
  }

  void add_rule(std::string match, std::vector<std::string> completions) {
    std::lock_guard lock(mu_);
    rules_.push_back({std::move(match), std::nullopt, {}, std::move(completions)});
  }

  void set_default(std::vector<std::string> completions) {
    std::lock_guard lock(mu_);
    default_completions_ = std::move(completions);
  }

  void set_vector(const std::string& text, std::vector<double> v) {
    std::lock_guard lock(mu_);
    vectors_[text] = std::move(v);
  }

  void set_embedding_dim(int dim) {
    std::lock_guard lock(mu_);
    embed_dim_ = dim;
  }

  // The next `count` calls fail: status 0 raises TransportError, anything
  // else is returned as that HTTP status.
  void fail_next(int count, int status, std::string message = "scripted failure") {
    std::lock_guard lock(mu_);
    for (int i = 0; i < count; ++i) failures_.push_back({status, message});
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return calls_.size();
  }

  std::vector<MockCall> calls() const {
    std::lock_guard lock(mu_);
    return calls_;
  }

  HttpReply post(const std::string& path, const std::string& body) override {
    std::unique_lock lock(mu_);
    auto req = nlohmann::json::parse(body, nullptr, false);
    MockCall call{path, {}, 1, 0};
    if (!req.is_discarded()) {
      call.n = req.value("n", 1);
      call.seed = req.value("seed", 0);
      if (path == "/chat/completions") call.prompt = last_user_message(req);
      if (path == "/embeddings" && req.contains("input")) call.prompt = req["input"].dump();
    }
    calls_.push_back(call);

    if (!failures_.empty()) {
      auto f = failures_.front();
      failures_.erase(failures_.begin());
      if (f.status == 0) throw TransportError(f.message);
      return {f.status, nlohmann::json{{"error", {{"message", f.message}}}}.dump()};
    }
    if (req.is_discarded()) return error(400, "request body is not JSON");
    if (path == "/chat/completions") return chat_reply(call);
    if (path == "/embeddings") return embedding_reply(req);
    return error(404, "unknown endpoint " + path);
  }

  // Deterministic hashed bag-of-words embedding (before normalization).
  static std::vector<double> hashed_features(const std::string& text, int dim) {
    std::vector<double> v(static_cast<std::size_t>(dim), 0.0);
    v[0] = 0.25;  // keeps empty text off the zero vector
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      std::uint64_t h = 1469598103934665603ull;
      for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
      }
      v[h % static_cast<std::uint64_t>(dim)] += (h >> 63) ? 1.0 : -1.0;
      token.clear();
    };
    for (char c : text) {
      auto u = static_cast<unsigned char>(c);
      if (std::isalnum(u)) {
        token.push_back(static_cast<char>(std::tolower(u)));
      } else {
        flush();
      }
    }
    flush();
    return v;
  }

 private:
  struct Failure {
    int status;
    std::string message;
  };

  static std::string last_user_message(const nlohmann::json& req) {
    std::string out;
    if (!req.contains("messages")) return out;
    for (const auto& m : req["messages"])
      if (m.value("role", std::string{}) == "user") out = m.value("content", std::string{});
    return out;
  }

  static HttpReply error(int status, const std::string& message) {
    return {status, nlohmann::json{{"error", {{"message", message}}}}.dump()};
  }

  const std::vector<std::string>* pick(const std::string& prompt) const {
    for (const auto& r : rules_) {
      if (r.pattern ? std::regex_search(prompt, *r.pattern) : prompt.find(r.match) != std::string::npos)
        return &r.completions;
    }
    return default_completions_.empty() ? nullptr : &default_completions_;
  }

  HttpReply chat_reply(const MockCall& call) const {
    const auto* comps = pick(call.prompt);
    if (!comps) return error(400, "no mock rule matches the prompt");
    nlohmann::json choices = nlohmann::json::array();
    for (int i = 0; i < std::max(call.n, 1); ++i) {
      auto idx = static_cast<std::size_t>(call.seed + i) % comps->size();
      choices.push_back({{"index", i},
                         {"message", {{"role", "assistant"}, {"content", (*comps)[idx]}}},
                         {"finish_reason", "stop"}});
    }
    return {200, nlohmann::json{{"object", "chat.completion"}, {"choices", choices}}.dump()};
  }

  HttpReply embedding_reply(const nlohmann::json& req) const {
    std::vector<std::string> inputs;
    if (req["input"].is_string()) {
      inputs.push_back(req["input"].get<std::string>());
    } else {
      inputs = req["input"].get<std::vector<std::string>>();
    }
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto it = vectors_.find(inputs[i]);
      auto vec = it != vectors_.end() ? it->second : hashed_features(inputs[i], embed_dim_);
      data.push_back({{"index", i}, {"object", "embedding"}, {"embedding", vec}});
    }
    return {200, nlohmann::json{{"object", "list"}, {"data", data}}.dump()};
  }

  mutable std::mutex mu_;
  std::vector<MockRule> rules_;
  std::vector<std::string> default_completions_;
  std::map<std::string, std::vector<double>> vectors_;
  int embed_dim_ = 64;
  std::vector<Failure> failures_;
  std::vector<MockCall> calls_;
};

}  // namespace rmpot
