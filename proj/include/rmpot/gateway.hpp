#pragma once

// OpenAI-compatible chat/embedding client with an on-disk response cache.
//
// Every sampled completion is cached under the key of its single-sample
// request (n_samples = 1, seed_index = base + i), so a batched request and the
// equivalent sequence of single requests populate identical records.

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "rmpot/core.hpp"
#include "rmpot/digest.hpp"
#include "rmpot/errors.hpp"

namespace rmpot {

enum class Role { System, User, Assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

struct Message {
  Role role = Role::User;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<Message> messages;
  double temperature = 0.7;
  double top_p = 0.8;
  int top_k = 3;
  int n_samples = 1;
  int seed_index = 0;
};

inline ChatRequest make_chat_request(std::string prompt, const PipelineConfig& cfg, int n_samples,
                                     int seed_index) {
  ChatRequest req;
  req.messages.push_back({Role::User, std::move(prompt)});
  req.temperature = cfg.temperature;
  req.top_p = cfg.top_p;
  req.top_k = cfg.top_k;
  req.n_samples = n_samples;
  req.seed_index = seed_index;
  return req;
}

// Canonical serialization hashed by cache_key. Object keys are sorted by the
// json type; message order is preserved.
inline nlohmann::json canonical_json(const ChatRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", req.model},         {"messages", msgs},
          {"temperature", req.temperature}, {"top_p", req.top_p},
          {"top_k", req.top_k},         {"n_samples", req.n_samples},
          {"seed_index", req.seed_index}};
}

inline std::string cache_key(const ChatRequest& req) { return sha256_hex(canonical_json(req).dump()); }

inline std::string embedding_cache_key(const std::string& model, const std::string& text) {
  nlohmann::json j = {{"kind", "embedding"}, {"model", model}, {"input", text}};
  return sha256_hex(j.dump());
}

struct EmbeddingVec {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
};

// Scales to unit L2 norm. Throws DimensionMismatch on empty, non-finite or
// all-zero input.
inline EmbeddingVec normalized(std::vector<double> values) {
  if (values.empty()) throw DimensionMismatch("embedding has zero dimensions");
  long double sq = 0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DimensionMismatch("embedding contains a non-finite value");
    sq += static_cast<long double>(v) * v;
  }
  if (sq == 0) throw DimensionMismatch("embedding is the zero vector");
  auto norm = std::sqrt(sq);
  for (double& v : values) v = static_cast<double>(v / norm);
  return {std::move(values)};
}

// ---------------------------------------------------------------------------
// transport

struct HttpReply {
  int status = 0;
  std::string body;
};

// POSTs a JSON body to {base_url}{path}. Throws TransportError when no HTTP
// reply could be obtained.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpReply post(const std::string& path, const std::string& body) = 0;
};

// ---------------------------------------------------------------------------
// response cache

class ResponseCache {
 public:
  static constexpr int kVersion = 1;

  enum class Status { Hit, Miss, Corrupt };

  struct Lookup {
    Status status = Status::Miss;
    std::vector<std::string> completions;
    std::string detail;
  };

  struct Stats {
    std::size_t records = 0;
    std::size_t bytes = 0;
    std::size_t corrupt = 0;
  };

  explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  static std::string checksum(const nlohmann::json& completions) {
    return sha256_hex(completions.dump());
  }

  Lookup lookup(const std::string& key) const {
    auto path = dir_ / key;
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::stringstream ss;
    ss << in.rdbuf();
    return decode(ss.str());
  }

  // Append-only: an existing intact record for `key` is never replaced.
  void store(const std::string& key, const std::string& request_digest,
             const std::vector<std::string>& completions) const {
    nlohmann::ordered_json rec;
    nlohmann::json comps = completions;
    rec["version"] = kVersion;
    rec["request_digest"] = request_digest;
    rec["completions"] = comps;
    rec["created_at"] = utc_timestamp();
    rec["checksum"] = checksum(comps);

    auto final_path = dir_ / key;
    auto tmp = dir_ / (".tmp-" + key + "-" + std::to_string(::getpid()) + "-" +
                       std::to_string(tmp_counter_.fetch_add(1)));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw GatewayError("cannot write cache record " + tmp.string());
      out << rec.dump() << '\n';
      if (!out.flush()) throw GatewayError("cannot write cache record " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::create_hard_link(tmp, final_path, ec);
    if (ec) {
      // someone got there first; only a corrupt record gets replaced
      if (lookup(key).status == Status::Corrupt) std::filesystem::rename(tmp, final_path, ec);
    }
    std::filesystem::remove(tmp, ec);
  }

  Stats stats() const {
    Stats s;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      if (!e.is_regular_file() || !is_record_name(e.path().filename().string())) continue;
      ++s.records;
      s.bytes += e.file_size();
      if (lookup(e.path().filename().string()).status != Status::Hit) ++s.corrupt;
    }
    return s;
  }

  std::size_t clear() const {
    std::size_t removed = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir_)) {
      auto name = e.path().filename().string();
      if (e.is_regular_file() && (is_record_name(name) || name.rfind(".tmp-", 0) == 0)) {
        std::filesystem::remove(e.path());
        ++removed;
      }
    }
    return removed;
  }

  static bool is_record_name(const std::string& name) {
    return name.size() == 64 && name.find_first_not_of("0123456789abcdef") == std::string::npos;
  }

 private:
  static Lookup decode(const std::string& text) {
    Lookup out;
    out.status = Status::Corrupt;
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      out.detail = "unparseable record";
      return out;
    }
    if (j.value("version", 0) != kVersion) {
      out.detail = "unsupported record version";
      return out;
    }
    auto it = j.find("completions");
    if (it == j.end() || !it->is_array()) {
      out.detail = "missing completions";
      return out;
    }
    for (const auto& c : *it) {
      if (!c.is_string()) {
        out.detail = "non-string completion";
        return out;
      }
    }
    if (j.value("checksum", std::string{}) != checksum(*it)) {
      out.detail = "checksum mismatch";
      return out;
    }
    out.completions = it->get<std::vector<std::string>>();
    out.status = Status::Hit;
    return out;
  }

  static std::string utc_timestamp() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
  inline static std::atomic<std::uint64_t> tmp_counter_{0};
};

// ---------------------------------------------------------------------------
// gateway

struct GatewayOptions {
  enum class TopKMode { TopLevel, Drop };

  std::string chat_model = "glm-4-9b-chat";
  std::string embedding_model = "all-MiniLM-L6-v2";
  // top_k is not part of the baseline protocol; TopLevel sends it as an
  // extra body field, Drop omits it for providers that reject unknown keys.
  TopKMode top_k_mode = TopKMode::TopLevel;
  bool provider_supports_n = true;
  int max_attempts = 3;
  double backoff_base_s = 1.0;
  // Throw CacheCorruption instead of treating a corrupt record as a miss.
  bool strict_cache = false;
};

// Applies gateway keys from a flat config document, removing them.
inline void apply_config(ConfigEntries& entries, GatewayOptions& opt) {
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    auto v = it->second;
    entries.erase(it);
    return v;
  };
  if (auto v = take("model")) opt.chat_model = *v;
  if (auto v = take("embedding_model")) opt.embedding_model = *v;
  if (auto v = take("send_top_k"))
    opt.top_k_mode = detail::config_bool("send_top_k", *v) ? GatewayOptions::TopKMode::TopLevel
                                                          : GatewayOptions::TopKMode::Drop;
  if (auto v = take("provider_supports_n"))
    opt.provider_supports_n = detail::config_bool("provider_supports_n", *v);
  if (auto v = take("max_attempts")) opt.max_attempts = detail::config_int("max_attempts", *v);
  if (auto v = take("backoff_base_s")) opt.backoff_base_s = detail::config_real("backoff_base_s", *v);
}

struct GatewayStats {
  std::size_t network_requests = 0;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
  std::size_t corrupt_records = 0;
  std::size_t retries = 0;
};

class Gateway {
 public:
  using Sleeper = std::function<void(double seconds)>;

  Gateway(std::shared_ptr<Transport> transport, GatewayOptions options = {},
          std::optional<ResponseCache> cache = std::nullopt, Sleeper sleeper = {})
      : transport_(std::move(transport)),
        options_(std::move(options)),
        cache_(std::move(cache)),
        sleeper_(sleeper ? std::move(sleeper) : Sleeper(default_sleep)) {
    if (!transport_) throw PreconditionError("gateway needs a transport");
    if (options_.max_attempts < 1) throw ConfigError("max_attempts must be positive");
  }

  const GatewayOptions& options() const { return options_; }
  const std::optional<ResponseCache>& cache() const { return cache_; }

  GatewayStats stats() const {
    return {network_requests_.load(), cache_hits_.load(), cache_misses_.load(),
            corrupt_records_.load(), retries_.load()};
  }

  // Returns exactly req.n_samples completions in provider order.
  std::vector<std::string> chat(ChatRequest req) {
    if (req.messages.empty()) throw PreconditionError("chat request has no messages");
    if (req.n_samples < 1) throw PreconditionError("chat request needs n_samples >= 1");
    if (req.seed_index < 0) throw PreconditionError("seed_index must be non-negative");
    if (req.model.empty()) req.model = options_.chat_model;

    const auto n = static_cast<std::size_t>(req.n_samples);
    const std::string digest = cache_key(req);
    std::vector<std::optional<std::string>> out(n);
    std::vector<std::string> keys(n);
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < n; ++i) {
      keys[i] = cache_key(single_sample(req, i));
      if (auto hit = cached(keys[i])) {
        out[i] = std::move(hit->front());
      } else {
        missing.push_back(i);
      }
    }

    if (!missing.empty() && options_.provider_supports_n && missing.size() == n && n > 1) {
      auto got = fetch_chat(req);
      for (std::size_t i = 0; i < n && i < got.size(); ++i) {
        if (cache_) cache_->store(keys[i], digest, {got[i]});
        out[i] = std::move(got[i]);
      }
      missing.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (!out[i]) missing.push_back(i);
    }
    for (auto i : missing) {
      auto got = fetch_chat(single_sample(req, i));
      if (got.empty()) throw ProviderError(200, "response carried no choices");
      if (cache_) cache_->store(keys[i], digest, {got.front()});
      out[i] = std::move(got.front());
    }

    std::vector<std::string> result;
    result.reserve(n);
    for (auto& o : out) result.push_back(std::move(*o));
    return result;
  }

  // One unit-norm vector per input text, same order.
  std::vector<EmbeddingVec> embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw PreconditionError("embed needs at least one text");
    std::vector<std::optional<EmbeddingVec>> out(texts.size());
    std::map<std::string, std::vector<std::size_t>> missing;  // text -> slots
    std::vector<std::string> order;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      auto key = embedding_cache_key(options_.embedding_model, texts[i]);
      if (auto hit = cached(key)) {
        auto j = nlohmann::json::parse(hit->front(), nullptr, false);
        if (j.is_array()) {
          try {
            out[i] = normalized(j.get<std::vector<double>>());
            continue;
          } catch (const std::exception&) {
          }
        }
        ++corrupt_records_;
        spdlog::warn("embedding cache record {} holds no vector; refetching", key);
      }
      auto [it, inserted] = missing.try_emplace(texts[i]);
      if (inserted) order.push_back(texts[i]);
      it->second.push_back(i);
    }

    if (!order.empty()) {
      nlohmann::json body = {{"model", options_.embedding_model}, {"input", order}};
      auto reply = nlohmann::json::parse(post_with_retry("/embeddings", body.dump()), nullptr, false);
      if (reply.is_discarded() || !reply.contains("data") || !reply["data"].is_array())
        throw ProviderError(200, "embedding response lacks a data array");
      auto data = reply["data"];
      if (data.size() != order.size())
        throw ProviderError(200, "embedding response has " + std::to_string(data.size()) +
                                     " vectors for " + std::to_string(order.size()) + " inputs");
      std::vector<std::optional<EmbeddingVec>> fetched(order.size());
      for (std::size_t pos = 0; pos < data.size(); ++pos) {
        const auto& item = data[pos];
        auto idx = item.contains("index") ? item["index"].get<std::size_t>() : pos;
        if (idx >= order.size() || !item.contains("embedding"))
          throw ProviderError(200, "malformed embedding item");
        fetched[idx] = normalized(item["embedding"].get<std::vector<double>>());
      }
      for (std::size_t k = 0; k < order.size(); ++k) {
        if (!fetched[k]) throw ProviderError(200, "embedding response skipped an input");
        if (cache_) {
          nlohmann::json vec = fetched[k]->values;
          cache_->store(embedding_cache_key(options_.embedding_model, order[k]), "", {vec.dump()});
        }
        for (auto slot : missing[order[k]]) out[slot] = *fetched[k];
      }
    }

    std::vector<EmbeddingVec> result;
    result.reserve(out.size());
    for (auto& o : out) {
      if (!result.empty() && o->dim() != result.front().dim())
        throw DimensionMismatch("provider returned embeddings of differing dimension (" +
                                std::to_string(result.front().dim()) + " vs " +
                                std::to_string(o->dim()) + ")");
      result.push_back(std::move(*o));
    }
    return result;
  }

 private:
  static void default_sleep(double seconds) {
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
  }

  static ChatRequest single_sample(const ChatRequest& req, std::size_t i) {
    ChatRequest one = req;
    one.n_samples = 1;
    one.seed_index = req.seed_index + static_cast<int>(i);
    return one;
  }

  std::optional<std::vector<std::string>> cached(const std::string& key) {
    if (!cache_) return std::nullopt;
    auto r = cache_->lookup(key);
    switch (r.status) {
      case ResponseCache::Status::Hit:
        if (r.completions.empty()) break;
        ++cache_hits_;
        return std::move(r.completions);
      case ResponseCache::Status::Corrupt:
        ++corrupt_records_;
        if (options_.strict_cache) throw CacheCorruption("cache record " + key + ": " + r.detail);
        spdlog::warn("cache record {} is corrupt ({}); treating as a miss", key, r.detail);
        break;
      case ResponseCache::Status::Miss:
        break;
    }
    ++cache_misses_;
    return std::nullopt;
  }

  std::vector<std::string> fetch_chat(const ChatRequest& req) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    nlohmann::json body = {{"model", req.model},         {"messages", msgs},
                           {"temperature", req.temperature}, {"top_p", req.top_p},
                           {"n", req.n_samples},         {"seed", req.seed_index},
                           {"stream", false}};
    if (options_.top_k_mode == GatewayOptions::TopKMode::TopLevel) body["top_k"] = req.top_k;

    auto reply = nlohmann::json::parse(post_with_retry("/chat/completions", body.dump()), nullptr, false);
    if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array())
      throw ProviderError(200, "chat response lacks a choices array");
    std::vector<std::pair<std::size_t, std::string>> indexed;
    std::size_t pos = 0;
    for (const auto& c : reply["choices"]) {
      auto idx = c.contains("index") && c["index"].is_number_unsigned() ? c["index"].get<std::size_t>() : pos;
      std::string text;
      if (c.contains("message") && c["message"].contains("content") && c["message"]["content"].is_string())
        text = c["message"]["content"].get<std::string>();
      indexed.emplace_back(idx, std::move(text));
      ++pos;
    }
    std::stable_sort(indexed.begin(), indexed.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::string> out;
    for (auto& [idx, text] : indexed) {
      if (out.size() == static_cast<std::size_t>(req.n_samples)) break;
      out.push_back(std::move(text));
    }
    return out;
  }

  std::string post_with_retry(const std::string& path, const std::string& body) {
    std::string last_error;
    for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
      if (attempt > 1) {
        ++retries_;
        sleeper_(options_.backoff_base_s * std::pow(2.0, attempt - 2));
      }
      HttpReply reply;
      try {
        ++network_requests_;
        reply = transport_->post(path, body);
      } catch (const TransportError& e) {
        last_error = e.what();
        continue;
      }
      if (reply.status >= 200 && reply.status < 300) return reply.body;
      if (reply.status >= 500 || reply.status == 0) {
        last_error = "HTTP " + std::to_string(reply.status);
        continue;
      }
      throw ProviderError(reply.status, provider_message(reply.body));
    }
    throw TransportError("POST " + path + " failed after " + std::to_string(options_.max_attempts) +
                         " attempts: " + last_error);
  }

  static std::string provider_message(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (!j.is_discarded() && j.is_object() && j.contains("error")) {
      const auto& e = j["error"];
      if (e.is_object() && e.contains("message") && e["message"].is_string()) return e["message"];
      if (e.is_string()) return e;
    }
    return body.substr(0, 512);
  }

  std::shared_ptr<Transport> transport_;
  GatewayOptions options_;
  std::optional<ResponseCache> cache_;
  Sleeper sleeper_;
  std::atomic<std::size_t> network_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> cache_misses_{0};
  std::atomic<std::size_t> corrupt_records_{0};
  std::atomic<std::size_t> retries_{0};
};

}  // namespace rmpot
