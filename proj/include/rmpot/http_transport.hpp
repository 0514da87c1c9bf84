#pragma once

// Real provider transport over cpp-httplib. Include only where the binary
// links OpenSSL::SSL (https support).

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <memory>
#include <regex>
#include <string>

#include "rmpot/gateway.hpp"

namespace rmpot {

class HttpTransport final : public Transport {
 public:
  // base_url like "https://host:port/v1"; the path part prefixes every POST.
  HttpTransport(const std::string& base_url, std::string api_key, double timeout_s = 120.0)
      : api_key_(std::move(api_key)) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(base_url, m, url)) throw ConfigError("base URL must look like http(s)://host[:port][/path]");
    prefix_ = m[2].str();
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    client_ = std::make_unique<httplib::Client>(m[1].str());
    auto secs = static_cast<time_t>(timeout_s);
    client_->set_connection_timeout(secs, 0);
    client_->set_read_timeout(secs, 0);
    client_->set_write_timeout(secs, 0);
  }

  HttpReply post(const std::string& path, const std::string& body) override {
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    std::lock_guard lock(mu_);
    auto res = client_->Post(prefix_ + path, headers, body, "application/json");
    if (!res) throw TransportError("POST " + prefix_ + path + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

 private:
  std::string api_key_;
  std::string prefix_;
  std::unique_ptr<httplib::Client> client_;
  std::mutex mu_;
};

}  // namespace rmpot
