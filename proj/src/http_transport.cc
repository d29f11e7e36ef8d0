#include <cstdlib>

#include "httplib.h"
#include "tripleval/llm_gateway.h"

namespace tripleval {
namespace {

class HttpTransport : public Transport {
 public:
  explicit HttpTransport(EndpointConfig config) : config_(std::move(config)) {
    if (!config_.api_key_env.empty()) {
      if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }
  }

  TransportResponse post(const std::string& path, const std::string& body) override {
    // A client per request: httplib::Client is not meant for concurrent use.
    httplib::Client client(config_.url);
    const auto timeout = std::chrono::duration<double>(config_.timeout_s);
    client.set_connection_timeout(
        std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);

    TransportResponse out;
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      out.error = "connection to " + config_.url + " failed: " + httplib::to_string(res.error());
      return out;
    }
    out.status = res->status;
    out.body = res->body;
    if (res->has_header("Retry-After")) {
      char* end = nullptr;
      const std::string v = res->get_header_value("Retry-After");
      double secs = std::strtod(v.c_str(), &end);
      if (end != v.c_str() && secs >= 0) out.retry_after_s = secs;
    }
    return out;
  }

 private:
  EndpointConfig config_;
  std::string api_key_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const EndpointConfig& config) {
  return std::make_unique<HttpTransport>(config);
}

}  // namespace tripleval
