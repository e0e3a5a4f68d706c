#include "mia/http_util.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>

namespace mia {
namespace {

httplib::Client make_client(const std::string& base_url, std::chrono::milliseconds timeout) {
  httplib::Client client(base_url);
  const auto seconds = static_cast<time_t>(timeout.count() / 1000);
  const auto micros = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(seconds, micros);
  client.set_read_timeout(seconds, micros);
  client.set_write_timeout(seconds, micros);
  return client;
}

HttpResponse convert(const httplib::Result& result) {
  HttpResponse out;
  if (!result) {
    out.transport_error = httplib::to_string(result.error());
    return out;
  }
  out.status = result->status;
  out.body = result->body;
  for (const auto& [name, value] : result->headers) {
    std::string key = name;
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.headers.emplace(std::move(key), value);
  }
  return out;
}

}  // namespace

std::optional<std::string> HttpResponse::header(const std::string& name) const {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto it = headers.find(key);
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

HttpResponse http_post_json(const std::string& base_url, const std::string& path,
                            const std::string& body,
                            const std::map<std::string, std::string>& headers,
                            std::chrono::milliseconds timeout) {
  auto client = make_client(base_url, timeout);
  httplib::Headers h;
  for (const auto& [name, value] : headers) h.emplace(name, value);
  return convert(client.Post(path, h, body, "application/json"));
}

HttpResponse http_get(const std::string& base_url, const std::string& path,
                      std::chrono::milliseconds timeout) {
  auto client = make_client(base_url, timeout);
  return convert(client.Get(path));
}

}  // namespace mia
