#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

namespace mia {

struct HttpResponse {
  int status = 0;  // 0 when the transport failed before a response arrived
  std::string body;
  std::map<std::string, std::string> headers;
  std::string transport_error;

  std::optional<std::string> header(const std::string& name) const;
};

/// Single JSON POST against `base_url` + `path`; never throws on transport errors.
HttpResponse http_post_json(const std::string& base_url, const std::string& path,
                            const std::string& body,
                            const std::map<std::string, std::string>& headers,
                            std::chrono::milliseconds timeout);

HttpResponse http_get(const std::string& base_url, const std::string& path,
                      std::chrono::milliseconds timeout);

}  // namespace mia
