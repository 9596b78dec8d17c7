#include "csguide/qual_features.hpp"

#include <httplib.h>
#include <json.hpp>

namespace csguide {

namespace {

struct Endpoint {
  std::string base;  // scheme://host:port
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("annotator endpoint must be an http URL: " + url);
  if (url.compare(0, scheme_end, "http") != 0) throw Error("annotator endpoint must use http: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

AnnotationResult annotate_remote(const AnnotatorConfig& config, std::string_view prompt) {
  config.validate();
  const Endpoint ep = split_url(config.endpoint_url);
  const std::string body = remote_request_body(config, prompt);

  httplib::Client client(ep.base);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string last_error;
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    try {
      const auto reply = nlohmann::json::parse(res->body);
      if (!reply.is_object() || !reply.contains("response") || !reply["response"].is_string())
        throw MalformedAnnotation("reply has no 'response' text", res->body);
      return parse_annotation(reply["response"].get<std::string>());
    } catch (const nlohmann::json::exception&) {
      last_error = "malformed annotation: reply is not JSON";
    } catch (const MalformedAnnotation& e) {
      last_error = e.what();
    }
  }
  throw TransportError("remote annotation failed after " + std::to_string(config.max_retries + 1) +
                       " attempts: " + last_error);
}

}  // namespace csguide
