#include "orchestra/agents/external.hpp"

#include <json.hpp>

namespace orchestra {

using nlohmann::json;

ExternalAgent::ExternalAgent(const std::string& endpoint, int timeout_ms) : timeout_ms_(timeout_ms) {
  auto url = net::Url::parse(endpoint);
  if (!url) throw Error(ErrorKind::BadEndpoint, "external tool endpoint '" + endpoint + "' is not an http(s) URL");
  url_ = *url;
}

std::string ExternalAgent::invoke(std::string_view payload, const InvocationContext&) {
  const json body = {{"query", std::string(payload)}};
  const auto res = net::post_json(url_, body.dump(), {}, timeout_ms_);
  if (res.status == 408 || res.status == 504) {
    throw Error(ErrorKind::Timeout, "remote tool timed out (HTTP " + std::to_string(res.status) + ")");
  }
  if (res.status != 200) throw RemoteError(res.status, res.body);
  try {
    const json j = json::parse(res.body);
    const json& result = j.at("result");
    return result.is_string() ? result.get<std::string>() : result.dump();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ProtocolError, std::string("remote tool response lacks a result: ") + e.what());
  }
}

}  // namespace orchestra
