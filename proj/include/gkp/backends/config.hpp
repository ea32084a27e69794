#pragma once

#include <optional>
#include <string>

#include "gkp/backends/types.hpp"

namespace gkp {

/// One configured backend. `path` is the fixture script or the enumerable LM
/// table; `url`/`api_path` address a wire backend (GKP_ENDPOINT and
/// GKP_API_KEY fill in what is left empty).
struct BackendConfig {
  std::string id = "fixture";
  BackendKind kind = BackendKind::fixture;
  std::string model;
  std::string path;
  std::string url;
  std::string api_path = "/v1/completions";
  std::optional<std::size_t> request_cap;

  Json to_json() const {
    Json j{{"id", id}, {"kind", to_string(kind)}, {"model", model}, {"path", path},
           {"url", url}, {"api_path", api_path}};
    j["request_cap"] = request_cap ? Json(*request_cap) : Json(nullptr);
    return j;
  }

  static BackendConfig from_json(const Json &j) {
    BackendConfig c;
    c.id = j.value("id", c.id);
    c.kind = backend_kind_from_string(j.value("kind", std::string("fixture")));
    c.model = j.value("model", c.model);
    c.path = j.value("path", c.path);
    c.url = j.value("url", c.url);
    c.api_path = j.value("api_path", c.api_path);
    if (j.contains("request_cap") && !j["request_cap"].is_null())
      c.request_cap = j["request_cap"].get<std::size_t>();
    return c;
  }
};

} // namespace gkp
