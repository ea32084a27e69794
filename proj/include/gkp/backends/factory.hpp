#pragma once

#include <memory>
#include <optional>
#include <string>

#include "gkp/backends/config.hpp"
#include "gkp/backends/enumerable.hpp"
#include "gkp/backends/fixture.hpp"
#include "gkp/backends/wire.hpp"

namespace gkp {

inline std::shared_ptr<Backend> make_backend(const BackendConfig &c) {
  const BackendDescriptor d{c.id, c.kind, c.model};
  switch (c.kind) {
  case BackendKind::fixture: {
    auto backend = std::make_shared<FixtureBackend>(d);
    if (!c.path.empty()) backend->register_script(fixture_script_from_json(read_json_file(c.path)));
    return backend;
  }
  case BackendKind::enumerable: {
    if (c.path.empty()) throw Error(ErrorCode::config, "enumerable backend '" + c.id + "' needs a table path");
    auto lm = std::make_shared<const EnumerableLM>(EnumerableLM::from_json(read_json_file(c.path)));
    return std::make_shared<EnumerableBackend>(d, std::move(lm));
  }
  case BackendKind::wire: {
    WireConfig w;
    w.base_url = c.url;
    w.path = c.api_path;
    w.model = c.model;
    w.request_cap = c.request_cap;
    return std::make_shared<WireBackend>(d, std::move(w));
  }
  }
  throw Error(ErrorCode::config, "unknown backend kind");
}

} // namespace gkp
