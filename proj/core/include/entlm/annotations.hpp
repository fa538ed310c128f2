#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace entlm {

// Entity annotation of one token: a document-local cluster id, or nullopt
// for tokens outside every mention.
using EntityRef = std::optional<std::int64_t>;

inline constexpr EntityRef kNullEntity = std::nullopt;

inline std::string entity_string(const EntityRef& e) { return e ? std::to_string(*e) : std::string("_"); }

}  // namespace entlm
