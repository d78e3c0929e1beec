#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsp {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head;
  RelationId rel;
  EntityId tail;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

// Packs a triple into one word for hash-set membership. Entity ids must fit
// in 24 bits and relation ids in 16, which covers every dataset this toolkit
// targets (tens of thousands of entities, hundreds of relations).
inline std::uint64_t pack_triple(const Triple& t) {
  return (static_cast<std::uint64_t>(t.head) << 40) |
         (static_cast<std::uint64_t>(t.rel) << 24) |
         static_cast<std::uint64_t>(t.tail);
}

inline std::uint64_t pack_pair(EntityId h, EntityId t) {
  return (static_cast<std::uint64_t>(h) << 32) | static_cast<std::uint64_t>(t);
}

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void concat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  concat_into(os, rest...);
}
}  // namespace detail

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  detail::concat_into(os, parts...);
  return os.str();
}

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
  throw Error(concat(parts...));
}

}  // namespace tsp
