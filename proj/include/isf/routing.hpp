#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace isf {

inline constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Ordered list of store addresses ("host:port"). The order is canonical:
/// every client built from the same list routes every key identically.
class ShardMap {
 public:
  ShardMap() = default;
  explicit ShardMap(std::vector<std::string> addresses);

  /// Comma-separated "host:port" list, as carried by ISF_SHARD_MAP.
  static ShardMap parse(std::string_view csv);
  std::string to_string() const;

  std::size_t count() const noexcept { return addresses_.size(); }
  const std::vector<std::string>& addresses() const noexcept { return addresses_; }
  const std::string& at(std::size_t i) const { return addresses_.at(i); }

 private:
  std::vector<std::string> addresses_;
};

inline constexpr std::size_t shard_for_key(std::string_view key, std::size_t shard_count) noexcept {
  return shard_count <= 1 ? 0 : static_cast<std::size_t>(fnv1a64(key) % shard_count);
}

inline std::size_t shard_for_key(std::string_view key, const ShardMap& map) noexcept {
  return shard_for_key(key, map.count());
}

/// `base` itself if it routes to `shard`, else the first of base~1, base~2, ...
/// that does. Used to place RUN_MODEL outputs next to their inputs.
std::string key_on_shard(std::string_view base, std::size_t shard, std::size_t shard_count);

struct HostPort {
  std::string host;
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
};

/// Throws std::invalid_argument on anything but "host:port".
HostPort parse_host_port(std::string_view addr);

}  // namespace isf
