#include "isf/routing.hpp"

#include <charconv>
#include <stdexcept>

namespace isf {

ShardMap::ShardMap(std::vector<std::string> addresses) : addresses_(std::move(addresses)) {
  if (addresses_.empty()) throw std::invalid_argument("shard map must list at least one shard");
  for (const auto& a : addresses_) parse_host_port(a);
}

ShardMap ShardMap::parse(std::string_view csv) {
  std::vector<std::string> out;
  while (!csv.empty()) {
    const auto comma = csv.find(',');
    auto item = csv.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return ShardMap(std::move(out));
}

std::string ShardMap::to_string() const {
  std::string s;
  for (std::size_t i = 0; i < addresses_.size(); ++i) {
    if (i) s += ',';
    s += addresses_[i];
  }
  return s;
}

HostPort parse_host_port(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == addr.size()) {
    throw std::invalid_argument("expected HOST:PORT, got '" + std::string(addr) + "'");
  }
  auto port_str = addr.substr(colon + 1);
  unsigned port = 0;
  auto [ptr, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
  if (ec != std::errc{} || ptr != port_str.data() + port_str.size() || port > 65535) {
    throw std::invalid_argument("bad port in '" + std::string(addr) + "'");
  }
  return HostPort{std::string(addr.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

}  // namespace isf

namespace isf {

std::string key_on_shard(std::string_view base, std::size_t shard, std::size_t shard_count) {
  if (shard_count <= 1 || shard_for_key(base, shard_count) == shard) return std::string(base);
  for (std::uint64_t i = 1;; ++i) {
    std::string k = std::string(base) + "~" + std::to_string(i);
    if (shard_for_key(k, shard_count) == shard) return k;
  }
}

}  // namespace isf
