#ifndef LOSSBENCH_CHECKPOINT_HPP
#define LOSSBENCH_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lossbench/encoders.hpp"

namespace lossbench {

/// Flat named-tensor archive: a length-prefixed JSON index followed by each
/// tensor's row-major doubles, little-endian, in index order.
inline constexpr const char* kCheckpointVersion = "lossbench-ckpt-v1";

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

inline void write_doubles_le(std::ostream& out, const Tensor& t) {
  for (double d : t.data) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64_le(out, bits);
  }
}

inline void read_doubles_le(std::istream& in, Tensor& t) {
  for (double& d : t.data) {
    const std::uint64_t bits = read_u64_le(in);
    std::memcpy(&d, &bits, 8);
  }
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParameterSet& ps) {
  nlohmann::json index;
  index["version"] = kCheckpointVersion;
  index["init_seed"] = ps.init_seed;
  index["tensors"] = nlohmann::json::array();
  for (const auto& [name, t] : ps.tensors)
    index["tensors"].push_back({{"name", name}, {"rows", t.rows}, {"cols", t.cols}});
  const std::string text = index.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  detail::write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : ps.tensors) detail::write_doubles_le(out, t);
  if (!out) throw std::runtime_error("checkpoint: write failed " + path.string());
}

inline ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  const std::uint64_t len = detail::read_u64_le(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated index");
  const nlohmann::json index = nlohmann::json::parse(text);
  if (index.at("version").get<std::string>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version");
  ParameterSet ps;
  ps.init_seed = index.at("init_seed").get<std::uint64_t>();
  for (const auto& entry : index.at("tensors")) {
    Tensor t(entry.at("rows").get<std::size_t>(), entry.at("cols").get<std::size_t>());
    detail::read_doubles_le(in, t);
    ps.tensors.emplace(entry.at("name").get<std::string>(), std::move(t));
  }
  return ps;
}

}  // namespace lossbench

#endif  // LOSSBENCH_CHECKPOINT_HPP
