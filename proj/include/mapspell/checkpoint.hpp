#pragma once

// Checkpoint file layout (little-endian):
//   8 bytes   magic "MSPLCKPT"
//   u32       format version
//   u64       header length N
//   N bytes   JSON header {arch, config, vocab_hash, vocab_path, params:[{name, shape}]}
//   f64...    parameter values in header order

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mapspell/error.hpp"
#include "mapspell/nn.hpp"

namespace mapspell {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'M', 'S', 'P', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string arch;  // "lstm", "encoder" or "encoder+head"
  nlohmann::ordered_json config;
  std::string vocab_hash;
  std::string vocab_path;
  ParamStore params;
};

inline void save_checkpoint(const std::string& path, const std::string& arch, const nlohmann::ordered_json& config,
                            const std::string& vocab_hash, const std::string& vocab_path, const ParamStore& params) {
  nlohmann::ordered_json header{{"arch", arch}, {"config", config}, {"vocab_hash", vocab_hash}, {"vocab_path", vocab_path}};
  header["params"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < params.size(); ++i)
    header["params"].push_back({{"name", params.names()[i]}, {"shape", params.tensors()[i].shape()}});
  const std::string h = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  const std::uint64_t len = h.size();
  out.write(kCheckpointMagic, 8);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& t : params.tensors())
    out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError(path, "write failed");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  auto read_exact = [&](void* dst, std::size_t n, const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw ParseError(path, 0, std::string("truncated checkpoint (") + what + ")");
  };
  char magic[8];
  read_exact(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw ParseError(path, 0, "not a checkpoint file");
  std::uint32_t version = 0;
  read_exact(&version, sizeof version, "version");
  if (version != kCheckpointVersion)
    throw ParseError(path, 0, "unsupported checkpoint version " + std::to_string(version));
  std::uint64_t len = 0;
  read_exact(&len, sizeof len, "header length");
  if (len > (std::uint64_t{1} << 30)) throw ParseError(path, 0, "implausible header length");
  std::string h(len, '\0');
  read_exact(h.data(), h.size(), "header");

  Checkpoint ck;
  try {
    const auto header = nlohmann::ordered_json::parse(h);
    ck.arch = header.at("arch").get<std::string>();
    ck.config = header.at("config");
    ck.vocab_hash = header.at("vocab_hash").get<std::string>();
    ck.vocab_path = header.at("vocab_path").get<std::string>();
    for (const auto& p : header.at("params")) {
      Shape shape = p.at("shape").get<Shape>();
      std::vector<double> values(numel(shape));
      read_exact(values.data(), values.size() * sizeof(double), "parameter data");
      ck.params.adopt(p.at("name").get<std::string>(), std::move(shape), std::move(values));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path, 0, std::string("bad checkpoint header: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path, 0, "trailing bytes after parameter data");
  return ck;
}

/// Throws HashMismatch when the checkpoint was built against another vocabulary.
inline void require_vocab(const Checkpoint& ck, const std::string& actual_hash) {
  if (ck.vocab_hash != actual_hash)
    throw HashMismatch("checkpoint expects vocabulary " + ck.vocab_hash + ", got " + actual_hash);
}

}  // namespace mapspell
