#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "retag/errors.hpp"
#include "retag/model/params.hpp"
#include "retag/tables/vocab.hpp"

// Container: "RTAG1" | u64 LE header length | JSON header | raw LE payload.

namespace retag {

inline constexpr char kCheckpointMagic[5] = {'R', 'T', 'A', 'G', '1'};
inline constexpr int kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  ModelParams<T> params;
  Vocab vocab;
  nlohmann::json train;  // training config digest, opaque to the loader
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>) return "f32";
  else return "f64";
}

template <typename U>
U byteswap_if_big(U v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(U)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<U>(bytes);
  }
  return v;
}

template <typename T>
void append_le(std::string& out, T value) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const Bits b = byteswap_if_big(std::bit_cast<Bits>(value));
  char buf[sizeof(Bits)];
  std::memcpy(buf, &b, sizeof(Bits));
  out.append(buf, sizeof(Bits));
}

template <typename T>
T read_le(const char* p) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  Bits b;
  std::memcpy(&b, p, sizeof(Bits));
  return std::bit_cast<T>(byteswap_if_big(b));
}

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

/// Digest stored in the checkpoint header for a training configuration.
inline nlohmann::json train_digest(const nlohmann::json& train_config) {
  return {{"config", train_config}, {"fnv1a", detail::fnv1a_hex(train_config.dump())}};
}

template <typename T>
std::string serialize_checkpoint(const ModelParams<T>& p, const Vocab& vocab, const nlohmann::json& train = {}) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (const auto& spec : param_manifest(p.config)) {
    const auto& t = p.at(spec.name);
    if (t.shape() != spec.shape)
      throw DimensionError("checkpoint: " + spec.name + " has shape " + shape_str(t.shape()) + ", expected " +
                           shape_str(spec.shape));
    const std::size_t offset = payload.size();
    for (T v : t.data()) detail::append_le(payload, v);
    manifest.push_back({{"name", spec.name},
                        {"dtype", detail::dtype_name<T>()},
                        {"shape", spec.shape},
                        {"byte_offset", offset},
                        {"byte_length", payload.size() - offset}});
  }
  const nlohmann::json header{{"format_version", kCheckpointVersion},
                              {"model", to_json(p.config)},
                              {"train", train},
                              {"vocab", vocab.tokens()},
                              {"manifest", manifest}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::append_le(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

/// Parses a whole checkpoint image. Every check runs before any tensor is
/// built, so a failure never yields a partially loaded model.
template <typename T>
Checkpoint<T> parse_checkpoint(const std::string& bytes) {
  constexpr std::size_t prefix = sizeof kCheckpointMagic + 8;
  if (bytes.size() < prefix || std::memcmp(bytes.data(), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw FormatError("checkpoint: bad magic");
  const auto header_len = detail::read_le<std::uint64_t>(bytes.data() + sizeof kCheckpointMagic);
  if (header_len > bytes.size() - prefix) throw CorruptionError("checkpoint: header length exceeds file size");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + prefix, bytes.begin() + static_cast<std::ptrdiff_t>(prefix + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: unreadable header: ") + e.what());
  }
  const std::size_t payload_start = prefix + header_len;
  const std::size_t payload_size = bytes.size() - payload_start;

  Checkpoint<T> ck;
  std::vector<std::pair<ParamSpec, std::size_t>> plan;
  try {
    if (header.at("format_version").get<int>() != kCheckpointVersion)
      throw FormatError("checkpoint: unsupported format version " + header.at("format_version").dump());
    ck.params.config = model_config_from_json(header.at("model"));
    ck.params.config.validate();
    ck.train = header.value("train", nlohmann::json());
    ck.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    if (static_cast<int>(ck.vocab.size()) != ck.params.config.vocab_size)
      throw CorruptionError("checkpoint: vocabulary size disagrees with the model config");

    std::map<std::string, ParamSpec> expected;
    for (auto& s : param_manifest(ck.params.config)) expected.emplace(s.name, s);
    std::set<std::string> seen;
    std::size_t prev_end = 0;
    for (const auto& e : header.at("manifest")) {
      const auto name = e.at("name").get<std::string>();
      auto it = expected.find(name);
      if (it == expected.end()) throw CorruptionError("checkpoint: unexpected tensor '" + name + "'");
      if (!seen.insert(name).second) throw CorruptionError("checkpoint: tensor '" + name + "' listed twice");
      if (e.at("dtype").get<std::string>() != detail::dtype_name<T>())
        throw FormatError("checkpoint: tensor '" + name + "' has dtype " + e.at("dtype").get<std::string>() +
                          ", expected " + detail::dtype_name<T>());
      if (e.at("shape").get<Shape>() != it->second.shape)
        throw CorruptionError("checkpoint: tensor '" + name + "' has the wrong shape");
      const auto off = e.at("byte_offset").get<std::uint64_t>();
      const auto len = e.at("byte_length").get<std::uint64_t>();
      if (len != shape_numel(it->second.shape) * sizeof(T))
        throw CorruptionError("checkpoint: tensor '" + name + "' has the wrong byte length");
      if (off < prev_end) throw CorruptionError("checkpoint: manifest regions overlap or are out of order");
      if (off > payload_size || len > payload_size - off)
        throw CorruptionError("checkpoint: tensor '" + name + "' extends past the end of the file");
      prev_end = off + len;
      plan.emplace_back(it->second, payload_start + off);
    }
    if (seen.size() != expected.size()) throw CorruptionError("checkpoint: manifest is missing tensors");
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint: invalid model config: ") + e.what());
  }

  for (const auto& [spec, start] : plan) {
    const std::size_t n = shape_numel(spec.shape);
    std::vector<T> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = detail::read_le<T>(bytes.data() + start + i * sizeof(T));
    ck.params.tensors.emplace(spec.name, Tensor<T>(spec.shape, std::move(v), true));
  }
  return ck;
}

template <typename T>
void save_checkpoint(const ModelParams<T>& p, const Vocab& vocab, const std::string& path,
                     const nlohmann::json& train = {}) {
  const auto bytes = serialize_checkpoint(p, vocab, train);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

template <typename T = float>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint<T>(bytes);
}

}  // namespace retag
