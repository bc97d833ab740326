// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aems/encoder.hpp"
#include "aems/error.hpp"
#include "aems/rubric.hpp"
#include "aems/train_config.hpp"
#include "aems/vocab.hpp"

// File layout:
//   8 bytes   magic "AEMSCKPT"
//   8 bytes   header length H, little-endian uint64
//   H bytes   JSON header: format_version, rubric, vocab, config, step,
//             tensors [{name, shape, offset, count}], payload_bytes
//   payload   little-endian IEEE-754 doubles, tensors back to back
//   8 bytes   FNV-1a 64 checksum of everything above

namespace aems {

inline constexpr const char* kCheckpointVersion = "1.0";
inline constexpr int kCheckpointMajor = 1;

struct Checkpoint {
  ModelParams params;
  Vocab vocab;
  RubricSpec rubric;
  TrainConfig config;
  std::uint64_t step = 0;
  std::string format_version = kCheckpointVersion;
};

namespace ckpt_detail {

inline constexpr char kMagic[8] = {'A', 'E', 'M', 'S', 'C', 'K', 'P', 'T'};

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

}  // namespace ckpt_detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  using nlohmann::json;
  std::string payload;
  json tensors = json::array();
  for (std::size_t i = 0; i < ck.params.count(); ++i) {
    const Tensor& t = ck.params.tensors()[i];
    tensors.push_back({{"name", ck.params.names()[i]},
                       {"shape", t.shape()},
                       {"offset", payload.size()},
                       {"count", t.size()}});
    for (double v : t.values()) ckpt_detail::put_u64(payload, std::bit_cast<std::uint64_t>(v));
  }
  json header = {{"format_version", ck.format_version},
                 {"rubric", {{"name", ck.rubric.name}, {"dimensions", ck.rubric.dimensions}, {"bands", ck.rubric.bands}}},
                 {"vocab", ck.vocab.tokens()},
                 {"encoder", to_json(ck.params.config())},
                 {"config", to_json(ck.config)},
                 {"step", ck.step},
                 {"tensors", tensors},
                 {"payload_bytes", payload.size()}};
  const std::string h = header.dump();
  std::string out(ckpt_detail::kMagic, 8);
  ckpt_detail::put_u64(out, h.size());
  out += h;
  out += payload;
  // Trailing checksum covers the header as well as the payload.
  ckpt_detail::put_u64(out, ckpt_detail::fnv1a(out));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  using nlohmann::json;
  if (bytes.size() < 24 || bytes.substr(0, 8) != std::string_view(ckpt_detail::kMagic, 8))
    throw CorruptionError("not a checkpoint file (bad magic)");
  const std::uint64_t stored = ckpt_detail::get_u64(bytes.substr(bytes.size() - 8));
  bytes.remove_suffix(8);
  if (stored != ckpt_detail::fnv1a(bytes))
    throw CorruptionError("checkpoint checksum mismatch (file is truncated or damaged)");
  const std::uint64_t hlen = ckpt_detail::get_u64(bytes.substr(8, 8));
  if (hlen > bytes.size() - 16) throw CorruptionError("checkpoint header is truncated");
  json header;
  try {
    header = json::parse(bytes.substr(16, hlen));
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  try {
    Checkpoint ck;
    ck.format_version = header.at("format_version").get<std::string>();
    const int major = std::stoi(ck.format_version.substr(0, ck.format_version.find('.')));
    if (major != kCheckpointMajor)
      throw UnsupportedVersionError("checkpoint format version " + ck.format_version + " is not supported (expected " +
                                    std::to_string(kCheckpointMajor) + ".x)");
    const std::string_view payload = bytes.substr(16 + hlen);
    const auto expected_bytes = header.at("payload_bytes").get<std::uint64_t>();
    if (payload.size() != expected_bytes)
      throw CorruptionError("checkpoint payload has " + std::to_string(payload.size()) + " bytes, header declares " +
                            std::to_string(expected_bytes));

    const json& r = header.at("rubric");
    ck.rubric = {r.at("name").get<std::string>(), r.at("dimensions").get<std::vector<std::string>>(),
                 r.at("bands").get<std::vector<double>>()};
    ck.rubric.validate();
    ck.vocab = Vocab(header.at("vocab").get<std::vector<std::string>>());
    ck.config = train_config_from_json(header.at("config"));
    ck.step = header.at("step").get<std::uint64_t>();
    const EncoderConfig enc = encoder_config_from_json(header.at("encoder"));
    std::vector<std::string> names;
    std::vector<Tensor> tensors;
    for (const json& t : header.at("tensors")) {
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto count = t.at("count").get<std::uint64_t>();
      if (offset + 8 * count > payload.size()) throw CorruptionError("tensor extends past the payload");
      std::vector<double> data(count);
      for (std::uint64_t i = 0; i < count; ++i)
        data[i] = std::bit_cast<double>(ckpt_detail::get_u64(payload.substr(offset + 8 * i, 8)));
      names.push_back(t.at("name").get<std::string>());
      tensors.emplace_back(t.at("shape").get<Shape>(), std::move(data));
    }
    ck.params = ModelParams::from_parts(enc, ck.rubric, std::move(names), std::move(tensors));
    return ck;
  } catch (const json::exception& e) {
    throw CorruptionError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("checkpoint header is inconsistent: ") + e.what());
  } catch (const DimensionError& e) {
    throw CorruptionError(std::string("checkpoint tensor is inconsistent: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace aems
