// SPDX-License-Identifier: Apache-2.0
#include "ddpt/checkpoint.hpp"

#include <openssl/sha.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "ddpt/error.hpp"

namespace ddpt {

namespace {

constexpr std::string_view kMagic = "DDPTCKPT";
constexpr std::size_t kDigestBytes = SHA256_DIGEST_LENGTH;

void put_le(std::string& out, std::uint64_t value, std::size_t bytes) {
  for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view in, std::size_t offset, std::size_t bytes) {
  std::uint64_t value = 0;
  for (std::size_t i = 0; i < bytes; ++i) {
    value |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

std::array<unsigned char, kDigestBytes> digest(std::string_view bytes) {
  std::array<unsigned char, kDigestBytes> out{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), out.data());
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest(bytes)) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xf]);
  }
  return out;
}

std::string encode_checkpoint(const nlohmann::json& config, const ParamSet& params) {
  nlohmann::json tensors = nlohmann::json::array();
  std::string blobs;
  for (const auto& p : params) {
    const std::size_t nbytes = p.value.size() * sizeof(Scalar);
    tensors.push_back({{"name", p.name},
                       {"shape", p.value.shape()},
                       {"scalar_bytes", sizeof(Scalar)},
                       {"frozen", p.frozen},
                       {"offset", blobs.size()},
                       {"nbytes", nbytes}});
    for (Scalar v : p.value.data()) {
      using Bits = std::conditional_t<sizeof(Scalar) == 8, std::uint64_t, std::uint32_t>;
      put_le(blobs, std::bit_cast<Bits>(v), sizeof(Scalar));
    }
  }
  const nlohmann::json header{{"config", config}, {"tensors", tensors}};
  const std::string header_text = header.dump();

  std::string out(kMagic);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_le(out, header_text.size(), 8);
  out += header_text;
  out += blobs;
  const auto sum = digest(out);
  out.append(reinterpret_cast<const char*>(sum.data()), sum.size());
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const std::size_t prefix = kMagic.size() + 1 + 8;
  if (bytes.size() < prefix + kDigestBytes) throw CorruptionError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (bytes.substr(0, kMagic.size()) != kMagic) throw CorruptionError("checkpoint magic mismatch");
  const auto version = static_cast<std::uint8_t>(bytes[kMagic.size()]);
  if (version != kCheckpointVersion) {
    throw CompatibilityError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - kDigestBytes);
  const auto expected = digest(body);
  if (std::memcmp(expected.data(), bytes.data() + body.size(), kDigestBytes) != 0) {
    throw CorruptionError("checkpoint checksum mismatch");
  }
  const std::uint64_t header_len = get_le(bytes, kMagic.size() + 1, 8);
  if (header_len > body.size() - prefix) throw CorruptionError("checkpoint header length out of range");

  Checkpoint ckpt;
  const std::string_view blobs = body.substr(prefix + header_len);
  try {
    const auto header = nlohmann::json::parse(body.substr(prefix, header_len));
    ckpt.config = header.at("config");
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<Shape>();
      const auto width = t.at("scalar_bytes").get<std::size_t>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("nbytes").get<std::size_t>();
      if (width != 4 && width != 8) throw CompatibilityError("unsupported scalar width " + std::to_string(width));
      if (offset + nbytes > blobs.size()) throw CorruptionError("tensor blob outside checkpoint body");
      Tensor value(shape);
      if (value.size() * width != nbytes) throw CorruptionError("tensor blob size does not match its shape");
      for (std::size_t i = 0; i < value.size(); ++i) {
        const std::uint64_t raw = get_le(blobs, offset + i * width, width);
        value[i] = width == 8 ? static_cast<Scalar>(std::bit_cast<double>(raw))
                              : static_cast<Scalar>(std::bit_cast<float>(static_cast<std::uint32_t>(raw)));
      }
      ckpt.params.add(t.at("name").get<std::string>(), std::move(value));
      ckpt.params.at(ckpt.params.size() - 1).frozen = t.at("frozen").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("checkpoint header malformed: ") + e.what());
  } catch (const DimensionError& e) {
    throw CorruptionError(std::string("checkpoint tensor malformed: ") + e.what());
  }
  return ckpt;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestionError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IngestionError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config, const ParamSet& params) {
  write_file(path, encode_checkpoint(config, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

std::string params_digest(const ParamSet& params) {
  return sha256_hex(encode_checkpoint(nlohmann::json::object(), params));
}

}  // namespace ddpt
