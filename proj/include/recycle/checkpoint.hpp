#pragma once

// Parameter checkpoints: a JSON document with a format version, an optional
// embedded configuration block and, per parameter, its name, shape, dtype and
// the little-endian bytes of its values in base64.

#include <bit>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/errors.hpp"
#include "recycle/tensor.hpp"

namespace recycle {

inline constexpr int kCheckpointFormatVersion = 1;

namespace detail {

inline constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    std::uint32_t chunk = std::uint32_t(bytes[i]) << 16;
    if (i + 1 < bytes.size()) chunk |= std::uint32_t(bytes[i + 1]) << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out.push_back(kBase64Alphabet[(chunk >> 18) & 63]);
    out.push_back(kBase64Alphabet[(chunk >> 12) & 63]);
    out.push_back(i + 1 < bytes.size() ? kBase64Alphabet[(chunk >> 6) & 63] : '=');
    out.push_back(i + 2 < bytes.size() ? kBase64Alphabet[chunk & 63] : '=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw InputError("checkpoint: malformed base64 payload");
  auto decode_char = [](char c) -> std::uint32_t {
    const auto pos = kBase64Alphabet.find(c);
    if (pos == std::string_view::npos) throw InputError("checkpoint: invalid base64 character");
    return static_cast<std::uint32_t>(pos);
  };
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t chunk = decode_char(text[i]) << 18 | decode_char(text[i + 1]) << 12;
    const bool has2 = text[i + 2] != '=', has3 = text[i + 3] != '=';
    if (has2) chunk |= decode_char(text[i + 2]) << 6;
    if (has3) chunk |= decode_char(text[i + 3]);
    out.push_back(static_cast<std::uint8_t>(chunk >> 16));
    if (has2) out.push_back(static_cast<std::uint8_t>(chunk >> 8));
    if (has3) out.push_back(static_cast<std::uint8_t>(chunk));
  }
  return out;
}

template <std::floating_point T>
std::vector<std::uint8_t> to_little_endian(std::span<const T> values) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * sizeof(T));
  for (T v : values) {
    const Bits bits = std::bit_cast<Bits>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
  }
  return out;
}

template <std::floating_point T>
std::vector<T> from_little_endian(const std::vector<std::uint8_t>& bytes) {
  using Bits = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (bytes.size() % sizeof(T) != 0) throw InputError("checkpoint: payload size is not a multiple of dtype");
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) bits |= Bits(bytes[i * sizeof(T) + b]) << (8 * b);
    out[i] = std::bit_cast<T>(bits);
  }
  return out;
}

template <std::floating_point T>
constexpr std::string_view dtype_name() {
  return sizeof(T) == 8 ? "float64" : "float32";
}

}  // namespace detail

template <std::floating_point T>
using NamedTensors = std::vector<std::pair<std::string, autograd::Tensor<T>>>;

template <std::floating_point T>
nlohmann::json checkpoint_json(const NamedTensors<T>& params, const nlohmann::json& config) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointFormatVersion;
  doc["dtype"] = detail::dtype_name<T>();
  doc["config"] = config;
  auto& list = doc["parameters"] = nlohmann::json::array();
  for (const auto& [name, tensor] : params) {
    list.push_back({{"name", name},
                    {"shape", tensor.shape()},
                    {"data", detail::base64_encode(detail::to_little_endian<T>(tensor.values()))}});
  }
  return doc;
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const NamedTensors<T>& params,
                     const nlohmann::json& config) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << checkpoint_json(params, config).dump(1) << '\n';
}

inline nlohmann::json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
  if (doc.value("format_version", 0) != kCheckpointFormatVersion) {
    throw InputError("checkpoint " + path.string() + ": unsupported format_version");
  }
  return doc;
}

// Copies stored values into `params`, matching by name and verifying shapes.
template <std::floating_point T>
void restore_parameters(const nlohmann::json& doc, NamedTensors<T>& params) {
  if (doc.at("dtype").get<std::string>() != detail::dtype_name<T>()) {
    throw InputError("checkpoint dtype " + doc.at("dtype").get<std::string>() + " does not match " +
                     std::string(detail::dtype_name<T>()));
  }
  const auto& stored = doc.at("parameters");
  if (stored.size() != params.size()) {
    throw InputError("checkpoint holds " + std::to_string(stored.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    const auto& entry = stored[i];
    if (entry.at("name").get<std::string>() != name) {
      throw InputError("checkpoint parameter " + std::to_string(i) + " is '" +
                       entry.at("name").get<std::string>() + "', expected '" + name + "'");
    }
    if (entry.at("shape").get<autograd::Shape>() != tensor.shape()) {
      throw InputError("checkpoint parameter '" + name + "' has shape " +
                       autograd::shape_string(entry.at("shape").get<autograd::Shape>()) + ", model expects " +
                       autograd::shape_string(tensor.shape()));
    }
    const auto values = detail::from_little_endian<T>(detail::base64_decode(entry.at("data").get<std::string>()));
    if (values.size() != tensor.numel()) throw InputError("checkpoint parameter '" + name + "' is truncated");
    std::copy(values.begin(), values.end(), tensor.mutable_values().begin());
  }
}

}  // namespace recycle
