#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svsl/error.hpp"
#include "svsl/model.hpp"

namespace svsl {

// Parameter snapshot on disk: a flat binary file
//   u32 k | u32 n_0 .. n_k | W_1 b_1 .. W_k b_k as raw f64
// with every field little-endian, plus a JSON sidecar naming the shapes and
// activations. Round-trips are bit-exact.
namespace detail {

inline void put_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64_le(std::ostream& out, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t get_u32_le(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw ParseError(path + ": truncated at byte offset " + std::to_string(offset));
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f64_le(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw ParseError(path + ": truncated at byte offset " + std::to_string(offset));
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}

}  // namespace detail

inline void save_params(const NetworkParams& params, const std::string& bin_path,
                        const std::string& json_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError(bin_path + ": cannot open for writing");
  const auto widths = params.widths();
  detail::put_u32_le(bin, static_cast<std::uint32_t>(params.layer_count()));
  for (std::size_t w : widths) detail::put_u32_le(bin, static_cast<std::uint32_t>(w));
  for (std::size_t j = 0; j < params.layer_count(); ++j) {
    for (double v : params.weights[j].data()) detail::put_f64_le(bin, v);
    for (double v : params.biases[j].data()) detail::put_f64_le(bin, v);
  }
  bin.close();
  if (!bin) throw ParseError(bin_path + ": write failed");

  nlohmann::json sidecar;
  sidecar["format"] = "svsl-params-v1";
  sidecar["layer_count"] = params.layer_count();
  sidecar["widths"] = widths;
  std::vector<std::string> acts;
  for (const auto& l : params.layers) acts.push_back(to_string(l.activation));
  sidecar["activations"] = acts;
  sidecar["dtype"] = "f64";
  sidecar["byte_order"] = "little";
  std::ofstream js(json_path);
  if (!js) throw ParseError(json_path + ": cannot open for writing");
  js << sidecar.dump(2) << "\n";
}

inline NetworkParams load_params(const std::string& bin_path, const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw ParseError(json_path + ": cannot open");
  nlohmann::json sidecar;
  try {
    js >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(json_path + ": " + e.what());
  }
  if (sidecar.value("format", "") != "svsl-params-v1")
    throw ParseError(json_path + ": unknown snapshot format");

  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ParseError(bin_path + ": cannot open");
  std::size_t offset = 0;
  const std::uint32_t k = detail::get_u32_le(bin, bin_path, offset);
  offset += 4;
  if (k == 0) throw ParseError(bin_path + ": zero layer count in header");
  std::vector<std::size_t> widths(k + 1);
  for (auto& w : widths) {
    w = detail::get_u32_le(bin, bin_path, offset);
    offset += 4;
  }

  const auto sidecar_widths = sidecar.at("widths").get<std::vector<std::size_t>>();
  if (sidecar_widths != widths)
    throw ParseError(json_path + ": sidecar widths disagree with binary header");
  const auto acts = sidecar.at("activations").get<std::vector<std::string>>();
  if (acts.size() != k)
    throw ParseError(json_path + ": expected " + std::to_string(k) + " activations");

  NetworkParams params;
  params.input_dim = widths[0];
  for (std::size_t j = 0; j < k; ++j)
    params.layers.push_back({widths[j + 1], activation_from_string(acts[j])});
  for (std::size_t j = 0; j < k; ++j) {
    Tensor2D w(widths[j], widths[j + 1]);
    for (double& v : w.data()) {
      v = detail::get_f64_le(bin, bin_path, offset);
      offset += 8;
    }
    Tensor2D b(1, widths[j + 1]);
    for (double& v : b.data()) {
      v = detail::get_f64_le(bin, bin_path, offset);
      offset += 8;
    }
    params.weights.push_back(std::move(w));
    params.biases.push_back(std::move(b));
  }
  return params;
}

}  // namespace svsl
