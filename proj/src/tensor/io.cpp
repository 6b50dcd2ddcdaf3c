#include "vrx/tensor/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace vrx::ad {

using nlohmann::json;

namespace {

std::vector<std::uint8_t> doubles_to_le(const std::vector<double>& values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto u = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>((u >> (8 * b)) & 0xff);
  }
  return bytes;
}

std::vector<double> le_to_doubles(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() % 8 != 0) throw SchemaError("tensor container: payload is not a whole number of f64 values");
  std::vector<double> values(bytes.size() / 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 7; b >= 0; --b) u = (u << 8) | bytes[i * 8 + static_cast<std::size_t>(b)];
    values[i] = std::bit_cast<double>(u);
  }
  return values;
}

}  // namespace

json tensor_to_json(const Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["dtype"] = "f64";
  j["encoding"] = "base64-le";
  const auto bytes = doubles_to_le(t.data());
  j["data"] = base64_encode(bytes.data(), bytes.size());
  return j;
}

Tensor tensor_from_json(const json& j) {
  for (const char* field : {"shape", "dtype", "encoding", "data"})
    if (!j.contains(field)) throw SchemaError(std::string("tensor container: missing field '") + field + "'");
  if (j["dtype"] != "f64") throw SchemaError("tensor container: unsupported dtype " + j["dtype"].dump());
  if (j["encoding"] != "base64-le")
    throw SchemaError("tensor container: unsupported encoding " + j["encoding"].dump());
  Shape shape = j["shape"].get<Shape>();
  auto bytes = base64_decode(j["data"].get<std::string>());
  auto values = le_to_doubles(bytes);
  if (values.size() != shape_numel(shape))
    throw SchemaError("tensor container: shape " + shape_str(shape) + " wants " +
                      std::to_string(shape_numel(shape)) + " values, payload has " +
                      std::to_string(values.size()));
  return Tensor::from_data(std::move(shape), std::move(values));
}

void save_tensor(const Tensor& t, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_tensor: cannot open " + path);
  out << tensor_to_json(t).dump();
  if (!out) throw Error("save_tensor: write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_tensor: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw SchemaError("load_tensor: " + path + ": " + e.what());
  }
  return tensor_from_json(j);
}

}  // namespace vrx::ad
