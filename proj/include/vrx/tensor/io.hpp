#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "vrx/tensor/tensor.hpp"

namespace vrx::ad {

// Tensor container: a JSON document with header fields
// {shape, dtype:"f64", encoding:"base64-le"} and the payload in "data"
// (little-endian doubles, base64). Used for checkpoints, datasets and banks.
nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

void save_tensor(const Tensor& t, const std::string& path);
Tensor load_tensor(const std::string& path);

}  // namespace vrx::ad
