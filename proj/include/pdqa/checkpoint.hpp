#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pdqa/model.hpp"

namespace pdqa {

// Binary checkpoint: magic "PDQA", a format version, the model
// configuration, the prompt strings and mode flags, then a named tensor
// table (name, rank, dims, little-endian float64 payload) covering the
// backbone and the prompt bank. Loading a saved model is bit-identical;
// unknown versions are rejected.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// Raw little-endian serialization of a named tensor list; the freeze check
// compares these bytes before and after training.
std::vector<std::uint8_t> serialize_tensors(
    const std::vector<std::pair<std::string, Tensor>>& tensors);

}  // namespace pdqa
