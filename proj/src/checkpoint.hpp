#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"

namespace progtune {

// Binary checkpoint layout (all integers little-endian):
//   magic "PGTN" | version u32 | tensor count u32
//   per tensor: name length u32 | name bytes | tag code u32 | rank u32 |
//               dims u64 each | payload f64 each
// Round-trips are bit-exact.
constexpr uint32_t kCheckpointVersion = 1;

uint32_t encode_tag(const ParameterTag& tag);
ParameterTag decode_tag(uint32_t code);

struct CheckpointTensor {
    std::string name;
    ParameterTag tag;
    Shape shape;
    std::vector<double> data;
};

std::vector<uint8_t> serialize_checkpoint(const Model& model);
void save_checkpoint(const Model& model, const std::string& path);

// Raw read; validates magic/version/structure and fails without side effects.
std::vector<CheckpointTensor> read_checkpoint(const std::string& path);

// Loads into a model of identical structure (same registry names and
// shapes). Validation happens before any parameter is touched, so a corrupt
// file never leaves a partially loaded model.
void load_checkpoint(const std::string& path, Model& model);

}  // namespace progtune
