#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "ssm/matching/model.hpp"

namespace ssm {

// Binary parameter container, all integers and floats little-endian:
//
//   "SSM1"                                  4-byte magic
//   uint64 x 10                             d_in, d, heads, d_g, d_w, layers,
//                                           ffn_hidden, variant, pool, untied
//   uint64                                  block count
//   per block, in ModelParams::blocks() order:
//     uint64 name length, name bytes
//     uint64 rows, uint64 cols
//     float64 x rows*cols                   row-major values
//
// variant: 0 attention, 1 affinity, 2 baseline. pool: 0 attention, 1 mean.
void write_checkpoint(std::ostream& out, const ModelParams& model);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& model);

// Throws FormatError on a bad magic, truncated data, or blocks whose names
// or shapes do not match the configuration in the header.
ModelParams read_checkpoint(std::istream& in);
ModelParams load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& model);

}  // namespace ssm
