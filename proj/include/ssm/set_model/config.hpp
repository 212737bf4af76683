#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ssm {

enum class Variant { Attention, Affinity, Baseline };
enum class PoolKind { Attention, Mean };

std::string_view to_string(Variant v);
std::string_view to_string(PoolKind p);
// Throw ConfigError for unknown names.
Variant parse_variant(std::string_view name);
PoolKind parse_pool_kind(std::string_view name);

inline constexpr double kLeakySlope = 0.01;

/// Shapes and architecture choices of a matching model.
struct ModelConfig {
  std::size_t d_in = 16;       // raw item width
  std::size_t d = 32;          // model width
  std::size_t heads = 4;       // h, shared by the cross-set g and by mCS
  std::size_t d_g = 8;         // per-head width of g, h * d_g == d
  std::size_t d_w = 8;         // CS subspace width
  std::size_t layers = 2;      // L encoder / cross-set pairs
  std::size_t ffn_hidden = 64;
  Variant variant = Variant::Attention;
  PoolKind pool = PoolKind::Attention;  // baseline only
  // Mutation knob for the property suite: gives the second direction of every
  // cross-set layer its own weights, which breaks the symmetry guarantee.
  bool untie_directions = false;

  // Sets d_g = d_w = d / heads.
  static ModelConfig with_width(std::size_t d_in, std::size_t d, std::size_t heads, std::size_t layers,
                                Variant variant);

  // Throws ConfigError describing the first violated constraint.
  void validate() const;
};

}  // namespace ssm
