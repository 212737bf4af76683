#include "ssm/set_model/config.hpp"

#include "ssm/errors.hpp"

namespace ssm {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Attention: return "attention";
    case Variant::Affinity: return "affinity";
    case Variant::Baseline: return "baseline";
  }
  return "unknown";
}

std::string_view to_string(PoolKind p) { return p == PoolKind::Attention ? "attention" : "mean"; }

Variant parse_variant(std::string_view name) {
  if (name == "attention") return Variant::Attention;
  if (name == "affinity") return Variant::Affinity;
  if (name == "baseline") return Variant::Baseline;
  throw ConfigError("unknown variant '" + std::string(name) + "' (expected attention|affinity|baseline)");
}

PoolKind parse_pool_kind(std::string_view name) {
  if (name == "attention") return PoolKind::Attention;
  if (name == "mean") return PoolKind::Mean;
  throw ConfigError("unknown pool kind '" + std::string(name) + "' (expected attention|mean)");
}

ModelConfig ModelConfig::with_width(std::size_t d_in, std::size_t d, std::size_t heads, std::size_t layers,
                                    Variant variant) {
  ModelConfig cfg;
  cfg.d_in = d_in;
  cfg.d = d;
  cfg.heads = heads;
  cfg.d_g = heads == 0 ? 0 : d / heads;
  cfg.d_w = cfg.d_g;
  cfg.layers = layers;
  cfg.ffn_hidden = 2 * d;
  cfg.variant = variant;
  return cfg;
}

void ModelConfig::validate() const {
  if (d_in == 0 || d == 0 || heads == 0 || d_g == 0 || d_w == 0 || ffn_hidden == 0) {
    throw ConfigError("model widths and head count must all be >= 1");
  }
  if (heads * d_g != d) {
    throw ConfigError("heads * d_g must equal d (" + std::to_string(heads) + " * " + std::to_string(d_g) +
                      " != " + std::to_string(d) + ")");
  }
}

}  // namespace ssm
