#include "ssm/set_model/checkpoint.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include "ssm/errors.hpp"

namespace ssm {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'S', 'M', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("checkpoint: unexpected end of data");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t variant_code(Variant v) {
  switch (v) {
    case Variant::Attention: return 0;
    case Variant::Affinity: return 1;
    case Variant::Baseline: return 2;
  }
  return 0;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& model) {
  const ModelConfig& c = model.config;
  out.write(kMagic.data(), kMagic.size());
  for (std::uint64_t v : {std::uint64_t{c.d_in}, std::uint64_t{c.d}, std::uint64_t{c.heads}, std::uint64_t{c.d_g},
                          std::uint64_t{c.d_w}, std::uint64_t{c.layers}, std::uint64_t{c.ffn_hidden},
                          variant_code(c.variant), std::uint64_t{c.pool == PoolKind::Mean ? 1u : 0u},
                          std::uint64_t{c.untie_directions ? 1u : 0u}}) {
    put_u64(out, v);
  }
  const auto blocks = model.blocks();
  put_u64(out, blocks.size());
  for (const auto& b : blocks) {
    put_u64(out, b.name.size());
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_u64(out, b.slot->value.rows());
    put_u64(out, b.slot->value.cols());
    for (double v : b.slot->value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
  if (!out) throw FormatError("checkpoint: write to " + path.string() + " failed");
}

ModelParams read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("checkpoint: bad magic (expected SSM1)");

  std::array<std::uint64_t, 10> h{};
  for (auto& v : h) v = get_u64(in);
  ModelConfig cfg;
  cfg.d_in = h[0];
  cfg.d = h[1];
  cfg.heads = h[2];
  cfg.d_g = h[3];
  cfg.d_w = h[4];
  cfg.layers = h[5];
  cfg.ffn_hidden = h[6];
  if (h[7] > 2 || h[8] > 1 || h[9] > 1) throw FormatError("checkpoint: bad enum code in header");
  cfg.variant = h[7] == 0 ? Variant::Attention : h[7] == 1 ? Variant::Affinity : Variant::Baseline;
  cfg.pool = h[8] == 0 ? PoolKind::Attention : PoolKind::Mean;
  cfg.untie_directions = h[9] == 1;
  // Guard against absurd allocations from a corrupt header.
  if (cfg.d > 1 << 16 || cfg.d_in > 1 << 16 || cfg.ffn_hidden > 1 << 16 || cfg.layers > 1024) {
    throw FormatError("checkpoint: header dimensions out of range");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: invalid configuration: ") + e.what());
  }

  ModelParams model = init_model(cfg, 0);
  auto blocks = model.blocks();
  const std::uint64_t count = get_u64(in);
  if (count != blocks.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " blocks, configuration needs " +
                      std::to_string(blocks.size()));
  }
  for (auto& b : blocks) {
    const std::uint64_t name_len = get_u64(in);
    if (name_len > 256) throw FormatError("checkpoint: block name too long");
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!in) throw FormatError("checkpoint: unexpected end of data");
    if (name != b.name) throw FormatError("checkpoint: expected block '" + b.name + "', found '" + name + "'");
    const std::uint64_t rows = get_u64(in);
    const std::uint64_t cols = get_u64(in);
    if (rows != b.slot->value.rows() || cols != b.slot->value.cols()) {
      throw FormatError("checkpoint: block '" + name + "' has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", expected " + b.slot->value.shape_string());
    }
    for (double& v : b.slot->value.data()) v = std::bit_cast<double>(get_u64(in));
    b.slot->zero_grad();
  }
  return model;
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& model) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, model);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

}  // namespace ssm
