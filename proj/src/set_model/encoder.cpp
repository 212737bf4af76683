#include "ssm/set_model/encoder.hpp"

#include <cmath>
#include <vector>

#include "ssm/errors.hpp"
#include "ssm/numeric/ops.hpp"

namespace ssm {

GradSlot init_weight(SeededRng& rng, std::size_t rows, std::size_t cols) {
  return GradSlot(seeded_gaussian(rng, rows, cols, 0.0, 1.0 / std::sqrt(static_cast<double>(cols))));
}

FfnParams init_ffn(SeededRng& rng, std::size_t d, std::size_t hidden) {
  FfnParams p;
  p.w1 = init_weight(rng, hidden, d);
  p.b1 = GradSlot(Matrix(1, hidden));
  p.w2 = init_weight(rng, d, hidden);
  p.b2 = GradSlot(Matrix(1, d));
  return p;
}

EncoderParams init_encoder(SeededRng& rng, const ModelConfig& cfg) {
  const std::size_t inner = cfg.heads * cfg.d_g;
  EncoderParams p;
  p.query = init_weight(rng, inner, cfg.d);
  p.key = init_weight(rng, inner, cfg.d);
  p.value = init_weight(rng, inner, cfg.d);
  p.merge = init_weight(rng, cfg.d, inner);
  p.ffn = init_ffn(rng, cfg.d, cfg.ffn_hidden);
  return p;
}

void require_width(const Matrix& x, std::size_t cols, const char* op) {
  if (x.cols() != cols) {
    throw DimensionError(std::string(op) + ": expected item width " + std::to_string(cols) + ", got " +
                         x.shape_string());
  }
}

Var input_project(Var raw, const GradSlot& w_in) {
  require_width(raw.value(), w_in.value.cols(), "input_project");
  return ad::matmul_nt(raw, raw.tape().param(w_in));
}

Var ffn(Var x, const FfnParams& p) {
  require_width(x.value(), p.w1.value.cols(), "ffn");
  Tape& t = x.tape();
  Var hidden = ad::leaky_relu(ad::add_row(ad::matmul_nt(x, t.param(p.w1)), t.param(p.b1)), kLeakySlope);
  return ad::add_row(ad::matmul_nt(hidden, t.param(p.w2)), t.param(p.b2));
}

Var encoder(Var x, const EncoderParams& p, std::size_t heads) {
  const std::size_t d = p.merge.value.rows();
  require_width(x.value(), d, "encoder");
  Tape& t = x.tape();
  const std::size_t inner = p.query.value.rows();
  if (heads == 0 || inner % heads != 0) throw ConfigError("encoder: head count does not divide projection width");
  const std::size_t dg = inner / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dg));

  Var q = ad::matmul_nt(x, t.param(p.query));
  Var k = ad::matmul_nt(x, t.param(p.key));
  Var v = ad::matmul_nt(x, t.param(p.value));
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    Var qj = ad::slice_cols(q, j * dg, dg);
    Var kj = ad::slice_cols(k, j * dg, dg);
    Var vj = ad::slice_cols(v, j * dg, dg);
    Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qj, kj), inv_sqrt));
    head_out.push_back(ad::matmul(weights, vj));
  }
  Var merged = ad::matmul_nt(heads == 1 ? head_out.front() : ad::concat_cols(head_out), t.param(p.merge));
  Var z = ad::add(x, merged);
  return ad::add(z, ffn(z, p.ffn));
}

FeatureSet input_project(const FeatureSet& raw, const GradSlot& w_in) {
  Tape t(false);
  Var out = input_project(t.constant(raw.items()), w_in);
  return FeatureSet(out.value(), raw.labels(), raw.set_id());
}

FeatureSet ffn(const FeatureSet& x, const FfnParams& p) {
  Tape t(false);
  Var out = ffn(t.constant(x.items()), p);
  return FeatureSet(out.value(), x.labels(), x.set_id());
}

FeatureSet encoder(const FeatureSet& x, const EncoderParams& p, std::size_t heads) {
  Tape t(false);
  Var out = encoder(t.constant(x.items()), p, heads);
  return FeatureSet(out.value(), x.labels(), x.set_id());
}

}  // namespace ssm
