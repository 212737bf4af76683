#include "ssm/cross_set/cross_set.hpp"

#include <cmath>

#include "ssm/errors.hpp"
#include "ssm/numeric/ops.hpp"

namespace ssm {

namespace {

Matrix row_block(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(begin + i, j);
  return out;
}

// relu(<a_n, b_m> / sqrt(width)) for all pairs, scaled by 1/M.
Var pair_weights(Var a, Var b) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a.cols()));
  const double inv_m = 1.0 / static_cast<double>(b.rows());
  return ad::scale(ad::relu(ad::scale(ad::matmul_nt(a, b), inv_sqrt)), inv_m);
}

std::size_t head_width(const CrossSetParams& p, std::size_t heads) {
  const std::size_t inner = p.theta1.value.rows();
  if (heads == 0 || inner % heads != 0) {
    throw ConfigError("multihead_g: " + std::to_string(heads) + " heads do not divide projection width " +
                      std::to_string(inner));
  }
  if (p.merge.value.cols() != inner) {
    throw ConfigError("multihead_g: merge projection expects " + std::to_string(p.merge.value.cols()) +
                      " concatenated columns, heads provide " + std::to_string(inner));
  }
  return inner / heads;
}

}  // namespace

CrossSetParams init_cross_set(SeededRng& rng, const ModelConfig& cfg) {
  const std::size_t inner = cfg.heads * cfg.d_g;
  CrossSetParams p;
  p.theta1 = init_weight(rng, inner, cfg.d);
  p.theta2 = init_weight(rng, inner, cfg.d);
  if (cfg.variant == Variant::Attention) p.theta3 = init_weight(rng, inner, cfg.d);
  p.merge = init_weight(rng, cfg.d, inner);
  p.ffn = init_ffn(rng, cfg.d, cfg.ffn_hidden);
  return p;
}

HeadParams head_params(const CrossSetParams& p, std::size_t head, std::size_t d_g) {
  if ((head + 1) * d_g > p.theta1.value.rows()) throw ConfigError("head_params: head index out of range");
  HeadParams h;
  h.theta1 = row_block(p.theta1.value, head * d_g, d_g);
  h.theta2 = row_block(p.theta2.value, head * d_g, d_g);
  if (!p.theta3.value.empty()) h.theta3 = row_block(p.theta3.value, head * d_g, d_g);
  return h;
}

Var relu_attention(Var queries, Var keys, Var values) {
  return ad::matmul(pair_weights(queries, keys), values);
}

Var relu_affinity(Var xbar, Var ybar) {
  return ad::scale(ad::add(xbar, ad::matmul(pair_weights(xbar, ybar), ybar)), 0.5);
}

GProjections project_for_g(Var f, const CrossSetParams& p) {
  require_width(f.value(), p.merge.value.rows(), "multihead_g");
  Tape& t = f.tape();
  GProjections out;
  out.query = ad::matmul_nt(f, t.param(p.theta1));
  out.key = ad::matmul_nt(f, t.param(p.theta2));
  out.value = p.variant() == Variant::Attention ? ad::matmul_nt(f, t.param(p.theta3)) : out.key;
  return out;
}

Var multihead_g(Var query, Var key, Var value, const CrossSetParams& p, std::size_t heads) {
  const std::size_t dg = head_width(p, heads);
  const bool attention = p.variant() == Variant::Attention;
  std::vector<Var> head_out;
  head_out.reserve(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    Var qj = heads == 1 ? query : ad::slice_cols(query, j * dg, dg);
    Var kj = heads == 1 ? key : ad::slice_cols(key, j * dg, dg);
    if (attention) {
      Var vj = heads == 1 ? value : ad::slice_cols(value, j * dg, dg);
      head_out.push_back(relu_attention(qj, kj, vj));
    } else {
      head_out.push_back(relu_affinity(qj, kj));
    }
  }
  Var concat = heads == 1 ? head_out.front() : ad::concat_cols(head_out);
  return ad::matmul_nt(concat, query.tape().param(p.merge));
}

Var multihead_g(Var x, Var y, const CrossSetParams& p, std::size_t heads) {
  const std::size_t d = p.merge.value.rows();
  require_width(x.value(), d, "multihead_g");
  require_width(y.value(), d, "multihead_g");
  head_width(p, heads);
  Tape& t = x.tape();
  Var xq = ad::matmul_nt(x, t.param(p.theta1));
  Var yk = ad::matmul_nt(y, t.param(p.theta2));
  Var yv = p.variant() == Variant::Attention ? ad::matmul_nt(y, t.param(p.theta3)) : yk;
  return multihead_g(xq, yk, yv, p, heads);
}

std::pair<Var, Var> cross_set_layer(Var x, Var y, const CrossSetParams& p, std::size_t heads,
                                    const CrossSetParams* mirror) {
  const CrossSetParams& q = mirror ? *mirror : p;
  Var xf = ffn(x, p.ffn);
  Var yf = ffn(y, q.ffn);
  if (!mirror) {
    return {ad::add(x, multihead_g(xf, yf, p, heads)), ad::add(y, multihead_g(yf, xf, p, heads))};
  }
  // Untied: each direction sees the other set through its own FFN as well.
  Var xf_for_y = ffn(x, q.ffn);
  Var yf_for_x = ffn(y, p.ffn);
  return {ad::add(x, multihead_g(xf, yf_for_x, p, heads)), ad::add(y, multihead_g(yf, xf_for_y, q, heads))};
}

std::pair<Var, Var> extract_features(Var x, Var y, const StackParams& stack, std::size_t heads) {
  if (stack.encoders.size() != stack.cross_layers.size()) {
    throw ConfigError("extract_features: encoder and cross-set layer counts differ");
  }
  const bool untied = !stack.mirrored.empty();
  if (untied && stack.mirrored.size() != stack.cross_layers.size()) {
    throw ConfigError("extract_features: mirrored layer count differs");
  }
  for (std::size_t i = 0; i < stack.encoders.size(); ++i) {
    Var xe = encoder(x, stack.encoders[i], heads);
    Var ye = encoder(y, stack.encoders[i], heads);
    std::tie(x, y) = cross_set_layer(xe, ye, stack.cross_layers[i], heads, untied ? &stack.mirrored[i] : nullptr);
  }
  return {x, y};
}

Matrix g_attention(const FeatureSet& x, const FeatureSet& y, const HeadParams& head) {
  if (head.theta3.empty()) throw ConfigError("g_attention: head has no value projection");
  require_width(x.items(), head.theta1.cols(), "g_attention");
  require_width(y.items(), head.theta2.cols(), "g_attention");
  Tape t(false);
  Var xv = t.constant(x.items());
  Var yv = t.constant(y.items());
  Var q = ad::matmul_nt(xv, t.constant(head.theta1));
  Var k = ad::matmul_nt(yv, t.constant(head.theta2));
  Var v = ad::matmul_nt(yv, t.constant(head.theta3));
  return relu_attention(q, k, v).value();
}

Matrix g_affinity(const FeatureSet& x, const FeatureSet& y, const HeadParams& head) {
  require_width(x.items(), head.theta1.cols(), "g_affinity");
  require_width(y.items(), head.theta2.cols(), "g_affinity");
  Tape t(false);
  Var xbar = ad::matmul_nt(t.constant(x.items()), t.constant(head.theta1));
  Var ybar = ad::matmul_nt(t.constant(y.items()), t.constant(head.theta2));
  return relu_affinity(xbar, ybar).value();
}

FeatureSet multihead_g(const FeatureSet& x, const FeatureSet& y, const CrossSetParams& p, std::size_t heads) {
  Tape t(false);
  Var out = multihead_g(t.constant(x.items()), t.constant(y.items()), p, heads);
  return FeatureSet(out.value(), x.labels(), x.set_id());
}

std::pair<FeatureSet, FeatureSet> cross_set_layer(const FeatureSet& x, const FeatureSet& y,
                                                  const CrossSetParams& p, std::size_t heads,
                                                  const CrossSetParams* mirror) {
  Tape t(false);
  auto [xo, yo] = cross_set_layer(t.constant(x.items()), t.constant(y.items()), p, heads, mirror);
  return {FeatureSet(xo.value(), x.labels(), x.set_id()), FeatureSet(yo.value(), y.labels(), y.set_id())};
}

std::pair<FeatureSet, FeatureSet> extract_features(const FeatureSet& x, const FeatureSet& y,
                                                   const StackParams& stack, std::size_t heads) {
  Tape t(false);
  auto [xo, yo] = extract_features(t.constant(x.items()), t.constant(y.items()), stack, heads);
  return {FeatureSet(xo.value(), x.labels(), x.set_id()), FeatureSet(yo.value(), y.labels(), y.set_id())};
}

}  // namespace ssm
