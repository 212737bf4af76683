#include "ssm/matching/model.hpp"

#include <cmath>

#include "ssm/errors.hpp"
#include "ssm/numeric/ops.hpp"

namespace ssm {

namespace {

void push_ffn(std::vector<NamedBlock>& out, const std::string& prefix, FfnParams& f) {
  out.push_back({prefix + ".ffn.w1", &f.w1});
  out.push_back({prefix + ".ffn.b1", &f.b1});
  out.push_back({prefix + ".ffn.w2", &f.w2});
  out.push_back({prefix + ".ffn.b2", &f.b2});
}

void push_cross(std::vector<NamedBlock>& out, const std::string& prefix, CrossSetParams& c) {
  out.push_back({prefix + ".theta1", &c.theta1});
  out.push_back({prefix + ".theta2", &c.theta2});
  if (!c.theta3.value.empty()) out.push_back({prefix + ".theta3", &c.theta3});
  out.push_back({prefix + ".merge", &c.merge});
  push_ffn(out, prefix, c.ffn);
}

}  // namespace

std::vector<NamedBlock> ModelParams::blocks() {
  std::vector<NamedBlock> out;
  out.push_back({"input", &input});
  for (std::size_t i = 0; i < stack.encoders.size(); ++i) {
    const std::string e = "encoder" + std::to_string(i);
    EncoderParams& enc = stack.encoders[i];
    out.push_back({e + ".query", &enc.query});
    out.push_back({e + ".key", &enc.key});
    out.push_back({e + ".value", &enc.value});
    out.push_back({e + ".merge", &enc.merge});
    push_ffn(out, e, enc.ffn);
    if (i < stack.cross_layers.size()) push_cross(out, "cross" + std::to_string(i), stack.cross_layers[i]);
    if (i < stack.mirrored.size()) push_cross(out, "cross" + std::to_string(i) + ".mirror", stack.mirrored[i]);
  }
  if (config.variant == Variant::Baseline) {
    if (config.pool == PoolKind::Attention) {
      out.push_back({"pool.seed", &pool.seed});
      out.push_back({"pool.query", &pool.query});
      out.push_back({"pool.key", &pool.key});
      out.push_back({"pool.value", &pool.value});
    }
    out.push_back({"pool.out", &pool.out});
  } else {
    out.push_back({"cs.proj", &cs.proj});
    out.push_back({"cs.combine", &cs.combine});
  }
  return out;
}

std::vector<NamedConstBlock> ModelParams::blocks() const {
  std::vector<NamedConstBlock> out;
  for (const auto& b : const_cast<ModelParams*>(this)->blocks()) out.push_back({b.name, b.slot});
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.slot->value.size();
  return n;
}

void ModelParams::zero_grads() {
  for (auto& b : blocks()) b.slot->zero_grad();
}

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SeededRng rng(seed);
  ModelParams m;
  m.config = cfg;
  m.input = init_weight(rng, cfg.d, cfg.d_in);
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    m.stack.encoders.push_back(init_encoder(rng, cfg));
    if (cfg.variant != Variant::Baseline) {
      m.stack.cross_layers.push_back(init_cross_set(rng, cfg));
      if (cfg.untie_directions) m.stack.mirrored.push_back(init_cross_set(rng, cfg));
    }
  }
  if (cfg.variant == Variant::Baseline) {
    if (cfg.pool == PoolKind::Attention) {
      m.pool.seed = init_weight(rng, 1, cfg.d);
      m.pool.query = init_weight(rng, cfg.d, cfg.d);
      m.pool.key = init_weight(rng, cfg.d, cfg.d);
      m.pool.value = init_weight(rng, cfg.d, cfg.d);
    }
    m.pool.out = init_weight(rng, cfg.d, cfg.d);
  } else {
    m.cs.proj = init_weight(rng, cfg.heads * cfg.d_w, cfg.d);
    m.cs.combine = init_weight(rng, 1, cfg.heads);
  }
  return m;
}

Var cross_similarity(Var a, Var b) {
  if (a.cols() != b.cols()) throw DimensionError("cross_similarity: projected widths differ");
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(a.cols()));
  return ad::mean_all(ad::relu(ad::scale(ad::matmul_nt(a, b), inv_sqrt)));
}

Var mcs(Var x, Var y, const CSParams& p, std::size_t heads) {
  const std::size_t d = p.proj.value.cols();
  require_width(x.value(), d, "mcs");
  require_width(y.value(), d, "mcs");
  const std::size_t inner = p.proj.value.rows();
  if (heads == 0 || inner % heads != 0 || p.combine.value.cols() != heads || p.combine.value.rows() != 1) {
    throw ConfigError("mcs: projection stack, combination row and head count disagree");
  }
  const std::size_t dw = inner / heads;
  Tape& t = x.tape();
  Var a = ad::matmul_nt(x, t.param(p.proj));
  Var b = ad::matmul_nt(y, t.param(p.proj));
  std::vector<Var> sims;
  sims.reserve(heads);
  for (std::size_t j = 0; j < heads; ++j) {
    sims.push_back(heads == 1 ? cross_similarity(a, b)
                              : cross_similarity(ad::slice_cols(a, j * dw, dw), ad::slice_cols(b, j * dw, dw)));
  }
  Var row = heads == 1 ? sims.front() : ad::concat_cols(sims);
  return ad::matmul_nt(row, t.param(p.combine));
}

Var baseline_pool(Var x, const PoolParams& p, PoolKind kind) {
  const std::size_t d = p.out.value.cols();
  require_width(x.value(), d, "baseline_pool");
  Tape& t = x.tape();
  if (kind == PoolKind::Mean) return ad::matmul_nt(ad::mean_rows(x), t.param(p.out));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d));
  Var q = ad::matmul_nt(t.param(p.seed), t.param(p.query));
  Var k = ad::matmul_nt(x, t.param(p.key));
  Var v = ad::matmul_nt(x, t.param(p.value));
  Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt));
  return ad::matmul_nt(ad::matmul(weights, v), t.param(p.out));
}

ScoreGraph::ScoreGraph(Tape& tape, const ModelParams& model) : tape_(tape), model_(model) {}

Var ScoreGraph::stem(const FeatureSet& raw) {
  const ModelConfig& cfg = model_.config;
  Var x = input_project(tape_.constant(raw.items()), model_.input);
  if (cfg.variant == Variant::Baseline) {
    for (const EncoderParams& enc : model_.stack.encoders) x = encoder(x, enc, cfg.heads);
    return baseline_pool(x, model_.pool, cfg.pool);
  }
  if (!model_.stack.encoders.empty()) x = encoder(x, model_.stack.encoders.front(), cfg.heads);
  return x;
}

const GProjections& ScoreGraph::projections(Var stem, const CrossSetParams& p) {
  auto key = std::make_pair(stem.id(), &p);
  auto it = projections_.find(key);
  if (it == projections_.end()) it = projections_.emplace(key, project_for_g(ffn(stem, p.ffn), p)).first;
  return it->second;
}

Var ScoreGraph::score(Var stem_x, Var stem_y) {
  const ModelConfig& cfg = model_.config;
  if (cfg.variant == Variant::Baseline) return ad::matmul_nt(stem_x, stem_y);
  const StackParams& stack = model_.stack;
  const bool untied = !stack.mirrored.empty();
  Var x = stem_x, y = stem_y;
  for (std::size_t i = 0; i < stack.cross_layers.size(); ++i) {
    const CrossSetParams& p = stack.cross_layers[i];
    const CrossSetParams* mirror = untied ? &stack.mirrored[i] : nullptr;
    if (i > 0) {
      x = encoder(x, stack.encoders[i], cfg.heads);
      y = encoder(y, stack.encoders[i], cfg.heads);
      std::tie(x, y) = cross_set_layer(x, y, p, cfg.heads, mirror);
      continue;
    }
    const CrossSetParams& q = mirror ? *mirror : p;
    const GProjections& xp = projections(x, p);
    const GProjections& yp = projections(y, p);
    const GProjections& yq = projections(y, q);
    const GProjections& xq = projections(x, q);
    Var x_next = ad::add(x, multihead_g(xp.query, yp.key, yp.value, p, cfg.heads));
    y = ad::add(y, multihead_g(yq.query, xq.key, xq.value, q, cfg.heads));
    x = x_next;
  }
  return mcs(x, y, model_.cs, cfg.heads);
}

double cs(const FeatureSet& x, const FeatureSet& y, const Matrix& w) {
  require_width(x.items(), w.cols(), "cs");
  require_width(y.items(), w.cols(), "cs");
  Tape t(false);
  Var wv = t.constant(w);
  return cross_similarity(ad::matmul_nt(t.constant(x.items()), wv), ad::matmul_nt(t.constant(y.items()), wv))
      .value()(0, 0);
}

double mcs(const FeatureSet& x, const FeatureSet& y, const CSParams& p, std::size_t heads) {
  Tape t(false);
  return mcs(t.constant(x.items()), t.constant(y.items()), p, heads).value()(0, 0);
}

double model_score(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model) {
  if (model.config.variant == Variant::Baseline) {
    throw ConfigError("model_score: the baseline model is scored with baseline_score");
  }
  Tape t(false);
  ScoreGraph g(t, model);
  Var sx = g.stem(x_raw);
  Var sy = g.stem(y_raw);
  return g.score(sx, sy).value()(0, 0);
}

Matrix baseline_pool(const FeatureSet& x, const PoolParams& p, PoolKind kind) {
  Tape t(false);
  return baseline_pool(t.constant(x.items()), p, kind).value();
}

double baseline_score(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model) {
  if (model.config.variant != Variant::Baseline) {
    throw ConfigError("baseline_score: model is not a baseline model");
  }
  Tape t(false);
  ScoreGraph g(t, model);
  Var sx = g.stem(x_raw);
  Var sy = g.stem(y_raw);
  return g.score(sx, sy).value()(0, 0);
}

double score_pair(const FeatureSet& x_raw, const FeatureSet& y_raw, const ModelParams& model) {
  return model.config.variant == Variant::Baseline ? baseline_score(x_raw, y_raw, model)
                                                   : model_score(x_raw, y_raw, model);
}

}  // namespace ssm
