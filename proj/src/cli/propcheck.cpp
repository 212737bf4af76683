#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ssm/cli/harness.hpp"

namespace ssm {

namespace {

constexpr std::size_t kWidths[] = {8, 16, 32};
constexpr std::size_t kHeads[] = {1, 2, 4};

std::vector<std::size_t> random_order(SeededRng& rng, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  return order;
}

// max |a - b| / (1 + max |a|)
double deviation(const Matrix& a, const Matrix& b) {
  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::abs(v));
  return max_abs_diff(a, b) / (1.0 + scale);
}

double score_deviation(double a, double b) { return std::abs(a - b) / (1.0 + std::abs(a)); }

void record(PropertyResult& r, double dev, const std::string& where) {
  ++r.checks;
  // NaN deviations count as failures.
  if (!(dev <= r.tolerance)) r.passed = false;
  if (r.checks == 1 || std::isnan(dev) || dev > r.worst) {
    r.worst = dev;
    r.worst_case = where;
  }
}

// Per-set map applied before scoring, used for the equivariance checks:
// the first cross-set layer for cross variants, the first encoder for the
// baseline. Returns both outputs.
std::pair<Matrix, Matrix> pair_map(const ModelParams& model, const FeatureSet& x_raw, const FeatureSet& y_raw) {
  const FeatureSet x = input_project(x_raw, model.input);
  const FeatureSet y = input_project(y_raw, model.input);
  const std::size_t h = model.config.heads;
  if (model.config.variant == Variant::Baseline) {
    return {encoder(x, model.stack.encoders.front(), h).items(), encoder(y, model.stack.encoders.front(), h).items()};
  }
  const StackParams& st = model.stack;
  const CrossSetParams* mirror = st.mirrored.empty() ? nullptr : &st.mirrored.front();
  auto [xo, yo] = cross_set_layer(x, y, st.cross_layers.front(), h, mirror);
  return {xo.items(), yo.items()};
}

}  // namespace

std::vector<PropertyResult> check_properties(const PropcheckOptions& opts, std::uint64_t seed, bool untie,
                                             std::size_t d_in) {
  PropertyResult invariance{"permutation_invariance", true, 0.0, opts.tolerance, 0, ""};
  PropertyResult equivariance{"permutation_equivariance", true, 0.0, opts.layer_tolerance, 0, ""};
  PropertyResult symmetry{"symmetry", true, 0.0, opts.tolerance, 0, ""};
  PropertyResult swap{"two_set_permutation_equivariance", true, 0.0, opts.layer_tolerance, 0, ""};

  for (std::size_t i = 0; i < opts.configs; ++i) {
    const std::uint64_t case_seed = split_seed(seed, i);
    SeededRng rng(case_seed);
    const std::size_t d = kWidths[rng.uniform_int(3)];
    const std::size_t heads = kHeads[rng.uniform_int(3)];
    const std::size_t layers = 1 + rng.uniform_int(2);
    const std::size_t n = 1 + rng.uniform_int(6);
    const std::size_t m = 1 + rng.uniform_int(6);
    const Variant variant = opts.variants[i % opts.variants.size()];
    ModelConfig cfg = ModelConfig::with_width(d_in, d, heads, layers, variant);
    cfg.untie_directions = untie && variant != Variant::Baseline;

    std::ostringstream where;
    where << "config " << i << " (seed " << case_seed << "): variant=" << to_string(variant) << " d=" << d
          << " h=" << heads << " L=" << layers << " N=" << n << " M=" << m << (cfg.untie_directions ? " untied" : "");

    const ModelParams model = init_model(cfg, rng.next_u64());
    const FeatureSet x(seeded_gaussian(rng, n, d_in, 0.0, 1.0));
    const FeatureSet y(seeded_gaussian(rng, m, d_in, 0.0, 1.0));
    const auto px = random_order(rng, n);
    const auto py = random_order(rng, m);
    const FeatureSet xp = x.permuted(px);
    const FeatureSet yp = y.permuted(py);

    const double f = score_pair(x, y, model);
    record(invariance, score_deviation(f, score_pair(xp, yp, model)), where.str());
    record(symmetry, score_deviation(f, score_pair(y, x, model)), where.str());

    const auto [fx, fy] = pair_map(model, x, y);
    const auto [gx, gy] = pair_map(model, xp, yp);
    record(equivariance,
           std::max(deviation(select_rows(fx, px), gx), deviation(select_rows(fy, py), gy)), where.str());

    const auto [sy, sx] = pair_map(model, y, x);
    record(swap, std::max(deviation(fx, sx), deviation(fy, sy)), where.str());
  }
  return {invariance, equivariance, symmetry, swap};
}

}  // namespace ssm
