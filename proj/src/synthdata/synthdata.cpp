#include "ssm/synthdata/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ssm/errors.hpp"

namespace ssm {

namespace {

constexpr std::uint64_t kEmbeddingStream = 0x656d62;

Matrix unit_rows(SeededRng& rng, std::size_t rows, std::size_t cols) {
  Matrix m = seeded_gaussian(rng, rows, cols, 0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    for (double v : m.row(r)) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : m.row(r)) v /= norm;
  }
  return m;
}

std::size_t parse_count(std::string_view text, std::string_view whole) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("noise ratio '" + std::string(whole) + "': expected a/b with non-negative integers");
  }
  return v;
}

// Items of `items` whose mask entry equals `side`, labels following.
FeatureSet pick(const Matrix& items, const std::vector<int>& labels, const std::vector<bool>& mask, bool side,
                std::uint64_t set_id) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] == side) rows.push_back(i);
  }
  std::vector<int> picked;
  picked.reserve(rows.size());
  for (std::size_t r : rows) picked.push_back(labels[r]);
  return FeatureSet(select_rows(items, rows), std::move(picked), set_id);
}

}  // namespace

void CandidateBatch::validate() const {
  if (pairs.size() < 2) throw PreconditionError("candidate batch needs K >= 2, got " + std::to_string(pairs.size()));
}

void GenConfig::validate() const {
  if (d_in == 0) throw ConfigError("generator: d_in must be positive");
  if (n_categories == 0) throw ConfigError("generator: n_categories must be positive");
  if (outfit_min < 2) throw ConfigError("generator: outfit_min must be at least 2");
  if (outfit_max < outfit_min) throw ConfigError("generator: outfit_max must be at least outfit_min");
  if (outfit_max > n_categories) {
    throw ConfigError("generator: outfit_max exceeds n_categories (categories are drawn without replacement)");
  }
  if (reid_obs_per_person == 0) throw ConfigError("generator: reid_obs_per_person must be at least 1");
  if (reid_persons_min == 0 || reid_persons_max < reid_persons_min) {
    throw ConfigError("generator: reid person range must satisfy 1 <= min <= max");
  }
  if (!(style_std >= 0.0) || !(item_noise_std >= 0.0) || !(reid_identity_noise_std >= 0.0) ||
      !(reid_identity_std >= 0.0)) {
    throw ConfigError("generator: standard deviations must be non-negative");
  }
}

std::string NoiseRatio::to_string() const { return std::to_string(noise) + "/" + std::to_string(total); }

NoiseRatio NoiseRatio::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw ConfigError("noise ratio '" + std::string(text) + "': expected a/b");
  }
  NoiseRatio r{parse_count(text.substr(0, slash), text), parse_count(text.substr(slash + 1), text)};
  if (r.total == 0 || r.noise >= r.total) {
    throw ConfigError("noise ratio '" + std::string(text) + "': need at least one target person");
  }
  return r;
}

std::string_view to_string(Task t) {
  switch (t) {
    case Task::Subset: return "subset";
    case Task::Superset: return "superset";
    case Task::Reid: return "reid";
  }
  return "subset";
}

Task parse_task(std::string_view name) {
  if (name == "subset") return Task::Subset;
  if (name == "superset") return Task::Superset;
  if (name == "reid") return Task::Reid;
  throw ConfigError("unknown task '" + std::string(name) + "' (expected subset, superset or reid)");
}

Generator::Generator(GenConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  SeededRng rng(split_seed(cfg_.seed, kEmbeddingStream));
  embeddings_ = unit_rows(rng, cfg_.n_categories, cfg_.d_in);
}

std::vector<int> Generator::draw_categories(SeededRng& rng, std::size_t count) const {
  std::vector<int> all(cfg_.n_categories);
  std::iota(all.begin(), all.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_int(all.size() - i);
    std::swap(all[i], all[j]);
  }
  all.resize(count);
  return all;
}

Matrix Generator::draw_items(SeededRng& rng, const Matrix& style, std::span<const int> categories) const {
  Matrix items(categories.size(), cfg_.d_in);
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto emb = embeddings_.row(static_cast<std::size_t>(categories[i]));
    for (std::size_t c = 0; c < cfg_.d_in; ++c) {
      items(i, c) = style(0, c) + emb[c] + cfg_.item_noise_std * rng.gaussian();
    }
  }
  return items;
}

Outfit Generator::gen_outfit(SeededRng& rng) const {
  const auto n = static_cast<std::size_t>(
      rng.uniform_range(static_cast<std::int64_t>(cfg_.outfit_min), static_cast<std::int64_t>(cfg_.outfit_max)));
  const std::vector<int> cats = draw_categories(rng, n);
  return gen_outfit(rng, cats);
}

Outfit Generator::gen_outfit(SeededRng& rng, std::span<const int> categories) const {
  for (int c : categories) {
    if (c < 0 || static_cast<std::size_t>(c) >= cfg_.n_categories) {
      throw PreconditionError("gen_outfit: category id " + std::to_string(c) + " out of range");
    }
  }
  Outfit o;
  o.categories.assign(categories.begin(), categories.end());
  o.style = seeded_gaussian(rng, 1, cfg_.d_in, 0.0, cfg_.style_std);
  o.items = draw_items(rng, o.style, categories);
  return o;
}

std::vector<bool> random_halving(SeededRng& rng, std::size_t n) {
  if (n < 2) throw PreconditionError("split needs at least two items, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  const std::size_t n_x = (n % 2 == 1 && rng.uniform() < 0.5) ? n / 2 + 1 : n / 2;
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < n_x; ++i) mask[order[i]] = true;
  return mask;
}

std::pair<FeatureSet, FeatureSet> split_outfit(SeededRng& rng, const Outfit& outfit) {
  const std::vector<bool> mask = random_halving(rng, outfit.items.rows());
  return {pick(outfit.items, outfit.categories, mask, true, 0), pick(outfit.items, outfit.categories, mask, false, 0)};
}

CandidateBatch Generator::make_subset_batch(SeededRng& rng, std::size_t k) const {
  if (k < 2) throw PreconditionError("make_subset_batch: K must be at least 2");
  const auto n = static_cast<std::size_t>(
      rng.uniform_range(static_cast<std::int64_t>(cfg_.outfit_min), static_cast<std::int64_t>(cfg_.outfit_max)));
  const std::vector<int> cats = draw_categories(rng, n);
  const std::vector<bool> mask = random_halving(rng, n);
  CandidateBatch batch;
  batch.pairs.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Outfit o = gen_outfit(rng, cats);
    batch.pairs.push_back({pick(o.items, o.categories, mask, true, j), pick(o.items, o.categories, mask, false, j)});
  }
  return batch;
}

CandidateBatch Generator::make_superset_batch(SeededRng& rng, std::size_t k, std::size_t mix) const {
  if (k < 2) throw PreconditionError("make_superset_batch: K must be at least 2");
  if (mix < 1) throw PreconditionError("make_superset_batch: mix must be at least 1");
  CandidateBatch batch;
  batch.pairs.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto [x, y] = split_outfit(rng, gen_outfit(rng));
    for (std::size_t m = 1; m < mix; ++m) {
      auto [xm, ym] = split_outfit(rng, gen_outfit(rng));
      x = union_of(x, xm);
      y = union_of(y, ym);
    }
    batch.pairs.push_back({FeatureSet(x.items(), x.labels(), j), FeatureSet(y.items(), y.labels(), j)});
  }
  return batch;
}

void Generator::check_reid_ratios(NoiseRatio noise_x, NoiseRatio noise_y) const {
  for (const NoiseRatio& r : {noise_x, noise_y}) {
    if (r.total == 0 || r.noise >= r.total) {
      throw ConfigError("reid ratio " + r.to_string() + ": need at least one target person");
    }
    if (r.total < cfg_.reid_persons_min || r.total > cfg_.reid_persons_max) {
      throw ConfigError("reid ratio " + r.to_string() + ": " + std::to_string(r.total) + " persons is outside [" +
                        std::to_string(cfg_.reid_persons_min) + ", " + std::to_string(cfg_.reid_persons_max) + "]");
    }
  }
  if (noise_x.targets() != noise_y.targets()) {
    throw ConfigError("reid ratios " + noise_x.to_string() + " and " + noise_y.to_string() +
                      " disagree on the number of shared target persons");
  }
}

GroupScene Generator::observe(SeededRng& rng, const Matrix& identities, const std::vector<int>& ids,
                              std::vector<int> noise_ids) const {
  const std::size_t obs = cfg_.reid_obs_per_person;
  Matrix rows(identities.rows() * obs, cfg_.d_in);
  std::vector<int> labels(rows.rows());
  std::vector<std::size_t> order(rows.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t p = 0; p < identities.rows(); ++p) {
    for (std::size_t o = 0; o < obs; ++o) {
      const std::size_t r = order[p * obs + o];
      labels[r] = ids[p];
      for (std::size_t c = 0; c < cfg_.d_in; ++c) {
        rows(r, c) = identities(p, c) + cfg_.reid_identity_noise_std * rng.gaussian();
      }
    }
  }
  return GroupScene{identities, ids, std::move(noise_ids), FeatureSet(std::move(rows), std::move(labels))};
}

CandidateBatch Generator::make_reid_batch(SeededRng& rng, std::size_t k, NoiseRatio noise_x,
                                          NoiseRatio noise_y) const {
  if (k < 2) throw PreconditionError("make_reid_batch: K must be at least 2");
  check_reid_ratios(noise_x, noise_y);
  const std::size_t targets = noise_x.targets();
  CandidateBatch batch;
  batch.pairs.reserve(k);
  int next_id = 0;
  auto scene = [&](const Matrix& target_rows, const std::vector<int>& target_ids, std::size_t noise,
                   std::uint64_t set_id) {
    const Matrix distractors = seeded_gaussian(rng, noise, cfg_.d_in, 0.0, cfg_.reid_identity_std);
    std::vector<int> ids = target_ids;
    std::vector<int> noise_ids;
    for (std::size_t i = 0; i < noise; ++i) {
      ids.push_back(next_id);
      noise_ids.push_back(next_id++);
    }
    const Matrix present = noise == 0 ? target_rows : concat_rows(target_rows, distractors);
    GroupScene s = observe(rng, present, ids, std::move(noise_ids));
    return FeatureSet(s.observations.items(), s.observations.labels(), set_id);
  };
  for (std::size_t j = 0; j < k; ++j) {
    const Matrix target_rows = seeded_gaussian(rng, targets, cfg_.d_in, 0.0, cfg_.reid_identity_std);
    std::vector<int> target_ids(targets);
    for (int& id : target_ids) id = next_id++;
    FeatureSet x = scene(target_rows, target_ids, noise_x.noise, j);
    FeatureSet y = scene(target_rows, target_ids, noise_y.noise, j);
    batch.pairs.push_back({std::move(x), std::move(y)});
  }
  return batch;
}

CandidateBatch Generator::make_batch(SeededRng& rng, const TaskSpec& task, std::size_t k) const {
  switch (task.task) {
    case Task::Subset: return make_subset_batch(rng, k);
    case Task::Superset: return make_superset_batch(rng, k, task.mix);
    case Task::Reid: return make_reid_batch(rng, k, task.noise_x, task.noise_y);
  }
  return make_subset_batch(rng, k);
}

std::vector<CandidateBatch> make_pool(const Generator& gen, const TaskSpec& task, std::size_t pairs, std::size_t k,
                                      SeededRng& rng) {
  const std::size_t n = std::max<std::size_t>(1, pairs / std::max<std::size_t>(k, 1));
  std::vector<CandidateBatch> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) pool.push_back(gen.make_batch(rng, task, k));
  return pool;
}

namespace {

nlohmann::json rows_json(const Matrix& m) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    out.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return out;
}

FeatureSet set_from_json(const nlohmann::json& rows, const nlohmann::json& labels, std::uint64_t id) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array()) {
    throw FormatError("dataset: expected a non-empty list of rows");
  }
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!rows[r].is_array() || rows[r].size() != cols) throw FormatError("dataset: ragged item rows");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c].get<double>();
  }
  return FeatureSet(std::move(m), labels.get<std::vector<int>>(), id);
}

}  // namespace

void dump_pairs(const std::filesystem::path& path, std::span<const CandidateBatch> batches) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("dataset: cannot open " + path.string() + " for writing");
  std::size_t pair_id = 0;
  for (const CandidateBatch& b : batches) {
    for (const SetPair& p : b.pairs) {
      nlohmann::ordered_json j;
      j["pair_id"] = pair_id++;
      j["set_x"] = rows_json(p.x.items());
      j["set_y"] = rows_json(p.y.items());
      j["labels_x"] = p.x.labels();
      j["labels_y"] = p.y.labels();
      out << j.dump() << '\n';
    }
  }
  if (!out) throw FormatError("dataset: write to " + path.string() + " failed");
}

std::vector<SetPair> load_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("dataset: cannot open " + path.string());
  std::vector<SetPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto id = j.at("pair_id").get<std::uint64_t>();
      pairs.push_back({set_from_json(j.at("set_x"), j.at("labels_x"), id),
                       set_from_json(j.at("set_y"), j.at("labels_y"), id)});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    } catch (const PreconditionError& e) {
      throw FormatError("dataset: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

std::vector<CandidateBatch> group_into_batches(std::vector<SetPair> pairs, std::size_t k) {
  if (k < 2) throw PreconditionError("group_into_batches: K must be at least 2");
  if (pairs.size() % k != 0) {
    throw FormatError("dataset: " + std::to_string(pairs.size()) + " pairs do not divide into batches of " +
                      std::to_string(k));
  }
  std::vector<CandidateBatch> out(pairs.size() / k);
  for (std::size_t i = 0; i < pairs.size(); ++i) out[i / k].pairs.push_back(std::move(pairs[i]));
  return out;
}

}  // namespace ssm
