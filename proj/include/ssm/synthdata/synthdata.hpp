#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ssm/numeric/matrix.hpp"
#include "ssm/numeric/rng.hpp"
#include "ssm/set_model/feature_set.hpp"
#include "ssm/training/batch.hpp"

namespace ssm {

/// Parameters of the synthetic generators. Items of an outfit share a latent
/// style vector; re-identification observations are noisy copies of identity
/// vectors.
struct GenConfig {
  std::size_t d_in = 16;
  std::size_t n_categories = 8;
  std::size_t outfit_min = 4;
  std::size_t outfit_max = 8;
  double style_std = 0.1;
  double item_noise_std = 0.05;
  std::size_t reid_obs_per_person = 3;
  std::size_t reid_persons_min = 3;
  std::size_t reid_persons_max = 8;
  double reid_identity_std = 1.0;  // per-coordinate std of identity vectors
  double reid_identity_noise_std = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Outfit {
  Matrix items;                 // one row per item
  std::vector<int> categories;  // pairwise distinct
  Matrix style;                 // 1 x d_in
};

/// One side of a group re-identification pair.
struct GroupScene {
  Matrix identities;         // one row per person present
  std::vector<int> ids;      // identity id per row of `identities`
  std::vector<int> noise_ids;
  FeatureSet observations;   // obs_per_person noisy rows per person, labelled by id
};

/// "noise/total": `noise` distractor persons among `total` persons on one
/// side of a pair, so total - noise are target persons.
struct NoiseRatio {
  std::size_t noise = 0;
  std::size_t total = 3;

  std::size_t targets() const { return total - noise; }
  std::string to_string() const;
  // Parses "a/b"; throws ConfigError on malformed input.
  static NoiseRatio parse(std::string_view text);
  friend bool operator==(const NoiseRatio&, const NoiseRatio&) = default;
};

enum class Task { Subset, Superset, Reid };
std::string_view to_string(Task t);
Task parse_task(std::string_view name);

struct TaskSpec {
  Task task = Task::Subset;
  std::size_t mix = 2;  // outfits per superset
  NoiseRatio noise_x;
  NoiseRatio noise_y;
};

class Generator {
 public:
  explicit Generator(GenConfig cfg);

  const GenConfig& config() const { return cfg_; }
  // n_categories x d_in, unit rows, fixed by cfg.seed.
  const Matrix& category_embeddings() const { return embeddings_; }

  Outfit gen_outfit(SeededRng& rng) const;
  // Outfit over the given (distinct) categories, with a fresh style.
  Outfit gen_outfit(SeededRng& rng, std::span<const int> categories) const;

  CandidateBatch make_subset_batch(SeededRng& rng, std::size_t k) const;
  CandidateBatch make_superset_batch(SeededRng& rng, std::size_t k, std::size_t mix) const;
  CandidateBatch make_reid_batch(SeededRng& rng, std::size_t k, NoiseRatio noise_x, NoiseRatio noise_y) const;

  // Throws ConfigError when the ratio pair cannot be realized.
  void check_reid_ratios(NoiseRatio noise_x, NoiseRatio noise_y) const;

  CandidateBatch make_batch(SeededRng& rng, const TaskSpec& task, std::size_t k) const;

 private:
  std::vector<int> draw_categories(SeededRng& rng, std::size_t count) const;
  Matrix draw_items(SeededRng& rng, const Matrix& style, std::span<const int> categories) const;
  GroupScene observe(SeededRng& rng, const Matrix& identities, const std::vector<int>& ids,
                     std::vector<int> noise_ids) const;

  GenConfig cfg_;
  Matrix embeddings_;
};

// Random halving into two non-empty parts: one side gets floor(n/2) items,
// the other ceil(n/2), sides chosen by a coin flip. Category labels follow
// their items. Throws PreconditionError for fewer than two items.
std::pair<FeatureSet, FeatureSet> split_outfit(SeededRng& rng, const Outfit& outfit);

// Membership mask of the X side for a halving of n items.
std::vector<bool> random_halving(SeededRng& rng, std::size_t n);

// floor(pairs / k) batches, at least one.
std::vector<CandidateBatch> make_pool(const Generator& gen, const TaskSpec& task, std::size_t pairs, std::size_t k,
                                      SeededRng& rng);

// JSON-lines dump, one object per pair:
//   {"pair_id": n, "set_x": [[...]], "set_y": [[...]], "labels_x": [...], "labels_y": [...]}
// Pairs are written batch after batch, so the batch structure is recovered by
// regrouping consecutive pairs with the same K.
void dump_pairs(const std::filesystem::path& path, std::span<const CandidateBatch> batches);
std::vector<SetPair> load_pairs(const std::filesystem::path& path);
std::vector<CandidateBatch> group_into_batches(std::vector<SetPair> pairs, std::size_t k);

}  // namespace ssm
