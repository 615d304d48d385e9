#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodmine/embedding_io.hpp"
#include "oodmine/mining.hpp"

namespace oodmine {

struct PlantedParams {
  std::size_t n_concepts = 20;
  std::size_t samples_per_concept = 200;
  std::size_t n_distractors = 480;
  std::size_t dims = 64;
  double margin = 0.1;  // own-concept cosine must beat every other label by this much
  double noise = 0.05;  // per-coordinate Gaussian sigma before renormalization
  std::uint64_t seed = 0;
  std::size_t n_ood = 1000;
  std::size_t n_ood_directions = 20;
  bool ood_near_distractors = false;  // center OOD samples on distractor labels
  double max_direction_cos = 0.5;     // pairwise bound between label directions

  void validate() const;
};

nlohmann::json to_json(const PlantedParams& params);

struct PlantedInstance {
  EmbeddingMatrix images;
  std::vector<std::size_t> concept_of_image;  // concept id in [0, n_concepts)
  EmbeddingMatrix text;                       // one row per corpus label
  LabelList labels;
  std::vector<std::size_t> concept_rows;  // text row of concept j
  IndexSet distractor_rows;
  EmbeddingMatrix ood;
  PlantedParams params;

  /// Text row of each image's concept.
  std::vector<std::size_t> true_label_rows() const;
  /// Planted label names (the ground-truth positive set).
  LabelList planted_labels() const;
};

/// Draws concept and distractor directions with bounded pairwise cosine, then
/// samples noisy images around the concepts, rejecting any image whose own
/// concept does not beat every other label by `margin`. Throws
/// Error(infeasible) after 100000 rejected draws.
PlantedInstance generate_planted_instance(const PlantedParams& params);

/// Writes id.emb, ood.emb, corpus.txt, corpus.emb, planted.txt, truth.json.
void write_planted_instance(const PlantedInstance& instance, const std::filesystem::path& dir);

}  // namespace oodmine
