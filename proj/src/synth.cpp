#include "oodmine/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "oodmine/error.hpp"

namespace oodmine {
namespace {

constexpr std::size_t kMaxRejections = 100000;

class DirectionSampler {
 public:
  DirectionSampler(std::size_t dims, std::mt19937_64& rng) : dims_(dims), rng_(rng) {}

  Eigen::VectorXd gaussian() {
    Eigen::VectorXd v(static_cast<Index>(dims_));
    for (Index i = 0; i < v.size(); ++i) v(i) = normal_(rng_);
    return v;
  }

  Eigen::VectorXd unit() {
    for (;;) {
      Eigen::VectorXd v = gaussian();
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::size_t dims_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

struct Budget {
  std::size_t rejections = 0;
  void reject(const char* what) {
    if (++rejections > kMaxRejections)
      throw Error(Errc::infeasible, std::string("rejection sampling gave up while drawing ") + what);
  }
};

// Appends `count` unit directions whose cosine to every row in `existing` is at most `bound`.
void draw_separated(std::vector<Eigen::VectorXd>& existing, std::size_t count, double bound, DirectionSampler& s,
                    Budget& budget, const char* what) {
  for (std::size_t made = 0; made < count;) {
    Eigen::VectorXd v = s.unit();
    const bool ok = std::all_of(existing.begin(), existing.end(), [&](const Eigen::VectorXd& e) { return e.dot(v) <= bound; });
    if (!ok) {
      budget.reject(what);
      continue;
    }
    existing.push_back(std::move(v));
    ++made;
  }
}

RowMatrixXf stack(const std::vector<Eigen::VectorXd>& rows, std::size_t dims) {
  RowMatrixXf m(static_cast<Index>(rows.size()), static_cast<Index>(dims));
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Index>(i)) = rows[i].transpose().cast<float>();
  return m;
}

Eigen::VectorXd perturb(const Eigen::VectorXd& center, double noise, DirectionSampler& s) {
  Eigen::VectorXd v = center;
  if (noise > 0.0) v += noise * s.gaussian();
  const double n = v.norm();
  return n > 1e-12 ? Eigen::VectorXd(v / n) : center;
}

}  // namespace

void PlantedParams::validate() const {
  if (n_concepts < 2) throw Error(Errc::invalid_argument, "need at least 2 concepts");
  if (samples_per_concept == 0) throw Error(Errc::invalid_argument, "need at least one sample per concept");
  if (dims < 2) throw Error(Errc::invalid_argument, "need at least 2 dims");
  if (!(margin > 0.0)) throw Error(Errc::invalid_argument, "margin must be positive");
  if (!(noise >= 0.0)) throw Error(Errc::invalid_argument, "noise must be non-negative");
  if (n_ood > 0 && n_ood_directions == 0) throw Error(Errc::invalid_argument, "OOD samples need OOD directions");
  if (ood_near_distractors && n_ood > 0 && n_distractors == 0)
    throw Error(Errc::invalid_argument, "OOD near distractors requires distractors");
}

nlohmann::json to_json(const PlantedParams& p) {
  return {{"n_concepts", p.n_concepts},       {"samples_per_concept", p.samples_per_concept},
          {"n_distractors", p.n_distractors}, {"dims", p.dims},
          {"margin", p.margin},               {"noise", p.noise},
          {"seed", p.seed},                   {"n_ood", p.n_ood},
          {"n_ood_directions", p.n_ood_directions}, {"ood_near_distractors", p.ood_near_distractors},
          {"max_direction_cos", p.max_direction_cos}};
}

std::vector<std::size_t> PlantedInstance::true_label_rows() const {
  std::vector<std::size_t> out;
  out.reserve(concept_of_image.size());
  for (auto c : concept_of_image) out.push_back(concept_rows[c]);
  return out;
}

LabelList PlantedInstance::planted_labels() const {
  LabelList out;
  for (auto r : concept_rows) out.push_back(labels[r]);
  return out;
}

PlantedInstance generate_planted_instance(const PlantedParams& params) {
  params.validate();
  std::mt19937_64 rng(params.seed);
  DirectionSampler sampler(params.dims, rng);
  Budget budget;

  // Label directions: concepts first, then distractors.
  std::vector<Eigen::VectorXd> directions;
  draw_separated(directions, params.n_concepts, params.max_direction_cos, sampler, budget, "concept directions");
  draw_separated(directions, params.n_distractors, params.max_direction_cos, sampler, budget, "distractor directions");

  // Shuffle label rows so concepts do not sit at predictable indices.
  const std::size_t n_text = directions.size();
  std::vector<std::size_t> row_of(n_text);
  std::iota(row_of.begin(), row_of.end(), std::size_t{0});
  std::shuffle(row_of.begin(), row_of.end(), rng);
  std::vector<Eigen::VectorXd> text_rows(n_text);
  LabelList labels(n_text);
  char name[64];
  for (std::size_t d = 0; d < n_text; ++d) {
    text_rows[row_of[d]] = directions[d];
    if (d < params.n_concepts)
      std::snprintf(name, sizeof name, "concept_%03zu", d);
    else
      std::snprintf(name, sizeof name, "distractor_%04zu", d - params.n_concepts);
    labels[row_of[d]] = name;
  }
  // Rejection is checked against the float-rounded rows that are actually stored.
  EmbeddingMatrix text(stack(text_rows, params.dims));
  const Eigen::MatrixXd text_stored = text.data().cast<double>();

  std::vector<Eigen::VectorXd> images;
  std::vector<std::size_t> concept_of_image;
  images.reserve(params.n_concepts * params.samples_per_concept);
  for (std::size_t c = 0; c < params.n_concepts; ++c) {
    const auto own = static_cast<Index>(row_of[c]);
    for (std::size_t s = 0; s < params.samples_per_concept;) {
      const Eigen::VectorXd x = perturb(directions[c], params.noise, sampler);
      const Eigen::VectorXd xf = x.cast<float>().cast<double>();
      Eigen::VectorXd sims = text_stored * xf;
      const double own_sim = sims(own);
      sims(own) = -std::numeric_limits<double>::infinity();
      if (own_sim - sims.maxCoeff() < params.margin) {
        budget.reject("images");
        continue;
      }
      images.push_back(x);
      concept_of_image.push_back(c);
      ++s;
    }
  }

  std::vector<Eigen::VectorXd> ood_centers;
  if (params.n_ood > 0) {
    if (params.ood_near_distractors) {
      std::vector<std::size_t> pick(params.n_distractors);
      std::iota(pick.begin(), pick.end(), params.n_concepts);
      std::shuffle(pick.begin(), pick.end(), rng);
      for (std::size_t i = 0; i < params.n_ood_directions; ++i)
        ood_centers.push_back(directions[pick[i % pick.size()]]);
    } else {
      std::vector<Eigen::VectorXd> fresh(directions.begin(), directions.begin() + static_cast<std::ptrdiff_t>(params.n_concepts));
      draw_separated(fresh, params.n_ood_directions, params.max_direction_cos, sampler, budget, "OOD directions");
      ood_centers.assign(fresh.begin() + static_cast<std::ptrdiff_t>(params.n_concepts), fresh.end());
    }
  }
  std::vector<Eigen::VectorXd> ood;
  for (std::size_t i = 0; i < params.n_ood; ++i)
    ood.push_back(perturb(ood_centers[i % ood_centers.size()], params.noise, sampler));

  IndexSet distractor_rows;
  for (std::size_t d = params.n_concepts; d < n_text; ++d) distractor_rows.push_back(row_of[d]);
  std::sort(distractor_rows.begin(), distractor_rows.end());
  std::vector<std::size_t> concept_rows(row_of.begin(), row_of.begin() + static_cast<std::ptrdiff_t>(params.n_concepts));

  return PlantedInstance{
      EmbeddingMatrix(stack(images, params.dims)),
      std::move(concept_of_image),
      std::move(text),
      std::move(labels),
      std::move(concept_rows),
      std::move(distractor_rows),
      ood.empty() ? EmbeddingMatrix::empty(static_cast<Index>(params.dims)) : EmbeddingMatrix(stack(ood, params.dims)),
      params,
  };
}

void write_planted_instance(const PlantedInstance& instance, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  save_embeddings(instance.images, dir / "id.emb");
  if (!instance.ood.is_empty()) save_embeddings(instance.ood, dir / "ood.emb");
  save_embeddings(instance.text, dir / "corpus.emb");
  save_labels(instance.labels, dir / "corpus.txt");
  save_labels(instance.planted_labels(), dir / "planted.txt");

  nlohmann::json truth;
  truth["params"] = to_json(instance.params);
  truth["concept_rows"] = instance.concept_rows;
  truth["distractor_rows"] = instance.distractor_rows;
  truth["image_concepts"] = instance.concept_of_image;
  std::ofstream out(dir / "truth.json", std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write truth.json in " + dir.string());
  out << truth.dump(2) << '\n';
}

}  // namespace oodmine
