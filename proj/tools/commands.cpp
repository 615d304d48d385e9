#include "commands.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodmine/clustering.hpp"
#include "oodmine/corpus.hpp"
#include "oodmine/embedding_io.hpp"
#include "oodmine/error.hpp"
#include "oodmine/format.hpp"
#include "oodmine/metrics.hpp"
#include "oodmine/mining.hpp"
#include "oodmine/report.hpp"
#include "oodmine/scoring.hpp"
#include "oodmine/synth.hpp"

namespace oodmine::cli {
namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// shared helpers

EmbeddingMatrix load_emb(const std::string& path) {
  auto m = load_embeddings(path);
  if (m.renormalized_rows() > 0)
    std::cerr << "warning: " << path << ": renormalized " << m.renormalized_rows()
              << " rows that were off unit norm by more than 1e-4\n";
  return m;
}

Corpus load_corpus_file(const std::string& path) {
  Corpus corpus;
  corpus.labels = load_labels(path);
  corpus.source_tag = fs::path(path).stem().string();
  return corpus;
}

void check_text_matches(const EmbeddingMatrix& text, const Corpus& corpus) {
  if (static_cast<std::size_t>(text.rows()) != corpus.size())
    throw Error(Errc::dimension_mismatch, "text embeddings have " + std::to_string(text.rows()) +
                                              " rows but the corpus has " + std::to_string(corpus.size()) +
                                              " labels");
}

std::pair<std::string, std::string> named_path(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) return {fs::path(spec).stem().string(), spec};
  if (eq == 0 || eq + 1 == spec.size()) throw UsageError("expected NAME=PATH, got '" + spec + "'");
  return {spec.substr(0, eq), spec.substr(eq + 1)};
}

template <typename Fn>
void write_text_file(const std::string& path, Fn&& fn) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path + " for writing");
  fn(out);
  if (!out) throw Error(Errc::io, "write failed for " + path);
}

// Positive/negative text embeddings for scoring, from a mined set or explicit files.
struct LabelEmbeddings {
  std::optional<EmbeddingMatrix> pos;
  std::optional<EmbeddingMatrix> neg;
  IndexSet neg_indices;  // corpus rows, when built from a mined set
  std::optional<EmbeddingMatrix> text;
};

struct ScoreInputs {
  std::string img;
  std::string text;
  std::string mined;
  std::string pos_emb;
  std::string neg_emb;
};

LabelEmbeddings resolve_labels(const ScoreInputs& in, std::size_t dims) {
  LabelEmbeddings out;
  if (!in.mined.empty()) {
    if (in.text.empty()) throw UsageError("--mined requires --text");
    if (!in.pos_emb.empty() || !in.neg_emb.empty()) throw UsageError("use either --mined or --pos-emb/--neg-emb");
    const auto sets = load_mined(in.mined);
    out.text = load_emb(in.text);
    out.pos = out.text->select_rows(sets.pos);
    out.neg = out.text->select_rows(sets.neg);
    out.neg_indices = sets.neg;
    return out;
  }
  if (in.pos_emb.empty()) throw UsageError("need --mined with --text, or --pos-emb");
  out.pos = load_emb(in.pos_emb);
  out.neg = in.neg_emb.empty() ? EmbeddingMatrix::empty(static_cast<Index>(dims)) : load_emb(in.neg_emb);
  return out;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------------------
// ingest

struct IngestOptions {
  std::string input;
  std::string policy = "no_duplicates_one_lemma";
  std::string source_tag;
  std::string out;
  std::string prompts;
  std::string queries_out;
  std::string query_emb;
  std::string emb_out;
};

void cmd_ingest(const IngestOptions& o) {
  std::ifstream in(o.input, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + o.input);
  const auto corpus = ingest_corpus(in, parse_dedup_policy(o.policy),
                                    o.source_tag.empty() ? fs::path(o.input).stem().string() : o.source_tag);
  save_labels(corpus.labels, o.out);
  std::cerr << "corpus: " << corpus.size() << " labels\n";

  if ((!o.queries_out.empty() || !o.query_emb.empty()) && o.prompts.empty())
    throw UsageError("--queries-out and --query-emb need --prompts");
  if (!o.query_emb.empty() && o.emb_out.empty()) throw UsageError("--query-emb needs --emb-out");
  if (o.prompts.empty()) return;
  const auto prompts = PromptSet::load(o.prompts);
  if (!o.queries_out.empty()) save_labels(expand_prompts(corpus, prompts), o.queries_out);
  if (!o.query_emb.empty()) {
    const auto per_query = load_emb(o.query_emb);
    save_embeddings(aggregate_prompt_embeddings(per_query, corpus.size(), prompts.size()), o.emb_out);
  }
}

// ---------------------------------------------------------------------------
// cluster

struct ClusterOptions {
  std::string emb;
  std::optional<std::size_t> clusters;
  std::string import_path;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-4;
  std::string out;
  std::string centroids_out;
};

void cmd_cluster(const ClusterOptions& o) {
  if (!o.clusters && o.import_path.empty()) throw UsageError("--clusters is required (or --import)");
  const auto features = load_emb(o.emb);
  ClusterAssignment assign;
  if (!o.import_path.empty()) {
    assign = import_assignments(o.import_path, static_cast<std::size_t>(features.rows()));
  } else {
    assign = spherical_kmeans(features, *o.clusters, KMeansOptions{o.max_iter, o.tol, o.seed});
    std::cerr << "k-means: " << assign.iterations_run << " iterations, mean cosine "
              << format_double(assign.objective_history.back()) << '\n';
  }
  export_assignments(assign, o.out);
  if (!o.centroids_out.empty()) {
    if (!assign.centroids) throw UsageError("imported assignments carry no centroids");
    save_embeddings(*assign.centroids, o.centroids_out);
  }
}

// ---------------------------------------------------------------------------
// mine

struct MineOptions {
  std::string img;
  std::string text;
  std::string corpus;
  std::string assign;
  std::string mined;
  std::string gt;
  std::size_t min_count = 100;
  std::size_t k = 0;
  double percentile = 0.95;
  std::string out;
};

void cmd_mine_posmine(const MineOptions& o) {
  const auto corpus = load_corpus_file(o.corpus);
  const auto images = load_emb(o.img);
  const auto text = load_emb(o.text);
  check_text_matches(text, corpus);
  const auto sets = posmine(zero_shot_assign(images, text), corpus, o.min_count);
  save_mined(sets, corpus, o.out);
  std::cerr << "posmine: |pos| = " << sets.pos.size() << '\n';
}

void cmd_mine_clustermine(const MineOptions& o) {
  const auto corpus = load_corpus_file(o.corpus);
  const auto images = load_emb(o.img);
  const auto text = load_emb(o.text);
  check_text_matches(text, corpus);
  const auto clusters = import_assignments(o.assign, static_cast<std::size_t>(images.rows()));
  const auto result = clustermine(zero_shot_assign(images, text), clusters, corpus);
  save_mined(result.sets, corpus, o.out);
  std::cerr << "clustermine: |pos| = " << result.sets.pos.size() << " from C = " << clusters.num_clusters << '\n';
}

void cmd_mine_neg(const MineOptions& o) {
  if (o.mined.empty() == o.gt.empty()) throw UsageError("give exactly one of --mined or --gt");
  if (o.k == 0) throw UsageError("--k must be at least 1");
  const auto corpus = load_corpus_file(o.corpus);
  const auto text = load_emb(o.text);
  check_text_matches(text, corpus);

  MinedLabelSets sets;
  if (!o.mined.empty()) {
    sets = load_mined(o.mined);
  } else {
    sets.method = MiningMethod::given_gt;
    sets.pos = indices_of_labels(corpus, load_labels(o.gt));
    if (sets.pos.empty()) throw Error(Errc::empty_input, "no ground-truth label occurs in the corpus");
  }
  const IndexSet candidates = complement_negatives(sets.pos, corpus);
  const IndexSet kept = negative_mine(text.select_rows(sets.pos), text.select_rows(candidates), o.k, o.percentile);
  sets.neg.clear();
  for (auto i : kept) sets.neg.push_back(candidates[i]);
  sets.params.k = o.k;
  sets.params.percentile = o.percentile;
  save_mined(sets, corpus, o.out);
  std::cerr << "negative mining: kept " << sets.neg.size() << " of " << candidates.size() << '\n';
}

// ---------------------------------------------------------------------------
// score

struct ScoreOptions {
  ScoreInputs inputs;
  double tau = 1e-3;
  std::size_t group_size = 0;
  std::uint64_t seed = 0;
  std::string out;
};

Eigen::VectorXd compute_scores(const std::string& method, const EmbeddingMatrix& images, const LabelEmbeddings& labels,
                               const ScoreConfig& cfg) {
  if (method == "posneg") return score_posneg(images, *labels.pos, *labels.neg, cfg);
  if (method == "mcm") return score_mcm(images, *labels.pos, cfg);
  if (method == "maxlogit") return score_maxlogit(images, *labels.pos);
  if (method == "energy") return score_energy(images, *labels.pos, cfg);
  if (method == "grouped") {
    if (!cfg.group_size) throw UsageError("grouped scoring needs --group-size");
    IndexSet local(static_cast<std::size_t>(labels.neg->rows()));
    for (std::size_t i = 0; i < local.size(); ++i) local[i] = i;
    std::vector<EmbeddingMatrix> groups;
    for (const auto& g : group_negatives(local, *cfg.group_size, cfg.seed)) groups.push_back(labels.neg->select_rows(g));
    if (groups.empty()) groups.push_back(EmbeddingMatrix::empty(images.dims()));
    return score_grouped(images, *labels.pos, groups, cfg);
  }
  throw UsageError("unknown score method '" + method + "'");
}

void cmd_score(const std::string& method, const ScoreOptions& o) {
  const auto images = load_emb(o.inputs.img);
  const auto labels = resolve_labels(o.inputs, static_cast<std::size_t>(images.dims()));
  ScoreConfig cfg;
  cfg.tau = o.tau;
  cfg.seed = o.seed;
  if (o.group_size > 0) cfg.group_size = o.group_size;
  save_scores(compute_scores(method, images, labels, cfg), o.out);
}

// ---------------------------------------------------------------------------
// eval / report

struct EvalOptions {
  std::string id;
  std::vector<std::string> ood;
  std::string method = "method";
  std::string id_name = "id";
  std::string out;
  std::string markdown;
  std::string mined;
  std::string corpus;
  std::string gt;
};

void cmd_eval(const EvalOptions& o) {
  const auto id_scores = load_scores(o.id);
  std::vector<EvalReport> sets;
  for (const auto& spec : o.ood) {
    const auto [name, path] = named_path(spec);
    sets.push_back(evaluate(id_scores, load_scores(path), o.method, name));
  }
  auto summary = summarize(o.method, o.id_name, std::move(sets));
  if (!o.gt.empty()) {
    if (o.mined.empty() || o.corpus.empty()) throw UsageError("--gt needs --mined and --corpus");
    const auto corpus = load_corpus_file(o.corpus);
    const auto mined = load_mined(o.mined);
    LabelList pos;
    for (auto i : mined.pos) {
      if (i >= corpus.size()) throw Error(Errc::invalid_argument, "mined index outside the corpus");
      pos.push_back(corpus.labels[i]);
    }
    summary.label_quality = label_f1_overlap(pos, load_labels(o.gt));
  }
  save_summary(summary, o.out);
  if (!o.markdown.empty())
    write_text_file(o.markdown, [&](std::ostream& out) { out << markdown_table(std::span(&summary, 1)); });
}

struct ReportOptions {
  std::vector<std::string> reports;
  std::vector<std::string> references;
  std::string markdown;
  std::string robust_out;
};

void cmd_report(const ReportOptions& o) {
  std::vector<EvalSummary> summaries;
  for (const auto& p : o.reports) summaries.push_back(load_summary(p));
  if (!o.references.empty()) {
    std::vector<EvalSummary> refs;
    for (const auto& p : o.references) refs.push_back(load_summary(p));
    const auto rows = robustness_rows(refs, summaries);
    auto emit = [&](std::ostream& out) {
      out << "method,id,reference_auroc,shifted_auroc,delta_percent\n";
      for (const auto& r : rows)
        out << r.method << ',' << r.id_name << ',' << format_double(r.reference_auroc) << ','
            << format_double(r.shifted_auroc) << ',' << format_double(r.delta_percent) << '\n';
    };
    if (o.robust_out.empty() || o.robust_out == "-")
      emit(std::cout);
    else
      write_text_file(o.robust_out, emit);
    if (o.markdown.empty()) return;
  }
  const auto table = markdown_table(summaries);
  if (o.markdown.empty() || o.markdown == "-")
    std::cout << table;
  else
    write_text_file(o.markdown, [&](std::ostream& out) { out << table; });
}

// ---------------------------------------------------------------------------
// sweeps

struct SweepOptions {
  std::string img;
  std::string text;
  std::string corpus;
  std::string mined;
  std::vector<std::string> ood;
  std::vector<std::size_t> values;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-4;
  double percentile = 0.95;
  double tau = 1e-3;
  std::string out;
};

struct DetectionQuality {
  double auroc = 0.0;
  double fpr = 0.0;
};

// Mean AUROC / FPR95 of posneg scores across the OOD sets.
DetectionQuality detection_quality(const EmbeddingMatrix& images, const std::vector<EmbeddingMatrix>& ood,
                                   const EmbeddingMatrix& pos, const EmbeddingMatrix& neg, double tau) {
  ScoreConfig cfg;
  cfg.tau = tau;
  const auto id_scores = to_vector(score_posneg(images, pos, neg, cfg));
  std::vector<double> aurocs;
  std::vector<double> fprs;
  for (const auto& o : ood) {
    const auto ood_scores = to_vector(score_posneg(o, pos, neg, cfg));
    aurocs.push_back(auroc(id_scores, ood_scores));
    fprs.push_back(fpr_at_tpr(id_scores, ood_scores));
  }
  return {mean_of(aurocs), mean_of(fprs)};
}

std::vector<EmbeddingMatrix> load_ood_embeddings(const std::vector<std::string>& specs) {
  std::vector<EmbeddingMatrix> out;
  for (const auto& spec : specs) out.push_back(load_emb(named_path(spec).second));
  return out;
}

void cmd_sweep_elbow(const SweepOptions& o) {
  const auto corpus = load_corpus_file(o.corpus);
  const auto images = load_emb(o.img);
  const auto text = load_emb(o.text);
  check_text_matches(text, corpus);
  const auto rows = elbow_sweep(images, text, corpus, o.values, KMeansOptions{o.max_iter, o.tol, o.seed});
  write_text_file(o.out, [&](std::ostream& out) { write_elbow_csv(out, rows); });
}

void cmd_sweep_neg_k(const SweepOptions& o) {
  if (o.ood.empty()) throw UsageError("--ood is required");
  const auto images = load_emb(o.img);
  const auto text = load_emb(o.text);
  const auto ood = load_ood_embeddings(o.ood);
  const auto sets = load_mined(o.mined);
  const auto candidates = complement_negatives(sets.pos, static_cast<std::size_t>(text.rows()));
  const auto pos = text.select_rows(sets.pos);
  const auto cand_text = text.select_rows(candidates);
  write_text_file(o.out, [&](std::ostream& out) {
    out << "K,n_neg,auroc,fpr95\n";
    for (auto k : o.values) {
      const auto kept = negative_mine(pos, cand_text, k, o.percentile);
      const auto q = detection_quality(images, ood, pos, cand_text.select_rows(kept), o.tau);
      out << k << ',' << kept.size() << ',' << format_double(q.auroc) << ',' << format_double(q.fpr) << '\n';
    }
  });
}

void cmd_sweep_min_count(const SweepOptions& o) {
  const auto corpus = load_corpus_file(o.corpus);
  const auto images = load_emb(o.img);
  const auto text = load_emb(o.text);
  check_text_matches(text, corpus);
  const auto ood = load_ood_embeddings(o.ood);
  const auto zs = zero_shot_assign(images, text);
  write_text_file(o.out, [&](std::ostream& out) {
    out << (ood.empty() ? "M,n_pos\n" : "M,n_pos,auroc,fpr95\n");
    for (auto m : o.values) {
      const auto sets = posmine(zs, corpus, m);
      out << m << ',' << sets.pos.size();
      if (!ood.empty()) {
        const auto q = detection_quality(images, ood, text.select_rows(sets.pos), text.select_rows(sets.neg), o.tau);
        out << ',' << format_double(q.auroc) << ',' << format_double(q.fpr);
      }
      out << '\n';
    }
  });
}

// ---------------------------------------------------------------------------
// synth

void cmd_synth(const PlantedParams& params, const std::string& out_dir) {
  const auto instance = generate_planted_instance(params);
  write_planted_instance(instance, out_dir);
}

// ---------------------------------------------------------------------------
// run-all

void cmd_run_all(const std::string& config_path) {
  std::ifstream in(config_path);
  if (!in) throw Error(Errc::io, "cannot open " + config_path);
  nlohmann::json cfg;
  try {
    in >> cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, config_path + ": " + e.what());
  }
  try {
    const fs::path out_dir = cfg.at("output_dir").get<std::string>();
    fs::create_directories(out_dir);
    const auto method = cfg.value("method", std::string("clustermine"));
    const auto seed = cfg.value("seed", std::uint64_t{0});

    const auto corpus = load_corpus_file(cfg.at("corpus").get<std::string>());
    const auto images = load_emb(cfg.at("images").get<std::string>());
    const auto text = load_emb(cfg.at("text").get<std::string>());
    check_text_matches(text, corpus);
    const auto zs = zero_shot_assign(images, text);

    MinedLabelSets sets;
    if (method == "clustermine") {
      ClusterAssignment clusters;
      if (cfg.contains("assignments")) {
        clusters = import_assignments(cfg["assignments"].get<std::string>(), static_cast<std::size_t>(images.rows()));
      } else {
        if (!cfg.contains("clusters")) throw UsageError("clustermine config needs \"clusters\"");
        clusters = spherical_kmeans(images, cfg["clusters"].get<std::size_t>(),
                                    KMeansOptions{cfg.value("max_iter", std::size_t{100}), cfg.value("tol", 1e-4), seed});
      }
      export_assignments(clusters, out_dir / "assign.txt");
      sets = clustermine(zs, clusters, corpus).sets;
    } else if (method == "posmine") {
      if (!cfg.contains("min_count")) throw UsageError("posmine config needs \"min_count\"");
      sets = posmine(zs, corpus, cfg["min_count"].get<std::size_t>());
    } else if (method == "given_gt") {
      if (!cfg.contains("gt")) throw UsageError("given_gt config needs \"gt\"");
      sets.method = MiningMethod::given_gt;
      sets.pos = indices_of_labels(corpus, load_labels(cfg["gt"].get<std::string>()));
      if (sets.pos.empty()) throw Error(Errc::empty_input, "no ground-truth label occurs in the corpus");
      sets.neg = complement_negatives(sets.pos, corpus);
    } else {
      throw UsageError("unknown method '" + method + "'");
    }
    if (cfg.contains("k") && !cfg["k"].is_null()) {
      const auto percentile = cfg.value("percentile", 0.95);
      const auto k = cfg["k"].get<std::size_t>();
      const auto kept = negative_mine(text.select_rows(sets.pos), text.select_rows(sets.neg), k, percentile);
      IndexSet neg;
      for (auto i : kept) neg.push_back(sets.neg[i]);
      sets.neg = std::move(neg);
      sets.params.k = k;
      sets.params.percentile = percentile;
    }
    save_mined(sets, corpus, out_dir / "mined.json");

    ScoreConfig score_cfg;
    score_cfg.tau = cfg.value("tau", 1e-3);
    score_cfg.seed = seed;
    if (cfg.contains("group_size") && !cfg["group_size"].is_null())
      score_cfg.group_size = cfg["group_size"].get<std::size_t>();
    LabelEmbeddings labels;
    labels.pos = text.select_rows(sets.pos);
    labels.neg = text.select_rows(sets.neg);
    const std::string score_method = score_cfg.group_size ? "grouped" : "posneg";

    const auto id_scores = compute_scores(score_method, images, labels, score_cfg);
    save_scores(id_scores, out_dir / "scores_id.csv");
    std::vector<EvalReport> reports;
    for (const auto& [name, path] : cfg.at("ood").get<std::map<std::string, std::string>>()) {
      const auto ood_scores = compute_scores(score_method, load_emb(path), labels, score_cfg);
      save_scores(ood_scores, out_dir / ("scores_" + name + ".csv"));
      reports.push_back(evaluate(to_vector(id_scores), to_vector(ood_scores), method, name));
    }
    auto summary = summarize(method, cfg.value("id_name", std::string("id")), std::move(reports));
    if (cfg.contains("gt")) {
      LabelList pos;
      for (auto i : sets.pos) pos.push_back(corpus.labels[i]);
      summary.label_quality = label_f1_overlap(pos, load_labels(cfg["gt"].get<std::string>()));
    }
    save_summary(summary, out_dir / "report.json");
    write_text_file((out_dir / "report.md").string(),
                    [&](std::ostream& out) { out << markdown_table(std::span(&summary, 1)); });
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, config_path + ": " + e.what());
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Label mining and OOD scoring in embedding space"};
  app.require_subcommand(1);
  std::function<void()> action;

  IngestOptions ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Deduplicate a raw corpus; optionally expand and aggregate prompts");
  ingest_cmd->add_option("--input", ingest.input, "Raw corpus, one label per line")->required();
  ingest_cmd->add_option("--policy", ingest.policy, "no_duplicates_one_lemma | duplicates_all_lemmas | duplicates_one_lemma");
  ingest_cmd->add_option("--source-tag", ingest.source_tag);
  ingest_cmd->add_option("--out", ingest.out, "Ingested corpus file")->required();
  ingest_cmd->add_option("--prompts", ingest.prompts, "Built-in prompt set name or JSON file");
  ingest_cmd->add_option("--queries-out", ingest.queries_out, "Write label-major prompt queries");
  ingest_cmd->add_option("--query-emb", ingest.query_emb, "Per-query EMB1 file from the exporter");
  ingest_cmd->add_option("--emb-out", ingest.emb_out, "Aggregated per-label EMB1 output");
  ingest_cmd->callback([&] { action = [&] { cmd_ingest(ingest); }; });

  ClusterOptions cluster;
  auto* cluster_cmd = app.add_subcommand("cluster", "Spherical k-means over image embeddings, or import assignments");
  cluster_cmd->add_option("--emb", cluster.emb, "Image embeddings (EMB1)")->required();
  cluster_cmd->add_option("--clusters", cluster.clusters, "Number of clusters C");
  cluster_cmd->add_option("--import", cluster.import_path, "Existing assignment file");
  cluster_cmd->add_option("--seed", cluster.seed);
  cluster_cmd->add_option("--max-iter", cluster.max_iter);
  cluster_cmd->add_option("--tol", cluster.tol);
  cluster_cmd->add_option("--out", cluster.out, "Assignment file, one index per line")->required();
  cluster_cmd->add_option("--centroids-out", cluster.centroids_out);
  cluster_cmd->callback([&] { action = [&] { cmd_cluster(cluster); }; });

  MineOptions mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine positive and negative label sets");
  mine_cmd->require_subcommand(1);
  auto* posmine_cmd = mine_cmd->add_subcommand("posmine", "Labels with at least M zero-shot assignments");
  posmine_cmd->add_option("--img", mine.img)->required();
  posmine_cmd->add_option("--text", mine.text)->required();
  posmine_cmd->add_option("--corpus", mine.corpus)->required();
  posmine_cmd->add_option("--min-count", mine.min_count, "M");
  posmine_cmd->add_option("--out", mine.out)->required();
  posmine_cmd->callback([&] { action = [&] { cmd_mine_posmine(mine); }; });
  auto* clustermine_cmd = mine_cmd->add_subcommand("clustermine", "Majority vote of zero-shot labels per cluster");
  clustermine_cmd->add_option("--assign", mine.assign)->required();
  clustermine_cmd->add_option("--img", mine.img)->required();
  clustermine_cmd->add_option("--text", mine.text)->required();
  clustermine_cmd->add_option("--corpus", mine.corpus)->required();
  clustermine_cmd->add_option("--out", mine.out)->required();
  clustermine_cmd->callback([&] { action = [&] { cmd_mine_clustermine(mine); }; });
  auto* neg_cmd = mine_cmd->add_subcommand("neg", "Keep the K negatives most distant from the positives");
  neg_cmd->add_option("--mined", mine.mined, "Mined set providing the positives");
  neg_cmd->add_option("--gt", mine.gt, "Ground-truth label file providing the positives");
  neg_cmd->add_option("--text", mine.text)->required();
  neg_cmd->add_option("--corpus", mine.corpus)->required();
  neg_cmd->add_option("--k", mine.k)->required();
  neg_cmd->add_option("--percentile", mine.percentile);
  neg_cmd->add_option("--out", mine.out)->required();
  neg_cmd->callback([&] { action = [&] { cmd_mine_neg(mine); }; });

  ScoreOptions score;
  auto* score_cmd = app.add_subcommand("score", "Per-image OOD scores");
  score_cmd->require_subcommand(1);
  for (const char* method : {"posneg", "grouped", "mcm", "maxlogit", "energy"}) {
    auto* sub = score_cmd->add_subcommand(method);
    sub->add_option("--img", score.inputs.img)->required();
    sub->add_option("--text", score.inputs.text, "Corpus text embeddings (with --mined)");
    sub->add_option("--mined", score.inputs.mined, "Mined label sets JSON");
    sub->add_option("--pos-emb", score.inputs.pos_emb);
    sub->add_option("--neg-emb", score.inputs.neg_emb);
    sub->add_option("--tau", score.tau);
    sub->add_option("--group-size", score.group_size);
    sub->add_option("--seed", score.seed);
    sub->add_option("--out", score.out)->required();
    const std::string name = method;
    sub->callback([&, name] { action = [&, name] { cmd_score(name, score); }; });
  }

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "AUROC / FPR95 of ID scores against OOD score files");
  eval_cmd->add_option("--id", eval.id)->required();
  eval_cmd->add_option("--ood", eval.ood, "NAME=PATH score file (repeatable)")->required();
  eval_cmd->add_option("--method", eval.method);
  eval_cmd->add_option("--id-name", eval.id_name);
  eval_cmd->add_option("--out", eval.out, "Report JSON")->required();
  eval_cmd->add_option("--markdown", eval.markdown);
  eval_cmd->add_option("--mined", eval.mined);
  eval_cmd->add_option("--corpus", eval.corpus);
  eval_cmd->add_option("--gt", eval.gt);
  eval_cmd->callback([&] { action = [&] { cmd_eval(eval); }; });

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Hyperparameter sweeps");
  sweep_cmd->require_subcommand(1);
  auto* elbow_cmd = sweep_cmd->add_subcommand("elbow", "ClusterMine at several C");
  elbow_cmd->add_option("--img", sweep.img)->required();
  elbow_cmd->add_option("--text", sweep.text)->required();
  elbow_cmd->add_option("--corpus", sweep.corpus)->required();
  elbow_cmd->add_option("--c-values", sweep.values)->required()->delimiter(',');
  elbow_cmd->add_option("--seed", sweep.seed);
  elbow_cmd->add_option("--max-iter", sweep.max_iter);
  elbow_cmd->add_option("--tol", sweep.tol);
  elbow_cmd->add_option("--out", sweep.out)->required();
  elbow_cmd->callback([&] { action = [&] { cmd_sweep_elbow(sweep); }; });
  auto* negk_cmd = sweep_cmd->add_subcommand("neg-k", "Detection quality as negatives are pruned to K");
  negk_cmd->add_option("--img", sweep.img)->required();
  negk_cmd->add_option("--ood", sweep.ood, "NAME=PATH OOD embeddings (repeatable)")->required();
  negk_cmd->add_option("--text", sweep.text)->required();
  negk_cmd->add_option("--mined", sweep.mined)->required();
  negk_cmd->add_option("--k-values", sweep.values)->required()->delimiter(',');
  negk_cmd->add_option("--percentile", sweep.percentile);
  negk_cmd->add_option("--tau", sweep.tau);
  negk_cmd->add_option("--out", sweep.out)->required();
  negk_cmd->callback([&] { action = [&] { cmd_sweep_neg_k(sweep); }; });
  auto* minc_cmd = sweep_cmd->add_subcommand("min-count", "PosMine at several M");
  minc_cmd->add_option("--img", sweep.img)->required();
  minc_cmd->add_option("--text", sweep.text)->required();
  minc_cmd->add_option("--corpus", sweep.corpus)->required();
  minc_cmd->add_option("--m-values", sweep.values)->required()->delimiter(',');
  minc_cmd->add_option("--ood", sweep.ood, "NAME=PATH OOD embeddings (repeatable)");
  minc_cmd->add_option("--tau", sweep.tau);
  minc_cmd->add_option("--out", sweep.out)->required();
  minc_cmd->callback([&] { action = [&] { cmd_sweep_min_count(sweep); }; });

  PlantedParams synth;
  std::string synth_dir;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-concept instance");
  synth_cmd->add_option("--out-dir", synth_dir)->required();
  synth_cmd->add_option("--concepts", synth.n_concepts);
  synth_cmd->add_option("--samples", synth.samples_per_concept);
  synth_cmd->add_option("--distractors", synth.n_distractors);
  synth_cmd->add_option("--dims", synth.dims);
  synth_cmd->add_option("--margin", synth.margin);
  synth_cmd->add_option("--noise", synth.noise);
  synth_cmd->add_option("--seed", synth.seed);
  synth_cmd->add_option("--n-ood", synth.n_ood);
  synth_cmd->add_option("--ood-directions", synth.n_ood_directions);
  synth_cmd->add_flag("--ood-near-distractors", synth.ood_near_distractors);
  synth_cmd->add_option("--max-direction-cos", synth.max_direction_cos);
  synth_cmd->callback([&] { action = [&] { cmd_synth(synth, synth_dir); }; });

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Tabulate eval reports; robustness deltas against references");
  report_cmd->add_option("reports", report.reports, "Eval report JSON files")->required();
  report_cmd->add_option("--markdown", report.markdown, "Markdown grid output ('-' for stdout)");
  report_cmd->add_option("--reference", report.references, "Reference-ID reports for robustness deltas");
  report_cmd->add_option("--robust-out", report.robust_out, "Robustness CSV output ('-' for stdout)");
  report_cmd->callback([&] { action = [&] { cmd_report(report); }; });

  std::string config_path;
  auto* run_all_cmd = app.add_subcommand("run-all", "Cluster, mine, score and evaluate from one JSON config");
  run_all_cmd->add_option("--config", config_path)->required();
  run_all_cmd->callback([&] { action = [&] { cmd_run_all(config_path); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    action();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace oodmine::cli
