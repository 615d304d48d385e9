#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <nlohmann/json.hpp>

#include "oodmine/clustering.hpp"
#include "oodmine/mining.hpp"
#include "oodmine/report.hpp"
#include "oodmine/scoring.hpp"
#include "support/tempdir.hpp"

using namespace oodmine;
using testing_support::TempDir;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(OODMINE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

// A synthetic instance shared by the tests below, written once per process.
struct Fixture {
  TempDir dir;
  std::filesystem::path s;
  Fixture() : s(dir / "synth") {
    REQUIRE(run("synth --out-dir " + q(s) + " --seed 1 --n-ood 300") == 0);
  }
  std::string paths() const {
    return " --img " + q(s / "id.emb") + " --text " + q(s / "corpus.emb") + " --corpus " + q(s / "corpus.txt");
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

nlohmann::json read_json(const std::filesystem::path& p) {
  return nlohmann::json::parse(testing_support::read_file(p));
}

}  // namespace

TEST_CASE("usage errors exit 2, runtime errors exit 1") {
  auto& f = fixture();
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("cluster --emb " + q(f.s / "id.emb") + " --out " + q(f.dir / "a.txt")) == 2);
  CHECK(run("cluster --emb " + q(f.s / "id.emb") + " --clusters 40 --bogus-flag --out " + q(f.dir / "a.txt")) == 2);
  CHECK(run("cluster --emb " + q(f.s / "id.emb") + " --clusters 999999 --out " + q(f.dir / "a.txt")) == 1);
  CHECK(run("cluster --emb " + q(f.dir / "missing.emb") + " --clusters 2 --out " + q(f.dir / "a.txt")) == 1);
}

TEST_CASE("cluster writes a 40-cluster assignment that matches the planted concepts") {
  auto& f = fixture();
  REQUIRE(run("cluster --emb " + q(f.s / "id.emb") + " --clusters 40 --seed 1 --out " + q(f.dir / "assign.txt") +
              " --centroids-out " + q(f.dir / "cent.emb")) == 0);
  const auto images = load_embeddings(f.s / "id.emb");
  const auto assign = import_assignments(f.dir / "assign.txt", static_cast<std::size_t>(images.rows()));
  CHECK(assign.num_clusters <= 40);
  CHECK(load_embeddings(f.dir / "cent.emb").rows() == 40);
  const auto truth = read_json(f.s / "truth.json");
  const auto concepts = truth.at("image_concepts").get<std::vector<std::size_t>>();
  CHECK(cluster_purity(assign, concepts).weighted_mean >= 0.95);
}

TEST_CASE("mine clustermine equals the library result") {
  auto& f = fixture();
  REQUIRE(run("cluster --emb " + q(f.s / "id.emb") + " --clusters 40 --seed 2 --out " + q(f.dir / "a2.txt")) == 0);
  REQUIRE(run("mine clustermine --assign " + q(f.dir / "a2.txt") + f.paths() + " --out " + q(f.dir / "cm.json")) == 0);
  const auto images = load_embeddings(f.s / "id.emb");
  const auto text = load_embeddings(f.s / "corpus.emb");
  const Corpus corpus{load_labels(f.s / "corpus.txt"), "synth", DedupPolicy::no_duplicates_one_lemma};
  const auto lib = clustermine(zero_shot_assign(images, text),
                               import_assignments(f.dir / "a2.txt", static_cast<std::size_t>(images.rows())), corpus);
  const auto cli = load_mined(f.dir / "cm.json");
  CHECK(cli.pos == lib.sets.pos);
  CHECK(cli.neg == lib.sets.neg);
  CHECK(*cli.params.clusters == 40);
  CHECK(std::filesystem::exists(f.dir / "cm.labels.txt"));
}

TEST_CASE("mine posmine and neg") {
  auto& f = fixture();
  REQUIRE(run("mine posmine --min-count 100" + f.paths() + " --out " + q(f.dir / "pm.json")) == 0);
  const auto pm = read_json(f.dir / "pm.json");
  CHECK(pm.at("method") == "posmine");
  CHECK(pm.at("params").at("M") == 100);
  CHECK(pm.at("pos").size() == 20);

  REQUIRE(run("mine neg --mined " + q(f.dir / "pm.json") + " --text " + q(f.s / "corpus.emb") + " --corpus " +
              q(f.s / "corpus.txt") + " --k 48 --percentile 0.95 --out " + q(f.dir / "neg.json")) == 0);
  const auto neg = load_mined(f.dir / "neg.json");
  CHECK(neg.neg.size() == 48);
  CHECK(*neg.params.k == 48);
  REQUIRE(run("mine neg --mined " + q(f.dir / "pm.json") + " --text " + q(f.s / "corpus.emb") + " --corpus " +
              q(f.s / "corpus.txt") + " --k 40000 --out " + q(f.dir / "all.json")) == 0);
  CHECK(load_mined(f.dir / "all.json").neg.size() == 480);

  REQUIRE(run("mine neg --gt " + q(f.s / "planted.txt") + " --text " + q(f.s / "corpus.emb") + " --corpus " +
              q(f.s / "corpus.txt") + " --k 10 --out " + q(f.dir / "gt.json")) == 0);
  CHECK(read_json(f.dir / "gt.json").at("method") == "given_gt");
  CHECK(run("mine neg --text " + q(f.s / "corpus.emb") + " --corpus " + q(f.s / "corpus.txt") + " --k 10 --out " +
            q(f.dir / "x.json")) == 2);
  CHECK(run("mine posmine --min-count 100000" + f.paths() + " --out " + q(f.dir / "none.json")) == 1);
}

TEST_CASE("score commands") {
  auto& f = fixture();
  REQUIRE(run("mine posmine --min-count 100" + f.paths() + " --out " + q(f.dir / "p.json")) == 0);
  const std::string common = " --img " + q(f.s / "id.emb") + " --text " + q(f.s / "corpus.emb");
  REQUIRE(run("score posneg" + common + " --mined " + q(f.dir / "p.json") + " --out " + q(f.dir / "pn.csv")) == 0);
  const auto pn = load_scores(f.dir / "pn.csv");
  CHECK(pn.size() == 4000);
  for (double v : pn) CHECK((v > 0.0 && v <= 1.0));

  auto j = read_json(f.dir / "p.json");
  j["neg"] = nlohmann::json::array();
  testing_support::write_file(f.dir / "noneg.json", j.dump());
  REQUIRE(run("score posneg" + common + " --mined " + q(f.dir / "noneg.json") + " --out " + q(f.dir / "one.csv")) == 0);
  for (double v : load_scores(f.dir / "one.csv")) CHECK(v == 1.0);

  const auto text = load_embeddings(f.s / "corpus.emb");
  save_embeddings(text.select_rows(std::vector<std::size_t>{3}), f.dir / "single.emb");
  REQUIRE(run("score mcm --img " + q(f.s / "id.emb") + " --pos-emb " + q(f.dir / "single.emb") + " --out " +
              q(f.dir / "mcm.csv")) == 0);
  for (double v : load_scores(f.dir / "mcm.csv")) CHECK(v == 1.0);

  for (const char* m : {"maxlogit", "energy"})
    CHECK(run(std::string("score ") + m + common + " --mined " + q(f.dir / "p.json") + " --out " +
              q(f.dir / (std::string(m) + ".csv"))) == 0);
  CHECK(run("score grouped" + common + " --mined " + q(f.dir / "p.json") + " --group-size 100 --seed 3 --out " +
            q(f.dir / "g.csv")) == 0);
  CHECK(run("score grouped" + common + " --mined " + q(f.dir / "p.json") + " --out " + q(f.dir / "g2.csv")) == 2);
  CHECK(run("score posneg --img " + q(f.s / "id.emb") + " --out " + q(f.dir / "z.csv")) == 2);
}

TEST_CASE("eval reports per-set rows and their mean") {
  TempDir dir;
  Eigen::VectorXd id(4), ood(3);
  id << 0.9, 0.8, 0.95, 0.7;
  ood << 0.1, 0.2, 0.3;
  save_scores(id, dir / "id.csv");
  save_scores(ood, dir / "perfect.csv");
  REQUIRE(run("eval --id " + q(dir / "id.csv") + " --ood p=" + q(dir / "perfect.csv") + " --method m --out " +
              q(dir / "r.json")) == 0);
  const auto r = load_summary(dir / "r.json");
  CHECK(r.sets[0].auroc == 1.0);
  CHECK(r.sets[0].fpr_at_95tpr == 0.0);

  std::string oods;
  std::vector<double> aurocs;
  for (int k = 0; k < 6; ++k) {
    Eigen::VectorXd o(5);
    o << 0.75 + 0.01 * k, 0.1, 0.85, 0.2 * k, 0.5;
    save_scores(o, dir / ("o" + std::to_string(k) + ".csv"));
    oods += " --ood set" + std::to_string(k) + "=" + q(dir / ("o" + std::to_string(k) + ".csv"));
  }
  REQUIRE(run("eval --id " + q(dir / "id.csv") + oods + " --method m --out " + q(dir / "six.json") + " --markdown " +
              q(dir / "six.md")) == 0);
  const auto six = load_summary(dir / "six.json");
  REQUIRE(six.sets.size() == 6);
  double a = 0, f = 0;
  for (const auto& s : six.sets) {
    a += s.auroc;
    f += s.fpr_at_95tpr;
  }
  CHECK(six.mean_auroc == doctest::Approx(a / 6).epsilon(1e-15));
  CHECK(six.mean_fpr_at_95tpr == doctest::Approx(f / 6).epsilon(1e-15));
  CHECK(testing_support::read_file(dir / "six.md").find("| Average |") != std::string::npos);

  testing_support::write_file(dir / "empty.csv", "index,score\n");
  CHECK(run("eval --id " + q(dir / "id.csv") + " --ood e=" + q(dir / "empty.csv") + " --out " + q(dir / "e.json")) == 1);
  testing_support::write_file(dir / "broken.csv", "index,score\n0,0.5\n5,0.1\n");
  CHECK(run("eval --id " + q(dir / "id.csv") + " --ood b=" + q(dir / "broken.csv") + " --out " + q(dir / "b.json")) == 1);
  CHECK_FALSE(std::filesystem::exists(dir / "e.json"));
}

TEST_CASE("report renders the grid and robustness deltas") {
  TempDir dir;
  EvalReport a;
  a.ood_name = "x";
  a.auroc = 0.9;
  a.fpr_at_95tpr = 0.2;
  save_summary(summarize("M", "imagenet", {a}), dir / "ref.json");
  a.auroc = 0.81;
  save_summary(summarize("M", "imagenet-r", {a}), dir / "shift.json");
  REQUIRE(run("report " + q(dir / "ref.json") + " --markdown " + q(dir / "t.md")) == 0);
  CHECK(testing_support::read_file(dir / "t.md") == "| Method | x | Average |\n|---|---|---|\n| M | 90.00 / 20.00 | 90.00 / 20.00 |\n");
  REQUIRE(run("report " + q(dir / "shift.json") + " --reference " + q(dir / "ref.json") + " --robust-out " +
              q(dir / "r.csv")) == 0);
  const auto csv = testing_support::read_file(dir / "r.csv");
  CHECK(csv.rfind("method,id,reference_auroc,shifted_auroc,delta_percent\nM,imagenet-r,0.9", 0) == 0);
  const auto last = csv.substr(csv.rfind(',') + 1);
  CHECK(std::stod(last) == doctest::Approx(-10.0).epsilon(1e-12));
}

TEST_CASE("ingest deduplicates, expands prompts and aggregates") {
  TempDir dir;
  testing_support::write_file(dir / "raw.txt", "Dog\n\ncat\n dog \nfox\n");
  REQUIRE(run("ingest --input " + q(dir / "raw.txt") + " --out " + q(dir / "c.txt") + " --prompts simple --queries-out " +
              q(dir / "q.txt")) == 0);
  CHECK(load_labels(dir / "c.txt") == LabelList{"Dog", "cat", "fox"});
  const auto queries = load_labels(dir / "q.txt");
  REQUIRE(queries.size() == 21);
  CHECK(queries[0] == "itap of a Dog");

  RowMatrixXf per_query = RowMatrixXf::Random(21, 8);
  save_embeddings(EmbeddingMatrix(per_query), dir / "q.emb");
  REQUIRE(run("ingest --input " + q(dir / "raw.txt") + " --out " + q(dir / "c2.txt") + " --prompts simple --query-emb " +
              q(dir / "q.emb") + " --emb-out " + q(dir / "c.emb")) == 0);
  CHECK(load_embeddings(dir / "c.emb").rows() == 3);
  CHECK(run("ingest --input " + q(dir / "raw.txt") + " --out " + q(dir / "c3.txt") + " --query-emb " +
            q(dir / "q.emb")) == 2);
}

TEST_CASE("sweeps write CSV tables") {
  auto& f = fixture();
  REQUIRE(run("sweep elbow" + f.paths() + " --c-values 20,40 --out " + q(f.dir / "elbow.csv")) == 0);
  CHECK(testing_support::read_file(f.dir / "elbow.csv").rfind("C,n_pos,ratio,redundancy\n20,", 0) == 0);
  REQUIRE(run("sweep min-count" + f.paths() + " --m-values 1,100 --ood o=" + q(f.s / "ood.emb") + " --out " +
              q(f.dir / "m.csv")) == 0);
  CHECK(testing_support::read_file(f.dir / "m.csv").rfind("M,n_pos,auroc,fpr95\n1,", 0) == 0);
  REQUIRE(run("mine posmine --min-count 100" + f.paths() + " --out " + q(f.dir / "pk.json")) == 0);
  REQUIRE(run("sweep neg-k --img " + q(f.s / "id.emb") + " --ood o=" + q(f.s / "ood.emb") + " --text " +
              q(f.s / "corpus.emb") + " --mined " + q(f.dir / "pk.json") + " --k-values 48,480 --out " +
              q(f.dir / "nk.csv")) == 0);
  CHECK(testing_support::read_file(f.dir / "nk.csv").rfind("K,n_neg,auroc,fpr95\n48,48,", 0) == 0);
}

TEST_CASE("run-all chains the pipeline from a config") {
  auto& f = fixture();
  const auto out = f.dir / "run";
  const nlohmann::json cfg{{"images", (f.s / "id.emb").string()},
                           {"text", (f.s / "corpus.emb").string()},
                           {"corpus", (f.s / "corpus.txt").string()},
                           {"ood", {{"synth", (f.s / "ood.emb").string()}}},
                           {"method", "clustermine"},
                           {"clusters", 40},
                           {"seed", 1},
                           {"tau", 0.001},
                           {"gt", (f.s / "planted.txt").string()},
                           {"output_dir", out.string()}};
  testing_support::write_file(f.dir / "cfg.json", cfg.dump());
  REQUIRE(run("run-all --config " + q(f.dir / "cfg.json")) == 0);
  const auto report = load_summary(out / "report.json");
  CHECK(report.label_quality->f1 == 1.0);
  CHECK(report.sets[0].n_id == 4000);
  CHECK(std::filesystem::exists(out / "report.md"));

  auto missing = cfg;
  missing.erase("clusters");
  testing_support::write_file(f.dir / "bad.json", missing.dump());
  CHECK(run("run-all --config " + q(f.dir / "bad.json")) == 2);
}
