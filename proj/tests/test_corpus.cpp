#include <doctest.h>

#include <set>
#include <sstream>

#include "oodmine/corpus.hpp"
#include "oodmine/error.hpp"
#include "support/generators.hpp"
#include "support/tempdir.hpp"

using namespace oodmine;

namespace {

Corpus ingest(std::vector<std::string> lines, DedupPolicy policy = DedupPolicy::no_duplicates_one_lemma) {
  return ingest_corpus(lines, policy);
}

}  // namespace

TEST_CASE("case-folded duplicates keep the first occurrence") {
  CHECK(ingest({"bank", "Bank", "river"}).labels == LabelList{"bank", "river"});
  CHECK(ingest({"  Straße ", "STRASSE", "strasse"}).labels == LabelList{"Straße"});
}

TEST_CASE("pass-through policies keep duplicates") {
  CHECK(ingest({"a", "b", "a"}, DedupPolicy::duplicates_all_lemmas).labels == LabelList{"a", "b", "a"});
  CHECK(ingest({"a", "b", "a"}, DedupPolicy::duplicates_one_lemma).labels == LabelList{"a", "b", "a"});
}

TEST_CASE("blank lines are dropped") {
  CHECK(ingest({"", "  ", "cat"}).labels == LabelList{"cat"});
  std::istringstream in("\n\t\ncat\r\n dog \n");
  CHECK(ingest_corpus(in, DedupPolicy::duplicates_all_lemmas).labels == LabelList{"cat", "dog"});
}

TEST_CASE("ingest errors") {
  CHECK_THROWS_AS(ingest({"", " "}), Error);
  CHECK_THROWS_AS(ingest({"ok", "\xff\xfe"}), Error);
  CHECK_THROWS_AS(parse_dedup_policy("sometimes"), Error);
  for (auto p : {DedupPolicy::no_duplicates_one_lemma, DedupPolicy::duplicates_all_lemmas,
                 DedupPolicy::duplicates_one_lemma})
    CHECK(parse_dedup_policy(to_string(p)) == p);
}

TEST_CASE("property: ingest is idempotent and dedup output is fold-distinct") {
  gen::Rng rng(21);
  const std::vector<std::string> pool{"cat", "Cat", "CAT", " dog", "dog ", "Éclair", "éclair", "", "  ", "fish", "Fish"};
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> lines;
    const auto n = rng.index(1, 25);
    for (std::size_t i = 0; i < n; ++i) lines.push_back(pool[rng.index(0, pool.size() - 1)]);
    lines.push_back("anchor");
    for (auto policy : {DedupPolicy::no_duplicates_one_lemma, DedupPolicy::duplicates_all_lemmas}) {
      const auto once = ingest_corpus(lines, policy);
      CHECK(ingest_corpus(once.labels, policy).labels == once.labels);
      if (policy == DedupPolicy::no_duplicates_one_lemma) {
        std::set<std::string> keys;
        for (const auto& l : once.labels) keys.insert(dedup_key(l));
        CHECK(keys.size() == once.labels.size());
      }
    }
  }
}

TEST_CASE("expand_prompts is label-major") {
  Corpus dog{{"dog"}, "t", DedupPolicy::no_duplicates_one_lemma};
  CHECK(expand_prompts(dog, PromptSet("one", {"a photo of the small {label}"})) ==
        LabelList{"a photo of the small dog"});

  Corpus two{{"cat", "dog"}, "t", DedupPolicy::no_duplicates_one_lemma};
  const auto q = expand_prompts(two, PromptSet::simple());
  REQUIRE(q.size() == 14);
  for (std::size_t j = 0; j < 7; ++j) {
    CHECK(q[j].find("cat") != std::string::npos);
    CHECK(q[7 + j].find("dog") != std::string::npos);
  }
  CHECK(q[0] == "itap of a cat");
}

TEST_CASE("prompt sets") {
  const auto simple = PromptSet::simple();
  CHECK(simple.size() == 7);
  CHECK(simple.templates()[0] == "itap of a {label}");
  CHECK_THROWS_AS(PromptSet("bad", {"no placeholder"}), Error);
  CHECK_THROWS_AS(PromptSet("bad", {"{label} and {label}"}), Error);
  CHECK_THROWS_AS(PromptSet("bad", {}), Error);

  testing_support::TempDir dir;
  testing_support::write_file(dir / "p.json", R"(["a {label}", "the {label}!"])");
  const auto loaded = PromptSet::load((dir / "p.json").string());
  CHECK(loaded.name() == "p");
  CHECK(loaded.apply(1, "fox") == "the fox!");
  testing_support::write_file(dir / "bad.json", R"({"x": 1})");
  CHECK_THROWS_AS(PromptSet::load((dir / "bad.json").string()), Error);
  CHECK_THROWS_AS(PromptSet::load("not-a-set"), Error);
}

TEST_CASE("aggregation examples") {
  gen::Rng rng(1);
  const auto rows = gen::unit_rows(rng, 6, 5);
  const auto same = aggregate_prompt_embeddings(rows, 6, 1);
  CHECK((same.data() - rows.data()).cwiseAbs().maxCoeff() <= 1e-7f);

  RowMatrixXf two(2, 2);
  two << 1, 0, 0, 1;
  const auto mean = aggregate_prompt_embeddings(EmbeddingMatrix(two), 1, 2);
  CHECK(mean.data()(0, 0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-7));
  CHECK(mean.data()(0, 1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-7));

  CHECK_THROWS_AS(aggregate_prompt_embeddings(rows, 2, 4), Error);
  CHECK_THROWS_AS(aggregate_prompt_embeddings(rows, 4, 2), Error);
  RowMatrixXf opposite(2, 2);
  opposite << 1, 0, -1, 0;
  CHECK_THROWS_AS(aggregate_prompt_embeddings(EmbeddingMatrix(opposite), 1, 2), Error);
}

TEST_CASE("aggregation matches the loop oracle") {
  gen::Rng rng(2);
  const std::size_t L = 5, P = 7, D = 12;
  const auto q = gen::unit_rows(rng, L * P, D);
  const auto agg = aggregate_prompt_embeddings(q, L, P);
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<double> mean(D, 0.0);
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t d = 0; d < D; ++d) mean[d] += q.data()(static_cast<Index>(l * P + p), static_cast<Index>(d));
    double norm = 0.0;
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < D; ++d)
      CHECK(std::abs(agg.data()(static_cast<Index>(l), static_cast<Index>(d)) - mean[d] / norm) <= 1e-6);
    CHECK(std::abs(agg.data().row(static_cast<Index>(l)).cast<double>().norm() - 1.0) <= 1e-6);
  }
}

TEST_CASE("property: permuting one label's prompts leaves its embedding unchanged") {
  gen::Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto L = rng.index(1, 6), P = rng.index(1, 9), D = rng.index(2, 20);
    const auto q = gen::unit_rows(rng, L * P, D);
    std::vector<std::size_t> order(L * P);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto l = rng.index(0, L - 1);
    std::shuffle(order.begin() + static_cast<std::ptrdiff_t>(l * P),
                 order.begin() + static_cast<std::ptrdiff_t>((l + 1) * P), rng.engine());
    const auto a = aggregate_prompt_embeddings(q, L, P);
    const auto b = aggregate_prompt_embeddings(q.select_rows(order), L, P);
    CHECK((a.data() - b.data()).cwiseAbs().maxCoeff() <= 1e-6f);
  }
}
