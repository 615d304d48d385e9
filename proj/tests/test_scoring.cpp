#include <doctest.h>

#include <cfloat>
#include <numeric>
#include <sstream>

#include "oodmine/error.hpp"
#include "oodmine/mining.hpp"
#include "oodmine/scoring.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace oodmine;

namespace {

ScoreConfig with_tau(double tau) {
  ScoreConfig c;
  c.tau = tau;
  return c;
}

EmbeddingMatrix rows_of(std::initializer_list<std::initializer_list<float>> rows) {
  RowMatrixXf m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (float v : r) m(i, j++) = v;
    ++i;
  }
  return EmbeddingMatrix(m);
}

// Relative agreement where the reference is a normal double, otherwise both must underflow.
bool close_relative(double got, long double want, double rel) {
  const auto w = static_cast<double>(want);
  if (std::abs(w) < DBL_MIN) return std::abs(got) < DBL_MIN;
  return std::abs(got - w) <= rel * std::abs(w);
}

}  // namespace

TEST_CASE("posneg examples") {
  gen::Rng rng(1);
  const auto img = gen::unit_rows(rng, 7, 5);
  const auto pos = gen::unit_rows(rng, 3, 5);
  const auto none = score_posneg(img, pos, EmbeddingMatrix::empty(5), with_tau(0.001));
  for (Index i = 0; i < none.size(); ++i) CHECK(none(i) == 1.0);

  const auto h = rows_of({{0.0f, 1.0f}});
  for (double tau : {0.001, 0.01, 1.0})
    CHECK(score_posneg(h, rows_of({{1.0f, 0.0f}}), rows_of({{-1.0f, 0.0f}}), with_tau(tau))(0) == 0.5);
}

TEST_CASE("posneg matches the unshifted long double oracle") {
  gen::Rng rng(2);
  const auto img = gen::unit_rows(rng, 20, 16);
  const auto pos = gen::unit_rows(rng, 5, 16);
  const auto neg = gen::unit_rows(rng, 50, 16);
  const auto s = score_posneg(img, pos, neg, with_tau(0.01));
  const auto o = oracle::posneg(img, pos, neg, 0.01);
  for (Index i = 0; i < s.size(); ++i) CHECK(close_relative(s(i), o[static_cast<std::size_t>(i)], 1e-9));
}

TEST_CASE("scoring errors") {
  gen::Rng rng(3);
  const auto img = gen::unit_rows(rng, 3, 4);
  const auto pos = gen::unit_rows(rng, 2, 4);
  const auto other = gen::unit_rows(rng, 2, 5);
  CHECK_THROWS_AS(score_posneg(img, EmbeddingMatrix::empty(4), pos, with_tau(0.1)), Error);
  CHECK_THROWS_AS(score_posneg(img, other, pos, with_tau(0.1)), Error);
  CHECK_THROWS_AS(score_posneg(img, pos, other, with_tau(0.1)), Error);
  CHECK_THROWS_AS(score_posneg(img, pos, pos, with_tau(0.0)), Error);
  CHECK_THROWS_AS(score_mcm(img, EmbeddingMatrix::empty(4), with_tau(0.1)), Error);
  CHECK_THROWS_AS(score_maxlogit(img, EmbeddingMatrix::empty(4)), Error);
  CHECK_THROWS_AS(score_energy(img, EmbeddingMatrix::empty(4), with_tau(0.1)), Error);
  CHECK_THROWS_AS(score_grouped(img, pos, std::span<const EmbeddingMatrix>{}, with_tau(0.1)), Error);
}

TEST_CASE("property: posneg range, monotonicity and permutation invariance") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 40; ++trial) {
    const auto d = rng.index(2, 12);
    const auto img = gen::unit_rows(rng, rng.index(1, 15), d);
    const auto pos = gen::unit_rows(rng, rng.index(1, 8), d);
    const auto neg = gen::unit_rows(rng, rng.index(1, 30), d);
    const auto cfg = with_tau(rng.uniform(0.05, 1.0));
    const auto s = score_posneg(img, pos, neg, cfg);
    CHECK((s.array() > 0.0).all());
    CHECK((s.array() <= 1.0).all());

    const auto pp = gen::permutation(rng, static_cast<std::size_t>(pos.rows()));
    const auto np = gen::permutation(rng, static_cast<std::size_t>(neg.rows()));
    const auto permuted = score_posneg(img, pos.select_rows(pp), neg.select_rows(np), cfg);
    CHECK((permuted - s).cwiseAbs().maxCoeff() <= 1e-12);

    // A duplicated negative adds mass to the denominator.
    std::vector<std::size_t> dup(static_cast<std::size_t>(neg.rows()));
    std::iota(dup.begin(), dup.end(), std::size_t{0});
    dup.push_back(rng.index(0, dup.size() - 1));
    CHECK((score_posneg(img, pos, neg.select_rows(dup), cfg).array() < s.array()).all());

    // Raising one positive's similarity to an image raises that image's score;
    // raising one negative's lowers it. Single image, single pos/neg label moved.
    const auto h = img.select_rows(std::vector<std::size_t>{0});
    const Eigen::RowVectorXf hv = h.data().row(0);
    RowMatrixXf p2 = pos.data();
    const Eigen::RowVectorXf toward = (0.5f * p2.row(0) + 0.5f * hv).normalized();
    if (toward.cast<double>().dot(hv.cast<double>()) > p2.row(0).cast<double>().dot(hv.cast<double>()) + 1e-3) {
      p2.row(0) = toward;
      CHECK(score_posneg(h, EmbeddingMatrix(p2), neg, cfg)(0) > score_posneg(h, pos, neg, cfg)(0));
      RowMatrixXf n2 = neg.data();
      n2.row(0) = (0.5f * n2.row(0) + 0.5f * hv).normalized();
      if (n2.row(0).cast<double>().dot(hv.cast<double>()) > neg.data().row(0).cast<double>().dot(hv.cast<double>()) + 1e-3)
        CHECK(score_posneg(h, pos, EmbeddingMatrix(n2), cfg)(0) < score_posneg(h, pos, neg, cfg)(0));
    }
  }
}

TEST_CASE("grouped scoring") {
  gen::Rng rng(5);
  const auto img = gen::unit_rows(rng, 30, 8);
  const auto pos = gen::unit_rows(rng, 4, 8);
  const auto neg = gen::unit_rows(rng, 45, 8);
  const auto cfg = with_tau(0.05);
  const auto base = score_posneg(img, pos, neg, cfg);

  const std::vector<EmbeddingMatrix> one{neg};
  CHECK(score_grouped(img, pos, one, cfg) == base);
  const std::vector<EmbeddingMatrix> twice{neg, neg};
  CHECK(score_grouped(img, pos, twice, cfg) == base);

  IndexSet all(45);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto groups = group_negatives(all, 15, 3);
  REQUIRE(groups.size() == 3);
  std::vector<EmbeddingMatrix> mats;
  for (const auto& g : groups) mats.push_back(neg.select_rows(g));
  const Eigen::VectorXd mean = (score_posneg(img, pos, mats[0], cfg) + score_posneg(img, pos, mats[1], cfg) +
                                score_posneg(img, pos, mats[2], cfg)) /
                               3.0;
  CHECK((score_grouped(img, pos, mats, cfg) - mean).cwiseAbs().maxCoeff() <= 1e-15);

  // A group size covering all negatives degenerates to plain posneg, exactly.
  for (std::size_t size : {45, 100}) {
    std::vector<EmbeddingMatrix> whole;
    for (const auto& g : group_negatives(all, size, 9)) whole.push_back(neg.select_rows(g));
    CHECK(score_grouped(img, pos, whole, cfg) == base);
  }
}

TEST_CASE("mcm examples and oracle") {
  gen::Rng rng(6);
  const auto img = gen::unit_rows(rng, 25, 10);
  const auto one = score_mcm(img, gen::unit_rows(rng, 1, 10), with_tau(0.01));
  for (Index i = 0; i < one.size(); ++i) CHECK(one(i) == 1.0);
  CHECK(score_mcm(rows_of({{0.0f, 1.0f}}), rows_of({{1.0f, 0.0f}, {-1.0f, 0.0f}}), with_tau(0.01))(0) == 0.5);

  const auto pos = gen::unit_rows(rng, 12, 10);
  for (double tau : {0.001, 0.01, 0.5}) {
    const auto s = score_mcm(img, pos, with_tau(tau));
    const auto o = oracle::mcm(img, pos, tau);
    for (Index i = 0; i < s.size(); ++i) CHECK(close_relative(s(i), o[static_cast<std::size_t>(i)], 1e-9));
  }
}

TEST_CASE("property: mcm range and shift invariance") {
  gen::Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const auto d = rng.index(3, 12);
    const auto k = rng.index(1, 10);
    const auto img = gen::unit_rows(rng, 10, d);
    const auto s = score_mcm(img, gen::unit_rows(rng, k, d), with_tau(rng.uniform(0.01, 1.0)));
    CHECK((s.array() >= 1.0 / static_cast<double>(k) - 1e-12).all());
    CHECK((s.array() <= 1.0).all());

    // Labels z_k = c u + s w_k with w_k orthogonal to u. Images a u + b v and
    // -a u + b v see logits shifted by the constant 2 a c.
    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Index>(d));
    u(0) = 1.0;
    const double c = rng.uniform(0.2, 0.9), sn = std::sqrt(1.0 - c * c), a = rng.uniform(0.1, 0.9);
    RowMatrixXf labels(static_cast<Index>(k), static_cast<Index>(d));
    for (std::size_t j = 0; j < k; ++j) {
      Eigen::VectorXd w(static_cast<Index>(d));
      for (auto& x : w) x = rng.normal();
      w(0) = 0.0;
      w.normalize();
      labels.row(static_cast<Index>(j)) = (c * u + sn * w).transpose().cast<float>();
    }
    Eigen::VectorXd v(static_cast<Index>(d));
    for (auto& x : v) x = rng.normal();
    v(0) = 0.0;
    v.normalize();
    const double b = std::sqrt(1.0 - a * a);
    RowMatrixXf imgs(2, static_cast<Index>(d));
    imgs.row(0) = (a * u + b * v).transpose().cast<float>();
    imgs.row(1) = (-a * u + b * v).transpose().cast<float>();
    const auto shifted = score_mcm(EmbeddingMatrix(imgs), EmbeddingMatrix(labels), with_tau(0.1));
    CHECK(std::abs(shifted(0) - shifted(1)) <= 1e-6);
  }
}

TEST_CASE("maxlogit and energy") {
  gen::Rng rng(8);
  const auto pos = gen::unit_rows(rng, 9, 6);
  CHECK(score_maxlogit(pos.select_rows(std::vector<std::size_t>{4}), pos)(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(score_maxlogit(rows_of({{0, 0, 1}}), rows_of({{1, 0, 0}, {0, 1, 0}}))(0) == 0.0);

  const auto img = gen::unit_rows(rng, 30, 6);
  const auto ml = score_maxlogit(img, pos);
  const auto mo = oracle::maxlogit(img, pos);
  for (Index i = 0; i < ml.size(); ++i) CHECK(std::abs(ml(i) - static_cast<double>(mo[static_cast<std::size_t>(i)])) <= 1e-12);

  const auto one = rows_of({{0.6f, 0.8f}});
  const auto h = rows_of({{1.0f, 0.0f}});
  const double c = static_cast<double>(h.data().row(0).cast<double>().dot(one.data().row(0).cast<double>()));
  CHECK(score_energy(h, one, with_tau(0.01))(0) == doctest::Approx(c).epsilon(1e-12));
  const auto two = rows_of({{0.6f, 0.8f}, {0.6f, -0.8f}});
  CHECK(score_energy(h, two, with_tau(0.01))(0) == doctest::Approx(c + 0.01 * std::log(2.0)).epsilon(1e-12));

  for (double tau : {0.001, 0.01, 0.3}) {
    const auto e = score_energy(img, pos, with_tau(tau));
    const auto o = oracle::energy(img, pos, tau);
    for (Index i = 0; i < e.size(); ++i) CHECK(close_relative(e(i), o[static_cast<std::size_t>(i)], 1e-9));
  }
}

TEST_CASE("score CSV round-trips exactly") {
  gen::Rng rng(9);
  Eigen::VectorXd s(50);
  for (auto& v : s) v = rng.uniform(0.0, 1.0) * std::pow(10.0, -rng.uniform(0.0, 300.0));
  s(0) = 1.0;
  s(1) = 0.0;
  testing_support::TempDir dir;
  save_scores(s, dir / "s.csv");
  const auto back = load_scores(dir / "s.csv");
  REQUIRE(back.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) CHECK(back[i] == s(static_cast<Index>(i)));
  CHECK(testing_support::read_file(dir / "s.csv").rfind("index,score\n0,1\n1,0\n", 0) == 0);

  std::istringstream bad_header("i,s\n0,1\n");
  CHECK_THROWS_AS(read_scores_csv(bad_header), Error);
  std::istringstream gap("index,score\n0,1\n2,1\n");
  CHECK_THROWS_AS(read_scores_csv(gap), Error);
  std::istringstream nan("index,score\n0,nan\n");
  CHECK_THROWS_AS(read_scores_csv(nan), Error);
  std::istringstream junk("index,score\n0,0.5x\n");
  CHECK_THROWS_AS(read_scores_csv(junk), Error);
}
