#include "doctest.h"
#include "gradcheck.hpp"
#include "udkit/graph_decode.hpp"

using namespace udkit;
using namespace udkit::decode;

namespace {

Matrix random_scores(int n, Rng& rng) { return gradcheck::random_matrix(n + 1, n, rng); }

}  // namespace

TEST_CASE("single word attaches to the root") {
  Matrix s(2, 1);
  s << -3.0, 100.0;
  CHECK(max_arborescence(s) == std::vector<int>{0});
  CHECK(brute_force_arborescence(s) == std::vector<int>{0});
}

TEST_CASE("two-word tie resolves to the lower root index") {
  // rows = heads (root, 1, 2); columns = dependents (1, 2)
  Matrix s(3, 2);
  s << 1, 1,
       0, 5,
       5, 0;
  CHECK(brute_force_arborescence(s) == std::vector<int>{0, 1});
  CHECK(max_arborescence(s) == std::vector<int>{0, 1});
}

TEST_CASE("single-root constraint overrides a higher-scoring forest") {
  Matrix s(4, 3);
  s << 10, 10, 10,
        0,  1,  1,
        1,  0,  1,
        1,  1,  0;
  const auto heads = max_arborescence(s);
  CHECK(is_single_rooted_tree(heads));
  CHECK(tree_score(s, heads) == tree_score(s, brute_force_arborescence(s)));
}

TEST_CASE("brute force refuses n > 7") {
  Rng rng(1);
  CHECK_THROWS_AS(brute_force_arborescence(random_scores(8, rng)), std::invalid_argument);
  CHECK_THROWS_AS(max_arborescence(Matrix::Zero(2, 2)), std::invalid_argument);
}

TEST_CASE("property: optimal score equals brute force for n <= 6") {
  Rng rng(2);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 150; ++trial) {
      const Matrix s = random_scores(n, rng);
      const auto fast = max_arborescence(s);
      const auto slow = brute_force_arborescence(s);
      REQUIRE(is_single_rooted_tree(fast));
      CHECK(std::abs(tree_score(s, fast) - tree_score(s, slow)) < 1e-9);
    }
  }
}

TEST_CASE("property: integer-valued scores with many ties still decode optimally") {
  Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(5));
    Matrix s(n + 1, n);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = static_cast<double>(rng.below(3));
    const auto fast = max_arborescence(s);
    REQUIRE(is_single_rooted_tree(fast));
    CHECK(tree_score(s, fast) == tree_score(s, brute_force_arborescence(s)));
  }
}

TEST_CASE("property: decoded trees are valid for n up to 30") {
  Rng rng(4);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(30));
    CHECK(is_single_rooted_tree(max_arborescence(random_scores(n, rng))));
  }
}

TEST_CASE("property: shifting every score keeps the tree") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(10));
    const Matrix s = random_scores(n, rng);
    const auto heads = max_arborescence(s);
    const Matrix shifted = (s.array() + 7.25).matrix();
    CHECK(max_arborescence(shifted) == heads);
    CHECK(tree_score(shifted, heads) == doctest::Approx(tree_score(s, heads) + 7.25 * n));
  }
}

TEST_CASE("self-arc scores are ignored") {
  Rng rng(6);
  Matrix s = random_scores(4, rng);
  for (int d = 0; d < 4; ++d) s(d + 1, d) = 1e6;
  const auto heads = max_arborescence(s);
  CHECK(is_single_rooted_tree(heads));
  for (int d = 0; d < 4; ++d) CHECK(heads[static_cast<std::size_t>(d)] != d + 1);
}
