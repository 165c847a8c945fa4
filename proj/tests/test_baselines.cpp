#include "baseline_oracles.hpp"
#include "doctest.h"
#include "wisynth/baselines.hpp"

using namespace wisynth;

namespace {

// dog, wolf, cat desired; caninae = dog + wolf; domestic = dog + cat;
// husky inside dog; felidae = cat + lion.
std::vector<oracle::NamedSet> animal_sets() {
  return {{"dog", Role::desired, {0, 1}},      {"wolf", Role::desired, {2}},   {"cat", Role::desired, {3}},
          {"caninae", Role::seen, {0, 1, 2}},  {"domestic", Role::seen, {0, 1, 3}}, {"husky", Role::seen, {0}},
          {"felidae", Role::seen, {3, 4}}};
}

IlfOutputMatrix one_row(std::size_t cols, std::vector<LabelId> votes) {
  IlfOutputMatrix m(0, cols);
  votes.resize(cols, kAbstain);
  m.push_row(votes);
  return m;
}

IlfOutputMatrix random_outputs(Rng& rng, const LabelGraph& g, std::size_t rows, std::size_t cols) {
  IlfOutputMatrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out.at(i, j) = uniform01(rng) < 0.2 ? kAbstain : g.seen()[uniform_index(rng, g.seen().size())];
  return out;
}

}  // namespace

TEST_CASE("LR-MV replaces votes by non-exclusive desired labels") {
  const auto sets = animal_sets();
  const LabelGraph g = oracle::graph_from_sets(sets);
  auto t = lr_mv(g, one_row(2, {g.id_of("caninae")}));
  CHECK(t.weights[0] == std::vector<double>{1, 1, 0});
  CHECK(t.predicted[0] == 0);  // tie, lowest index
  t = lr_mv(g, one_row(2, {g.id_of("caninae"), g.id_of("domestic")}));
  CHECK(t.weights[0] == std::vector<double>{2, 1, 1});
  CHECK(t.predicted[0] == 0);
  t = lr_mv(g, one_row(2, {}));
  CHECK(t.predicted[0] == kNoLabel);
}

TEST_CASE("W-LR-MV weights ancestors fully and splits the rest") {
  const auto sets = animal_sets();
  const LabelGraph g = oracle::graph_from_sets(sets);
  CHECK(w_lr_mv_vote_weights(g, g.id_of("husky"), WeightRule::non_ancestor) == std::vector<double>{1, 0, 0});
  CHECK(w_lr_mv_vote_weights(g, g.id_of("domestic"), WeightRule::non_ancestor) == std::vector<double>{0.5, 0, 0.5});
  // Both members sit strictly inside the vote, so the literal denominator is empty.
  bool flag = false;
  CHECK(w_lr_mv_vote_weights(g, g.id_of("domestic"), WeightRule::literal, &flag) == std::vector<double>{0, 0, 0});
  CHECK(flag);
  // felidae overlaps cat (neither contains the other): cat is its only member.
  CHECK(w_lr_mv_vote_weights(g, g.id_of("felidae"), WeightRule::non_ancestor) == std::vector<double>{0, 0, 1});
  CHECK(w_lr_mv(g, one_row(1, {})).predicted[0] == kNoLabel);
}

TEST_CASE("literal W-LR-MV rule flags an empty denominator") {
  // Vote v strictly contains a, which is the only member besides ancestors: the
  // literal denominator excludes a.
  const std::vector<oracle::NamedSet> sets = {
      {"a", Role::desired, {0}}, {"b", Role::desired, {1, 2}}, {"v", Role::seen, {0, 1}}};
  // b overlaps v; a is strictly inside v.
  const LabelGraph g = oracle::graph_from_sets(sets);
  bool flag = false;
  const auto w = w_lr_mv_vote_weights(g, g.id_of("v"), WeightRule::literal, &flag);
  CHECK_FALSE(flag);
  CHECK(w == std::vector<double>{1.0, 1.0});
  const std::vector<oracle::NamedSet> sets2 = {
      {"a", Role::desired, {0}}, {"b", Role::desired, {1}}, {"v", Role::seen, {0, 1}}};
  const LabelGraph g2 = oracle::graph_from_sets(sets2);
  const auto w2 = w_lr_mv_vote_weights(g2, g2.id_of("v"), WeightRule::literal, &flag);
  CHECK(flag);
  CHECK(w2 == std::vector<double>{0.0, 0.0});
  const auto t = w_lr_mv(g2, one_row(1, {g2.id_of("v")}), WeightRule::literal);
  REQUIRE(t.flags.size() == 1);
  CHECK(t.predicted[0] == kNoLabel);
  CHECK(w_lr_mv_vote_weights(g2, g2.id_of("v"), WeightRule::non_ancestor) == std::vector<double>{0.5, 0.5});
}

TEST_CASE("rule baselines match the set oracle on random graphs") {
  Rng rng = make_rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const int seen = 1 + static_cast<int>(uniform_index(rng, 12));
    const int desired = 2 + static_cast<int>(uniform_index(rng, 4));
    const auto sets = oracle::random_sets(rng, desired, seen, 2, 4);
    const LabelGraph g = oracle::graph_from_sets(sets);
    const IlfOutputMatrix out = random_outputs(rng, g, 20, 4);

    const VoteTally a = lr_mv(g, out);
    const auto ra = oracle::tally_ref(sets, g, out, 0);
    CHECK(a.weights == ra.weights);
    CHECK(a.predicted == ra.predicted);

    for (auto [rule, mode] : {std::pair{WeightRule::non_ancestor, 1}, std::pair{WeightRule::literal, 2}}) {
      const VoteTally w = w_lr_mv(g, out, rule);
      const auto rw = oracle::tally_ref(sets, g, out, mode);
      REQUIRE(w.weights.size() == rw.weights.size());
      for (std::size_t i = 0; i < w.weights.size(); ++i)
        for (std::size_t y = 0; y < w.weights[i].size(); ++y)
          CHECK(w.weights[i][y] == doctest::Approx(rw.weights[i][y]).epsilon(1e-12));
      CHECK(w.flags.size() == rw.flags);
    }
    for (LabelId v : g.seen()) {
      const auto w = w_lr_mv_vote_weights(g, v, WeightRule::non_ancestor);
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t y = 0; y < w.size(); ++y) {
        CHECK(w[y] >= 0.0);
        CHECK(w[y] <= 1.0);
        sum += w[y];
        n += g.relation(g.desired()[y], v) != Relation::exclusive;
      }
      CHECK(sum <= static_cast<double>(n) + 1e-12);
    }

    const auto S = enumerate_consistent_assignments(g);
    CHECK(S == oracle::consistent_assignments_ref(sets, g));
    for (LabelId y : g.desired()) CHECK(dap_label_attributes(g, S, y) == oracle::label_attributes_ref(sets, g, S, y));
    for (std::size_t i = 0; i < out.rows(); ++i) {
      const auto p = dap_point_attributes(g, S, out.row(i));
      const auto r = oracle::point_attributes_ref(sets, g, S, out.row(i));
      CHECK(p.conflict == r.conflict);
      CHECK(p.bits == r.bits);
    }
  }
}

TEST_CASE("LR-MV and W-LR-MV agree when every replaced set is a singleton") {
  Rng rng = make_rng(62);
  for (int trial = 0; trial < 50; ++trial) {
    // Each seen label lives inside one desired block.
    const int desired = 3;
    std::vector<oracle::NamedSet> sets;
    for (int d = 0; d < desired; ++d) sets.push_back({"y" + std::to_string(d), Role::desired, {3 * d, 3 * d + 1, 3 * d + 2}});
    for (int s = 0; s < 5; ++s) {
      const int d = static_cast<int>(uniform_index(rng, desired));
      oracle::AtomSet a = {3 * d + static_cast<int>(uniform_index(rng, 3))};
      if (uniform01(rng) < 0.5) a.insert(3 * d + static_cast<int>(uniform_index(rng, 3)));
      sets.push_back({"s" + std::to_string(s), Role::seen, a});
    }
    const LabelGraph g = oracle::graph_from_sets(sets);
    const IlfOutputMatrix out = random_outputs(rng, g, 10, 3);
    CHECK(lr_mv(g, out).weights == w_lr_mv(g, out).weights);
  }
}

TEST_CASE("consistent assignments: small cases and the cap") {
  const LabelGraph excl = oracle::graph_from_sets({{"y", Role::desired, {0}}, {"a", Role::seen, {0}}, {"b", Role::seen, {1}}});
  CHECK(enumerate_consistent_assignments(excl) == std::vector<BitVector>{{0, 0}, {1, 0}, {0, 1}});
  const LabelGraph sub = oracle::graph_from_sets({{"y", Role::desired, {0}}, {"a", Role::seen, {0}}, {"b", Role::seen, {0, 1}}});
  CHECK(enumerate_consistent_assignments(sub) == std::vector<BitVector>{{0, 0}, {0, 1}, {1, 1}});
  CHECK_THROWS_AS(enumerate_consistent_assignments(sub, 1), std::invalid_argument);

  const LabelGraph g = oracle::graph_from_sets(animal_sets());
  const auto S = enumerate_consistent_assignments(g);
  // The all-zero assignment supports every desired label.
  CHECK(S.front() == BitVector(g.seen().size(), 0));
  for (LabelId y : g.desired()) CHECK(dap_label_attributes(g, S, y).front() == 1);
  const auto none = dap_point_attributes(g, S, std::vector<LabelId>{kAbstain, kAbstain});
  CHECK_FALSE(none.conflict);
  CHECK(none.bits.front() == 1);
  const auto clash = dap_point_attributes(g, S, std::vector<LabelId>{g.id_of("husky"), g.id_of("felidae")});
  CHECK(clash.conflict);
  CHECK(std::count(clash.bits.begin(), clash.bits.end(), 1) == 0);
}

TEST_CASE("DAP prediction rule") {
  const std::vector<BitVector> attrs = {{1, 0}, {0, 1}};
  const std::vector<double> half = {0.5, 0.5};
  CHECK(dap_predict(half, attrs, half) == 0);  // tie
  CHECK(dap_predict(std::vector<double>{0.1, 0.9}, attrs, half) == 1);
  CHECK(dap_predict(std::vector<double>{0.9, 0.1}, attrs, half) == 0);
  // A zero prior is floored instead of dividing by zero.
  const double r = dap_predict(std::vector<double>{0.5, 0.5}, attrs, std::vector<double>{0.0, 1.0});
  CHECK((r == 0 || r == 1));
  // The literal rule is constant in the label, so it always returns the first.
  CHECK(dap_predict(std::vector<double>{0.1, 0.9}, attrs, half, DapRule::literal) == 0);
  CHECK_THROWS_AS(dap_predict(std::vector<double>{0.5}, attrs, half), std::invalid_argument);
}

TEST_CASE("DAP end to end on unambiguous votes") {
  const LabelGraph g = oracle::graph_from_sets(animal_sets());
  IlfOutputMatrix out(0, 1);
  for (int i = 0; i < 4; ++i) {
    out.push_row(std::vector<LabelId>{g.id_of("husky")});
    out.push_row(std::vector<LabelId>{g.id_of("felidae")});
  }
  const DapResult r = dap(g, out);
  CHECK(r.conflicts.empty());
  for (std::size_t i = 0; i < out.rows(); ++i) CHECK(r.predicted[i] == (i % 2 == 0 ? 0 : 2));
  const Matrix bad(3, std::vector<double>{1.0});
  CHECK_THROWS_AS(dap(g, out, &bad), std::invalid_argument);
}

TEST_CASE("noise-aware loss gradient matches finite differences") {
  Rng rng = make_rng(63);
  LinearClassifier clf{3, 2, {}};
  for (int i = 0; i < 9; ++i) clf.weights.push_back(uniform01(rng) - 0.5);
  Matrix x, t;
  for (int i = 0; i < 10; ++i) {
    x.push_back({uniform01(rng) * 2 - 1, uniform01(rng) * 2 - 1});
    std::vector<double> p = {uniform01(rng), uniform01(rng), uniform01(rng)};
    double s = p[0] + p[1] + p[2];
    for (double& v : p) v /= s;
    t.push_back(p);
  }
  t.push_back({0, 0, 0});
  x.push_back({0.3, 0.3});
  const double l2 = 0.1;
  const auto grad = noise_aware_gradient(clf, x, t, l2);
  for (std::size_t r = 0; r < clf.weights.size(); ++r) {
    LinearClassifier a = clf, b = clf;
    a.weights[r] += 1e-6;
    b.weights[r] -= 1e-6;
    const double fd = (noise_aware_loss(a, x, t, l2) - noise_aware_loss(b, x, t, l2)) / 2e-6;
    CHECK(std::abs(grad[r] - fd) < 1e-5);
  }
}

TEST_CASE("noise-aware linear model: symmetry and separable data") {
  const Matrix x = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  const Matrix uniform(4, std::vector<double>{0.5, 0.5});
  LinearClassifier zero{2, 2, std::vector<double>(6, 0.0)};
  for (double g : noise_aware_gradient(zero, x, uniform)) CHECK(g == doctest::Approx(0.0));

  const Matrix xs = {{2, 1}, {1, 2}, {-2, -1}, {-1, -2}};
  const Matrix onehot = {{1, 0}, {1, 0}, {0, 1}, {0, 1}};
  const LinearClassifier clf = train_noise_aware_linear(xs, onehot);
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(clf.predict(xs[i]) == (i < 2 ? 0 : 1));
  CHECK(train_noise_aware_linear(xs, onehot).weights == clf.weights);
  const Matrix nan = {{std::nan(""), 0}, {0, 0}, {0, 0}, {0, 0}};
  CHECK_THROWS_AS(train_noise_aware_linear(nan, onehot), std::invalid_argument);
}

TEST_CASE("desired targets drop the unknown column") {
  const std::vector<std::vector<double>> probs = {{0.2, 0.2, 0.6}, {0, 0, 1}};
  const Matrix t = desired_targets(probs, true);
  CHECK(t[0][0] == doctest::Approx(0.5));
  CHECK(t[0][1] == doctest::Approx(0.5));
  CHECK(t[1] == std::vector<double>{0, 0});
  CHECK(desired_targets(probs, false)[0] == probs[0]);
  CHECK(weight_rule_from_string("literal") == WeightRule::literal);
  CHECK_THROWS(weight_rule_from_string("x"));
}
