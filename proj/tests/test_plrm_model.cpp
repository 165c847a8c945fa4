#include "doctest.h"
#include "oracles.hpp"
#include "wisynth/plrm_model.hpp"

using namespace wisynth;

namespace {

struct Fixture {
  std::vector<oracle::NamedSet> sets;
  LabelGraph graph;
  std::vector<IlfSpec> ilfs;
};

Fixture random_fixture(Rng& rng, int desired, int seen, int n) {
  auto sets = oracle::random_sets(rng, desired, seen);
  LabelGraph g = oracle::graph_from_sets(sets);
  auto ilfs = oracle::random_ilfs(rng, g, n);
  return {std::move(sets), std::move(g), std::move(ilfs)};
}

std::vector<IlfSpec> pets_ilfs(const LabelGraph& g) {
  auto sorted = [](std::vector<LabelId> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return {{0, sorted({g.id_of("Dog"), g.id_of("Cat")}), true},
          {1, sorted({g.id_of("Dog"), g.id_of("Persian Cat")}), true},
          {2, sorted({g.id_of("Cat"), g.id_of("Persian Cat")}), false}};
}

}  // namespace

TEST_CASE("relation factor table") {
  using R = Relation;
  CHECK(relation_factor(R::exclusive, true, true) == -1);
  CHECK(relation_factor(R::exclusive, true, false) == 0);
  CHECK(relation_factor(R::overlapping, true, true) == 1);
  CHECK(relation_factor(R::overlapping, false, true) == 0);
  CHECK(relation_factor(R::subsuming, false, true) == -1);
  CHECK(relation_factor(R::subsuming, true, false) == 0);
  CHECK(relation_factor(R::subsumed, true, false) == -1);
  CHECK(relation_factor(R::subsumed, false, true) == 0);
  for (Relation r : kAllRelations) CHECK(relation_factor(r, false, false) == 0);
}

TEST_CASE("relation factors never penalise memberships that sets allow") {
  Rng rng = make_rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const auto sets = oracle::random_sets(rng, 2, 2, 3, 3);
    const auto& a = sets[0].atoms;
    const auto& b = sets[1].atoms;
    const Relation t = oracle::set_relation(a, b);
    for (int x = 0; x < 12; ++x) CHECK(relation_factor(t, a.count(x) > 0, b.count(x) > 0) >= 0);
  }
}

TEST_CASE("dependency counts follow the graph and ILF spaces") {
  Rng rng = make_rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const Fixture f = random_fixture(rng, 3, 4, 3);
    const auto& g = f.graph;
    std::size_t pseudo = 0, acc = 0;
    for (const auto& ilf : f.ilfs) {
      acc += ilf.output_space.size();
      for (LabelId y : g.desired())
        for (LabelId s : ilf.output_space)
          if (oracle::set_relation(f.sets[y].atoms, f.sets[s].atoms) != Relation::exclusive) ++pseudo;
    }
    const std::size_t S = g.seen().size(), D = g.desired().size();
    const FactorModel m = build_plrm(g, f.ilfs);
    CHECK(m.family_counts() == std::array<std::size_t, 4>{pseudo, acc, S * (S - 1) / 2, D * S});
    CHECK(m.latent_count() == static_cast<int>(S));
    CHECK(m.y_cardinality() == static_cast<int>(D) + 1);

    BuildOptions ablate;
    ablate.pseudo_accuracy = false;
    ablate.include_unknown = false;
    const FactorModel m2 = build_plrm(g, f.ilfs, ablate);
    CHECK(m2.family_counts() == std::array<std::size_t, 4>{0, acc, S * (S - 1) / 2, D * S});
    CHECK(m2.unknown_index() == -1);

    const FactorModel w = build_wslg(g, f.ilfs);
    CHECK(w.family_counts() == std::array<std::size_t, 4>{pseudo, 0, 0, 0});
    CHECK(w.latent_count() == 0);
  }
}

TEST_CASE("dependencies are ordered by family") {
  Rng rng = make_rng(23);
  const Fixture f = random_fixture(rng, 3, 4, 3);
  const FactorModel m = build_plrm(f.graph, f.ilfs);
  const auto& deps = m.dependencies();
  for (std::size_t r = 1; r < deps.size(); ++r) CHECK(deps[r - 1].family <= deps[r].family);
  for (const Dependency& d : deps) {
    if (d.family == Family::pseudo_accuracy || d.family == Family::accuracy) {
      CHECK(d.label == f.graph.seen()[d.seen]);
      CHECK(f.ilfs[d.ilf].emits(d.label));
    }
    if (d.family == Family::desired_seen)
      CHECK(d.relation == f.graph.relation(f.graph.desired()[d.desired], f.graph.seen()[d.seen]));
  }
}

TEST_CASE("log_unnormalized is theta dot phi with factors read off sets") {
  Rng rng = make_rng(24);
  const Fixture f = random_fixture(rng, 2, 3, 2);
  FactorModel m = build_plrm(f.graph, f.ilfs);
  oracle::randomize_theta(m, rng, -1.0, 1.0);
  const auto& g = f.graph;
  oracle::for_each_assignment(m, [&](const Assignment& a) {
    // Independent evaluation of each factor from label names and sets.
    std::vector<int> phi;
    for (const Dependency& d : m.dependencies()) {
      const LabelId vote = d.ilf >= 0 ? a.lambda[d.ilf] : kAbstain;
      switch (d.family) {
        case Family::pseudo_accuracy: phi.push_back(a.y == d.desired && vote == g.seen()[d.seen]); break;
        case Family::accuracy: phi.push_back(a.y_bar[d.seen] && vote == g.seen()[d.seen]); break;
        case Family::seen_seen: {
          const Relation t = oracle::set_relation(f.sets[g.seen()[d.seen]].atoms, f.sets[g.seen()[d.seen2]].atoms);
          phi.push_back(relation_factor(t, a.y_bar[d.seen], a.y_bar[d.seen2]));
          break;
        }
        case Family::desired_seen: {
          const Relation t =
              oracle::set_relation(f.sets[g.desired()[d.desired]].atoms, f.sets[g.seen()[d.seen]].atoms);
          phi.push_back(relation_factor(t, a.y == d.desired, a.y_bar[d.seen]));
          break;
        }
      }
    }
    CHECK(feature_vector(m, a) == phi);
    CHECK(log_unnormalized(m, a) == doctest::Approx(oracle::dot(m.theta(), phi)).epsilon(1e-12));
  });
}

TEST_CASE("assignments consistent with the sets incur no relation penalty") {
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_with_arctic_sets());
  const auto sets = oracle::pets_with_arctic_sets();
  BuildOptions opt;
  opt.include_unknown = false;
  FactorModel m = build_plrm(g, pets_ilfs(g), opt);
  for (int yi = 0; yi < m.desired_count(); ++yi)
    for (int atom : sets[g.desired()[yi]].atoms) {
      Assignment a;
      a.y = yi;
      for (LabelId s : g.seen()) a.y_bar.push_back(sets[s].atoms.count(atom) > 0);
      a.lambda.assign(m.ilf_count(), kAbstain);
      a.lambda[2] = m.ilf_domain(2)[0];
      for (const Dependency& d : m.dependencies())
        if (d.family == Family::seen_seen || d.family == Family::desired_seen) CHECK(factor_value(d, a) >= 0);
    }
}

TEST_CASE("assignment validation") {
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_sets());
  const FactorModel m = build_plrm(g, pets_ilfs(g));
  Assignment a;
  a.y = 0;
  a.y_bar.assign(3, 0);
  a.lambda = {kAbstain, kAbstain, g.id_of("Cat")};
  CHECK_NOTHROW(m.validate(a));
  a.y = m.y_cardinality();
  CHECK_THROWS_AS(m.validate(a), std::invalid_argument);
  a.y = 0;
  a.lambda[2] = kAbstain;  // ILF 2 cannot abstain
  CHECK_THROWS_AS(m.validate(a), std::invalid_argument);
  a.lambda[2] = g.id_of("Dog");  // outside its space
  CHECK_THROWS_AS(m.validate(a), std::invalid_argument);
  a.lambda = {kAbstain, kAbstain, g.id_of("Cat")};
  a.y_bar.pop_back();
  CHECK_THROWS_AS(m.validate(a), std::invalid_argument);
}

TEST_CASE("build rejects inconsistent graphs and bad ILFs") {
  using R = Relation;
  const LabelGraph cyc({{0, "a", Role::seen}, {1, "b", Role::seen}, {2, "c", Role::seen}, {3, "y", Role::desired}},
                       std::vector<RelationEdge>{{0, 1, R::subsuming},
                                                 {1, 2, R::subsuming},
                                                 {0, 2, R::subsumed},
                                                 {3, 0, R::subsumed},
                                                 {3, 1, R::subsumed},
                                                 {3, 2, R::subsumed}});
  CHECK_THROWS_AS(build_plrm(cyc, {{0, {0}, true}}), GraphError);
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_sets());
  CHECK_THROWS_AS(build_plrm(g, {{0, {g.id_of("Husky")}, true}}), GraphError);  // desired label in a space
  CHECK_THROWS_AS(build_wslg(g, {{0, {}, true}}), GraphError);
}

TEST_CASE("theta setters check the length") {
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_sets());
  BuildOptions opt;
  opt.theta_init = 0.7;
  FactorModel m = build_plrm(g, pets_ilfs(g), opt);
  for (double t : m.theta()) CHECK(t == 0.7);
  CHECK_THROWS_AS(m.set_theta(std::vector<double>(m.size() + 1, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(log_unnormalized(m, std::vector<double>(1, 0.0), Assignment{0, {0, 0, 0}, {-1, -1, 3}}),
                  std::invalid_argument);
}

TEST_CASE("family and kind names round-trip") {
  for (Family f : {Family::pseudo_accuracy, Family::accuracy, Family::seen_seen, Family::desired_seen})
    CHECK(family_from_string(to_string(f)) == f);
  CHECK(model_kind_from_string("plrm") == ModelKind::plrm);
  CHECK(model_kind_from_string("wslg") == ModelKind::wslg);
  CHECK_THROWS_AS(model_kind_from_string("crf"), std::invalid_argument);
  CHECK_THROWS_AS(family_from_string("x"), std::invalid_argument);
}

TEST_CASE("swapping an indistinguishable pair swaps their posteriors") {
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_sets());
  const LabelId husky = g.id_of("Husky"), bulldog = g.id_of("Bulldog");
  Rng rng = make_rng(25);
  FactorModel m = build_plrm(g, pets_ilfs(g));
  oracle::randomize_theta(m, rng);
  FactorModel swapped = m;
  swapped.set_theta(swapped_theta(m, husky, bulldog));
  const int ih = g.desired_index(husky), ib = g.desired_index(bulldog);
  std::set<std::vector<LabelId>> seen_votes;
  oracle::for_each_assignment(m, [&](const Assignment& a) { seen_votes.insert(a.lambda); });
  for (const auto& votes : seen_votes) {
    const auto p = oracle::posterior_y(m, votes);
    const auto q = oracle::posterior_y(swapped, votes);
    CHECK(p[ih] == doctest::Approx(q[ib]).epsilon(1e-10));
    CHECK(p[ib] == doctest::Approx(q[ih]).epsilon(1e-10));
  }
  // Swapping twice is the identity.
  swapped.set_theta(swapped_theta(swapped, husky, bulldog));
  CHECK(swapped.theta() == m.theta());
  CHECK_THROWS_AS(swapped_theta(m, husky, g.id_of("Dog")), std::invalid_argument);
}

TEST_CASE("a distinguishing label breaks the swap symmetry") {
  const LabelGraph g = oracle::graph_from_sets(oracle::pets_with_arctic_sets());
  const LabelId husky = g.id_of("Husky"), bulldog = g.id_of("Bulldog");
  Rng rng = make_rng(26);
  auto ilfs = pets_ilfs(g);
  ilfs.push_back({3, {g.id_of("Arctic Animals")}, true});
  FactorModel m = build_plrm(g, ilfs);
  oracle::randomize_theta(m, rng);
  FactorModel swapped = m;
  swapped.set_theta(swapped_theta(m, husky, bulldog));
  const std::vector<LabelId> votes = {g.id_of("Dog"), kAbstain, g.id_of("Cat"), g.id_of("Arctic Animals")};
  const auto p = oracle::posterior_y(m, votes);
  const auto q = oracle::posterior_y(swapped, votes);
  CHECK(std::abs(p[g.desired_index(husky)] - q[g.desired_index(bulldog)]) > 1e-6);
}
