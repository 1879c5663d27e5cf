#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "loom_oracle.hpp"
#include "test_support.hpp"
#include "topimpute/looms.hpp"

using namespace topimpute;
using loomoracle::oracle;
using loomoracle::Oracle;
using loomoracle::random_micro_panel;

namespace {

SpellRecord spell(std::string id, std::string person, std::string estab, std::string occ, int year, double d) {
  SpellRecord r;
  r.spell_id = std::move(id);
  r.person_id = std::move(person);
  r.estab_id = std::move(estab);
  r.occ_id = std::move(occ);
  r.year = year;
  r.region = "west";
  r.duration = d;
  return r;
}

}  // namespace

TEST_CASE("pooled year windows") {
  CHECK(pooled_years(2005, 2005, 2005) == std::vector<int>{2005});
  CHECK(pooled_years(2005, 2005, 2008) == std::vector<int>{2005, 2006});
  CHECK(pooled_years(2008, 2005, 2008) == std::vector<int>{2007, 2008});
  CHECK(pooled_years(2006, 2005, 2008) == std::vector<int>{2005, 2006, 2007});
}

TEST_CASE("hand computed examples") {
  std::vector<SpellRecord> recs{spell("a", "p1", "e1", "o1", 2010, 10), spell("b", "p1", "e2", "o2", 2011, 30)};
  std::vector<double> w{100.0, 200.0};
  auto person = person_loom(recs, w);
  CHECK(*person[0] == doctest::Approx(std::log(200.0)).epsilon(1e-15));
  CHECK(*person[1] == doctest::Approx(std::log(100.0)).epsilon(1e-15));

  std::vector<SpellRecord> pair{spell("a", "p1", "e1", "o1", 2010, 20), spell("b", "p2", "e1", "o1", 2010, 20)};
  std::vector<double> w2{120.0, 180.0};
  CHECK(*estab_loom(pair, w2)[0] == doctest::Approx(std::log(180.0)).epsilon(1e-15));
  const auto occ = occ_loom(pair, w2);
  CHECK(*occ[0] == doctest::Approx(std::log(180.0)).epsilon(1e-15));
  CHECK(*occ[1] == doctest::Approx(std::log(120.0)).epsilon(1e-15));
}

TEST_CASE("constant wages give constant looms and singletons are missing") {
  std::vector<SpellRecord> recs{spell("a", "p1", "e1", "o1", 2010, 5), spell("b", "p1", "e1", "o1", 2011, 7),
                                spell("c", "p2", "e1", "o1", 2011, 9), spell("d", "p3", "e9", "o1", 2015, 3)};
  std::vector<double> w(4, 150.0);
  std::vector<double> support;
  const auto person = person_loom(recs, w, &support);
  CHECK(*person[0] == doctest::Approx(std::log(150.0)));
  CHECK_FALSE(person[2].has_value());
  CHECK(support[2] == 0.0);
  CHECK(support[0] == 7.0);
  const auto estab = estab_loom(recs, w);
  CHECK_FALSE(estab[3].has_value());
  CHECK(*estab[0] == doctest::Approx(std::log(150.0)));
}

TEST_CASE("production looms equal the pairwise definition exactly") {
  Rng rng(31);
  std::vector<SpellRecord> recs;
  std::vector<double> w;
  int edge_years = 0;
  for (int panel = 0; panel < 50; ++panel) {
    random_micro_panel(rng, recs, w);
    const LoomSet got = compute_looms(recs, w);
    const Oracle want = oracle(recs, w);
    for (std::size_t s = 0; s < recs.size(); ++s) {
      CHECK(got.person[s] == want.person[s]);
      CHECK(got.estab[s] == want.estab[s]);
      CHECK(got.occ[s] == want.occ[s]);
      edge_years += recs[s].year == 2000 || recs[s].year == 2005;
    }
  }
  CHECK(edge_years > 0);
}

TEST_CASE("looms are invariant to record order") {
  Rng rng(32);
  std::vector<SpellRecord> recs;
  std::vector<double> w;
  random_micro_panel(rng, recs, w);
  const LoomSet a = compute_looms(recs, w);
  std::vector<std::size_t> perm(recs.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[0], perm[perm.size() / 2]);
  std::vector<SpellRecord> r2;
  std::vector<double> w2;
  for (auto i : perm) {
    r2.push_back(recs[i]);
    w2.push_back(w[i]);
  }
  const LoomSet b = compute_looms(r2, w2);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    CHECK(b.person[k] == a.person[perm[k]]);
    CHECK(b.estab[k] == a.estab[perm[k]]);
    CHECK(b.occ[k] == a.occ[perm[k]]);
  }
}

TEST_CASE("invalid inputs are rejected") {
  std::vector<SpellRecord> recs{spell("a", "p1", "e1", "o1", 2010, 0)};
  std::vector<double> w{10.0};
  CHECK_THROWS_AS(person_loom(recs, w), std::invalid_argument);
  recs[0].duration = 1;
  w[0] = 0.0;
  CHECK_THROWS_AS(estab_loom(recs, w), std::invalid_argument);
}

namespace {

Panel censored_person_panel() {
  // Person p1 is censored in every year; p2 and p3 are never censored.
  Panel panel;
  const double C[] = {5.0, 5.1, 5.2};
  int id = 0;
  for (int t = 0; t < 3; ++t) {
    for (const char* p : {"p1", "p2", "p3"}) {
      SpellRecord r = spell(std::to_string(id++), p, std::string("e") + p, "o1", 2010 + t, 100.0 + 10 * t);
      r.censored = std::string(p) == "p1";
      r.log_wage = r.censored ? C[t] : 4.0 + 0.1 * t + (p[1] - '0') * 0.05;
      panel.records.push_back(r);
    }
  }
  return panel;
}

}  // namespace

TEST_CASE("two-stage looms") {
  Panel panel = censored_person_panel();
  CellSpec spec;
  spec.by_gender = spec.by_age_group = spec.by_education = false;
  const CellMap cells = partition(panel, spec);

  std::vector<double> observed(panel.records.size());
  for (std::size_t i = 0; i < observed.size(); ++i) observed[i] = std::exp(panel.records[i].log_wage);
  const LoomSet naive = compute_looms(panel.records, observed);

  // Naive looms of a fully censored person average the limits on raw scale.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 3; i < 9; i += 3) {
    num += std::exp(panel.records[i].log_wage) * panel.records[i].duration;
    den += panel.records[i].duration;
  }
  CHECK(*naive.person[0] == doctest::Approx(std::log(num / den)).epsilon(1e-14));

  Rng rng(33);
  const CellImputer stage_one = [&](const CellKey&, std::span<const std::size_t> rows) {
    std::vector<double> out;
    for (auto i : rows) out.push_back(panel.records[i].log_wage + (panel.records[i].censored ? rng.exponential() : 0.0));
    return out;
  };
  std::vector<double> stage_one_wages;
  const LoomSet two = two_stage_looms(panel, cells, stage_one, &stage_one_wages);
  for (std::size_t i = 0; i < panel.records.size(); ++i) {
    const auto& r = panel.records[i];
    if (r.person_id == "p1") {
      CHECK(*two.person[i] > *naive.person[i]);
      CHECK(stage_one_wages[i] > r.log_wage);
    } else {
      CHECK(two.person[i] == naive.person[i]);
      CHECK(stage_one_wages[i] == r.log_wage);
    }
  }

  for (auto& r : panel.records) {
    r.censored = false;
    r.log_wage = 4.5;
  }
  bool called = false;
  const CellImputer never = [&](const CellKey&, std::span<const std::size_t> rows) {
    called = true;
    return std::vector<double>(rows.size(), 0.0);
  };
  std::vector<double> flat(panel.records.size(), std::exp(4.5));
  const LoomSet direct = compute_looms(panel.records, flat);
  const LoomSet staged = two_stage_looms(panel, cells, never);
  CHECK_FALSE(called);
  CHECK(staged.person == direct.person);
  CHECK(staged.estab == direct.estab);
}

TEST_CASE("stage-one failures name the cell") {
  Panel panel = censored_person_panel();
  CellSpec spec;
  spec.by_gender = spec.by_age_group = spec.by_education = false;
  const CellMap cells = partition(panel, spec);
  const CellImputer failing = [](const CellKey&, std::span<const std::size_t>) -> std::vector<double> {
    throw std::runtime_error("boom");
  };
  try {
    two_stage_looms(panel, cells, failing);
    FAIL("expected StageOneError");
  } catch (const StageOneError& e) {
    CHECK(std::string(e.what()).find("2010-west") != std::string::npos);
  }
}
