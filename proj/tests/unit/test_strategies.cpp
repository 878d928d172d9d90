#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "contir/autodiff/optimizer.hpp"
#include "contir/error.hpp"
#include "contir/log.hpp"
#include "contir/random.hpp"
#include "contir/rankers/interaction.hpp"
#include "contir/rankers/ranker.hpp"
#include "contir/strategies/config.hpp"
#include "contir/strategies/gem.hpp"
#include "contir/strategies/memory.hpp"
#include "contir/strategies/regularization.hpp"

using namespace contir;
using namespace contir::strat;
using ad::Shape;
using ad::Tensor;

namespace {

ad::ParameterSet vec2(double a, double b) {
  ad::ParameterSet p;
  p.add("w", Tensor(Shape{2}, {a, b}));
  return p;
}

double norm(const std::vector<double>& x) {
  return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<double> random_vector(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double dual_objective(const Matrix& rows, const std::vector<double>& g, double gamma,
                      const std::vector<double>& v) {
  // 0.5 ||G'v||^2 + 0.5 gamma ||v||^2 + g'G'v
  std::vector<double> gv(g.size(), 0.0);
  for (std::size_t s = 0; s < rows.size(); ++s) {
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += v[s] * rows[s][i];
  }
  return 0.5 * dot(gv, gv) + 0.5 * gamma * dot(v, v) + dot(g, gv);
}

struct CaptureLog {
  std::vector<std::string> warnings;
  ScopedLogSink sink{[this](LogLevel level, std::string_view m) {
    if (level == LogLevel::warning) warnings.emplace_back(m);
  }};
};

}  // namespace

TEST_CASE("strategy config") {
  CHECK(parse_strategy("ewcol") == StrategyTag::ewcol);
  CHECK_THROWS_AS(parse_strategy("agem"), ConfigError);
  CHECK(default_lambda(StrategyTag::l2) == 0.01);
  CHECK(default_lambda(StrategyTag::ewc) == 100.0);
  CHECK(default_lambda(StrategyTag::ewcol) == 100.0);
  CHECK(default_lambda(StrategyTag::si) == 1.0);
  CHECK(default_lambda(StrategyTag::mas) == 1.0);
  StrategyConfig c;
  c.tag = StrategyTag::si;
  CHECK(c.effective_lambda() == 1.0);
  c.lambda = 0.3;
  CHECK(c.effective_lambda() == 0.3);
  c.si_damping = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StrategyConfig{};
  c.lambda = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StrategyConfig{};
  c.tag = StrategyTag::gem;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.memory_capacity = 1;
  CHECK_NOTHROW(c.validate());
  c.tag = StrategyTag::nr;
  c.memory_capacity = 0;
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("penalty_term worked examples and gradient") {
  ad::ParameterSet anchor = vec2(1.0, 2.0);
  ImportanceMap ones = l2_importance(anchor);
  {
    ad::Tape tape;
    auto b = ad::bind_parameters(tape, anchor);
    CHECK(penalty_term(tape, b, anchor, ones, 3.0).value().item() == 0.0);
  }
  {
    ad::Tape tape;
    auto b = ad::bind_parameters(tape, vec2(1.1, 1.8));
    CHECK(penalty_term(tape, b, anchor, ones, 0.5).value().item() ==
          doctest::Approx(0.025).epsilon(1e-12));
    CHECK(penalty_term(tape, b, anchor, ones, 0.0).value().item() == 0.0);
    CHECK(penalty_term(tape, b, anchor, ImportanceMap{}, 0.5).value().item() == 0.0);
  }
  {
    ad::Tape tape;
    ImportanceMap omega;
    omega.add("w", Tensor(Shape{2}, {2.0, 0.5}));
    auto b = ad::bind_parameters(tape, vec2(1.5, 1.0));
    ad::GradientMap g = tape.backward(penalty_term(tape, b, anchor, omega, 0.1));
    // 2 * lambda * omega * (theta - anchor)
    CHECK(g.at("w")[0] == doctest::Approx(2 * 0.1 * 2.0 * 0.5));
    CHECK(g.at("w")[1] == doctest::Approx(2 * 0.1 * 0.5 * -1.0));
  }
  {
    ad::Tape tape;
    ad::ParameterSet other;
    other.add("v", Tensor(Shape{2}));
    auto b = ad::bind_parameters(tape, other);
    CHECK_THROWS_AS(penalty_term(tape, b, anchor, ones, 1.0), ShapeError);
  }
}

TEST_CASE("penalty_term grows strictly with displacement") {
  ad::ParameterSet anchor = vec2(0.0, 0.0);
  ImportanceMap omega;
  omega.add("w", Tensor(Shape{2}, {0.7, 0.0}));
  double last = -1.0;
  for (double d = 0.0; d <= 1.0; d += 0.125) {
    ad::Tape tape;
    auto b = ad::bind_parameters(tape, vec2(-d, 5.0));
    double v = penalty_term(tape, b, anchor, omega, 1.0).value().item();
    CHECK(v > last);
    last = v;
  }
}

TEST_CASE("l2_importance mirrors the parameter layout") {
  ad::ParameterSet p;
  p.add("a", Tensor(Shape{2, 3}, 4.0));
  p.add("b", Tensor(Shape{1}, -1.0));
  ImportanceMap o = l2_importance(p);
  CHECK(o.at("a") == Tensor(Shape{2, 3}, 1.0));
  CHECK(o.at("b") == Tensor(Shape{1}, 1.0));
  CHECK(l2_importance(ad::ParameterSet{}).empty());
}

TEST_CASE("fisher_importance worked examples") {
  Rng rng(1);
  ImportanceMap none;
  ImportanceMap one = fisher_importance(1, 1, rng, [](std::size_t) { return vec2(2.0, -3.0); },
                                        false, none);
  CHECK(one.at("w") == Tensor(Shape{2}, {4.0, 9.0}));

  auto two_grads = [](std::size_t i) { return i == 0 ? vec2(2.0, 0.0) : vec2(0.0, 2.0); };
  ImportanceMap avg = fisher_importance(2, 2, rng, two_grads, false, none);
  CHECK(avg.at("w") == Tensor(Shape{2}, {2.0, 2.0}));

  ImportanceMap prior = vec2(1.0, 1.0);
  CHECK(fisher_importance(2, 2, rng, two_grads, true, prior).at("w") ==
        Tensor(Shape{2}, {3.0, 3.0}));
  CHECK(fisher_importance(2, 2, rng, two_grads, false, prior).at("w") ==
        Tensor(Shape{2}, {2.0, 2.0}));

  CaptureLog log;
  std::set<std::size_t> used;
  fisher_importance(3, 10, rng, [&](std::size_t i) { used.insert(i); return vec2(1, 1); }, false,
                    none);
  CHECK(used == std::set<std::size_t>{0, 1, 2});
  CHECK(log.warnings.size() == 1);

  CHECK_THROWS_AS(
      fisher_importance(1, 1, rng, [](std::size_t) { return vec2(NAN, 0.0); }, false, none),
      NumericError);
}

TEST_CASE("fisher samples are drawn without replacement") {
  Rng rng(2);
  std::vector<std::size_t> seen;
  fisher_importance(50, 20, rng, [&](std::size_t i) { seen.push_back(i); return vec2(0, 0); },
                    false, ImportanceMap{});
  std::set<std::size_t> distinct(seen.begin(), seen.end());
  CHECK(seen.size() == 20);
  CHECK(distinct.size() == 20);
  CHECK(*distinct.rbegin() < 50);
}

TEST_CASE("si path integral worked examples") {
  PathIntegral st;
  CHECK_THROWS_AS(si_accumulate(st, vec2(1, 1), vec2(0, 0)), StateError);

  si_begin_task(st, vec2(1.0, 1.0));
  si_accumulate(st, vec2(1.0, -1.0), vec2(0.9, 0.9));
  CHECK(st.omega.at("w")[0] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(st.omega.at("w")[1] == doctest::Approx(-0.1).epsilon(1e-12));
  CHECK(st.previous == vec2(0.9, 0.9));

  si_accumulate(st, vec2(5.0, 5.0), vec2(0.9, 0.9));  // no movement
  CHECK(st.omega.at("w")[0] == doctest::Approx(0.1).epsilon(1e-12));

  si_begin_task(st, vec2(0.9, 0.9));
  CHECK(st.omega == vec2(0.0, 0.0));
}

TEST_CASE("si contribution under plain SGD is lr * g^2") {
  Rng rng(3);
  ad::ParameterSet params = vec2(rng.uniform(), rng.uniform());
  ad::OptimizerState opt(ad::SgdConfig{0.05, 0.0});
  PathIntegral st;
  si_begin_task(st, params);
  double expect0 = 0.0, expect1 = 0.0;
  for (int step = 0; step < 5; ++step) {
    ad::GradientMap g = vec2(rng.uniform(-1, 1), rng.uniform(-1, 1));
    expect0 += 0.05 * g.at("w")[0] * g.at("w")[0];
    expect1 += 0.05 * g.at("w")[1] * g.at("w")[1];
    ad::optimizer_step(params, g, opt);
    si_accumulate(st, g, params);
  }
  CHECK(st.omega.at("w")[0] == doctest::Approx(expect0).epsilon(1e-12));
  CHECK(st.omega.at("w")[1] == doctest::Approx(expect1).epsilon(1e-12));
}

TEST_CASE("si_consolidate worked examples") {
  ImportanceMap none;
  ImportanceMap o = si_consolidate(vec2(0.1, -0.3), vec2(0.1, 0.0), vec2(0.0, 0.0), 1e-3, none);
  CHECK(o.at("w")[0] == doctest::Approx(0.1 / 0.011).epsilon(1e-12));
  CHECK(o.at("w")[1] == 0.0);
  ImportanceMap prior = vec2(2.0, 3.0);
  CHECK(si_consolidate(vec2(0.0, 0.0), vec2(1, 1), vec2(0, 0), 1e-3, prior) == prior);
  CHECK_THROWS_AS(si_consolidate(vec2(0, 0), vec2(0, 0), vec2(0, 0), 0.0, none), DomainError);
}

TEST_CASE("mas_importance worked examples") {
  ImportanceMap none;
  CHECK(mas_importance(1, [](std::size_t) { return vec2(-1.5, 0.0); }, none).at("w") ==
        Tensor(Shape{2}, {1.5, 0.0}));
  ImportanceMap prior = vec2(0.5, 0.25);
  ImportanceMap o = mas_importance(
      2, [](std::size_t k) { return k == 0 ? vec2(-1.0, 2.0) : vec2(3.0, -4.0); }, prior);
  CHECK(o.at("w") == Tensor(Shape{2}, {2.5, 3.25}));
  for (std::size_t i = 0; i < 2; ++i) CHECK(o.at("w")[i] >= prior.at("w")[i]);
}

TEST_CASE("mas on a batch with zero score difference contributes nothing") {
  using namespace contir::rank;
  RankerConfig c;
  c.head = HeadType::knrm;
  c.embedding_dim = 4;
  c.query_length = 3;
  c.doc_length = 5;
  ad::ParameterSet params = init_parameters(c, 10, 4);
  std::vector<TokenizedPair> pairs{
      encode_pair(std::vector<std::int64_t>{2, 3}, std::vector<std::int64_t>{4, 5, 6}, 3, 5)};
  PairBatch batch = make_batch(pairs, c);
  ImportanceMap o = mas_importance(
      1,
      [&](std::size_t) {
        ad::Tape tape;
        auto b = ad::bind_parameters(tape, params);
        ad::Var diff = forward(tape, b, batch, c) - forward(tape, b, batch, c);
        return tape.backward(ad::mean_all(diff * diff));
      },
      ImportanceMap{});
  for (const auto& [name, t] : o) {
    for (double v : t.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("water-filling quotas") {
  auto q = [](std::vector<std::size_t> sizes, std::size_t cap) {
    return water_fill_quotas(sizes, cap);
  };
  CHECK(q({10, 10}, 4) == std::vector<std::size_t>{2, 2});
  CHECK(q({10, 10, 10}, 10) == std::vector<std::size_t>{4, 3, 3});
  CHECK(q({1, 10, 10}, 9) == std::vector<std::size_t>{1, 4, 4});
  CHECK(q({3, 3}, 10) == std::vector<std::size_t>{3, 3});
  CHECK(q({}, 5).empty());
  CHECK(q({7, 7}, 0) == std::vector<std::size_t>{0, 0});
}

TEST_CASE("memory buffer quota, subset and capacity invariants") {
  MemoryBuffer<int> mem(4);
  Rng rng(5);
  std::vector<int> s1{10, 11, 12, 13, 14, 15};
  std::vector<int> s2{20, 21, 22, 23, 24};
  mem.add_task(std::span<const int>(s1), rng);
  CHECK(mem.slice(0).size() == 4);
  mem.add_task(std::span<const int>(s2), rng);
  CHECK(mem.slice(0).size() == 2);
  CHECK(mem.slice(1).size() == 2);
  for (int x : mem.slice(0)) CHECK(std::find(s1.begin(), s1.end(), x) != s1.end());
  for (int x : mem.slice(1)) CHECK(std::find(s2.begin(), s2.end(), x) != s2.end());
  CHECK_THROWS_AS(mem.slice(2), StateError);

  Rng r2(6);
  for (int run = 0; run < 20; ++run) {
    const std::size_t cap = 1 + r2.below(40);
    MemoryBuffer<int> m(cap);
    std::vector<std::vector<int>> history;
    for (int t = 0; t < 6; ++t) {
      std::vector<int> task(1 + r2.below(30));
      std::iota(task.begin(), task.end(), t * 1000);
      m.add_task(std::span<const int>(task), r2);
      CHECK(m.size() <= cap);
      for (std::size_t s = 0; s < m.tasks(); ++s) {
        auto slice = m.slice(s);
        std::vector<int> now(slice.begin(), slice.end());
        if (s < history.size()) {
          CHECK(std::includes(history[s].begin(), history[s].end(), now.begin(), now.end()));
          CHECK(now.size() <= history[s].size());
          history[s] = now;
        } else {
          history.push_back(now);
        }
      }
    }
  }
}

TEST_CASE("nr_merge unions current data with memory") {
  MemoryBuffer<int> mem(4);
  Rng rng(7);
  std::vector<int> s1{1, 2, 3};
  auto w1 = nr_merge(std::span<const int>(s1), mem, rng);
  std::sort(w1.begin(), w1.end());
  CHECK(w1 == s1);

  mem.add_task(std::span<const int>(s1), rng);
  std::vector<int> s2{7, 8};
  auto w2 = nr_merge(std::span<const int>(s2), mem, rng);
  std::sort(w2.begin(), w2.end());
  CHECK(w2 == std::vector<int>{1, 2, 3, 7, 8});

  Rng a(9), b(9);
  CHECK(nr_merge(std::span<const int>(s2), mem, a) == nr_merge(std::span<const int>(s2), mem, b));

  CaptureLog log;
  MemoryBuffer<int> empty(0);
  empty.add_task(std::span<const int>(s1), rng);
  CHECK(empty.size() == 0);
  CHECK(log.warnings.size() == 1);
}

TEST_CASE("solve_dual_qp worked examples") {
  QpResult r = solve_dual_qp({{-1.0, 1.0}}, {1.0, 0.0}, 0.0);
  CHECK(r.converged);
  CHECK(r.v[0] == doctest::Approx(0.5).epsilon(1e-12));

  QpResult z = solve_dual_qp({{0.0, 1.0}, {0.0, -2.0}}, {1.0, 0.0}, 0.0);
  CHECK(z.v == std::vector<double>{0.0, 0.0});
  CHECK(z.sweeps == 0);

  CHECK_THROWS_AS(solve_dual_qp({}, {1.0}, 0.0), ShapeError);
  CHECK_THROWS_AS(solve_dual_qp({{1.0}}, {1.0}, -1.0), DomainError);
}

TEST_CASE("solve_dual_qp matches a grid-search oracle on 2x3 instances") {
  Rng rng(10);
  int compared = 0;
  while (compared < 6) {
    Matrix rows{random_vector(rng, 3), random_vector(rng, 3)};
    std::vector<double> g = random_vector(rng, 3);
    const double gamma = 1e-3;
    // Gram-matrix conditioning: skip near-collinear rows where v is poorly determined
    const double a = dot(rows[0], rows[0]) + gamma, c = dot(rows[1], rows[1]) + gamma;
    const double b = dot(rows[0], rows[1]);
    const double disc = std::sqrt((a - c) * (a - c) + 4 * b * b);
    if ((a + c + disc) / (a + c - disc) > 50.0) continue;

    double best = INFINITY;
    std::vector<double> arg(2);
    for (int i = 0; i <= 2000; ++i) {
      for (int j = 0; j <= 2000; ++j) {
        std::vector<double> v{i * 1e-3, j * 1e-3};
        double f = dual_objective(rows, g, gamma, v);
        if (f < best) {
          best = f;
          arg = v;
        }
      }
    }
    if (arg[0] >= 2.0 || arg[1] >= 2.0) continue;  // optimum outside the grid
    QpResult r = solve_dual_qp(rows, g, gamma);
    REQUIRE(r.converged);
    CHECK(std::abs(r.v[0] - arg[0]) <= 1e-3);
    CHECK(std::abs(r.v[1] - arg[1]) <= 1e-3);
    ++compared;
  }
}

TEST_CASE("gem_project worked examples") {
  Projection keep = gem_project({1.0, 0.0}, {{1.0, 1.0}}, 0.0);
  CHECK_FALSE(keep.projected);
  CHECK(keep.gradient == std::vector<double>{1.0, 0.0});

  Projection p = gem_project({1.0, 0.0}, {{-1.0, 1.0}}, 0.0);
  CHECK(p.projected);
  CHECK(p.gradient[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.gradient[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::abs(dot(p.gradient, {-1.0, 1.0})) <= 1e-12);

  std::vector<double> gm{0.3, -0.7, 1.1};
  std::vector<double> conflict{-0.3, 0.7, -1.1};
  Projection c = gem_project(conflict, {gm}, 0.0);
  CHECK(std::abs(dot(c.gradient, gm)) <= 1e-6 * std::max(1.0, norm(gm) * norm(gm)));

  CHECK_THROWS_AS(gem_project({NAN, 0.0}, {{1.0, 0.0}}, 0.0), NumericError);
}

TEST_CASE("gem_project with one violated constraint equals the closed form") {
  Rng rng(11);
  int checked = 0;
  while (checked < 20) {
    std::vector<double> g = random_vector(rng, 5), gm = random_vector(rng, 5);
    const double d = dot(g, gm);
    if (d >= 0.0) continue;
    Projection p = gem_project(g, {gm}, 0.0);
    const double coef = d / dot(gm, gm);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(p.gradient[i] - (g[i] - coef * gm[i])) <= 1e-6);
    }
    ++checked;
  }
}

TEST_CASE("gem_project satisfies all constraints and is idempotent") {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    Matrix rows{random_vector(rng, 6), random_vector(rng, 6), random_vector(rng, 6)};
    std::vector<double> g = random_vector(rng, 6);
    Projection p = gem_project(g, rows, 0.0);
    REQUIRE_FALSE(p.fallback);
    for (const auto& row : rows) {
      CHECK(dot(p.gradient, row) >= -1e-6 * norm(p.gradient) * norm(row));
    }
    Projection again = gem_project(p.gradient, rows, 0.0);
    for (std::size_t i = 0; i < 6; ++i) {
      CHECK(std::abs(again.gradient[i] - p.gradient[i]) <= 1e-6);
    }
  }
}

TEST_CASE("gem reference gradients") {
  MemoryBuffer<int> mem(4);
  Rng rng(13);
  std::vector<int> s1{1, 2, 3}, s2{1, 2, 3};
  auto grad = [](std::span<const int> slice) {
    double total = 0.0;
    for (int x : slice) total += x;
    return vec2(total, static_cast<double>(slice.size()));
  };
  std::function<ad::GradientMap(std::span<const int>)> fn = grad;
  CHECK_THROWS_AS(gem_reference_gradients(mem, fn), StateError);
  mem.add_task(std::span<const int>(s1), rng);
  Matrix one = gem_reference_gradients(mem, fn);
  REQUIRE(one.size() == 1);
  CHECK(one[0].size() == 2);
  CHECK(one[0] == std::vector<double>{6.0, 3.0});

  MemoryBuffer<int> dup(100);
  dup.add_task(std::span<const int>(s1), rng);
  dup.add_task(std::span<const int>(s2), rng);
  Matrix two = gem_reference_gradients(dup, fn);
  CHECK(two[0] == two[1]);

  CaptureLog log;
  MemoryBuffer<int> none(0);
  none.add_task(std::span<const int>(s1), rng);
  CHECK_THROWS_AS(gem_reference_gradients(none, fn), StateError);
}
