#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support.hpp"
#include "vcse/entropy/rewards.hpp"
#include "vcse/gridworld/tasks.hpp"
#include "vcse/trainer/bonus.hpp"
#include "vcse/trainer/metrics.hpp"
#include "vcse/trainer/train.hpp"

using namespace vcse;
using namespace vcse::trainer;
using entropy::Sample;
using gridworld::Action;
using gridworld::TaskName;

namespace {

Minibatch make_batch(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> cell(1, 7);
  Minibatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.states.push_back(Sample{{double(cell(rng)), double(cell(rng))}, std::nullopt});
    b.extrinsic.push_back(i % 7 == 0 ? 0.5 : 0.0);
    b.raw_values.push_back(g(rng));
    b.rollout_ids.push_back(0);
  }
  return b;
}

agent::AgentConfig tabular_agent(int n_step = 5) {
  agent::AgentConfig a;
  a.kind = agent::ApproximatorKind::Tabular;
  a.learning_rate = 0.01;
  a.n_step = n_step;
  return a;
}

TrainConfig small_train() {
  TrainConfig t;
  t.num_envs = 4;
  t.obs_mode = gridworld::ObsMode::AgentXY;
  t.eval_interval = 1000;
  t.eval_episodes = 2;
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// Value normalisation
// ---------------------------------------------------------------------------

TEST(NormalizeValues, HandComputedThreePoints) {
  const std::vector<double> raw{1.0, 2.0, 3.0};
  const auto z = normalize_values(raw);
  EXPECT_NEAR(z[0], -1.224744871391589, 1e-12);
  EXPECT_NEAR(z[1], 0.0, 1e-15);
  EXPECT_NEAR(z[2], 1.224744871391589, 1e-12);
}

TEST(NormalizeValues, ConstantInputGivesZeros) {
  const std::vector<double> raw(10, 4.2);
  for (double z : normalize_values(raw)) EXPECT_EQ(z, 0.0);
}

TEST(NormalizeValues, AffineInvarianceAndMoments) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(1.0, 5.0);
  std::vector<double> raw(200), moved(200);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = g(rng);
    moved[i] = 2.5 * raw[i] - 11.0;
  }
  const auto a = normalize_values(raw);
  const auto b = normalize_values(moved);
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-12);
    mean += a[i];
    sq += a[i] * a[i];
  }
  mean /= double(a.size());
  EXPECT_NEAR(mean, 0.0, 1e-6);
  EXPECT_NEAR(std::sqrt(sq / double(a.size()) - mean * mean), 1.0, 1e-6);
}

TEST(NormalizeValues, NeedsTwoValues) {
  EXPECT_THROW(normalize_values(std::vector<double>{1.0}), DomainError);
  EXPECT_THROW(normalize_values(std::vector<double>{}), DomainError);
}

// ---------------------------------------------------------------------------
// Bonus composition
// ---------------------------------------------------------------------------

TEST(ComposeBonus, NoneLeavesExtrinsicRewards) {
  std::mt19937_64 rng(1);
  ExplorationConfig cfg;
  cfg.mode = ExplorationMode::None;
  const auto out = compose_bonus(make_batch(rng, 40), cfg);
  EXPECT_EQ(out.total_rewards, out.extrinsic);
  for (double r : out.intrinsic_rewards) EXPECT_EQ(r, 0.0);
}

TEST(ComposeBonus, ZeroBetaStillLogsIntrinsic) {
  std::mt19937_64 rng(2);
  ExplorationConfig cfg;
  cfg.beta = 0.0;
  const auto out = compose_bonus(make_batch(rng, 40), cfg);
  EXPECT_EQ(out.total_rewards, out.extrinsic);
  double mag = 0.0;
  for (double r : out.intrinsic_rewards) mag += std::abs(r);
  EXPECT_GT(mag, 0.0);
}

TEST(ComposeBonus, TotalIsExactlyExtrinsicPlusBetaIntrinsic) {
  std::mt19937_64 rng(4);
  for (auto mode : {ExplorationMode::SE, ExplorationMode::VCSE, ExplorationMode::RCSE}) {
    ExplorationConfig cfg;
    cfg.mode = mode;
    cfg.beta = 0.0123;
    const auto out = compose_bonus(make_batch(rng, 64), cfg);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(out.total_rewards[i], out.extrinsic[i] + cfg.beta * out.intrinsic_rewards[i]);
    }
  }
}

TEST(ComposeBonus, VcseMatchesOracleOnNormalisedValues) {
  std::mt19937_64 rng(5);
  ExplorationConfig cfg;
  cfg.k = 3;
  const auto in = make_batch(rng, 50);
  const auto out = compose_bonus(in, cfg);
  const auto z = normalize_values(in.raw_values);
  EXPECT_EQ(out.normalized_values, z);
  const auto want = vcse::testing::oracle_vcse(in.states, z, 3);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.intrinsic_rewards[i], want[i], 1e-12);
}

TEST(ComposeBonus, TwoClusterBatchSelectsNeighboursWithinCluster) {
  // Two value clusters far apart relative to the state spread.
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  Minibatch b;
  for (int i = 0; i < 60; ++i) {
    b.states.push_back(Sample{{g(rng), g(rng)}, std::nullopt});
    b.raw_values.push_back((i % 2 ? 100.0 : 0.0) + 0.01 * g(rng));
    b.extrinsic.push_back(0.0);
  }
  ExplorationConfig cfg;
  const auto out = compose_bonus(b, cfg);
  const auto terms = entropy::conditional_bonus_terms(b.states, out.normalized_values, cfg.k);
  for (std::size_t i = 0; i < b.size(); ++i) {
    EXPECT_EQ(terms[i].neighbor_index % 2, i % 2) << "sample " << i;
  }
  const auto want = vcse::testing::oracle_vcse(b.states, out.normalized_values, cfg.k);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.intrinsic_rewards[i], want[i], 1e-12);
}

TEST(ComposeBonus, SeIsStdNormalisedOnlyWhenAsked) {
  std::mt19937_64 rng(7);
  const auto in = make_batch(rng, 48);
  const auto raw = vcse::testing::oracle_se(in.states, 5);
  ExplorationConfig cfg;
  cfg.mode = ExplorationMode::SE;
  cfg.normalize_se_by_std = false;
  EXPECT_EQ(compose_bonus(in, cfg).intrinsic_rewards, raw);
  cfg.normalize_se_by_std = true;
  const auto scaled = compose_bonus(in, cfg).intrinsic_rewards;
  double mean = 0.0, var = 0.0;
  for (double r : raw) mean += r;
  mean /= double(raw.size());
  for (double r : raw) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / double(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(scaled[i], raw[i] / sd, 1e-12);
}

TEST(ComposeBonus, RcseConditionsOnExtrinsicRewards) {
  std::mt19937_64 rng(8);
  const auto in = make_batch(rng, 35);
  ExplorationConfig cfg;
  cfg.mode = ExplorationMode::RCSE;
  const auto out = compose_bonus(in, cfg);
  const auto z = normalize_values(in.extrinsic);
  EXPECT_EQ(out.normalized_values, z);
  const auto want = vcse::testing::oracle_vcse(in.states, z, cfg.k);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(out.intrinsic_rewards[i], want[i], 1e-12);
}

TEST(ComposeBonus, AffineValueTransformLeavesRewardsUnchanged) {
  std::mt19937_64 rng(9);
  auto in = make_batch(rng, 64);
  ExplorationConfig cfg;
  const auto a = compose_bonus(in, cfg);
  for (double& v : in.raw_values) v = 3.0 * v + 7.0;
  const auto b = compose_bonus(in, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.intrinsic_rewards[i], b.intrinsic_rewards[i], 1e-9);
}

TEST(ComposeBonus, Errors) {
  std::mt19937_64 rng(10);
  ExplorationConfig cfg;
  auto b = make_batch(rng, 20);
  b.raw_values.pop_back();
  EXPECT_THROW(compose_bonus(b, cfg), DomainError);
  b = make_batch(rng, 5);
  EXPECT_THROW(compose_bonus(b, cfg), DomainError);  // batch not larger than k
  b = make_batch(rng, 20);
  b.extrinsic.pop_back();
  EXPECT_THROW(compose_bonus(b, cfg), ShapeError);
  cfg.bonus_batch_size = 4;
  EXPECT_THROW(compose_bonus(make_batch(rng, 20), cfg), ConfigError);
  cfg = {};
  cfg.beta = -1.0;
  EXPECT_THROW(compose_bonus(make_batch(rng, 20), cfg), ConfigError);
  cfg = {};
  cfg.k = 0;
  EXPECT_THROW(compose_bonus(make_batch(rng, 20), cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// Heatmaps and CSV
// ---------------------------------------------------------------------------

TEST(Heatmap, RepeatedCellAndBounds) {
  RunMetrics m;
  m.heatmap = make_heatmap(5, 4);
  for (int i = 0; i < 17; ++i) record_heatmap(m, {2, 3, gridworld::Heading::N});
  EXPECT_EQ(m.heatmap->at(2, 3), 17u);
  EXPECT_EQ(m.heatmap->total(), 17u);
  EXPECT_THROW(record_heatmap(m, {5, 0, gridworld::Heading::N}), DomainError);
  EXPECT_THROW(record_heatmap(m, {0, -1, gridworld::Heading::N}), DomainError);
  RunMetrics none;
  EXPECT_THROW(record_heatmap(none, {0, 0, gridworld::Heading::N}), DomainError);
}

TEST(Heatmap, ScriptedLWalkExportsExactly) {
  gridworld::GridEnv env(gridworld::builtin_task(TaskName::Empty, 8), gridworld::ObsMode::AgentXY);
  env.reset(0);
  ASSERT_EQ(env.pose().x, 1);
  ASSERT_EQ(env.pose().y, 1);
  ASSERT_EQ(env.pose().heading, gridworld::Heading::E);
  // East along row 1 to x = 5, turn south, down column 5 to y = 5.
  const std::vector<Action> script{Action::Forward,   Action::Forward, Action::Forward, Action::Forward,
                                   Action::TurnRight, Action::Forward, Action::Forward, Action::Forward,
                                   Action::Forward};
  RunMetrics m;
  m.heatmap = make_heatmap(8, 8);
  for (Action a : script) {
    record_heatmap(m, env.pose());
    env.step(a);
  }
  record_heatmap(m, env.pose());
  std::vector<std::uint64_t> want(64, 0);
  for (int x = 1; x <= 5; ++x) ++want[static_cast<std::size_t>(1 * 8 + x)];
  ++want[1 * 8 + 5];  // the turn happens in place
  for (int y = 2; y <= 5; ++y) ++want[static_cast<std::size_t>(y * 8 + 5)];
  const auto j = heatmap_json(*m.heatmap, "Empty");
  const auto back = heatmap_from_json(j);
  EXPECT_EQ(back.counts, want);
  EXPECT_EQ(j.at("total_steps").get<std::uint64_t>(), script.size() + 1);
  EXPECT_EQ(j.at("counts")[1][5].get<int>(), 2);
}

TEST(Heatmap, MassBeyondColumn) {
  Heatmap h = make_heatmap(4, 2);
  EXPECT_EQ(mass_beyond_column(h, 1), 0.0);
  h.counts = {1, 1, 1, 1, 0, 0, 2, 2};
  EXPECT_DOUBLE_EQ(mass_beyond_column(h, 1), 6.0 / 8.0);
  EXPECT_DOUBLE_EQ(mass_beyond_column(h, 3), 0.0);
}

TEST(MetricsCsv, HeadersAndRows) {
  RunMetrics m;
  m.episodes.push_back({40, 0, true, 0.5, -0.25, 0.005});
  m.evals.push_back({5000, 0.75, 0.125});
  EXPECT_EQ(metrics_csv(m), "step,episode,success,return,intrinsic_mean,beta\n40,0,1,0.5,-0.25,0.0050000000000000001\n");
  EXPECT_EQ(evals_csv(m), "step,success_rate,mean_return\n5000,0.75,0.125\n");
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TEST(Train, ZeroBudgetDoesNothing) {
  const auto spec = gridworld::builtin_task(TaskName::Empty, 6);
  const auto m = train(spec, tabular_agent(), {}, small_train(), 0, 1);
  EXPECT_TRUE(m.episodes.empty());
  EXPECT_TRUE(m.evals.empty());
  EXPECT_EQ(m.updates, 0);
  EXPECT_EQ(m.total_steps, 0);
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  auto t = small_train();
  t.record_heatmap = true;
  const auto a = train(spec, tabular_agent(), {}, t, 6000, 11);
  const auto b = train(spec, tabular_agent(), {}, t, 6000, 11);
  const auto c = train(spec, tabular_agent(), {}, t, 6000, 12);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(metrics_csv(a), metrics_csv(b));
  EXPECT_FALSE(a == c);
}

TEST(Train, HeatmapCountsEveryStep) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  auto t = small_train();
  t.record_heatmap = true;
  const auto m = train(spec, tabular_agent(), {}, t, 3000, 2);
  ASSERT_TRUE(m.heatmap.has_value());
  EXPECT_EQ(m.heatmap->total(), static_cast<std::uint64_t>(m.total_steps));
  EXPECT_EQ(m.total_steps, 3000);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      if (spec.at(x, y).kind == gridworld::CellKind::Wall) EXPECT_EQ(m.heatmap->at(x, y), 0u);
    }
  }
}

TEST(Train, BonusBatchesAreOnPolicyAndExactlyComposed) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  ExplorationConfig e;
  e.bonus_batch_size = 10;
  auto t = small_train();
  int checked = 0;
  Callbacks cb;
  cb.on_update = [&](const UpdateInfo& info) {
    ASSERT_NE(info.bonus_batches, nullptr);
    ASSERT_EQ(info.bonus_batches->size(), 2u);  // 4 envs x 5 steps split into batches of 10
    for (const auto& mb : *info.bonus_batches) {
      ASSERT_EQ(mb.size(), 10u);
      for (std::size_t i = 0; i < mb.size(); ++i) {
        EXPECT_EQ(mb.rollout_ids[i], info.param_version);
        EXPECT_EQ(mb.total_rewards[i], mb.extrinsic[i] + e.beta * mb.intrinsic_rewards[i]);
      }
      // Re-derive the bonus with affinely transformed critic outputs.
      Minibatch moved = mb;
      for (double& v : moved.raw_values) v = 3.0 * v + 7.0;
      moved = compose_bonus(std::move(moved), e);
      for (std::size_t i = 0; i < mb.size(); ++i) {
        EXPECT_NEAR(moved.intrinsic_rewards[i], mb.intrinsic_rewards[i], 1e-9);
      }
    }
    ++checked;
  };
  const auto m = train(spec, tabular_agent(), e, t, 2000, 3, cb);
  EXPECT_EQ(checked, m.updates);
  EXPECT_EQ(m.updates, 100);
}

TEST(Train, EvaluationCadence) {
  const auto spec = gridworld::builtin_task(TaskName::Empty, 6);
  auto t = small_train();
  t.eval_interval = 500;
  const auto m = train(spec, tabular_agent(), {}, t, 2010, 4);
  std::vector<std::int64_t> steps;
  for (const auto& e : m.evals) steps.push_back(e.step);
  EXPECT_EQ(steps, (std::vector<std::int64_t>{500, 1000, 1500, 2000, 2020}));
}

TEST(Train, PolicyEvaluationValueSourceRuns) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  auto t = small_train();
  t.value_source = ValueSource::PolicyEvaluation;
  const auto m = train(spec, tabular_agent(), {}, t, 1000, 5);
  EXPECT_EQ(m.total_steps, 1000);
}

TEST(Train, CallbackFailureAbortsWithPartialMetrics) {
  const auto spec = gridworld::builtin_task(TaskName::Empty, 6);
  Callbacks cb;
  int updates = 0;
  cb.on_update = [&](const UpdateInfo&) {
    if (++updates == 7) throw std::runtime_error("stop");
  };
  try {
    train(spec, tabular_agent(), {}, small_train(), 5000, 6, cb);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.partial().updates, 7);
    EXPECT_EQ(e.partial().total_steps, 7 * 20);
  }
}

TEST(Train, RejectsInconsistentConfigs) {
  const auto fixed = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  const auto random = gridworld::builtin_task(TaskName::SimpleCrossingRandom, 9);
  EXPECT_THROW(train(random, tabular_agent(), {}, small_train(), 100, 0), ConfigError);
  auto mlp = tabular_agent();
  mlp.kind = agent::ApproximatorKind::TinyMLP;
  auto t = small_train();
  t.record_heatmap = true;
  EXPECT_THROW(train(random, mlp, {}, t, 100, 0), ConfigError);
  t = small_train();
  t.value_source = ValueSource::PolicyEvaluation;
  EXPECT_THROW(train(random, mlp, {}, t, 100, 0), ConfigError);
  ExplorationConfig e;
  e.bonus_batch_size = 7;  // does not divide 20
  EXPECT_THROW(train(fixed, tabular_agent(), e, small_train(), 100, 0), ConfigError);
  e.bonus_batch_size = 0;
  e.k = 20;
  EXPECT_THROW(train(fixed, tabular_agent(), e, small_train(), 100, 0), ConfigError);
  t = small_train();
  t.num_envs = 0;
  EXPECT_THROW(train(fixed, tabular_agent(), {}, t, 100, 0), ConfigError);
  EXPECT_THROW(train(fixed, tabular_agent(), {}, small_train(), -1, 0), ConfigError);
}

TEST(Train, RandomisedLayoutsWithMlp) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingRandom, 9);
  auto a = tabular_agent();
  a.kind = agent::ApproximatorKind::TinyMLP;
  a.hidden = {16};
  auto t = small_train();
  t.obs_mode = gridworld::ObsMode::PartialGrid;
  t.bonus_encoding = BonusEncoding::Observation;
  const auto m = train(spec, a, {}, t, 2000, 7);
  EXPECT_EQ(m.total_steps, 2000);
  EXPECT_FALSE(m.evals.empty());
}

TEST(Train, VcseSolvesCrossingWithin100kSteps) {
  const auto spec = gridworld::builtin_task(TaskName::SimpleCrossingFixed, 9);
  TrainConfig t;
  t.num_envs = 8;
  t.obs_mode = gridworld::ObsMode::FullOneHot;
  const auto m = train(spec, tabular_agent(), {}, t, 100'000, 0);
  ASSERT_FALSE(m.evals.empty());
  EXPECT_GE(m.evals.back().success_rate, 0.8);
}

TEST(EvaluatePolicy, UntrainedGreedyPolicyTimesOut) {
  const auto spec = gridworld::builtin_task(TaskName::Empty, 6);
  agent::ApproximatorParams p(tabular_agent(), gridworld::ObsMode::AgentXY, 2);
  const auto cp = evaluate_policy(p, spec, gridworld::ObsMode::AgentXY, 20, 1, 123);
  EXPECT_EQ(cp.step, 123);
  EXPECT_EQ(cp.success_rate, 0.0);
  EXPECT_EQ(cp.mean_return, 0.0);
}
