#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "capsroute/config.hpp"
#include "capsroute/errors.hpp"
#include "capsroute/ops.hpp"
#include "capsroute/optim.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/train.hpp"

using namespace capsroute;

namespace {

void set_grad(NamedParameter& p, const std::vector<double>& g) {
  Tensor x = p.value;
  Tensor gt(x.shape(), g);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ops::sum_all(ops::mul(x, gt)));
}

DatasetSplits tiny_splits(std::size_t n = 60, std::uint64_t seed = 10) {
  SynthConfig c;
  c.n_samples = n;
  c.seed = seed;
  return split(generate(c), {0.6, 0.2, 0.2}, seed);
}

TrainConfig quick_train(std::size_t epochs = 2) {
  TrainConfig t;
  t.max_epochs = epochs;
  t.patience = epochs;
  t.lr = 1e-3;
  return t;
}

}  // namespace

TEST(Adam, MatchesScriptedOracleOnQuadraticBowl) {
  const std::vector<double> a{0.5, 2.0, 1.0, 3.0}, c{1.0, -2.0, 0.5, 0.0};
  std::vector<NamedParameter> params{{"x", Tensor(Shape{4}, std::vector<double>{0.3, 0.7, -1.2, 2.0}, true)}};
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  AdamState state;

  std::vector<double> x{0.3, 0.7, -1.2, 2.0}, m(4, 0.0), v(4, 0.0);
  for (int t = 1; t <= 5; ++t) {
    {
      Tape tape;
      TapeScope scope(tape);
      const Tensor diff = ops::sub(params[0].value, Tensor(Shape{4}, c));
      tape.backward(ops::sum_all(ops::mul(Tensor(Shape{4}, a), ops::square(diff))));
    }
    adam_step(params, state, cfg);
    for (std::size_t k = 0; k < 4; ++k) {
      const double g = 2.0 * a[k] * (x[k] - c[k]);
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1.0 - std::pow(0.9, t)), vh = v[k] / (1.0 - std::pow(0.999, t));
      x[k] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(params[0].value[k], x[k], 1e-12) << "step " << t;
  }
  EXPECT_EQ(state.t, 5u);
}

TEST(Adam, ZeroGradientLeavesParametersAndDecaysMoments) {
  std::vector<NamedParameter> params{{"w", Tensor(Shape{3}, std::vector<double>{1, 2, 3}, true)}};
  AdamState state;
  set_grad(params[0], {1.0, -1.0, 2.0});
  adam_step(params, state, {});
  const std::vector<double> after_first(params[0].value.data().begin(), params[0].value.data().end());
  const auto m1 = state.m[0];
  set_grad(params[0], {0.0, 0.0, 0.0});
  adam_step(params, state, {});
  // The surviving first moment still moves the parameters; with m=v=0 nothing moves.
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(state.m[0][k], 0.9 * m1[k], 1e-15);

  std::vector<NamedParameter> fresh{{"w", Tensor(Shape{2}, std::vector<double>{4, 5}, true)}};
  AdamState s2;
  set_grad(fresh[0], {0.0, 0.0});
  adam_step(fresh, s2, {});
  EXPECT_EQ(fresh[0].value[0], 4.0);
  EXPECT_EQ(fresh[0].value[1], 5.0);
  (void)after_first;
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  std::vector<NamedParameter> params{{"w", Tensor(Shape{2}, 0.0, true)}};
  AdamState state;
  const AdamConfig cfg{1e-3, 0.9, 0.999, 1e-8};
  double prev0 = 0.0, prev1 = 0.0;
  for (int t = 0; t < 2000; ++t) {
    set_grad(params[0], {0.7, -3.0});
    prev0 = params[0].value[0];
    prev1 = params[0].value[1];
    adam_step(params, state, cfg);
  }
  EXPECT_NEAR(params[0].value[0] - prev0, -1e-3, 1e-8);
  EXPECT_NEAR(params[0].value[1] - prev1, 1e-3, 1e-8);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  std::vector<NamedParameter> params{{"ok", Tensor(Shape{1}, 1.0, true)}, {"bad", Tensor(Shape{2}, 1.0, true)}};
  set_grad(params[0], {0.5});
  set_grad(params[1], {0.5, std::nan("")});
  AdamState state;
  try {
    adam_step(params, state, {});
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
  EXPECT_EQ(params[0].value[0], 1.0);
}

TEST(EarlyStopping, PatienceOneStopsAfterSecondWorseningEpoch) {
  EarlyStopping s(1);
  EXPECT_FALSE(s.update(1, 1.0));
  EXPECT_TRUE(s.update(2, 1.5));
  EXPECT_EQ(s.best_epoch(), 1u);
}

TEST(EarlyStopping, CountsConsecutiveNonImprovements) {
  EarlyStopping s(3);
  const std::vector<double> losses{5.0, 4.0, 4.5, 4.0, 3.9, 4.1, 4.2, 4.0};
  std::size_t stopped = 0;
  for (std::size_t e = 0; e < losses.size(); ++e) {
    if (s.update(e + 1, losses[e])) {
      stopped = e + 1;
      break;
    }
  }
  EXPECT_EQ(stopped, 8u);
  EXPECT_EQ(s.best_epoch(), 5u);
  EXPECT_EQ(s.best_loss(), 3.9);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.patience = 200;
  EXPECT_THROW(t.validate(), ConfigError);
  t = TrainConfig{};
  t.batch_size = 0;
  EXPECT_THROW(t.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

TEST(Train, EmptySplitIsConfigError) {
  const DatasetSplits s = tiny_splits();
  Model model(ModelConfig::small(), {1, 32, 32}, 10);
  EXPECT_THROW(train(model, Dataset{}, s.val, quick_train()), ConfigError);
  EXPECT_THROW(train(model, s.train, Dataset{}, quick_train()), ConfigError);
}

TEST(Train, RecordIsBitIdenticalAcrossRuns) {
  const DatasetSplits s = tiny_splits();
  std::string texts[2];
  for (auto& text : texts) {
    Model model(ModelConfig::small(), {1, 32, 32}, 10);
    text = train(model, s.train, s.val, quick_train()).to_text();
  }
  EXPECT_EQ(texts[0], texts[1]);
  EXPECT_NE(texts[0].find("best_epoch="), std::string::npos);
}

TEST(Train, RestoresBestValidationParameters) {
  const DatasetSplits s = tiny_splits();
  Model model(ModelConfig::small(), {1, 32, 32}, 3);
  TrainConfig t = quick_train(4);
  t.lr = 3e-3;
  const ExperimentRecord r = train(model, s.train, s.val, t);
  const double final_val = evaluate(model, s.val).loss;
  EXPECT_EQ(final_val, r.best_val_loss);
  for (const auto& e : r.epochs) EXPECT_LE(final_val, e.val_loss);
  EXPECT_EQ(r.epochs[r.best_epoch - 1].val_loss, r.best_val_loss);
  ASSERT_NE(r.find_metrics("train"), nullptr);
  EXPECT_EQ(r.find_metrics("val")->confusion.total(), s.val.size());
}

TEST(Train, SetsClassProportionsFromTrainingLabels) {
  const DatasetSplits s = tiny_splits(100);
  Model model(ModelConfig::small(), {1, 32, 32}, 10);
  train(model, s.train, s.val, quick_train(1));
  const auto& p = model.config().loss.class_proportions;
  EXPECT_DOUBLE_EQ(p[1], static_cast<double>(s.train.positives()) / static_cast<double>(s.train.size()));
}

TEST(Train, SmallStepDecreasesBatchLoss) {
  SynthConfig c;
  c.n_samples = 8;
  c.positive_ratio = 0.5;
  const Dataset d = generate(c);
  std::vector<std::size_t> idx(8);
  for (std::size_t i = 0; i < 8; ++i) idx[i] = i;
  const Batch batch = make_batch(d, idx);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Model model(ModelConfig::small(), {1, 32, 32}, seed);
    Tape tape;
    double before = 0.0;
    {
      TapeScope scope(tape);
      const Tensor loss = model.loss(model.forward(batch.images), batch).total;
      before = loss.item();
      model.zero_grad();
      tape.backward(loss);
    }
    AdamState state;
    adam_step(model.parameters(), state, AdamConfig{1e-6});
    const double after = model.loss(model.forward(batch.images), batch).total.item();
    EXPECT_LT(after, before) << "seed " << seed;
  }
}

TEST(Evaluate, ConstantOutputModelScoresBaseRate) {
  SynthConfig c;
  c.n_samples = 100;
  const Dataset d = generate(c);
  ModelConfig mc = ModelConfig::small();
  mc.affine_kind = AffineKind::constant;
  const Model model(mc, {1, 32, 32}, 10);
  const Evaluation ev = evaluate(model, d);
  EXPECT_DOUBLE_EQ(ev.report.accuracy, 0.8);
  EXPECT_EQ(ev.report.confusion.total(), 100u);
}

TEST(Evaluate, SingleClassSplitHasUndefinedAucs) {
  SynthConfig c;
  c.n_samples = 20;
  Dataset d = generate(c);
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.labels[i] == 0) negatives.push_back(i);
  const Evaluation ev = evaluate(Model(ModelConfig::small(), {1, 32, 32}, 1), d.subset(negatives));
  EXPECT_FALSE(ev.report.roc_auc.has_value());
  EXPECT_FALSE(ev.report.pr_auc.has_value());
}

TEST(Evaluate, CnnBaselinesProduceProbabilities) {
  SynthConfig c;
  c.n_samples = 10;
  const Dataset d = generate(c);
  for (auto arch : {Architecture::cnn1, Architecture::cnn2}) {
    ModelConfig mc = ModelConfig::small();
    mc.architecture = arch;
    const Evaluation ev = evaluate(Model(mc, {1, 32, 32}, 1), d);
    for (double s : ev.scores) {
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
  }
}

TEST(Sweep, CarriesGridValuesAndReducesToTrain) {
  const DatasetSplits s = tiny_splits();
  const std::vector<double> grid{0.0, 0.05};
  const auto rows = sweep_lambda(grid, ModelConfig::small(), quick_train(1), s, 10);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].lambda_reg, 0.0);
  EXPECT_EQ(rows[1].lambda_reg, 0.05);
  EXPECT_NE(rows[0].record.to_text(), rows[1].record.to_text());

  ModelConfig mc = ModelConfig::small();
  mc.loss.lambda_reg = 0.05;
  Model model(mc, {1, 32, 32}, 10);
  ExperimentRecord direct = train(model, s.train, s.val, quick_train(1));
  direct.metrics.emplace_back("test", evaluate(model, s.test).report);
  EXPECT_EQ(rows[1].record.to_text(), direct.to_text());

  const std::string csv = sweep_table_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "lambda_reg,accuracy,f1,roc_auc,pr_auc,best_epoch,best_val_loss");
  EXPECT_THROW(sweep_lambda(std::vector<double>{2.0}, ModelConfig::small(), quick_train(1), s, 10), ConfigError);
}

TEST(Config, TextRoundTrip) {
  ExperimentConfig c;
  c.model.routing = RoutingMethod::dynamic;
  c.model.affine_kind = AffineKind::conv;
  c.train.lr = 3.3e-4;
  c.synth.rotation_test = {-45.0, 45.0};
  c.model.loss.class_proportions = {0.7, 0.3};
  const std::string text = to_config_text(c);
  ExperimentConfig back;
  apply_config(back, parse_config_text(text));
  EXPECT_EQ(to_config_text(back), text);
  EXPECT_EQ(back.model.routing, RoutingMethod::dynamic);
  EXPECT_EQ(back.synth.rotation_test.lo, -45.0);
}

TEST(Config, EveryFieldIsDocumented) {
  for (const auto& f : config_fields()) EXPECT_NE(f.doc.find("default"), std::string::npos) << f.key;
}

TEST(Config, ErrorsOnUnknownKeysAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(apply_config(c, {{"train.learning_rate", "1"}}), ConfigError);
  EXPECT_THROW(apply_config(c, {{"train.lr", "fast"}}), ConfigError);
  EXPECT_THROW(apply_config(c, {{"model.routing", "em"}}), ConfigError);
  EXPECT_THROW(parse_config_text("no equals sign"), ConfigError);
  const ConfigMap m = parse_config_text("# comment\n train.lr = 0.5 # trailing\n\n");
  EXPECT_EQ(m.at("train.lr"), "0.5");
}

TEST(Config, SavedModelReloadsExactly) {
  ModelConfig mc = ModelConfig::small();
  mc.routing = RoutingMethod::dynamic;
  const Model model(mc, {1, 32, 32}, 4);
  const auto path = std::filesystem::temp_directory_path() / "capsroute_test_model.txt";
  save_model(model, path);
  const Model back = load_model(path);
  std::filesystem::remove(path);
  SynthConfig c;
  c.n_samples = 4;
  const Dataset d = generate(c);
  const Evaluation a = evaluate(model, d), b = evaluate(back, d);
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(back.config().routing, RoutingMethod::dynamic);
}
