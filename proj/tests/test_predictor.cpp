#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>
#include <random>

#include "cohortmt/common.hpp"
#include "cohortmt/metrics.hpp"
#include "cohortmt/predictor.hpp"

using namespace cohortmt;

namespace {

std::vector<BinaryTensor> random_tensors(int n, int hours, int dim,
                                         std::uint64_t seed,
                                         double density = 0.2) {
  std::vector<BinaryTensor> out(n);
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& t : out) {
    t.hours = hours;
    t.dim = dim;
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(hours * dim); ++i)
      if (u(rng) < density) t.ones.push_back(i);
  }
  return out;
}

double max_rel_grad_error(const RiskModel& model,
                          const std::vector<Eigen::MatrixXd>& x,
                          const Eigen::VectorXd& y,
                          const std::vector<int>& heads) {
  auto analytic = predictor_loss_grad(model, x, y, heads);
  RiskModel probe = model;
  Eigen::VectorXd flat = model.flatten();
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < flat.size(); ++i) {
    Eigen::VectorXd f = flat;
    f(i) += h;
    probe.unflatten(f);
    double up = predictor_loss(probe, x, y, heads);
    f(i) = flat(i) - h;
    probe.unflatten(f);
    double dn = predictor_loss(probe, x, y, heads);
    double fd = (up - dn) / (2 * h);
    double denom = std::max({std::abs(fd), std::abs(analytic.grad(i)), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic.grad(i)) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("variant names round-trip") {
  for (auto v : {ModelVariant::Global, ModelVariant::Separate,
                 ModelVariant::MtSharedDense, ModelVariant::MtSepDense})
    CHECK(variant_from_name(variant_name(v)) == v);
  CHECK_THROWS_AS(variant_from_name("bogus"), ConfigError);
}

TEST_CASE("analytic gradients match central differences for every variant") {
  auto tensors = random_tensors(6, 3, 5, 31, 0.3);
  std::vector<int> idx = {0, 1, 2, 3, 4, 5};
  auto x = [&] {
    std::vector<Eigen::MatrixXd> b(3);
    for (int t = 0; t < 3; ++t) {
      b[t] = Eigen::MatrixXd::Zero(6, 5);
      for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 5; ++c) b[t](i, c) = tensors[i].get(t, c) ? 1 : 0;
    }
    return b;
  }();
  Eigen::VectorXd y(6);
  y << 1, 0, 1, 0, 0, 1;
  std::vector<int> heads = {0, 1, 0, 1, 0, 1};
  for (auto v : {ModelVariant::Global, ModelVariant::MtSharedDense,
                 ModelVariant::MtSepDense}) {
    int k = v == ModelVariant::Global ? 1 : 2;
    auto model = RiskModel::create(v, k, 3, 5, 3, 2, 31);
    REQUIRE(model.num_params() <= 500);
    // move the zero-initialized biases off the ReLU kink, where central
    // differences straddle the non-differentiable point
    auto jrng = make_rng(31, 9);
    std::uniform_real_distribution<double> j(-0.1, 0.1);
    Eigen::VectorXd flat = model.flatten();
    for (int i = 0; i < flat.size(); ++i) flat(i) += j(jrng);
    model.unflatten(flat);
    std::vector<int> h = heads;
    if (v == ModelVariant::Global) h.assign(6, 0);
    CHECK(max_rel_grad_error(model, x, y, h) < 1e-4);
  }
}

TEST_CASE("head gradients vanish exactly for cohorts absent from the batch") {
  auto tensors = random_tensors(5, 3, 6, 32, 0.3);
  std::vector<Eigen::MatrixXd> x(3);
  for (int t = 0; t < 3; ++t) {
    x[t] = Eigen::MatrixXd::Zero(5, 6);
    for (int i = 0; i < 5; ++i)
      for (int c = 0; c < 6; ++c) x[t](i, c) = tensors[i].get(t, c) ? 1 : 0;
  }
  Eigen::VectorXd y(5);
  y << 1, 0, 1, 0, 1;
  std::vector<int> heads(5, 0);  // cohort-0-only batch

  for (auto v : {ModelVariant::MtSharedDense, ModelVariant::MtSepDense}) {
    auto model = RiskModel::create(v, 3, 3, 6, 4, 3, 32);
    auto res = predictor_loss_grad(model, x, y, heads);
    RiskModel grads = model;
    grads.unflatten(res.grad);
    // untouched output heads: identically zero, not merely small
    for (int k = 1; k < 3; ++k) {
      CHECK(grads.w2[k].cwiseAbs().maxCoeff() == 0.0);
      CHECK(grads.b2[k] == 0.0);
      if (v == ModelVariant::MtSepDense) {
        CHECK(grads.w1[k].cwiseAbs().maxCoeff() == 0.0);
        CHECK(grads.b1[k].cwiseAbs().maxCoeff() == 0.0);
      }
    }
    // the used head and trunk do receive gradient
    CHECK(grads.w2[0].cwiseAbs().maxCoeff() > 0.0);
    CHECK(grads.trunk.wx.cwiseAbs().maxCoeff() > 0.0);
    if (v == ModelVariant::MtSharedDense)
      CHECK(grads.w1[0].cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("training separates a linearly separable population") {
  // positives carry a distinctive always-on column
  const int n = 120, hours = 4, dim = 10;
  auto rng = make_rng(33, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<BinaryTensor> tensors(n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    auto& t = tensors[i];
    t.hours = hours;
    t.dim = dim;
    labels[i] = u(rng) < 0.4 ? 1 : 0;
    for (std::uint32_t c = 0; c < static_cast<std::uint32_t>(hours * dim); ++c) {
      bool marker = (c % dim) == 0;
      if (marker ? labels[i] : (u(rng) < 0.2)) t.ones.push_back(c);
    }
  }
  std::vector<int> train, val;
  for (int i = 0; i < 96; ++i) train.push_back(i);
  for (int i = 96; i < n; ++i) val.push_back(i);
  PredictorTrainOptions opts;
  opts.max_epochs = 40;
  opts.learning_rate = 0.01;
  auto tp = train_model(ModelVariant::Global, tensors, labels, {}, 1, train,
                        val, 8, 4, 33, opts);
  std::vector<double> scores;
  std::vector<int> y;
  for (int i : val) {
    scores.push_back(tp.predict(tensors[i]));
    y.push_back(labels[i]);
  }
  CHECK(auc(scores, y) > 0.95);
}

TEST_CASE("separate variant trains one model per cohort") {
  auto tensors = random_tensors(40, 3, 8, 34, 0.25);
  auto rng = make_rng(34, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> labels(40), cohorts(40);
  for (int i = 0; i < 40; ++i) {
    labels[i] = u(rng) < 0.5 ? 1 : 0;
    cohorts[i] = i % 2;
  }
  std::vector<int> train, val;
  for (int i = 0; i < 32; ++i) train.push_back(i);
  for (int i = 32; i < 40; ++i) val.push_back(i);
  PredictorTrainOptions opts;
  opts.max_epochs = 2;
  auto tp = train_model(ModelVariant::Separate, tensors, labels, cohorts, 2,
                        train, val, 4, 3, 34, opts);
  CHECK(tp.models.size() == 2);
  CHECK_NOTHROW(tp.predict(tensors[0], 1));
  CHECK_THROWS(tp.predict(tensors[0]));  // cohort id required

  // a cohort with no training examples is an error for separate models
  std::vector<int> all_zero(40, 0);
  CHECK_THROWS_AS(train_model(ModelVariant::Separate, tensors, labels,
                              all_zero, 2, train, val, 4, 3, 34, opts),
                  DataError);
}

TEST_CASE("grid search prefers fewer parameters on ties and is deterministic") {
  auto tensors = random_tensors(60, 3, 8, 35, 0.25);
  auto rng = make_rng(35, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> labels(60);
  for (auto& l : labels) l = u(rng) < 0.5 ? 1 : 0;
  std::vector<int> trainval(60);
  std::iota(trainval.begin(), trainval.end(), 0);
  PredictorTrainOptions opts;
  opts.max_epochs = 2;
  std::vector<GridPoint> grid = {{4, 3}, {6, 3}};
  auto r1 = grid_search(ModelVariant::Global, tensors, labels, {}, 1, trainval,
                        grid, 35, opts, 2);
  auto r2 = grid_search(ModelVariant::Global, tensors, labels, {}, 1, trainval,
                        grid, 35, opts, 2);
  CHECK(r1.best.trunk_dim == r2.best.trunk_dim);
  REQUIRE(r1.table.size() == 2);
  for (const auto& row : r1.table) CHECK(row.split_aucs.size() == 2);
}
