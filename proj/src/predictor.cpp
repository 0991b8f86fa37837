#include "cohortmt/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "cohortmt/common.hpp"
#include "cohortmt/metrics.hpp"

namespace cohortmt {

std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::Global:
      return "global";
    case ModelVariant::Separate:
      return "separate";
    case ModelVariant::MtSharedDense:
      return "multitask_shared_dense";
    case ModelVariant::MtSepDense:
      return "multitask_sep_dense";
  }
  throw std::logic_error("unreachable");
}

ModelVariant variant_from_name(const std::string& name) {
  if (name == "global") return ModelVariant::Global;
  if (name == "separate") return ModelVariant::Separate;
  if (name == "multitask_shared_dense") return ModelVariant::MtSharedDense;
  if (name == "multitask_sep_dense") return ModelVariant::MtSepDense;
  throw ConfigError("unknown model variant: " + name);
}

RiskModel RiskModel::create(ModelVariant variant, int k, int t_steps,
                            int input_dim, int trunk_dim, int head_dim,
                            std::uint64_t seed) {
  if (variant == ModelVariant::Separate)
    throw ConfigError("separate variant is a set of global models");
  if (k < 1) throw ConfigError("k must be >= 1");
  RiskModel m;
  m.variant = variant;
  m.k = variant == ModelVariant::Global ? 1 : k;
  m.t_steps = t_steps;
  m.input_dim = input_dim;
  m.trunk_dim = trunk_dim;
  m.head_dim = head_dim;
  m.seed = seed;
  auto rng = make_rng(seed, 0);
  m.trunk.init(input_dim, trunk_dim, rng);
  int dense_layers = variant == ModelVariant::MtSepDense ? m.k : 1;
  for (int i = 0; i < dense_layers; ++i) {
    m.w1.push_back(dense_init(head_dim, trunk_dim, rng));
    m.b1.push_back(Eigen::VectorXd::Zero(head_dim));
  }
  for (int i = 0; i < m.k; ++i) {
    m.w2.push_back(dense_init(head_dim, 1, rng).col(0));
    m.b2.push_back(0.0);
  }
  return m;
}

int RiskModel::num_params() const {
  long long n = trunk.wx.size() + trunk.wh.size() + trunk.b.size();
  for (const auto& w : w1) n += w.size();
  for (const auto& b : b1) n += b.size();
  for (const auto& w : w2) n += w.size();
  n += static_cast<long long>(b2.size());
  return static_cast<int>(n);
}

Eigen::VectorXd RiskModel::flatten() const {
  Eigen::VectorXd flat(num_params());
  int off = 0;
  pack(flat, off, trunk.wx);
  pack(flat, off, trunk.wh);
  pack(flat, off, trunk.b);
  for (size_t i = 0; i < w1.size(); ++i) {
    pack(flat, off, w1[i]);
    pack(flat, off, b1[i]);
  }
  for (size_t i = 0; i < w2.size(); ++i) {
    pack(flat, off, w2[i]);
    flat(off++) = b2[i];
  }
  return flat;
}

void RiskModel::unflatten(const Eigen::VectorXd& flat) {
  int off = 0;
  unpack(flat, off, trunk.wx);
  unpack(flat, off, trunk.wh);
  unpack(flat, off, trunk.b);
  for (size_t i = 0; i < w1.size(); ++i) {
    unpack(flat, off, w1[i]);
    unpack(flat, off, b1[i]);
  }
  for (size_t i = 0; i < w2.size(); ++i) {
    unpack(flat, off, w2[i]);
    b2[i] = flat(off++);
  }
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct PredForward {
  LstmCache trunk;
  Eigen::MatrixXd r;           // relu(h_T), B x trunk_dim
  Eigen::MatrixXd a;           // dense activations, B x head_dim
  Eigen::VectorXd z;           // logits
  Eigen::VectorXd p;           // probabilities
};

PredForward pred_forward(const RiskModel& m,
                         const std::vector<Eigen::MatrixXd>& x,
                         const std::vector<int>& heads) {
  if (static_cast<int>(x.size()) != m.t_steps ||
      static_cast<int>(x[0].cols()) != m.input_dim)
    throw DataError("input shape does not match the trained model");
  const int batch = static_cast<int>(x[0].rows());
  if (m.num_heads() > 1 && static_cast<int>(heads.size()) != batch)
    throw DataError("cohort ids required for a cohort-aware model");

  PredForward f;
  f.trunk = lstm_forward(m.trunk, x);
  f.r = f.trunk.h.back().cwiseMax(0.0);
  f.a.resize(batch, m.head_dim);
  f.z.resize(batch);
  f.p.resize(batch);
  for (int i = 0; i < batch; ++i) {
    int h = m.num_heads() > 1 ? heads[i] : 0;
    if (h < 0 || h >= m.k) throw DataError("cohort id out of range");
    const auto& w1 = m.w1[m.w1.size() > 1 ? h : 0];
    const auto& b1 = m.b1[m.b1.size() > 1 ? h : 0];
    f.a.row(i) =
        ((w1 * f.r.row(i).transpose() + b1).cwiseMax(0.0)).transpose();
    f.z(i) = m.w2[h].dot(f.a.row(i)) + m.b2[h];
    f.p(i) = sigmoid(f.z(i));
  }
  return f;
}

double bce_from_logit(double z, double y) {
  // stable binary cross-entropy from the logit
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace

Eigen::VectorXd RiskModel::predict_batch(const std::vector<Eigen::MatrixXd>& x,
                                         const std::vector<int>& heads) const {
  return pred_forward(*this, x, heads).p;
}

double RiskModel::predict(const BinaryTensor& tensor,
                          std::optional<int> cohort_id) const {
  if (num_heads() > 1 && !cohort_id)
    throw DataError("cohort id required for a cohort-aware model");
  std::vector<BinaryTensor> one = {tensor};
  auto x = make_batch(one, {0});
  std::vector<int> heads = {cohort_id.value_or(0)};
  return predict_batch(x, heads)(0);
}

double predictor_loss(const RiskModel& model,
                      const std::vector<Eigen::MatrixXd>& x,
                      const Eigen::VectorXd& y,
                      const std::vector<int>& heads) {
  auto f = pred_forward(model, x, heads);
  double loss = 0.0;
  for (int i = 0; i < y.size(); ++i) loss += bce_from_logit(f.z(i), y(i));
  return loss / static_cast<double>(y.size());
}

PredictorGradResult predictor_loss_grad(const RiskModel& model,
                                        const std::vector<Eigen::MatrixXd>& x,
                                        const Eigen::VectorXd& y,
                                        const std::vector<int>& heads) {
  auto f = pred_forward(model, x, heads);
  const int batch = static_cast<int>(y.size());
  const double inv_b = 1.0 / static_cast<double>(batch);

  PredictorGradResult res;
  res.loss = 0.0;

  std::vector<Eigen::MatrixXd> g_w1;
  std::vector<Eigen::VectorXd> g_b1;
  std::vector<Eigen::VectorXd> g_w2;
  std::vector<double> g_b2(model.b2.size(), 0.0);
  for (const auto& w : model.w1)
    g_w1.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : model.b1)
    g_b1.push_back(Eigen::VectorXd::Zero(b.size()));
  for (const auto& w : model.w2)
    g_w2.push_back(Eigen::VectorXd::Zero(w.size()));

  Eigen::MatrixXd dr = Eigen::MatrixXd::Zero(batch, model.trunk_dim);
  for (int i = 0; i < batch; ++i) {
    int h = model.num_heads() > 1 ? heads[i] : 0;
    int d = model.w1.size() > 1 ? h : 0;
    res.loss += bce_from_logit(f.z(i), y(i));
    double dz = (f.p(i) - y(i)) * inv_b;
    g_w2[h] += dz * f.a.row(i).transpose();
    g_b2[h] += dz;
    Eigen::VectorXd da = dz * model.w2[h];
    // relu mask on the dense activation
    Eigen::VectorXd dpre1 =
        da.array() * (f.a.row(i).transpose().array() > 0.0).cast<double>();
    g_w1[d].noalias() += dpre1 * f.r.row(i);
    g_b1[d] += dpre1;
    dr.row(i) = (model.w1[d].transpose() * dpre1).transpose();
  }
  res.loss *= inv_b;

  // relu mask on the trunk output
  Eigen::MatrixXd dh_last =
      dr.cwiseProduct((f.trunk.h.back().array() > 0.0).cast<double>().matrix());
  std::vector<Eigen::MatrixXd> dh(
      model.t_steps, Eigen::MatrixXd::Zero(batch, model.trunk_dim));
  dh.back() = dh_last;
  LstmParams trunk_grads;
  lstm_backward(model.trunk, f.trunk, dh, trunk_grads);

  res.grad.resize(model.num_params());
  int off = 0;
  pack(res.grad, off, trunk_grads.wx);
  pack(res.grad, off, trunk_grads.wh);
  pack(res.grad, off, trunk_grads.b);
  for (size_t i = 0; i < g_w1.size(); ++i) {
    pack(res.grad, off, g_w1[i]);
    pack(res.grad, off, g_b1[i]);
  }
  for (size_t i = 0; i < g_w2.size(); ++i) {
    pack(res.grad, off, g_w2[i]);
    res.grad(off++) = g_b2[i];
  }
  return res;
}

double TrainedPredictor::predict(const BinaryTensor& tensor,
                                 std::optional<int> cohort_id) const {
  if (variant == ModelVariant::Global) return models[0].predict(tensor);
  if (!cohort_id)
    throw DataError("cohort id required for a cohort-aware model");
  if (variant == ModelVariant::Separate) {
    if (*cohort_id < 0 || *cohort_id >= static_cast<int>(models.size()))
      throw DataError("cohort id out of range");
    return models[*cohort_id].predict(tensor);
  }
  return models[0].predict(tensor, cohort_id);
}

namespace {

RiskModel train_single(ModelVariant variant,
                       const std::vector<BinaryTensor>& tensors,
                       const std::vector<int>& labels,
                       const std::vector<int>& cohorts, int k,
                       const std::vector<int>& train_indices,
                       const std::vector<int>& val_indices, int trunk_dim,
                       int head_dim, std::uint64_t seed,
                       const PredictorTrainOptions& options,
                       TrainCurve& curve) {
  const int t_steps = tensors[train_indices[0]].hours;
  const int dim = tensors[train_indices[0]].dim;
  auto model = RiskModel::create(variant, k, t_steps, dim, trunk_dim, head_dim,
                                 seed);
  Eigen::VectorXd params = model.flatten();
  Adam opt;
  opt.lr = options.learning_rate;
  auto rng = make_rng(seed, 1);
  std::vector<int> order = train_indices;

  auto batch_of = [&](const std::vector<int>& idx) {
    auto x = make_batch(tensors, idx);
    Eigen::VectorXd y(idx.size());
    std::vector<int> heads(idx.size(), 0);
    for (size_t i = 0; i < idx.size(); ++i) {
      y(i) = labels[idx[i]];
      if (!cohorts.empty()) heads[i] = cohorts[idx[i]];
    }
    return std::make_tuple(std::move(x), std::move(y), std::move(heads));
  };

  auto eval_loss = [&](const std::vector<int>& indices) {
    double total = 0.0;
    for (size_t start = 0; start < indices.size();
         start += options.batch_size) {
      size_t end = std::min(indices.size(),
                            start + static_cast<size_t>(options.batch_size));
      std::vector<int> chunk(indices.begin() + start, indices.begin() + end);
      auto [x, y, heads] = batch_of(chunk);
      total += predictor_loss(model, x, y, heads) * chunk.size();
    }
    return total / static_cast<double>(indices.size());
  };

  Eigen::VectorXd best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      size_t end = std::min(order.size(),
                            start + static_cast<size_t>(options.batch_size));
      std::vector<int> chunk(order.begin() + start, order.begin() + end);
      auto [x, y, heads] = batch_of(chunk);
      auto g = predictor_loss_grad(model, x, y, heads);
      if (!std::isfinite(g.loss))
        throw NumericError("non-finite predictor loss at epoch " +
                           std::to_string(epoch));
      opt.step(params, g.grad);
      model.unflatten(params);
      epoch_loss += g.loss * chunk.size();
    }
    curve.train_loss.push_back(epoch_loss /
                               static_cast<double>(order.size()));
    double val = val_indices.empty() ? curve.train_loss.back()
                                     : eval_loss(val_indices);
    curve.val_loss.push_back(val);
    if (val < best_val) {
      best_val = val;
      best_params = params;
      curve.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= options.patience) break;
  }
  model.unflatten(best_params);
  return model;
}

}  // namespace

TrainedPredictor train_model(ModelVariant variant,
                             const std::vector<BinaryTensor>& tensors,
                             const std::vector<int>& labels,
                             const std::vector<int>& cohorts, int k,
                             const std::vector<int>& train_indices,
                             const std::vector<int>& val_indices,
                             int trunk_dim, int head_dim, std::uint64_t seed,
                             const PredictorTrainOptions& options) {
  if (train_indices.empty()) throw DataError("no training examples");
  TrainedPredictor tp;
  tp.variant = variant;
  tp.k = variant == ModelVariant::Global ? 1 : k;

  if (variant != ModelVariant::Global) {
    if (cohorts.empty())
      throw DataError("cohort assignment required for this variant");
    std::vector<int> counts(k, 0);
    for (int i : train_indices) {
      if (cohorts[i] < 0 || cohorts[i] >= k)
        throw DataError("cohort id out of range in training data");
      counts[cohorts[i]]++;
    }
    for (int c = 0; c < k; ++c)
      if (counts[c] == 0) {
        if (variant == ModelVariant::Separate)
          throw DataError("cohort " + std::to_string(c) +
                          " has no training examples");
        std::cerr << "warning: cohort " << c
                  << " has no training examples; its head stays untrained\n";
      }
  }

  if (variant == ModelVariant::Separate) {
    for (int c = 0; c < k; ++c) {
      std::vector<int> tr, va;
      for (int i : train_indices)
        if (cohorts[i] == c) tr.push_back(i);
      for (int i : val_indices)
        if (cohorts[i] == c) va.push_back(i);
      TrainCurve sub;
      tp.models.push_back(train_single(ModelVariant::Global, tensors, labels,
                                       {}, 1, tr, va, trunk_dim, head_dim,
                                       mix_seed(seed, c), options, sub));
      if (tp.curve.train_loss.size() < sub.train_loss.size())
        tp.curve.train_loss.resize(sub.train_loss.size(), 0.0);
      for (size_t e = 0; e < sub.train_loss.size(); ++e)
        tp.curve.train_loss[e] += sub.train_loss[e];
    }
    return tp;
  }

  tp.models.push_back(train_single(
      variant, tensors, labels, variant == ModelVariant::Global ? std::vector<int>{} : cohorts,
      tp.k, train_indices, val_indices, trunk_dim, head_dim, seed, options,
      tp.curve));
  return tp;
}

GridSearchResult grid_search(ModelVariant variant,
                             const std::vector<BinaryTensor>& tensors,
                             const std::vector<int>& labels,
                             const std::vector<int>& cohorts, int k,
                             const std::vector<int>& trainval_indices,
                             const std::vector<GridPoint>& grid,
                             std::uint64_t master_seed,
                             const PredictorTrainOptions& options,
                             int num_splits) {
  if (grid.empty()) throw ConfigError("empty hyperparameter grid");

  // 5 random 7:1 splits, stratified on label, shared across grid points
  std::vector<std::pair<std::vector<int>, std::vector<int>>> splits;
  for (int s = 0; s < num_splits; ++s) {
    std::vector<int> tr, va;
    for (int label = 0; label <= 1; ++label) {
      std::vector<int> idx;
      for (int i : trainval_indices)
        if (labels[i] == label) idx.push_back(i);
      auto rng = make_rng(master_seed, 200 + s * 2 + label);
      std::shuffle(idx.begin(), idx.end(), rng);
      size_t n_val = idx.size() / 8;
      for (size_t i = 0; i < idx.size(); ++i)
        (i < n_val ? va : tr).push_back(idx[i]);
    }
    splits.emplace_back(std::move(tr), std::move(va));
  }

  GridSearchResult result;
  bool have_best = false;
  double best_mean = 0.0;
  long long best_params = 0;

  for (size_t g = 0; g < grid.size(); ++g) {
    GridSearchResult::Row row;
    row.point = grid[g];
    try {
      for (int s = 0; s < num_splits; ++s) {
        const auto& [tr, va] = splits[s];
        auto tp = train_model(variant, tensors, labels, cohorts, k, tr, va,
                              grid[g].trunk_dim, grid[g].head_dim,
                              mix_seed(master_seed, 300 + g * 16 + s),
                              options);
        std::vector<double> scores;
        std::vector<int> ys;
        for (int i : va) {
          std::optional<int> c;
          if (variant != ModelVariant::Global) c = cohorts[i];
          scores.push_back(tp.predict(tensors[i], c));
          ys.push_back(labels[i]);
        }
        row.split_aucs.push_back(auc(scores, ys));
        if (s == 0) row.params = tp.models[0].num_params() *
                                 static_cast<long long>(tp.models.size());
      }
      row.mean_auc =
          std::accumulate(row.split_aucs.begin(), row.split_aucs.end(), 0.0) /
          static_cast<double>(num_splits);
    } catch (const std::exception& e) {
      row.failed = true;
      row.note = e.what();
      std::cerr << "warning: grid point (" << grid[g].trunk_dim << ","
                << grid[g].head_dim << ") excluded: " << e.what() << "\n";
    }
    if (!row.failed &&
        (!have_best || row.mean_auc > best_mean ||
         (row.mean_auc == best_mean && row.params < best_params))) {
      have_best = true;
      best_mean = row.mean_auc;
      best_params = row.params;
      result.best = row.point;
    }
    result.table.push_back(std::move(row));
  }
  if (!have_best)
    throw NumericError("every grid point failed to train on all splits");
  return result;
}

}  // namespace cohortmt
