#include "cohortmt/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cohortmt/common.hpp"

namespace cohortmt {

std::vector<Eigen::MatrixXd> make_batch(const std::vector<BinaryTensor>& tensors,
                                        const std::vector<int>& indices) {
  if (indices.empty()) throw DataError("empty batch");
  const int t_steps = tensors[indices[0]].hours;
  const int dim = tensors[indices[0]].dim;
  const int batch = static_cast<int>(indices.size());
  std::vector<Eigen::MatrixXd> x(t_steps,
                                 Eigen::MatrixXd::Zero(batch, dim));
  for (int b = 0; b < batch; ++b) {
    const auto& t = tensors[indices[b]];
    if (t.hours != t_steps || t.dim != dim)
      throw DataError("tensor shape mismatch within batch");
    for (auto idx : t.ones) x[idx / dim](b, idx % dim) = 1.0;
  }
  return x;
}

SeqAutoencoder SeqAutoencoder::create(int t_steps, int input_dim,
                                      int embedding_dim, std::uint64_t seed) {
  if (embedding_dim < 1) throw ConfigError("embedding size must be >= 1");
  SeqAutoencoder m;
  m.t_steps = t_steps;
  m.input_dim = input_dim;
  m.embedding_dim = embedding_dim;
  m.seed = seed;
  auto rng = make_rng(seed, 0);
  m.encoder.init(input_dim, embedding_dim, rng);
  m.decoder.init(embedding_dim, embedding_dim, rng);
  m.w_out = dense_init(input_dim, embedding_dim, rng);
  m.b_out = Eigen::VectorXd::Zero(input_dim);
  return m;
}

int SeqAutoencoder::num_params() const {
  return static_cast<int>(encoder.wx.size() + encoder.wh.size() +
                          encoder.b.size() + decoder.wx.size() +
                          decoder.wh.size() + decoder.b.size() + w_out.size() +
                          b_out.size());
}

Eigen::VectorXd SeqAutoencoder::flatten() const {
  Eigen::VectorXd flat(num_params());
  int off = 0;
  pack(flat, off, encoder.wx);
  pack(flat, off, encoder.wh);
  pack(flat, off, encoder.b);
  pack(flat, off, decoder.wx);
  pack(flat, off, decoder.wh);
  pack(flat, off, decoder.b);
  pack(flat, off, w_out);
  pack(flat, off, b_out);
  return flat;
}

void SeqAutoencoder::unflatten(const Eigen::VectorXd& flat) {
  int off = 0;
  unpack(flat, off, encoder.wx);
  unpack(flat, off, encoder.wh);
  unpack(flat, off, encoder.b);
  unpack(flat, off, decoder.wx);
  unpack(flat, off, decoder.wh);
  unpack(flat, off, decoder.b);
  unpack(flat, off, w_out);
  unpack(flat, off, b_out);
}

Eigen::MatrixXd SeqAutoencoder::encode_batch(
    const std::vector<Eigen::MatrixXd>& x) const {
  if (static_cast<int>(x.size()) != t_steps ||
      static_cast<int>(x[0].cols()) != input_dim)
    throw DataError("input shape does not match the trained model");
  auto cache = lstm_forward(encoder, x);
  return cache.h.back();
}

Eigen::VectorXd SeqAutoencoder::encode(const BinaryTensor& tensor) const {
  if (tensor.hours != t_steps || tensor.dim != input_dim)
    throw DataError("tensor shape does not match the trained model");
  std::vector<BinaryTensor> one = {tensor};
  auto x = make_batch(one, {0});
  return encode_batch(x).row(0);
}

namespace {

struct AeForward {
  LstmCache enc;
  LstmCache dec;
  std::vector<Eigen::MatrixXd> y;  // reconstruction per step
  double loss = 0.0;
};

AeForward ae_forward(const SeqAutoencoder& m,
                     const std::vector<Eigen::MatrixXd>& x) {
  AeForward f;
  f.enc = lstm_forward(m.encoder, x);
  const Eigen::MatrixXd& e = f.enc.h.back();
  std::vector<Eigen::MatrixXd> dec_in(m.t_steps, e);
  f.dec = lstm_forward(m.decoder, dec_in);
  f.y.resize(m.t_steps);
  const double denom = static_cast<double>(x[0].rows()) * m.t_steps *
                       m.input_dim;
  for (int t = 0; t < m.t_steps; ++t) {
    f.y[t] = f.dec.h[t] * m.w_out.transpose();
    f.y[t].rowwise() += m.b_out.transpose();
    f.loss += (f.y[t] - x[t]).squaredNorm() / denom;
  }
  return f;
}

}  // namespace

double ae_loss(const SeqAutoencoder& model,
               const std::vector<Eigen::MatrixXd>& x) {
  return ae_forward(model, x).loss;
}

AeGradResult ae_loss_grad(const SeqAutoencoder& model,
                          const std::vector<Eigen::MatrixXd>& x) {
  auto f = ae_forward(model, x);
  const int batch = static_cast<int>(x[0].rows());
  const double denom =
      static_cast<double>(batch) * model.t_steps * model.input_dim;

  LstmParams enc_grads, dec_grads;
  Eigen::MatrixXd g_wout =
      Eigen::MatrixXd::Zero(model.w_out.rows(), model.w_out.cols());
  Eigen::VectorXd g_bout = Eigen::VectorXd::Zero(model.b_out.size());

  std::vector<Eigen::MatrixXd> dh_dec(model.t_steps);
  for (int t = 0; t < model.t_steps; ++t) {
    Eigen::MatrixXd dy = 2.0 * (f.y[t] - x[t]) / denom;
    g_wout.noalias() += dy.transpose() * f.dec.h[t];
    g_bout += dy.colwise().sum().transpose();
    dh_dec[t] = dy * model.w_out;
  }
  std::vector<Eigen::MatrixXd> d_dec_in;
  lstm_backward(model.decoder, f.dec, dh_dec, dec_grads, &d_dec_in);

  Eigen::MatrixXd de =
      Eigen::MatrixXd::Zero(batch, model.embedding_dim);
  for (const auto& d : d_dec_in) de += d;
  std::vector<Eigen::MatrixXd> dh_enc(
      model.t_steps, Eigen::MatrixXd::Zero(batch, model.embedding_dim));
  dh_enc.back() = de;
  lstm_backward(model.encoder, f.enc, dh_enc, enc_grads);

  AeGradResult res;
  res.loss = f.loss;
  res.grad.resize(model.num_params());
  int off = 0;
  pack(res.grad, off, enc_grads.wx);
  pack(res.grad, off, enc_grads.wh);
  pack(res.grad, off, enc_grads.b);
  pack(res.grad, off, dec_grads.wx);
  pack(res.grad, off, dec_grads.wh);
  pack(res.grad, off, dec_grads.b);
  pack(res.grad, off, g_wout);
  pack(res.grad, off, g_bout);
  return res;
}

std::pair<SeqAutoencoder, TrainCurve> train_autoencoder(
    const std::vector<BinaryTensor>& tensors,
    const std::vector<int>& train_indices, const std::vector<int>& val_indices,
    int embedding_dim, std::uint64_t seed,
    const AutoencoderTrainOptions& options) {
  if (train_indices.empty()) throw DataError("no training tensors");
  const int t_steps = tensors[train_indices[0]].hours;
  const int dim = tensors[train_indices[0]].dim;

  auto model = SeqAutoencoder::create(t_steps, dim, embedding_dim, seed);
  Eigen::VectorXd params = model.flatten();
  Adam opt;
  opt.lr = options.learning_rate;

  auto rng = make_rng(seed, 1);
  std::vector<int> order = train_indices;

  TrainCurve curve;
  Eigen::VectorXd best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;

  auto eval_loss = [&](const std::vector<int>& indices) {
    double total = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < indices.size();
         start += options.batch_size) {
      size_t end = std::min(indices.size(),
                            start + static_cast<size_t>(options.batch_size));
      std::vector<int> chunk(indices.begin() + start, indices.begin() + end);
      total += ae_loss(model, make_batch(tensors, chunk)) * chunk.size();
      count += chunk.size();
    }
    return total / static_cast<double>(count);
  };

  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    size_t seen = 0;
    for (size_t start = 0; start < order.size(); start += options.batch_size) {
      size_t end = std::min(order.size(),
                            start + static_cast<size_t>(options.batch_size));
      std::vector<int> chunk(order.begin() + start, order.begin() + end);
      auto batch = make_batch(tensors, chunk);
      auto g = ae_loss_grad(model, batch);
      if (!std::isfinite(g.loss))
        throw NumericError(
            "non-finite autoencoder loss at epoch " + std::to_string(epoch) +
            " (learning rate too high or degenerate data)");
      opt.step(params, g.grad);
      model.unflatten(params);
      epoch_loss += g.loss * chunk.size();
      seen += chunk.size();
    }
    curve.train_loss.push_back(epoch_loss / static_cast<double>(seen));

    double val = val_indices.empty() ? curve.train_loss.back()
                                     : eval_loss(val_indices);
    if (!std::isfinite(val))
      throw NumericError("non-finite validation loss at epoch " +
                         std::to_string(epoch));
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
  return {std::move(model), std::move(curve)};
}

namespace {

Eigen::MatrixXd encode_all_impl(const SeqAutoencoder& model,
                                const std::vector<BinaryTensor>& tensors,
                                const std::vector<int>& indices,
                                bool parallel) {
  const int n = static_cast<int>(indices.size());
  Eigen::MatrixXd out(n, model.embedding_dim);
  const int chunk_size = 256;
  const int chunks = (n + chunk_size - 1) / chunk_size;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (int c = 0; c < chunks; ++c) {
    int lo = c * chunk_size;
    int hi = std::min(n, lo + chunk_size);
    std::vector<int> chunk(indices.begin() + lo, indices.begin() + hi);
    auto emb = model.encode_batch(make_batch(tensors, chunk));
    out.middleRows(lo, hi - lo) = emb;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd encode_all(const SeqAutoencoder& model,
                           const std::vector<BinaryTensor>& tensors,
                           const std::vector<int>& indices) {
  return encode_all_impl(model, tensors, indices, true);
}

Eigen::MatrixXd encode_all_serial(const SeqAutoencoder& model,
                                  const std::vector<BinaryTensor>& tensors,
                                  const std::vector<int>& indices) {
  return encode_all_impl(model, tensors, indices, false);
}

EmbeddingSizeChoice select_embedding_size(
    const std::vector<std::pair<int, double>>& candidates) {
  if (candidates.empty()) throw ConfigError("no embedding size candidates");
  auto sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  EmbeddingSizeChoice choice;
  if (sorted.size() == 1) {
    choice.embedding_dim = sorted[0].first;
    choice.warning = true;
    choice.message = "single candidate returned as-is";
    return choice;
  }
  bool nondecreasing = true;
  for (size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i].second < sorted[i - 1].second) nondecreasing = false;
  if (nondecreasing) {
    choice.embedding_dim = sorted[0].first;
    choice.warning = true;
    choice.message = "loss does not improve with size; smallest returned";
    return choice;
  }
  // signed perpendicular distance below the chord between the endpoints
  double ax = sorted.front().first, ay = sorted.front().second;
  double bx = sorted.back().first, by = sorted.back().second;
  double norm = std::hypot(bx - ax, by - ay);
  double best_dist = 0.0;
  choice.embedding_dim = sorted[0].first;
  for (const auto& [d, loss] : sorted) {
    double cross = (bx - ax) * (loss - ay) - (by - ay) * (d - ax);
    double dist = -cross / norm;  // positive below the chord
    if (dist > best_dist) {
      best_dist = dist;
      choice.embedding_dim = d;
    }
  }
  if (best_dist <= 0.0) {
    choice.warning = true;
    choice.message = "no point below the chord; smallest returned";
  }
  return choice;
}

}  // namespace cohortmt
