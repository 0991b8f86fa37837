#include "cohortmt/lstm.hpp"

#include <cmath>
#include <limits>

#include "cohortmt/common.hpp"

namespace cohortmt {

namespace {

Eigen::MatrixXd uniform_matrix(int rows, int cols, double scale,
                               std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

inline Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) {
  return 1.0 / (1.0 + (-z).exp());
}

}  // namespace

Eigen::MatrixXd dense_init(int rows, int cols, std::mt19937_64& rng) {
  return uniform_matrix(rows, cols, 1.0 / std::sqrt(static_cast<double>(cols)),
                        rng);
}

void LstmParams::init(int in, int hidden, std::mt19937_64& rng) {
  wx = uniform_matrix(4 * hidden, in, 1.0 / std::sqrt(static_cast<double>(in)),
                      rng);
  wh = uniform_matrix(4 * hidden, hidden,
                      1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  b = Eigen::VectorXd::Zero(4 * hidden);
}

LstmCache lstm_forward(const LstmParams& p,
                       const std::vector<Eigen::MatrixXd>& x) {
  const int t_steps = static_cast<int>(x.size());
  const int h = p.hidden();
  const int batch = static_cast<int>(x[0].rows());

  LstmCache cache;
  cache.x = x;
  cache.gi.resize(t_steps);
  cache.gf.resize(t_steps);
  cache.gg.resize(t_steps);
  cache.go.resize(t_steps);
  cache.c.resize(t_steps);
  cache.h.resize(t_steps);

  Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(batch, h);
  Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(batch, h);
  for (int t = 0; t < t_steps; ++t) {
    Eigen::MatrixXd pre = x[t] * p.wx.transpose() + h_prev * p.wh.transpose();
    pre.rowwise() += p.b.transpose();
    cache.gi[t] = sigmoid(pre.middleCols(0, h).array()).matrix();
    cache.gf[t] = sigmoid(pre.middleCols(h, h).array()).matrix();
    cache.gg[t] = pre.middleCols(2 * h, h).array().tanh().matrix();
    cache.go[t] = sigmoid(pre.middleCols(3 * h, h).array()).matrix();
    cache.c[t] = cache.gf[t].cwiseProduct(c_prev) +
                 cache.gi[t].cwiseProduct(cache.gg[t]);
    cache.h[t] =
        cache.go[t].cwiseProduct(cache.c[t].array().tanh().matrix());
    h_prev = cache.h[t];
    c_prev = cache.c[t];
  }
  return cache;
}

void lstm_backward(const LstmParams& p, const LstmCache& cache,
                   const std::vector<Eigen::MatrixXd>& dh, LstmParams& grads,
                   std::vector<Eigen::MatrixXd>* dx) {
  const int t_steps = cache.steps();
  const int h = p.hidden();
  const int batch = static_cast<int>(cache.h[0].rows());

  if (grads.wx.size() == 0) {
    grads.wx = Eigen::MatrixXd::Zero(p.wx.rows(), p.wx.cols());
    grads.wh = Eigen::MatrixXd::Zero(p.wh.rows(), p.wh.cols());
    grads.b = Eigen::VectorXd::Zero(p.b.size());
  }
  if (dx) dx->assign(t_steps, Eigen::MatrixXd());

  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(batch, h);
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(batch, h);
  Eigen::MatrixXd dpre(batch, 4 * h);
  for (int t = t_steps - 1; t >= 0; --t) {
    Eigen::MatrixXd dh_t = dh[t] + dh_next;
    Eigen::ArrayXXd tc = cache.c[t].array().tanh();
    Eigen::ArrayXXd d_o = dh_t.array() * tc;
    Eigen::ArrayXXd dc = dc_next.array() +
                         dh_t.array() * cache.go[t].array() * (1.0 - tc * tc);
    Eigen::ArrayXXd di = dc * cache.gg[t].array();
    Eigen::ArrayXXd dg = dc * cache.gi[t].array();
    Eigen::ArrayXXd c_prev = Eigen::ArrayXXd::Zero(batch, h);
    if (t > 0) c_prev = cache.c[t - 1].array();
    Eigen::ArrayXXd df = dc * c_prev;

    dpre.middleCols(0, h) =
        (di * cache.gi[t].array() * (1.0 - cache.gi[t].array())).matrix();
    dpre.middleCols(h, h) =
        (df * cache.gf[t].array() * (1.0 - cache.gf[t].array())).matrix();
    dpre.middleCols(2 * h, h) =
        (dg * (1.0 - cache.gg[t].array().square())).matrix();
    dpre.middleCols(3 * h, h) =
        (d_o * cache.go[t].array() * (1.0 - cache.go[t].array())).matrix();

    grads.wx.noalias() += dpre.transpose() * cache.x[t];
    if (t > 0) grads.wh.noalias() += dpre.transpose() * cache.h[t - 1];
    grads.b += dpre.colwise().sum().transpose();

    if (dx) (*dx)[t] = dpre * p.wx;
    dh_next = dpre * p.wh;
    dc_next = (dc * cache.gf[t].array()).matrix();
  }
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m.size() == 0) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  double bc1 = 1.0 - std::pow(beta1, t);
  double bc2 = 1.0 - std::pow(beta2, t);
  params.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

void pack(Eigen::VectorXd& out, int& offset, const Eigen::MatrixXd& m) {
  Eigen::Map<const Eigen::VectorXd> flat(m.data(), m.size());
  out.segment(offset, m.size()) = flat;
  offset += static_cast<int>(m.size());
}

void pack(Eigen::VectorXd& out, int& offset, const Eigen::VectorXd& v) {
  out.segment(offset, v.size()) = v;
  offset += static_cast<int>(v.size());
}

void unpack(const Eigen::VectorXd& in, int& offset, Eigen::MatrixXd& m) {
  Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) =
      in.segment(offset, m.size());
  offset += static_cast<int>(m.size());
}

void unpack(const Eigen::VectorXd& in, int& offset, Eigen::VectorXd& v) {
  v = in.segment(offset, v.size());
  offset += static_cast<int>(v.size());
}

int early_stop_epoch(const std::vector<double>& val_losses, int patience) {
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (size_t e = 0; e < val_losses.size(); ++e) {
    if (val_losses[e] < best) {
      best = val_losses[e];
      since_best = 0;
    } else {
      ++since_best;
    }
    if (since_best >= patience) return static_cast<int>(e) + 1;
  }
  return 0;
}

}  // namespace cohortmt
