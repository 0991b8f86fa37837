#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

namespace cohortmt {

// Gate block order within the 4H rows: input, forget, cell, output.
struct LstmParams {
  Eigen::MatrixXd wx;  // 4H x In
  Eigen::MatrixXd wh;  // 4H x H
  Eigen::VectorXd b;   // 4H

  void init(int in, int hidden, std::mt19937_64& rng);
  int hidden() const { return static_cast<int>(wh.cols()); }
  int input() const { return static_cast<int>(wx.cols()); }
};

struct LstmCache {
  std::vector<Eigen::MatrixXd> x;                    // T of B x In
  std::vector<Eigen::MatrixXd> gi, gf, gg, go, c, h;  // T of B x H
  int steps() const { return static_cast<int>(h.size()); }
};

// Batch forward over a T-step sequence; initial state is zero.
LstmCache lstm_forward(const LstmParams& p,
                       const std::vector<Eigen::MatrixXd>& x);

// Backward through time. dh[t] is the external gradient w.r.t. h_t (pass
// zero matrices for unused steps). Accumulates parameter gradients into
// grads; when dx is non-null, also returns gradients w.r.t. the inputs.
void lstm_backward(const LstmParams& p, const LstmCache& cache,
                   const std::vector<Eigen::MatrixXd>& dh, LstmParams& grads,
                   std::vector<Eigen::MatrixXd>* dx = nullptr);

// Uniform fan-in scaled init for a dense weight matrix.
Eigen::MatrixXd dense_init(int rows, int cols, std::mt19937_64& rng);

struct Adam {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;
  Eigen::VectorXd m, v;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

// Flat parameter packing helpers shared by the models.
void pack(Eigen::VectorXd& out, int& offset, const Eigen::MatrixXd& m);
void pack(Eigen::VectorXd& out, int& offset, const Eigen::VectorXd& v);
void unpack(const Eigen::VectorXd& in, int& offset, Eigen::MatrixXd& m);
void unpack(const Eigen::VectorXd& in, int& offset, Eigen::VectorXd& v);

// Index (1-based) of the epoch after which training stops under
// best-so-far early stopping, or 0 when the budget is exhausted first.
int early_stop_epoch(const std::vector<double>& val_losses, int patience);

}  // namespace cohortmt
