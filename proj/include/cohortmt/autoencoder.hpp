#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cohortmt/ingest.hpp"
#include "cohortmt/lstm.hpp"

namespace cohortmt {

// Densifies tensors[indices] into a T-step batch of B x D matrices.
std::vector<Eigen::MatrixXd> make_batch(const std::vector<BinaryTensor>& tensors,
                                        const std::vector<int>& indices);

// Sequence-to-sequence reconstruction model. The embedding is the encoder
// hidden state at the final timestep; the decoder receives the embedding
// as its input at every timestep and reconstructs the T x D sequence
// through a linear readout.
struct SeqAutoencoder {
  int t_steps = 0;
  int input_dim = 0;
  int embedding_dim = 0;
  LstmParams encoder;     // D -> d
  LstmParams decoder;     // d -> d
  Eigen::MatrixXd w_out;  // D x d
  Eigen::VectorXd b_out;  // D
  std::uint64_t seed = 0;

  static SeqAutoencoder create(int t_steps, int input_dim, int embedding_dim,
                               std::uint64_t seed);

  int num_params() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& flat);

  // Batch encode: rows of the result are embeddings.
  Eigen::MatrixXd encode_batch(const std::vector<Eigen::MatrixXd>& x) const;
  Eigen::VectorXd encode(const BinaryTensor& tensor) const;
};

// Mean squared reconstruction error over all B*T*D cells.
double ae_loss(const SeqAutoencoder& model,
               const std::vector<Eigen::MatrixXd>& x);

struct AeGradResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // flat, matching flatten() layout
};

AeGradResult ae_loss_grad(const SeqAutoencoder& model,
                          const std::vector<Eigen::MatrixXd>& x);

struct TrainCurve {
  std::vector<double> train_loss;  // per completed epoch
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based epoch whose weights were kept
};

struct AutoencoderTrainOptions {
  double learning_rate = 0.001;
  int max_epochs = 100;
  int patience = 6;
  int batch_size = 128;
};

// Adam training with best-validation weight retention and patience-based
// early stopping. Deterministic given the seed.
std::pair<SeqAutoencoder, TrainCurve> train_autoencoder(
    const std::vector<BinaryTensor>& tensors,
    const std::vector<int>& train_indices, const std::vector<int>& val_indices,
    int embedding_dim, std::uint64_t seed,
    const AutoencoderTrainOptions& options = {});

// Embeddings for tensors[indices], one row per index (parallel over chunks
// plus a serial reference for testing).
Eigen::MatrixXd encode_all(const SeqAutoencoder& model,
                           const std::vector<BinaryTensor>& tensors,
                           const std::vector<int>& indices);
Eigen::MatrixXd encode_all_serial(const SeqAutoencoder& model,
                                  const std::vector<BinaryTensor>& tensors,
                                  const std::vector<int>& indices);

struct EmbeddingSizeChoice {
  int embedding_dim = 0;
  bool warning = false;
  std::string message;
};

// Knee rule on (d, final validation loss) points: maximum perpendicular
// distance below the chord from the smallest to the largest candidate.
EmbeddingSizeChoice select_embedding_size(
    const std::vector<std::pair<int, double>>& candidates);

}  // namespace cohortmt
