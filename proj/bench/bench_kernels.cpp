// Timing harness for the OpenMP kernels vs their serial references.
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <vector>

#include "cohortmt/autoencoder.hpp"
#include "cohortmt/common.hpp"
#include "cohortmt/evalstats.hpp"
#include "cohortmt/gmm.hpp"

using namespace cohortmt;

namespace {

double time_of(const char* name, const char* mode, auto&& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                 .count();
  std::printf("%-24s %-8s %8.3f s\n", name, mode, s);
  return s;
}

std::vector<BinaryTensor> random_tensors(int n, int hours, int dim,
                                         std::uint64_t seed) {
  std::vector<BinaryTensor> out(n);
  auto rng = make_rng(seed, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& t : out) {
    t.hours = hours;
    t.dim = dim;
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(hours * dim); ++i)
      if (u(rng) < 0.05) t.ones.push_back(i);
  }
  return out;
}

}  // namespace

int main() {
  const std::uint64_t seed = 7;

  {
    const int n = 2000, hours = 24, dim = 273, d = 16;
    auto tensors = random_tensors(n, hours, dim, seed);
    auto model = SeqAutoencoder::create(hours, dim, d, seed);
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    double ts = time_of("encode_all", "serial",
                        [&] { encode_all_serial(model, tensors, idx); });
    double tp = time_of("encode_all", "omp",
                        [&] { encode_all(model, tensors, idx); });
    std::printf("%-24s speedup %5.2fx\n\n", "encode_all", ts / tp);
  }

  {
    const int n = 200000, dim = 16, k = 8;
    auto rng = make_rng(seed, 1);
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd pts(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) pts(i, j) = g(rng);
    GmmFitOptions opts;
    opts.restarts = 1;
    opts.max_iters = 5;
    auto fit = fit_gmm(pts.topRows(5000), k, seed, opts);
    double ts =
        time_of("gmm_responsibilities", "serial",
                [&] { gmm_responsibilities_serial(fit.model, pts); });
    double tp = time_of("gmm_responsibilities", "omp",
                        [&] { gmm_responsibilities(fit.model, pts); });
    std::printf("%-24s speedup %5.2fx\n\n", "gmm_responsibilities", ts / tp);
  }

  {
    const int k = 3, per_cohort = 2000, n_boot = 200;
    auto rng = make_rng(seed, 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GroupedPredictions a, b;
    a.scores.resize(k);
    a.labels.resize(k);
    for (int c = 0; c < k; ++c) {
      for (int i = 0; i < per_cohort; ++i) {
        int y = u(rng) < 0.1 ? 1 : 0;
        a.labels[c].push_back(y);
        a.scores[c].push_back(0.4 * u(rng) + 0.3 * y);
      }
    }
    b = a;
    for (auto& sc : b.scores)
      for (auto& s : sc) s = 0.8 * s + 0.1 * u(rng);
    double ts = time_of("bootstrap_compare", "serial", [&] {
      compare_models_serial(a, b, n_boot, seed);
    });
    double tp = time_of("bootstrap_compare", "omp",
                        [&] { compare_models(a, b, n_boot, seed); });
    std::printf("%-24s speedup %5.2fx\n", "bootstrap_compare", ts / tp);
  }
  return 0;
}
