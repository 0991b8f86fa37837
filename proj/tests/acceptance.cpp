// Acceptance harness: one pass/fail line per criterion, exit non-zero if
// any fail. Criteria 5 and 6 train real models and take several minutes.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "cohortmt/autoencoder.hpp"
#include "cohortmt/common.hpp"
#include "cohortmt/dataset.hpp"
#include "cohortmt/evalstats.hpp"
#include "cohortmt/gmm.hpp"
#include "cohortmt/metrics.hpp"
#include "cohortmt/pipeline.hpp"
#include "cohortmt/predictor.hpp"
#include "cohortmt/synth.hpp"

using namespace cohortmt;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// --- criterion 1: macro arithmetic fixtures -------------------------------

GroupedPredictions cohorts_with_aucs(const std::vector<double>& aucs) {
  GroupedPredictions g;
  for (double a : aucs) {
    int hi = static_cast<int>(std::lround(a * 1000));
    std::vector<double> s(1000, 0.0);
    std::vector<int> y(1000, 0);
    for (int i = 0; i < 1000; ++i) {
      s.push_back(i < hi ? 1.0 : -1.0);
      y.push_back(1);
    }
    g.scores.push_back(std::move(s));
    g.labels.push_back(std::move(y));
  }
  return g;
}

void criterion1() {
  struct Fixture {
    std::vector<double> aucs;
    double expected;
  };
  const Fixture fixtures[] = {
      {{0.819, 0.829, 0.821}, 0.823},
      {{0.803, 0.811, 0.814}, 0.809},
      {{0.862, 0.849, 0.814, 0.839, 0.846}, 0.842},
  };
  bool ok = true;
  double worst = 0.0;
  for (const auto& f : fixtures) {
    double got = macro_metric(cohorts_with_aucs(f.aucs), Metric::Auc);
    worst = std::max(worst, std::fabs(got - f.expected));
    if (std::fabs(got - f.expected) > 5e-4) ok = false;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "macro fixtures, worst |err| = %.2e", worst);
  report(1, ok, buf);
}

// --- criterion 2: metric oracles ------------------------------------------

double auc_brute(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

void criterion2() {
  auto rng = make_rng(1001, 0);
  std::uniform_int_distribution<int> nd(4, 50);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool ok = true;
  std::string why = "AUC, micro, and threshold contracts on 200 instances";

  for (int rep = 0; rep < 200 && ok; ++rep) {
    int n = nd(rng);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = std::floor(u(rng) * 10) / 10.0;
      y[i] = u(rng) < 0.4 ? 1 : 0;
    }
    y[0] = 1;
    y[1] = 0;
    if (auc(s, y) != auc_brute(s, y)) {
      ok = false;
      why = "AUC mismatch vs brute force";
      break;
    }

    double t = threshold_at_sensitivity(s, y, 0.80);
    int p = 0, tp = 0;
    double next = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (y[i] != 1) continue;
      ++p;
      if (s[i] >= t) ++tp;
      if (s[i] > t) next = std::min(next, s[i]);
    }
    if (static_cast<double>(tp) / p < 0.80) {
      ok = false;
      why = "threshold misses the sensitivity target";
      break;
    }
    if (std::isfinite(next)) {
      int tp2 = 0;
      for (int i = 0; i < n; ++i)
        if (y[i] == 1 && s[i] >= next) ++tp2;
      if (static_cast<double>(tp2) / p >= 0.80) {
        ok = false;
        why = "threshold is not the largest satisfying the target";
        break;
      }
    }

    // micro equals concatenation
    GroupedPredictions g;
    int half = n / 2;
    g.scores = {{s.begin(), s.begin() + half}, {s.begin() + half, s.end()}};
    g.labels = {{y.begin(), y.begin() + half}, {y.begin() + half, y.end()}};
    bool both = false;
    for (int c = 0; c < 2; ++c) {
      int pos = std::accumulate(g.labels[c].begin(), g.labels[c].end(), 0);
      both = pos > 0 && pos < static_cast<int>(g.labels[c].size());
      if (!both) break;
    }
    if (both && micro_metric(g, Metric::Auc) != auc(s, y)) {
      ok = false;
      why = "micro AUC differs from the concatenation oracle";
      break;
    }
  }
  report(2, ok, why);
}

// --- criterion 3: statistics ----------------------------------------------

double wilcoxon_brute_p(const std::vector<double>& diffs) {
  std::vector<double> d;
  for (double x : diffs)
    if (x != 0.0) d.push_back(x);
  int n = static_cast<int>(d.size());
  std::vector<double> mag(n), rank(n);
  for (int i = 0; i < n; ++i) mag[i] = std::fabs(d[i]);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return mag[a] < mag[b]; });
  int i = 0;
  while (i < n) {
    int j = i;
    while (j < n && mag[order[j]] == mag[order[i]]) ++j;
    for (int k = i; k < j; ++k) rank[order[k]] = (i + 1 + j) / 2.0;
    i = j;
  }
  double w_obs = 0.0, total = 0.0;
  for (int k = 0; k < n; ++k) {
    total += rank[k];
    if (d[k] > 0) w_obs += rank[k];
  }
  double lo = std::min(w_obs, total - w_obs);
  double hi = std::max(w_obs, total - w_obs);
  long cl = 0, cg = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    double w = 0.0;
    for (int k = 0; k < n; ++k)
      if (mask & (1L << k)) w += rank[k];
    if (w <= lo + 1e-9) ++cl;
    if (w >= hi - 1e-9) ++cg;
  }
  return std::min(1.0, static_cast<double>(cl + cg) / (1L << n));
}

void criterion3() {
  auto rng = make_rng(1003, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  bool ok = true;
  std::string why = "exact Wilcoxon (n<=10) and bootstrap count preservation";
  for (int n = 1; n <= 10 && ok; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      std::vector<double> d(n);
      bool all_zero = true;
      for (auto& x : d) {
        x = u(rng);
        if (u(rng) < 0.25) x = std::round(x * 3) / 3.0;
        if (x != 0.0) all_zero = false;
      }
      if (all_zero) continue;
      auto r = wilcoxon_signed_rank(d);
      if (!r.exact || std::fabs(r.p - wilcoxon_brute_p(d)) > 1e-12) {
        ok = false;
        why = "Wilcoxon p differs from 2^n enumeration";
        break;
      }
    }
  }

  GroupedPredictions g;
  auto rng2 = make_rng(1003, 1);
  std::uniform_real_distribution<double> v(0.0, 1.0);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 40 + 10 * c; ++i) {
      s.push_back(v(rng2));
      y.push_back(v(rng2) < 0.2 ? 1 : 0);
    }
    y[0] = 1;
    g.scores.push_back(s);
    g.labels.push_back(y);
  }
  for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
    auto res = apply_sample(g, bootstrap_resample(g, seed));
    for (int c = 0; c < 3; ++c) {
      int pos = std::accumulate(res.labels[c].begin(), res.labels[c].end(), 0);
      int pos0 = std::accumulate(g.labels[c].begin(), g.labels[c].end(), 0);
      if (res.scores[c].size() != g.scores[c].size() || pos != pos0) {
        ok = false;
        why = "bootstrap changed a cohort size or positive count";
      }
    }
  }
  report(3, ok, why);
}

// --- criterion 4: numerics ------------------------------------------------

template <typename Model, typename LossFn, typename GradFn>
double max_rel_err(Model model, LossFn loss, GradFn grad) {
  auto analytic = grad(model);
  Eigen::VectorXd flat = model.flatten();
  const double h = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < flat.size(); ++i) {
    Eigen::VectorXd f = flat;
    f(i) += h;
    model.unflatten(f);
    double up = loss(model);
    f(i) = flat(i) - h;
    model.unflatten(f);
    double dn = loss(model);
    double fd = (up - dn) / (2 * h);
    double denom = std::max({std::fabs(fd), std::fabs(analytic(i)), 1e-6});
    worst = std::max(worst, std::fabs(fd - analytic(i)) / denom);
  }
  return worst;
}

std::vector<BinaryTensor> random_tensors(int n, int hours, int dim,
                                         std::uint64_t seed, double density) {
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

void criterion4() {
  bool ok = true;
  double worst = 0.0;

  auto tensors = random_tensors(4, 3, 5, 1004, 0.3);
  auto x = make_batch(tensors, {0, 1, 2, 3});
  auto ae = SeqAutoencoder::create(3, 5, 2, 1004);
  double e = max_rel_err(
      ae, [&](const SeqAutoencoder& m) { return ae_loss(m, x); },
      [&](const SeqAutoencoder& m) { return ae_loss_grad(m, x).grad; });
  worst = std::max(worst, e);
  if (ae.num_params() > 500 || e >= 1e-4) ok = false;

  Eigen::VectorXd y(4);
  y << 1, 0, 1, 0;
  std::vector<int> heads = {0, 1, 1, 0};
  for (auto v : {ModelVariant::Global, ModelVariant::MtSharedDense,
                 ModelVariant::MtSepDense}) {
    int k = v == ModelVariant::Global ? 1 : 2;
    std::vector<int> h = v == ModelVariant::Global
                             ? std::vector<int>(4, 0)
                             : heads;
    auto pm = RiskModel::create(v, k, 3, 5, 3, 2, 1004);
    {
      // shift zero biases off the ReLU kink before finite differencing
      auto jrng = make_rng(1004, 9);
      std::uniform_real_distribution<double> jd(-0.1, 0.1);
      Eigen::VectorXd flat = pm.flatten();
      for (int i = 0; i < flat.size(); ++i) flat(i) += jd(jrng);
      pm.unflatten(flat);
    }
    e = max_rel_err(
        pm, [&](const RiskModel& m) { return predictor_loss(m, x, y, h); },
        [&](const RiskModel& m) {
          return predictor_loss_grad(m, x, y, h).grad;
        });
    worst = std::max(worst, e);
    if (pm.num_params() > 500 || e >= 1e-4) ok = false;
  }

  bool monotone = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto rng = make_rng(seed, 1004);
    std::uniform_int_distribution<int> nd(30, 100), dd(1, 4), kd(1, 3);
    std::normal_distribution<double> g(0.0, 2.0);
    int n = nd(rng), d = dd(rng), k = kd(rng);
    Eigen::MatrixXd pts(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) pts(i, j) = g(rng);
    GmmFitOptions opts;
    opts.restarts = 2;
    auto fit = fit_gmm(pts, k, seed, opts);
    for (size_t t = 1; t < fit.log_likelihood_trace.size(); ++t)
      if (fit.log_likelihood_trace[t] <
          fit.log_likelihood_trace[t - 1] - 1e-8)
        monotone = false;
  }
  if (!monotone) ok = false;

  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "gradient checks (worst rel err %.2e) and EM monotonicity %s",
                worst, monotone ? "held" : "VIOLATED");
  report(4, ok, buf);
}

// --- criteria 5 and 6: synthetic end-to-end -------------------------------

struct SeedRun {
  double ari = 0.0;
  double macro_global = 0.0;
  double macro_mt = 0.0;
  double p = 1.0;
};

SeedRun run_seed(std::uint64_t seed) {
  SeedRun out;
  auto spec = default_population_spec(3000, 1.0, mix_seed(seed, 500));
  auto pop = generate_population(spec);
  std::map<std::string, int> truth;
  for (const auto& t : pop.truth) truth[t.episode_id] = t.cohort_id;

  DatasetConfig dc;
  dc.seed = seed;
  auto ds = build_task_dataset(pop.episodes, dc);
  auto train = ds.indices_of(Split::Train);
  auto val = ds.indices_of(Split::Val);
  auto test = ds.indices_of(Split::Test);

  // embed: knee-selected embedding size over candidate bottlenecks
  AutoencoderTrainOptions aopts;
  aopts.max_epochs = 30;
  const std::vector<int> cands = {2, 4, 8};
  std::vector<std::pair<int, double>> curve_points;
  std::map<int, SeqAutoencoder> ae_by_size;
  for (size_t i = 0; i < cands.size(); ++i) {
    auto [m, curve] = train_autoencoder(ds.tensors, train, val, cands[i],
                                        mix_seed(seed, 20 + i), aopts);
    curve_points.push_back({cands[i], curve.val_loss[curve.best_epoch - 1]});
    ae_by_size.emplace(cands[i], std::move(m));
  }
  const auto& ae = ae_by_size.at(select_embedding_size(curve_points).embedding_dim);
  std::vector<int> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  auto emb = encode_all(ae, ds.tensors, all);

  // cluster: mixture fit on train+val embeddings, assignments for everyone
  std::vector<int> trainval = train;
  trainval.insert(trainval.end(), val.begin(), val.end());
  std::sort(trainval.begin(), trainval.end());
  Eigen::MatrixXd emb_tv(trainval.size(), emb.cols());
  for (size_t i = 0; i < trainval.size(); ++i)
    emb_tv.row(i) = emb.row(trainval[i]);
  GmmFitOptions gopts;
  gopts.restarts = 30;
  gopts.variance_floor_rel = kEmbeddingVarianceFloor;
  auto fit = fit_gmm(emb_tv, 3, mix_seed(seed, 31), gopts);
  std::map<std::string, int> assigned;
  std::vector<int> cohorts(ds.size());
  for (size_t i = 0; i < ds.size(); ++i) {
    cohorts[i] = assign_cohort(fit.model, emb.row(i).transpose()).cohort_id;
    assigned[ds.episode_ids[i]] = cohorts[i];
  }
  out.ari = evaluate_recovery(assigned, truth);

  // global vs multitask over the discovered cohorts
  PredictorTrainOptions popts;
  popts.max_epochs = 30;
  popts.learning_rate = 0.001;
  auto global = train_model(ModelVariant::Global, ds.tensors, ds.labels, {}, 1,
                            train, val, 16, 16, mix_seed(seed, 503), popts);
  auto mt = train_model(ModelVariant::MtSharedDense, ds.tensors, ds.labels,
                        cohorts, 3, train, val, 16, 16, mix_seed(seed, 504),
                        popts);

  GroupedPredictions pg, pm;
  pg.scores.resize(3);
  pg.labels.resize(3);
  pm.scores.resize(3);
  pm.labels.resize(3);
  for (int i : test) {
    int c = cohorts[i];
    pg.scores[c].push_back(global.predict(ds.tensors[i]));
    pg.labels[c].push_back(ds.labels[i]);
    pm.scores[c].push_back(mt.predict(ds.tensors[i], c));
    pm.labels[c].push_back(ds.labels[i]);
  }
  out.macro_global = macro_metric(pg, Metric::Auc);
  out.macro_mt = macro_metric(pm, Metric::Auc);
  auto table = compare_models(pg, pm, 100, mix_seed(seed, 505));
  for (const auto& cell : table.cells)
    if (cell.scope == "macro" && cell.metric == Metric::Auc) out.p = cell.p;
  return out;
}

void criteria5and6() {
  std::vector<double> aris, ps;
  int mt_wins = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = run_seed(seed);
    aris.push_back(r.ari);
    ps.push_back(r.p);
    if (r.macro_mt > r.macro_global) ++mt_wins;
    std::printf("  seed %llu: ARI=%.3f macroAUC global=%.3f multitask=%.3f "
                "p=%.2e\n",
                static_cast<unsigned long long>(seed), r.ari, r.macro_global,
                r.macro_mt, r.p);
    std::fflush(stdout);
  }
  char buf[96];
  double ari_med = median(aris);
  std::snprintf(buf, sizeof(buf), "median ARI over 5 seeds = %.3f", ari_med);
  report(5, ari_med >= 0.8, buf);
  double p_med = median(ps);
  std::snprintf(buf, sizeof(buf),
                "multitask wins %d/5 seeds, median macro-AUC p = %.2e",
                mt_wins, p_med);
  report(6, mt_wins >= 4 && p_med < 0.01, buf);
}

// --- criterion 7: task masking --------------------------------------------

void criterion7() {
  auto tensors = random_tensors(6, 3, 6, 1007, 0.3);
  std::vector<Eigen::MatrixXd> x = make_batch(tensors, {0, 1, 2, 3, 4, 5});
  Eigen::VectorXd y(6);
  y << 1, 0, 1, 0, 1, 0;
  bool ok = true;
  for (auto v : {ModelVariant::MtSharedDense, ModelVariant::MtSepDense}) {
    for (int j = 0; j < 3; ++j) {  // cohort-j-only batches
      std::vector<int> heads(6, j);
      auto model = RiskModel::create(v, 3, 3, 6, 4, 3, 1007 + j);
      RiskModel grads = model;
      grads.unflatten(predictor_loss_grad(model, x, y, heads).grad);
      for (int k = 0; k < 3; ++k) {
        if (k == j) continue;
        if (grads.w2[k].cwiseAbs().maxCoeff() != 0.0 || grads.b2[k] != 0.0)
          ok = false;
        if (v == ModelVariant::MtSepDense &&
            (grads.w1[k].cwiseAbs().maxCoeff() != 0.0 ||
             grads.b1[k].cwiseAbs().maxCoeff() != 0.0))
          ok = false;
      }
    }
  }
  report(7, ok, "head-k gradients identically zero on cohort-j batches");
}

// --- criterion 8: end-to-end determinism ----------------------------------

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void criterion8() {
  namespace fs = std::filesystem;
  std::string base = fs::temp_directory_path() / "cohortmt_acceptance8";
  bool ok = true;
  std::string detail = "two pipeline runs, byte-identical reports";
  try {
    for (const char* sub : {"a", "b"}) {
      ExperimentConfig cfg;
      cfg.stage_dir = base + "_" + sub;
      cfg.synth_n = 600;
      cfg.embedding_sizes = {8};
      cfg.ae_max_epochs = 6;
      cfg.k_candidates = {3};
      cfg.gmm_restarts = 5;
      cfg.trunk_grid = {8};
      cfg.global_dense_grid = {8};
      cfg.mt_head_grid = {8};
      cfg.pred_max_epochs = 6;
      cfg.n_bootstrap = 50;
      cfg.min_positives = 2;
      cfg.seed = 2024;
      fs::remove_all(cfg.stage_dir);
      Pipeline(cfg).run_all();
    }
    if (slurp(base + "_a/report.txt") != slurp(base + "_b/report.txt") ||
        slurp(base + "_a/report.json") != slurp(base + "_b/report.json")) {
      ok = false;
      detail = "reports differ between identical runs";
    }
    fs::remove_all(base + "_a");
    fs::remove_all(base + "_b");
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("pipeline failed: ") + e.what();
  }
  report(8, ok, detail);
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion7();
  criterion8();
  criteria5and6();
  std::printf("%s\n", failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED");
  return failures ? 1 : 0;
}
