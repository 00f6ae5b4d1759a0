#include "bsa/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

namespace bsa {
namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lambda_train > 0) || !(lambda_eval > 0)) {
    throw std::invalid_argument("lambda values must be positive");
  }
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(clip_threshold > 0)) throw std::invalid_argument("clip_threshold must be positive");
}

CouplingTensor init_couplings(std::uint64_t seed, int n, int d) {
  if (n < 2 || d < 1) throw std::invalid_argument("need n >= 2 and d >= 1");
  CouplingTensor t(n, d);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / (2.0 * d);
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (double& v : t.data()) v = unif(rng);
  t.zero_diagonal();
  t.norm_ref = t.norm();
  return t;
}

double pseudolikelihood_loss(std::span<const SpinSequence> batch,
                             const CouplingTensor& j) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const AttentionOutputs out = attend(SpinBatch::pack(batch), j, j.lambda, false);
  return out.energy.sum() / static_cast<double>(batch.size());
}

LossGradient loss_and_gradient(std::span<const SpinSequence> batch,
                               const CouplingTensor& j) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const SpinBatch x = SpinBatch::pack(batch);
  const int n = x.n();
  const int b = x.size();
  const double scale = -j.lambda / b;

  LossGradient result{0.0, CouplingTensor(n, j.d())};
  CouplingTensor& grad = result.gradient;
  Eigen::MatrixXd weighted(x.d(), b);

  const AttentionOutputs out = attend(
      x, j, j.lambda, false, [&](int i, const Eigen::MatrixXd& alpha) {
        const auto xi = x.token(i);
        for (int k = 0; k < n; ++k) {
          if (k == i) continue;
          weighted = xi.array().rowwise() * alpha.row(k).array();
          grad.block(i, k).noalias() += scale * weighted * x.token(k).transpose();
        }
      });
  result.loss = out.energy.sum() / b;
  return result;
}

CouplingTensor coupling_gradient(std::span<const SpinSequence> batch,
                                 const CouplingTensor& j) {
  return loss_and_gradient(batch, j).gradient;
}

StepStats sgd_step(CouplingTensor& j, const CouplingTensor& grad,
                   const TrainConfig& cfg) {
  if (grad.n() != j.n() || grad.d() != j.d()) {
    throw std::invalid_argument("gradient shape does not match couplings");
  }
  if (!all_finite(grad.data())) {
    throw std::runtime_error("non-finite gradient entry; step aborted");
  }

  StepStats stats;
  stats.grad_norm = grad.norm();
  double step = cfg.learning_rate;
  if (stats.grad_norm > cfg.clip_threshold) {
    step *= cfg.clip_threshold / stats.grad_norm;
    stats.clipped = true;
  }

  std::vector<double> block_norms;
  if (cfg.norm_fixing == NormFixing::kPerBlock) {
    block_norms.resize(static_cast<std::size_t>(j.n()) * j.n());
    for (int i = 0; i < j.n(); ++i) {
      for (int k = 0; k < j.n(); ++k) block_norms[i * j.n() + k] = j.block(i, k).norm();
    }
  }

  auto values = j.data();
  const auto g = grad.data();
  for (std::size_t e = 0; e < values.size(); ++e) values[e] -= step * g[e];
  j.zero_diagonal();

  if (cfg.norm_fixing == NormFixing::kPerBlock) {
    for (int i = 0; i < j.n(); ++i) {
      for (int k = 0; k < j.n(); ++k) {
        auto blk = j.block(i, k);
        const double current = blk.norm();
        if (current > 0.0) blk *= block_norms[i * j.n() + k] / current;
      }
    }
  } else {
    j.rescale_to(j.norm_ref);
  }
  return stats;
}

TrainResult train(CorpusView images, const EmbeddingMap& map,
                  const PatchGeometry& geom, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (images.empty()) throw std::invalid_argument("training split is empty");
  const auto start = std::chrono::steady_clock::now();

  TrainResult result{init_couplings(cfg.seed, geom.n, geom.d), {}};
  CouplingTensor& j = result.couplings;
  j.lambda = cfg.lambda_train;

  std::mt19937_64 shuffler(cfg.seed + 1);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<SpinSequence> batch;
  batch.reserve(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffler);
    EpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), s + cfg.batch_size);
      batch.clear();
      for (std::size_t k = s; k < stop; ++k) {
        batch.push_back(embed_image(images[order[k]], map, geom));
      }
      const LossGradient lg = loss_and_gradient(batch, j);
      if (!std::isfinite(lg.loss)) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch));
      }
      const StepStats st = sgd_step(j, lg.gradient, cfg);
      rec.mean_loss += lg.loss;
      rec.grad_norm_mean += st.grad_norm;
      rec.grad_norm_max = std::max(rec.grad_norm_max, st.grad_norm);
      rec.clip_events += st.clipped ? 1 : 0;
      ++batches;
    }
    rec.mean_loss /= batches;
    rec.grad_norm_mean /= batches;
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  j.lambda = cfg.lambda_eval;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,mean_loss,grad_norm_mean,clip_events\n";
  out.precision(17);
  for (const EpochRecord& r : report.epochs) {
    out << r.epoch << ',' << r.mean_loss << ',' << r.grad_norm_mean << ','
        << r.clip_events << '\n';
  }
}

}  // namespace bsa
