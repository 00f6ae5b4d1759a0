#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "bsa/corpus.hpp"
#include "bsa/dynamics.hpp"
#include "bsa/embedding.hpp"

namespace bsa {

enum class NormFixing { kGlobal, kPerBlock };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lambda_train = 5.0;
  double lambda_eval = 1.0;
  double learning_rate = 0.004;
  /// Maximum global L2 norm of the gradient tensor.
  double clip_threshold = 1.0;
  std::uint64_t seed = 1;
  NormFixing norm_fixing = NormFixing::kGlobal;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  int clip_events = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
};

/// Entries i.i.d. uniform in [-1/(2d), 1/(2d)], diagonal blocks zeroed, then
/// norm_ref recorded.
CouplingTensor init_couplings(std::uint64_t seed, int n, int d);

/// Batch mean of total_energy at lambda = j.lambda.
double pseudolikelihood_loss(std::span<const SpinSequence> batch,
                             const CouplingTensor& j);

struct LossGradient {
  double loss = 0.0;
  CouplingTensor gradient;
};

/// Batch-mean loss and its analytic gradient. Block (i, k) of the gradient is
/// -lambda * mean over the batch of alpha_{i<-k} x_i x_k^T.
LossGradient loss_and_gradient(std::span<const SpinSequence> batch,
                               const CouplingTensor& j);

CouplingTensor coupling_gradient(std::span<const SpinSequence> batch,
                                 const CouplingTensor& j);

struct StepStats {
  double grad_norm = 0.0;
  bool clipped = false;
};

/// Clips the gradient to cfg.clip_threshold, descends, zeroes the diagonal
/// blocks and restores the tensor norm. Throws on non-finite gradients.
StepStats sgd_step(CouplingTensor& j, const CouplingTensor& grad,
                   const TrainConfig& cfg);

struct TrainResult {
  CouplingTensor couplings;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Pseudo-likelihood SGD over the training images. The returned tensor carries
/// lambda = cfg.lambda_eval.
TrainResult train(CorpusView images, const EmbeddingMap& map,
                  const PatchGeometry& geom, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace bsa
