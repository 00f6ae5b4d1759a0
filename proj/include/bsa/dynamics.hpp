#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "bsa/embedding.hpp"

namespace bsa {

using BlockMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstBlockMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Position-dependent couplings: an n x n grid of d x d blocks J_ij.
///
/// Entries are stored flat in (i, j, row, col) order, which is also the
/// checkpoint order. Diagonal blocks J_ii are kept at zero. No symmetry
/// between J_ij and J_ji^T is imposed.
class CouplingTensor {
 public:
  CouplingTensor() = default;
  CouplingTensor(int n, int d);

  int n() const noexcept { return n_; }
  int d() const noexcept { return d_; }

  BlockMap block(int i, int j);
  ConstBlockMap block(int i, int j) const;

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }

  /// Frobenius norm over every entry.
  double norm() const;
  void zero_diagonal();
  /// Scales all entries so that norm() == target. No-op on a zero tensor.
  void rescale_to(double target);
  bool diagonal_is_zero() const;

  /// Interaction multiplier applied to every J_ij.
  double lambda = 1.0;
  /// Global norm recorded at initialization.
  double norm_ref = 0.0;

 private:
  int n_ = 0;
  int d_ = 0;
  std::vector<double> values_;
};

/// Row-stochastic attention weights alpha(i, j) = alpha_{i<-j}, zero diagonal.
using AttentionMask = Eigen::MatrixXd;

struct DynamicsConfig {
  double gamma = 1.0;
  double lambda_eval = 1.0;
  int max_iter = 50;
  NormMode norm_mode = NormMode::kL2;
};

/// A set of equally shaped spin sequences packed token-major: the d x b block
/// for token j starts at column j * b.
class SpinBatch {
 public:
  SpinBatch(int n, int d, int b);

  static SpinBatch pack(std::span<const SpinSequence> sequences);
  static SpinBatch pack(const SpinSequence& sequence);

  int n() const noexcept { return n_; }
  int d() const noexcept { return d_; }
  int size() const noexcept { return b_; }

  auto token(int j) { return data_.middleCols(j * b_, b_); }
  auto token(int j) const { return data_.middleCols(j * b_, b_); }

  SpinSequence sequence(int k) const;

  Eigen::MatrixXd& data() noexcept { return data_; }
  const Eigen::MatrixXd& data() const noexcept { return data_; }

 private:
  int n_;
  int d_;
  int b_;
  Eigen::MatrixXd data_;
};

/// Called once per token i with alpha_{i<-j} for every sequence in the batch
/// (n x b, row i zero) and the batch itself.
using AttentionVisitor = std::function<void(int i, const Eigen::MatrixXd& alpha)>;

struct AttentionOutputs {
  Eigen::MatrixXd energy;  // n x b, e_i per sequence
  Eigen::MatrixXd field;   // packed like the batch; empty unless requested
};

/// Evaluates scores lambda * x_i J_ij x_j for all pairs, the masked softmax per
/// token and, optionally, the attention field lambda * sum_j alpha J_ij x_j.
/// Token evaluation follows `order` when given; every token reads only the
/// input state, so the order does not affect the result.
AttentionOutputs attend(const SpinBatch& x, const CouplingTensor& j,
                        double lambda, bool want_field,
                        const AttentionVisitor& visitor = {},
                        std::span<const int> order = {});

/// Softmax over the entries of `scores` other than index `self`, with
/// max-subtraction. The excluded entry is set to 0.
Eigen::VectorXd masked_softmax(const Eigen::VectorXd& scores, int self);

AttentionMask attention_scores(const SpinSequence& x, const CouplingTensor& j);

/// Pre-normalization attention field, one column per token; equals
/// -grad_{x_i} e_i.
Eigen::MatrixXd local_fields(const SpinSequence& x, const CouplingTensor& j,
                             double lambda);

/// Synchronous update x_i <- normalize(field_i + gamma x_i) at
/// lambda = cfg.lambda_eval.
SpinSequence update_step(const SpinSequence& x, const CouplingTensor& j,
                         const DynamicsConfig& cfg,
                         std::span<const int> order = {});

/// In-place batched version of update_step.
void update_batch(SpinBatch& x, const CouplingTensor& j,
                  const DynamicsConfig& cfg);

/// e_i = -log sum_{j != i} exp(lambda x_i J_ij x_j) at lambda = j.lambda.
double local_energy(int i, const SpinSequence& x, const CouplingTensor& j);

double total_energy(const SpinSequence& x, const CouplingTensor& j);

using StepRecorder = std::function<void(int t, const SpinSequence& state)>;

/// States after each of `steps` applications of update_step. The recorder, if
/// set, sees each state as it is produced (t = 1..steps).
std::vector<SpinSequence> iterate(const SpinSequence& x0,
                                  const CouplingTensor& j,
                                  const DynamicsConfig& cfg, int steps,
                                  const StepRecorder& recorder = {});

/// Rank <= K coupling sum_k wq_k wk_k^T of size d x d.
Eigen::MatrixXd factorized_coupling(std::span<const Eigen::VectorXd> wq,
                                    std::span<const Eigen::VectorXd> wk, int d);

/// Coupling tensor with the same block on every off-diagonal position.
CouplingTensor shared_coupling(const Eigen::MatrixXd& block, int n);

}  // namespace bsa
