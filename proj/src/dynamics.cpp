#include "bsa/dynamics.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace bsa {
namespace {

// Softmax down each column of `scores`, skipping row `self`. Writes the
// weights back into `scores` and returns -logsumexp per column.
Eigen::RowVectorXd softmax_columns_excluding(Eigen::MatrixXd& scores, int self) {
  scores.row(self).setConstant(-std::numeric_limits<double>::infinity());
  const Eigen::RowVectorXd peak = scores.colwise().maxCoeff();
  scores = (scores.rowwise() - peak).array().exp().matrix();
  const Eigen::RowVectorXd total = scores.colwise().sum();
  scores.array().rowwise() /= total.array();
  scores.row(self).setZero();
  return -(peak.array() + total.array().log()).matrix();
}

void require_pairs(int n) {
  if (n < 2) throw std::invalid_argument("attention needs at least two tokens");
}

}  // namespace

CouplingTensor::CouplingTensor(int n, int d)
    : n_(n), d_(d), values_(static_cast<std::size_t>(n) * n * d * d, 0.0) {
  if (n < 1 || d < 1) throw std::invalid_argument("coupling shape must be positive");
}

BlockMap CouplingTensor::block(int i, int j) {
  const std::size_t dd = static_cast<std::size_t>(d_) * d_;
  return BlockMap(values_.data() + (static_cast<std::size_t>(i) * n_ + j) * dd,
                  d_, d_);
}

ConstBlockMap CouplingTensor::block(int i, int j) const {
  const std::size_t dd = static_cast<std::size_t>(d_) * d_;
  return ConstBlockMap(
      values_.data() + (static_cast<std::size_t>(i) * n_ + j) * dd, d_, d_);
}

double CouplingTensor::norm() const {
  return Eigen::Map<const Eigen::VectorXd>(values_.data(),
                                           static_cast<Eigen::Index>(values_.size()))
      .norm();
}

void CouplingTensor::zero_diagonal() {
  for (int i = 0; i < n_; ++i) block(i, i).setZero();
}

void CouplingTensor::rescale_to(double target) {
  const double current = norm();
  if (current == 0.0) return;
  const double s = target / current;
  for (double& v : values_) v *= s;
}

bool CouplingTensor::diagonal_is_zero() const {
  for (int i = 0; i < n_; ++i) {
    if (!block(i, i).isZero(0.0)) return false;
  }
  return true;
}

SpinBatch::SpinBatch(int n, int d, int b)
    : n_(n), d_(d), b_(b), data_(Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n) * b)) {}

SpinBatch SpinBatch::pack(std::span<const SpinSequence> sequences) {
  if (sequences.empty()) throw std::invalid_argument("empty spin batch");
  const int d = static_cast<int>(sequences.front().rows());
  const int n = static_cast<int>(sequences.front().cols());
  const int b = static_cast<int>(sequences.size());
  SpinBatch batch(n, d, b);
  for (int k = 0; k < b; ++k) {
    const SpinSequence& s = sequences[k];
    if (s.rows() != d || s.cols() != n) {
      throw std::invalid_argument("spin sequences in a batch must share a shape");
    }
    for (int j = 0; j < n; ++j) batch.token(j).col(k) = s.col(j);
  }
  return batch;
}

SpinBatch SpinBatch::pack(const SpinSequence& sequence) {
  return pack(std::span<const SpinSequence>(&sequence, 1));
}

SpinSequence SpinBatch::sequence(int k) const {
  SpinSequence s(d_, n_);
  for (int j = 0; j < n_; ++j) s.col(j) = token(j).col(k);
  return s;
}

AttentionOutputs attend(const SpinBatch& x, const CouplingTensor& j,
                        double lambda, bool want_field,
                        const AttentionVisitor& visitor,
                        std::span<const int> order) {
  const int n = x.n();
  const int d = x.d();
  const int b = x.size();
  require_pairs(n);
  if (j.n() != n || j.d() != d) {
    throw std::invalid_argument("coupling tensor shape does not match spins");
  }

  std::vector<int> natural;
  if (order.empty()) {
    natural.resize(n);
    std::iota(natural.begin(), natural.end(), 0);
    order = natural;
  }

  AttentionOutputs out;
  out.energy.resize(n, b);
  if (want_field) out.field = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(n) * b);

  // J_ij x_j for the current token i, packed like the batch.
  Eigen::MatrixXd values(d, static_cast<Eigen::Index>(n) * b);
  Eigen::MatrixXd alpha(n, b);

  for (const int i : order) {
    const auto xi = x.token(i);
    for (int k = 0; k < n; ++k) {
      if (k == i) continue;
      auto y = values.middleCols(k * b, b);
      y.noalias() = j.block(i, k) * x.token(k);
      alpha.row(k) = lambda * (xi.array() * y.array()).colwise().sum().matrix();
    }
    out.energy.row(i) = softmax_columns_excluding(alpha, i);

    if (want_field) {
      auto field = out.field.middleCols(i * b, b);
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        field.array() += values.middleCols(k * b, b).array().rowwise() *
                         alpha.row(k).array();
      }
      field *= lambda;
    }
    if (visitor) visitor(i, alpha);
  }
  return out;
}

Eigen::VectorXd masked_softmax(const Eigen::VectorXd& scores, int self) {
  Eigen::MatrixXd m = scores;
  softmax_columns_excluding(m, self);
  return m.col(0);
}

AttentionMask attention_scores(const SpinSequence& x, const CouplingTensor& j) {
  const int n = static_cast<int>(x.cols());
  AttentionMask mask = AttentionMask::Zero(n, n);
  attend(SpinBatch::pack(x), j, j.lambda, false,
         [&](int i, const Eigen::MatrixXd& alpha) {
           mask.row(i) = alpha.col(0).transpose();
         });
  return mask;
}

Eigen::MatrixXd local_fields(const SpinSequence& x, const CouplingTensor& j,
                             double lambda) {
  return attend(SpinBatch::pack(x), j, lambda, true).field;
}

SpinSequence update_step(const SpinSequence& x, const CouplingTensor& j,
                         const DynamicsConfig& cfg, std::span<const int> order) {
  SpinSequence next =
      attend(SpinBatch::pack(x), j, cfg.lambda_eval, true, {}, order).field;
  next += cfg.gamma * x;
  normalize_spins(next, cfg.norm_mode);
  return next;
}

void update_batch(SpinBatch& x, const CouplingTensor& j,
                  const DynamicsConfig& cfg) {
  Eigen::MatrixXd next = attend(x, j, cfg.lambda_eval, true).field;
  next += cfg.gamma * x.data();
  normalize_spins(next, cfg.norm_mode);
  x.data() = std::move(next);
}

double local_energy(int i, const SpinSequence& x, const CouplingTensor& j) {
  const int n = static_cast<int>(x.cols());
  require_pairs(n);
  if (i < 0 || i >= n) throw std::out_of_range("token index out of range");
  Eigen::VectorXd scores(n);
  for (int k = 0; k < n; ++k) {
    scores[k] = k == i ? 0.0
                       : j.lambda * x.col(i).dot(j.block(i, k) * x.col(k));
  }
  scores[i] = -std::numeric_limits<double>::infinity();
  const double peak = scores.maxCoeff();
  return -(peak + std::log((scores.array() - peak).exp().sum()));
}

double total_energy(const SpinSequence& x, const CouplingTensor& j) {
  return attend(SpinBatch::pack(x), j, j.lambda, false).energy.sum();
}

std::vector<SpinSequence> iterate(const SpinSequence& x0,
                                  const CouplingTensor& j,
                                  const DynamicsConfig& cfg, int steps,
                                  const StepRecorder& recorder) {
  if (steps < 1) throw std::invalid_argument("iteration count must be >= 1");
  std::vector<SpinSequence> states;
  states.reserve(steps);
  const SpinSequence* prev = &x0;
  for (int t = 1; t <= steps; ++t) {
    states.push_back(update_step(*prev, j, cfg));
    prev = &states.back();
    if (recorder) recorder(t, *prev);
  }
  return states;
}

Eigen::MatrixXd factorized_coupling(std::span<const Eigen::VectorXd> wq,
                                    std::span<const Eigen::VectorXd> wk, int d) {
  if (wq.size() != wk.size()) {
    throw std::invalid_argument("query and key factor counts differ");
  }
  Eigen::MatrixXd coupling = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < wq.size(); ++k) {
    if (wq[k].size() != d || wk[k].size() != d) {
      throw std::invalid_argument("factor dimension mismatch");
    }
    coupling.noalias() += wq[k] * wk[k].transpose();
  }
  return coupling;
}

CouplingTensor shared_coupling(const Eigen::MatrixXd& block, int n) {
  if (block.rows() != block.cols()) throw std::invalid_argument("block must be square");
  CouplingTensor t(n, static_cast<int>(block.rows()));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      if (i != k) t.block(i, k) = block;
    }
  }
  return t;
}

}  // namespace bsa
