#include "bsa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bsa {
namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void require_same_shape(const Image& a, const Image& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("image shapes differ");
  }
}

Image clamp01(Image image) { return image.cwiseMax(0.0).cwiseMin(1.0); }

}  // namespace

CorruptionKind parse_task(std::string_view name) {
  if (name == "mask") return CorruptionKind::kMask;
  if (name == "denoise" || name == "noise") return CorruptionKind::kNoise;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

std::string_view to_string(CorruptionKind kind) {
  return kind == CorruptionKind::kMask ? "mask" : "denoise";
}

void CorruptionSpec::validate() const {
  if (!(mask_fraction >= 0.0 && mask_fraction <= 1.0)) {
    throw std::invalid_argument("mask_fraction must lie in [0,1]");
  }
  if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise_variance must be >= 0");
}

CorruptionSpec CorruptionSpec::for_image(std::size_t index) const {
  CorruptionSpec s = *this;
  s.seed = splitmix64(seed ^ splitmix64(index));
  return s;
}

TimeIndex time_index_for(CorruptionKind kind) {
  return kind == CorruptionKind::kNoise ? TimeIndex::kCorruptedInput
                                        : TimeIndex::kFirstUpdate;
}

Image mask_tokens(const Image& image, const PatchGeometry& geom,
                  const CorruptionSpec& spec) {
  spec.validate();
  if (image.rows() != geom.rows || image.cols() != geom.cols) {
    throw std::invalid_argument("image does not match patch geometry");
  }
  const auto count = static_cast<std::size_t>(std::floor(spec.mask_fraction * geom.n));
  std::vector<int> tokens(geom.n);
  std::iota(tokens.begin(), tokens.end(), 0);
  std::mt19937_64 rng(spec.seed);
  std::shuffle(tokens.begin(), tokens.end(), rng);

  Image out = image;
  const int gc = geom.grid_cols();
  for (std::size_t k = 0; k < count; ++k) {
    const int t = tokens[k];
    out.block((t / gc) * geom.side, (t % gc) * geom.side, geom.side, geom.side)
        .setZero();
  }
  return out;
}

Image noisy_rescaled(const Image& image, const CorruptionSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(spec.noise_variance));
  Image noisy = image;
  for (Eigen::Index c = 0; c < noisy.cols(); ++c) {
    for (Eigen::Index r = 0; r < noisy.rows(); ++r) noisy(r, c) += noise(rng);
  }
  const double clean_var = pixel_variance(image);
  const double noisy_var = pixel_variance(noisy);
  if (clean_var == 0.0 || noisy_var == 0.0) return noisy;
  const double mean = noisy.mean();
  return ((noisy.array() - mean) * std::sqrt(clean_var / noisy_var) + mean).matrix();
}

Image add_noise(const Image& image, const CorruptionSpec& spec) {
  return clamp01(noisy_rescaled(image, spec));
}

Image corrupt(const Image& image, const PatchGeometry& geom,
              const CorruptionSpec& spec) {
  return spec.kind == CorruptionKind::kMask ? mask_tokens(image, geom, spec)
                                            : add_noise(image, spec);
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b);
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double pixel_variance(const Image& image) {
  const double mean = image.mean();
  return (image.array() - mean).square().mean();
}

Trajectory run_trajectory(const Image& clean, const Image& corrupted,
                          const CouplingTensor& j, const EmbeddingMap& map,
                          const PatchGeometry& geom, const DynamicsConfig& cfg,
                          int steps, TimeIndex convention) {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  Trajectory traj;
  traj.convention = convention;
  SpinSequence x = embed_image(corrupted, map, geom);
  int updates = steps;
  if (convention == TimeIndex::kCorruptedInput) {
    traj.states.push_back(x);
    traj.images.push_back(corrupted);
    traj.mse.push_back(mse(corrupted, clean));
    --updates;
  }
  for (int t = 0; t < updates; ++t) {
    x = update_step(x, j, cfg);
    traj.states.push_back(x);
    traj.images.push_back(deembed_image(x, map, geom));
    traj.mse.push_back(mse(traj.images.back(), clean));
  }
  return traj;
}

int CurveResult::argmin_t() const {
  if (mean_mse.empty()) return 0;
  return static_cast<int>(std::min_element(mean_mse.begin(), mean_mse.end()) -
                          mean_mse.begin()) + 1;
}

double CurveResult::min_mse() const {
  return mean_mse.empty() ? 0.0 : *std::min_element(mean_mse.begin(), mean_mse.end());
}

CurveResult evaluate_curve(const CouplingTensor& j, const EmbeddingMap& map,
                           const PatchGeometry& geom, CorpusView test,
                           const CorruptionSpec& spec, const DynamicsConfig& cfg,
                           const CurveOptions& options) {
  spec.validate();
  if (options.steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (test.empty()) throw std::invalid_argument("test set is empty");

  const int rows = options.steps;
  const auto count = static_cast<Eigen::Index>(test.size());
  CurveResult result;
  result.convention = time_index_for(spec.kind);
  const bool input_row = result.convention == TimeIndex::kCorruptedInput;

  Eigen::MatrixXd errors(rows, count);
  const auto keep = [&](int t) {
    return std::find(options.keep_predictions_at.begin(),
                     options.keep_predictions_at.end(),
                     t) != options.keep_predictions_at.end();
  };
  for (int t : options.keep_predictions_at) {
    if (t < 1 || t > rows) throw std::invalid_argument("kept row outside the curve");
    result.predictions[t].resize(test.size());
  }
  const auto samples = static_cast<std::size_t>(std::max(options.keep_samples, 0));
  result.samples.resize(std::min(samples, test.size()));
  result.sample_corrupted.resize(result.samples.size());
  for (Trajectory& s : result.samples) s.convention = result.convention;

  double corrupted_total = 0.0;
  const std::size_t chunk = static_cast<std::size_t>(std::max(options.chunk, 1));
  for (std::size_t start = 0; start < test.size(); start += chunk) {
    const std::size_t stop = std::min(test.size(), start + chunk);
    std::vector<SpinSequence> inputs;
    std::vector<Image> corrupted;
    for (std::size_t k = start; k < stop; ++k) {
      corrupted.push_back(corrupt(test[k], geom, spec.for_image(k)));
      inputs.push_back(embed_image(corrupted.back(), map, geom));
      corrupted_total += mse(corrupted.back(), test[k]);
    }
    SpinBatch x = SpinBatch::pack(inputs);

    const auto record = [&](int t, std::size_t k, const Image& prediction,
                            const SpinSequence* state) {
      const double err = mse(prediction, test[k]);
      errors(t - 1, static_cast<Eigen::Index>(k)) = err;
      if (keep(t)) result.predictions[t][k] = prediction;
      if (k < result.samples.size()) {
        Trajectory& s = result.samples[k];
        s.images.push_back(prediction);
        s.mse.push_back(err);
        s.states.push_back(state ? *state : inputs[k - start]);
      }
    };

    int t = 1;
    if (input_row) {
      for (std::size_t k = start; k < stop; ++k) {
        record(t, k, corrupted[k - start], nullptr);
      }
      ++t;
    }
    for (; t <= rows; ++t) {
      update_batch(x, j, cfg);
      for (std::size_t k = start; k < stop; ++k) {
        const SpinSequence state = x.sequence(static_cast<int>(k - start));
        record(t, k, deembed_image(state, map, geom), &state);
      }
    }
    for (std::size_t k = start; k < stop && k < result.samples.size(); ++k) {
      result.sample_corrupted[k] = corrupted[k - start];
    }
  }

  result.corrupted_mse = corrupted_total / static_cast<double>(count);
  result.mean_mse.resize(rows);
  result.std_mse.resize(rows);
  for (int t = 0; t < rows; ++t) {
    const double mean = errors.row(t).mean();
    result.mean_mse[t] = mean;
    result.std_mse[t] = std::sqrt((errors.row(t).array() - mean).square().mean());
  }
  return result;
}

double Histogram::median() const {
  double acc = 0.0;
  for (std::size_t b = 0; b < mass.size(); ++b) {
    if (mass[b] > 0.0 && acc + mass[b] >= 0.5) {
      const double frac = (0.5 - acc) / mass[b];
      return edges[b] + frac * (edges[b + 1] - edges[b]);
    }
    acc += mass[b];
  }
  return edges.empty() ? 0.0 : edges.back();
}

Histogram patch_variance_histogram(std::span<const Image> images,
                                   const PatchGeometry& geom, int bins,
                                   double max_variance) {
  if (bins < 1 || !(max_variance > 0.0)) {
    throw std::invalid_argument("histogram needs bins >= 1 and a positive range");
  }
  Histogram h;
  h.edges.resize(bins + 1);
  for (int b = 0; b <= bins; ++b) h.edges[b] = max_variance * b / bins;
  h.mass.assign(bins, 0.0);

  std::size_t total = 0;
  for (const Image& im : images) {
    for (int i = 0; i < geom.n; ++i) {
      const Eigen::VectorXd px = patch_pixels(im, geom, i);
      const double var = (px.array() - px.mean()).square().mean();
      const int b = std::clamp(static_cast<int>(var / max_variance * bins), 0, bins - 1);
      h.mass[b] += 1.0;
      ++total;
    }
  }
  if (total > 0) {
    for (double& m : h.mass) m /= static_cast<double>(total);
  }
  return h;
}

double cosine_similarity(const Image& a, const Image& b) {
  require_same_shape(a, b);
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cwiseProduct(b).sum() / (na * nb);
}

Eigen::MatrixXd similarity_matrix(std::span<const Image> images) {
  const auto n = static_cast<Eigen::Index>(images.size());
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (Eigen::Index q = p; q < n; ++q) {
      s(p, q) = s(q, p) = cosine_similarity(images[p], images[q]);
    }
  }
  return s;
}

double mean_off_diagonal(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  if (n < 2) return 0.0;
  return (m.sum() - m.trace()) / static_cast<double>(n * (n - 1));
}

Image mean_image(CorpusView images) {
  if (images.empty()) throw std::invalid_argument("no images to average");
  Image acc = Image::Zero(images[0].rows(), images[0].cols());
  for (const Image& im : images.images) acc += im;
  return acc / static_cast<double>(images.size());
}

ProbeReport attractor_probe(const CouplingTensor& j, const EmbeddingMap& map,
                            const PatchGeometry& geom,
                            std::span<const Image> inputs,
                            const Image& reference_mean,
                            const DynamicsConfig& cfg, int steps) {
  if (inputs.empty()) throw std::invalid_argument("probe needs at least one input");
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  std::vector<SpinSequence> embedded;
  for (const Image& im : inputs) embedded.push_back(embed_image(im, map, geom));
  SpinBatch x = SpinBatch::pack(embedded);
  for (int t = 0; t < steps; ++t) update_batch(x, j, cfg);

  ProbeReport report;
  for (int k = 0; k < x.size(); ++k) {
    report.finals.push_back(deembed_image(x.sequence(k), map, geom));
    report.similarity_to_mean.push_back(
        cosine_similarity(report.finals.back(), reference_mean));
  }
  report.final_similarity = similarity_matrix(report.finals);
  report.input_similarity = similarity_matrix(inputs);
  report.mean_pairwise_final = mean_off_diagonal(report.final_similarity);
  report.mean_pairwise_input = mean_off_diagonal(report.input_similarity);
  return report;
}

std::vector<std::size_t> distinct_label_indices(CorpusView images,
                                                std::size_t count) {
  std::vector<std::size_t> picked;
  std::vector<int> seen;
  for (std::size_t k = 0; k < images.labels.size() && picked.size() < count; ++k) {
    const int label = images.labels[k];
    if (std::find(seen.begin(), seen.end(), label) == seen.end()) {
      seen.push_back(label);
      picked.push_back(k);
    }
  }
  return picked;
}

}  // namespace bsa
