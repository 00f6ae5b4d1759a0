#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "bsa/corpus.hpp"
#include "bsa/dynamics.hpp"
#include "bsa/embedding.hpp"

namespace bsa {

enum class CorruptionKind { kMask, kNoise };

CorruptionKind parse_task(std::string_view name);
std::string_view to_string(CorruptionKind kind);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::kMask;
  double mask_fraction = 0.3;
  double noise_variance = 0.7;
  std::uint64_t seed = 7;

  void validate() const;
  /// Same spec with a seed derived from (seed, index), for per-image draws.
  CorruptionSpec for_image(std::size_t index) const;
};

/// Whether curve row t = 1 holds the corrupted input (denoising) or the first
/// update (masking).
enum class TimeIndex { kFirstUpdate, kCorruptedInput };

TimeIndex time_index_for(CorruptionKind kind);

struct Trajectory {
  std::vector<SpinSequence> states;
  std::vector<Image> images;
  std::vector<double> mse;
  TimeIndex convention = TimeIndex::kFirstUpdate;
};

/// Zeroes floor(fraction * n) whole patches chosen uniformly at random.
Image mask_tokens(const Image& image, const PatchGeometry& geom,
                  const CorruptionSpec& spec);

/// Adds N(0, variance) per pixel and rescales about the noisy mean so the
/// pixel variance matches the clean image. Not clamped.
Image noisy_rescaled(const Image& image, const CorruptionSpec& spec);

/// noisy_rescaled clamped to [0,1]. A constant clean image skips the rescale.
Image add_noise(const Image& image, const CorruptionSpec& spec);

Image corrupt(const Image& image, const PatchGeometry& geom,
              const CorruptionSpec& spec);

double mse(const Image& a, const Image& b);

/// Population variance of all pixels.
double pixel_variance(const Image& image);

/// Runs the dynamics from the corrupted image and scores every step against
/// the clean one. Produces `steps` rows under the task's time convention.
Trajectory run_trajectory(const Image& clean, const Image& corrupted,
                          const CouplingTensor& j, const EmbeddingMap& map,
                          const PatchGeometry& geom, const DynamicsConfig& cfg,
                          int steps, TimeIndex convention);

struct CurveOptions {
  int steps = 50;
  /// Number of leading test images whose full image trajectories are kept.
  int keep_samples = 0;
  /// Rows t at which every prediction is kept.
  std::vector<int> keep_predictions_at;
  int chunk = 64;
};

struct CurveResult {
  TimeIndex convention = TimeIndex::kFirstUpdate;
  std::vector<double> mean_mse;
  std::vector<double> std_mse;
  /// Mean MSE of the corrupted inputs against the clean images.
  double corrupted_mse = 0.0;
  std::vector<Trajectory> samples;
  std::vector<Image> sample_corrupted;
  std::map<int, std::vector<Image>> predictions;

  /// 1-based row of the smallest mean MSE.
  int argmin_t() const;
  double min_mse() const;
};

CurveResult evaluate_curve(const CouplingTensor& j, const EmbeddingMap& map,
                           const PatchGeometry& geom, CorpusView test,
                           const CorruptionSpec& spec, const DynamicsConfig& cfg,
                           const CurveOptions& options);

struct Histogram {
  std::vector<double> edges;  // bins + 1 entries
  std::vector<double> mass;   // sums to 1

  double median() const;
};

/// Distribution of within-patch pixel variances over all patches of all
/// images. Variances of [0,1] pixels lie in [0, 0.25].
Histogram patch_variance_histogram(std::span<const Image> images,
                                   const PatchGeometry& geom, int bins = 50,
                                   double max_variance = 0.25);

/// Cosine similarity of two images as flat vectors; 0 if either is zero.
double cosine_similarity(const Image& a, const Image& b);

Eigen::MatrixXd similarity_matrix(std::span<const Image> images);

/// Mean of the off-diagonal entries.
double mean_off_diagonal(const Eigen::MatrixXd& m);

Image mean_image(CorpusView images);

struct ProbeReport {
  std::vector<Image> finals;
  Eigen::MatrixXd final_similarity;
  Eigen::MatrixXd input_similarity;
  std::vector<double> similarity_to_mean;
  double mean_pairwise_final = 0.0;
  double mean_pairwise_input = 0.0;
};

/// Runs `steps` updates from each input and compares the final images with
/// each other and with `reference_mean`.
ProbeReport attractor_probe(const CouplingTensor& j, const EmbeddingMap& map,
                            const PatchGeometry& geom,
                            std::span<const Image> inputs,
                            const Image& reference_mean,
                            const DynamicsConfig& cfg, int steps = 200);

/// Indices of the first occurrence of each distinct label, at most `count`.
std::vector<std::size_t> distinct_label_indices(CorpusView images,
                                                std::size_t count);

}  // namespace bsa
