#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "bsa/corpus.hpp"

namespace bsa {

/// Token state: one d-dimensional unit vector per column, column i = token i.
using SpinSequence = Eigen::MatrixXd;

enum class NormMode { kL2, kLayerNorm };

NormMode parse_norm_mode(std::string_view name);
std::string_view to_string(NormMode mode);

/// Square non-overlapping patch tiling of an image.
///
/// Patches are ordered row-major over the patch grid and pixels row-major
/// within a patch. Couplings are position dependent, so this ordering is part
/// of the checkpoint contract.
struct PatchGeometry {
  int rows = 0;
  int cols = 0;
  int side = 0;
  int a = 0;  // pixels per patch
  int n = 0;  // tokens per image
  int d = 0;  // embedding dimension

  /// d <= 0 selects the smallest admissible value, 2a.
  static PatchGeometry make(int rows, int cols, int side, int d = 0);

  int grid_cols() const noexcept { return cols / side; }
  bool operator==(const PatchGeometry&) const = default;
};

struct EmbeddingMap {
  Eigen::MatrixXd f;       // d x 2a
  Eigen::MatrixXd f_pinv;  // 2a x d, left inverse a * f^T
  std::uint64_t seed = 0;
};

class DegenerateSpinError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (p, 1-p) / sqrt(p^2 + (1-p)^2). Out-of-range p is clamped with a warning.
Eigen::Vector2d embed_pixel(double p);

/// v1 / (v1 + v2) clamped to [0,1]; 0.5 when |v1 + v2| < 1e-12.
double invert_pixel(const Eigen::Vector2d& v);

/// Columns drawn from a seeded random orthonormal basis of R^d, scaled by
/// 1/sqrt(a).
EmbeddingMap build_embedding(std::uint64_t seed, const PatchGeometry& geom);

SpinSequence embed_image(const Image& image, const EmbeddingMap& map,
                         const PatchGeometry& geom);

Image deembed_image(const SpinSequence& spins, const EmbeddingMap& map,
                    const PatchGeometry& geom);

/// kL2 projects onto the unit sphere. kLayerNorm centers the components,
/// divides by their standard deviation and rescales by 1/sqrt(d), which also
/// lands on the unit sphere.
Eigen::VectorXd normalize_spin(const Eigen::VectorXd& v, NormMode mode);

/// Normalizes every column in place.
void normalize_spins(SpinSequence& x, NormMode mode);

/// Pixel values of one patch in row-major order within the patch.
Eigen::VectorXd patch_pixels(const Image& image, const PatchGeometry& geom,
                             int token);

}  // namespace bsa
