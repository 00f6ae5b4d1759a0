#include "bsa/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

namespace bsa {
namespace {

constexpr double kDegenerate = 1e-12;

void check_image_shape(const Image& image, const PatchGeometry& geom) {
  if (image.rows() != geom.rows || image.cols() != geom.cols) {
    throw std::invalid_argument(
        "image is " + std::to_string(image.rows()) + "x" +
        std::to_string(image.cols()) + ", geometry expects " +
        std::to_string(geom.rows) + "x" + std::to_string(geom.cols));
  }
}

// Top-left pixel of a token's patch.
std::pair<int, int> patch_origin(const PatchGeometry& geom, int token) {
  const int gc = geom.grid_cols();
  return {(token / gc) * geom.side, (token % gc) * geom.side};
}

}  // namespace

NormMode parse_norm_mode(std::string_view name) {
  if (name == "l2") return NormMode::kL2;
  if (name == "ln") return NormMode::kLayerNorm;
  throw std::invalid_argument("unknown norm mode '" + std::string(name) + "'");
}

std::string_view to_string(NormMode mode) {
  return mode == NormMode::kL2 ? "l2" : "ln";
}

PatchGeometry PatchGeometry::make(int rows, int cols, int side, int d) {
  if (side <= 0 || rows <= 0 || cols <= 0) {
    throw std::invalid_argument("patch side and image size must be positive");
  }
  if (rows % side != 0 || cols % side != 0) {
    throw std::invalid_argument("image " + std::to_string(rows) + "x" +
                                std::to_string(cols) +
                                " not divisible by patch side " +
                                std::to_string(side));
  }
  PatchGeometry g;
  g.rows = rows;
  g.cols = cols;
  g.side = side;
  g.a = side * side;
  g.n = (rows / side) * (cols / side);
  g.d = d > 0 ? d : 2 * g.a;
  if (g.d < 2 * g.a) {
    throw std::invalid_argument("embedding dimension " + std::to_string(g.d) +
                                " < 2a = " + std::to_string(2 * g.a));
  }
  return g;
}

Eigen::Vector2d embed_pixel(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    std::clog << "warning: pixel intensity " << p << " clamped to [0,1]\n";
    p = std::clamp(std::isnan(p) ? 0.5 : p, 0.0, 1.0);
  }
  const double q = 1.0 - p;
  return Eigen::Vector2d(p, q) / std::sqrt(p * p + q * q);
}

double invert_pixel(const Eigen::Vector2d& v) {
  const double den = v[0] + v[1];
  if (std::abs(den) < kDegenerate) return 0.5;
  return std::clamp(v[0] / den, 0.0, 1.0);
}

EmbeddingMap build_embedding(std::uint64_t seed, const PatchGeometry& geom) {
  const int d = geom.d;
  const int k = 2 * geom.a;
  if (d < k) {
    throw std::invalid_argument("embedding dimension " + std::to_string(d) +
                                " < 2a = " + std::to_string(k));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(d, d);
  for (int c = 0; c < d; ++c) {
    for (int r = 0; r < d; ++r) g(r, c) = gauss(rng);
  }
  // Haar-distributed orthogonal factor: fix QR signs by diag(R).
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < d; ++c) {
    if (r(c, c) < 0) q.col(c) = -q.col(c);
  }

  EmbeddingMap map;
  map.seed = seed;
  map.f = q.leftCols(k) / std::sqrt(static_cast<double>(geom.a));
  map.f_pinv = static_cast<double>(geom.a) * map.f.transpose();
  return map;
}

Eigen::VectorXd patch_pixels(const Image& image, const PatchGeometry& geom,
                             int token) {
  const auto [r0, c0] = patch_origin(geom, token);
  Eigen::VectorXd px(geom.a);
  for (int r = 0; r < geom.side; ++r) {
    for (int c = 0; c < geom.side; ++c) {
      px[r * geom.side + c] = image(r0 + r, c0 + c);
    }
  }
  return px;
}

SpinSequence embed_image(const Image& image, const EmbeddingMap& map,
                         const PatchGeometry& geom) {
  check_image_shape(image, geom);
  Eigen::MatrixXd s(2 * geom.a, geom.n);
  for (int i = 0; i < geom.n; ++i) {
    const Eigen::VectorXd px = patch_pixels(image, geom, i);
    for (int k = 0; k < geom.a; ++k) {
      s.col(i).segment<2>(2 * k) = embed_pixel(px[k]);
    }
  }
  return map.f * s;
}

Image deembed_image(const SpinSequence& spins, const EmbeddingMap& map,
                    const PatchGeometry& geom) {
  if (spins.rows() != geom.d || spins.cols() != geom.n) {
    throw std::invalid_argument("spin sequence shape does not match geometry");
  }
  const Eigen::MatrixXd s = map.f_pinv * spins;
  Image image(geom.rows, geom.cols);
  for (int i = 0; i < geom.n; ++i) {
    const auto [r0, c0] = patch_origin(geom, i);
    for (int k = 0; k < geom.a; ++k) {
      image(r0 + k / geom.side, c0 + k % geom.side) =
          invert_pixel(s.col(i).segment<2>(2 * k));
    }
  }
  return image;
}

Eigen::VectorXd normalize_spin(const Eigen::VectorXd& v, NormMode mode) {
  if (v.norm() < kDegenerate) throw DegenerateSpinError("degenerate spin");
  if (mode == NormMode::kL2) return v / v.norm();

  const Eigen::VectorXd centered = v.array() - v.mean();
  const double sd = std::sqrt(centered.squaredNorm() / v.size());
  if (sd < kDegenerate) throw DegenerateSpinError("degenerate spin");
  return centered / (sd * std::sqrt(static_cast<double>(v.size())));
}

void normalize_spins(SpinSequence& x, NormMode mode) {
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    x.col(i) = normalize_spin(x.col(i), mode);
  }
}

}  // namespace bsa
