#include "bsa/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bsa {

void write_curve_csv(std::ostream& out, const CurveResult& curve) {
  out << "t,mean_mse,std_mse\n";
  out.precision(17);
  for (std::size_t t = 0; t < curve.mean_mse.size(); ++t) {
    out << t + 1 << ',' << curve.mean_mse[t] << ',' << curve.std_mse[t] << '\n';
  }
}

void write_histogram_csv(std::ostream& out, const Histogram& histogram) {
  out << "bin_left,bin_right,mass\n";
  out.precision(17);
  for (std::size_t b = 0; b < histogram.mass.size(); ++b) {
    out << histogram.edges[b] << ',' << histogram.edges[b + 1] << ','
        << histogram.mass[b] << '\n';
  }
}

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m) {
  out.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<char> row(static_cast<std::size_t>(image.cols()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      const double p = std::clamp(image(r, c), 0.0, 1.0);
      row[c] = static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int cols = 0;
  int rows = 0;
  int maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  in.get();
  if (magic != "P5" || maxval != 255 || cols <= 0 || rows <= 0) {
    throw std::runtime_error("unsupported PGM " + path.string());
  }
  Image image(rows, cols);
  std::vector<char> row(static_cast<std::size_t>(cols));
  for (int r = 0; r < rows; ++r) {
    if (!in.read(row.data(), cols)) throw std::runtime_error("truncated PGM " + path.string());
    for (int c = 0; c < cols; ++c) {
      image(r, c) = static_cast<unsigned char>(row[c]) / 255.0;
    }
  }
  return image;
}

Image hstack(std::span<const Image> images) {
  if (images.empty()) return {};
  const Eigen::Index rows = images.front().rows();
  Eigen::Index cols = 0;
  for (const Image& im : images) {
    if (im.rows() != rows) throw std::invalid_argument("hstack needs equal heights");
    cols += im.cols();
  }
  Image out(rows, cols);
  Eigen::Index at = 0;
  for (const Image& im : images) {
    out.middleCols(at, im.cols()) = im;
    at += im.cols();
  }
  return out;
}

}  // namespace bsa
