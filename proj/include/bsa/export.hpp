#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>

#include "bsa/corpus.hpp"
#include "bsa/evaluation.hpp"

namespace bsa {

/// Columns: t, mean_mse, std_mse.
void write_curve_csv(std::ostream& out, const CurveResult& curve);

/// Columns: bin_left, bin_right, mass.
void write_histogram_csv(std::ostream& out, const Histogram& histogram);

void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m);

/// Binary P5, 8-bit, value round(255 p).
void write_pgm(const std::filesystem::path& path, const Image& image);
Image read_pgm(const std::filesystem::path& path);

/// Images side by side, left to right.
Image hstack(std::span<const Image> images);

}  // namespace bsa
