#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bsa {

/// Grayscale image, intensities in [0,1], indexed (row, col).
using Image = Eigen::MatrixXd;

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch };

  IdxError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// A loaded image set. Immutable after construction.
struct ImageCorpus {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Image> images;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return images.size(); }
};

/// Non-owning contiguous range of a corpus.
struct CorpusView {
  std::span<const Image> images;
  std::span<const std::uint8_t> labels;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  const Image& operator[](std::size_t k) const { return images[k]; }
};

/// Reads an IDX3 image file and matching IDX1 label file. Pixel bytes are
/// scaled by 1/255.
ImageCorpus load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

/// First n_train images form the train view, the remainder the test view.
std::pair<CorpusView, CorpusView> split(const ImageCorpus& corpus,
                                        std::size_t n_train);

CorpusView whole(const ImageCorpus& corpus);

/// Standard MNIST file names inside a data directory.
struct MnistFiles {
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
};

MnistFiles mnist_files(const std::filesystem::path& data_dir);

}  // namespace bsa
