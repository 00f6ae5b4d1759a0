#include "bsa/corpus.hpp"

#include <fstream>
#include <iterator>

namespace bsa {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IdxError(IdxError::Kind::kIo, "cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t off,
                        const std::filesystem::path& path) {
  if (buf.size() < off + 4) {
    throw IdxError(IdxError::Kind::kTruncated,
                   "truncated header in " + path.string());
  }
  return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
         (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

}  // namespace

ImageCorpus load_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);

  if (read_be32(img, 0, images_path) != kImageMagic) {
    throw IdxError(IdxError::Kind::kBadMagic,
                   "bad image magic in " + images_path.string());
  }
  if (read_be32(lab, 0, labels_path) != kLabelMagic) {
    throw IdxError(IdxError::Kind::kBadMagic,
                   "bad label magic in " + labels_path.string());
  }

  const std::size_t count = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t label_count = read_be32(lab, 4, labels_path);

  if (img.size() < 16 + count * rows * cols) {
    throw IdxError(IdxError::Kind::kTruncated,
                   "truncated image payload in " + images_path.string());
  }
  if (lab.size() < 8 + label_count) {
    throw IdxError(IdxError::Kind::kTruncated,
                   "truncated label payload in " + labels_path.string());
  }
  if (count != label_count) {
    throw IdxError(IdxError::Kind::kCountMismatch,
                   "image count " + std::to_string(count) +
                       " != label count " + std::to_string(label_count));
  }

  ImageCorpus corpus;
  corpus.rows = rows;
  corpus.cols = cols;
  corpus.images.reserve(count);
  const std::uint8_t* px = img.data() + 16;
  for (std::size_t k = 0; k < count; ++k) {
    Image im(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        im(r, c) = static_cast<double>(*px++) / 255.0;
      }
    }
    corpus.images.push_back(std::move(im));
  }
  corpus.labels.assign(lab.begin() + 8, lab.begin() + 8 + label_count);
  return corpus;
}

std::pair<CorpusView, CorpusView> split(const ImageCorpus& corpus,
                                        std::size_t n_train) {
  if (n_train > corpus.size()) {
    throw std::invalid_argument("n_train " + std::to_string(n_train) +
                                " exceeds corpus size " +
                                std::to_string(corpus.size()));
  }
  std::span<const Image> images(corpus.images);
  std::span<const std::uint8_t> labels(corpus.labels);
  if (labels.size() != images.size()) {
    return {CorpusView{images.first(n_train), {}},
            CorpusView{images.subspan(n_train), {}}};
  }
  return {CorpusView{images.first(n_train), labels.first(n_train)},
          CorpusView{images.subspan(n_train), labels.subspan(n_train)}};
}

CorpusView whole(const ImageCorpus& corpus) {
  return CorpusView{corpus.images, corpus.labels};
}

MnistFiles mnist_files(const std::filesystem::path& data_dir) {
  return {data_dir / "train-images-idx3-ubyte",
          data_dir / "train-labels-idx1-ubyte",
          data_dir / "t10k-images-idx3-ubyte",
          data_dir / "t10k-labels-idx1-ubyte"};
}

}  // namespace bsa
