#include "bsa/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace bsa {
namespace {

constexpr std::array<char, 4> kMagic = {'B', 'S', 'A', '1'};

template <typename T>
void put(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) throw CheckpointError("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  const PatchGeometry& g = ckpt.geometry;
  const CouplingTensor& j = ckpt.couplings;
  if (j.n() != g.n || j.d() != g.d) {
    throw CheckpointError("coupling shape does not match geometry");
  }
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, Checkpoint::kVersion);
  for (int v : {g.rows, g.cols, g.side, g.a, g.n, g.d}) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(v));
  }
  put<std::uint64_t>(out, ckpt.embedding_seed);
  put<std::uint32_t>(out, ckpt.norm_mode == NormMode::kL2 ? 0u : 1u);
  put<double>(out, j.lambda);
  put<double>(out, j.norm_ref);

  const auto values = j.data();
  std::vector<char> buf(values.size() * sizeof(float));
  for (std::size_t k = 0; k < values.size(); ++k) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[k]));
    for (int b = 0; b < 4; ++b) buf[4 * k + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError("not a checkpoint (bad magic)");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != Checkpoint::kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  std::array<int, 6> dims{};
  for (int& v : dims) v = static_cast<int>(get<std::uint32_t>(in));

  Checkpoint ckpt;
  try {
    ckpt.geometry = PatchGeometry::make(dims[0], dims[1], dims[2], dims[5]);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("invalid geometry: ") + e.what());
  }
  if (ckpt.geometry.a != dims[3] || ckpt.geometry.n != dims[4]) {
    throw CheckpointError("inconsistent geometry fields");
  }
  ckpt.embedding_seed = get<std::uint64_t>(in);
  const auto mode = get<std::uint32_t>(in);
  if (mode > 1) throw CheckpointError("unknown norm mode " + std::to_string(mode));
  ckpt.norm_mode = mode == 0 ? NormMode::kL2 : NormMode::kLayerNorm;

  CouplingTensor j(ckpt.geometry.n, ckpt.geometry.d);
  j.lambda = get<double>(in);
  j.norm_ref = get<double>(in);

  auto values = j.data();
  std::vector<unsigned char> buf(values.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw CheckpointError("truncated coupling payload");
  }
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{buf[4 * k + b]} << (8 * b);
    values[k] = std::bit_cast<float>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError("trailing bytes after coupling payload");
  }
  if (!j.diagonal_is_zero()) throw CheckpointError("nonzero diagonal coupling block");
  ckpt.couplings = std::move(j);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace bsa
