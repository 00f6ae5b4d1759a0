#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>

#include "bsa/dynamics.hpp"
#include "bsa/embedding.hpp"

namespace bsa {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk model, little-endian:
///
///   "BSA1" | u32 version | u32 H, W, side, a, N, d | u64 embedding seed |
///   u32 norm mode (0 = l2, 1 = ln) | f64 lambda_eval | f64 norm_ref |
///   f32 x N*N*d*d couplings in (i, j, row, col) order
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  PatchGeometry geometry;
  std::uint64_t embedding_seed = 0;
  NormMode norm_mode = NormMode::kL2;
  CouplingTensor couplings;  // lambda holds lambda_eval
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace bsa
