#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bsa/dynamics.hpp"
#include "bsa/evaluation.hpp"
#include "bsa/training.hpp"

namespace bsa {

/// Flat key=value run configuration. Blank lines and lines starting with '#'
/// are ignored; unknown keys are rejected.
struct RunConfig {
  std::filesystem::path data_dir = "data/mnist";
  std::filesystem::path out_dir = "out";
  std::filesystem::path checkpoint;  // empty: <out_dir>/model.bsa

  // data
  std::size_t n_train = 50000;
  std::size_t n_test = 1000;

  // geometry / embedding
  int patch_side = 2;
  int embed_dim = 0;  // 0: 2a
  std::uint64_t embed_seed = 17;

  TrainConfig train;
  DynamicsConfig dynamics;
  CorruptionSpec corruption;

  // outputs
  int samples = 8;
  int probe_inputs = 10;
  int probe_iters = 200;
  int hist_bins = 50;

  /// Sets one field from its textual value.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Applies every key=value line; returns the keys that were set.
  std::vector<std::string> parse(std::string_view text);
  std::vector<std::string> load(const std::filesystem::path& path);

  /// Rejects out-of-range values.
  void validate() const;

  std::filesystem::path checkpoint_path() const;

  static const std::vector<std::string>& keys();
};

}  // namespace bsa
