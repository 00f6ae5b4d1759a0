#include <filesystem>
#include <random>
#include <sstream>

#include "doctest.h"

#include "bsa/checkpoint.hpp"
#include "bsa/export.hpp"
#include "bsa/run_config.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

bsa::Checkpoint sample_checkpoint(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  bsa::Checkpoint c;
  c.geometry = bsa::PatchGeometry::make(8, 8, 2);
  c.embedding_seed = 99;
  c.norm_mode = bsa::NormMode::kLayerNorm;
  c.couplings = bsa::test::random_couplings(rng, c.geometry.n, c.geometry.d);
  c.couplings.lambda = 1.0;
  return c;
}

std::string serialize(const bsa::Checkpoint& c) {
  std::ostringstream out(std::ios::binary);
  bsa::write_checkpoint(out, c);
  return out.str();
}

bsa::Checkpoint deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return bsa::read_checkpoint(in);
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  const auto c = sample_checkpoint(1);
  const std::string bytes = serialize(c);
  CHECK(bytes.substr(0, 4) == "BSA1");
  CHECK(bytes.size() == 4 + 4 + 6 * 4 + 8 + 4 + 8 + 8 + 16 * 16 * 64 * 4);

  const auto back = deserialize(bytes);
  CHECK(back.geometry == c.geometry);
  CHECK(back.embedding_seed == 99);
  CHECK(back.norm_mode == bsa::NormMode::kLayerNorm);
  CHECK(back.couplings.lambda == c.couplings.lambda);
  CHECK(back.couplings.norm_ref == c.couplings.norm_ref);
  for (std::size_t e = 0; e < c.couplings.data().size(); ++e) {
    CHECK(back.couplings.data()[e] == static_cast<double>(static_cast<float>(c.couplings.data()[e])));
  }
  CHECK(serialize(back) == bytes);

  const fs::path path = fs::temp_directory_path() / "bsa_io_test.bsa";
  bsa::save_checkpoint(path, back);
  const auto loaded = bsa::load_checkpoint(path);
  CHECK(std::equal(loaded.couplings.data().begin(), loaded.couplings.data().end(),
                   back.couplings.data().begin()));
}

TEST_CASE("checkpoint validation") {
  const std::string good = serialize(sample_checkpoint(2));

  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize(bad), bsa::CheckpointError);

  bad = good;
  bad[4] = 7;  // version
  CHECK_THROWS_AS(deserialize(bad), bsa::CheckpointError);

  CHECK_THROWS_AS(deserialize(good.substr(0, good.size() - 3)), bsa::CheckpointError);
  CHECK_THROWS_AS(deserialize(good + "x"), bsa::CheckpointError);

  // a nonzero entry in block (0, 0)
  bad = good;
  bad[60] = 0x3f;
  bad[61] = 0x3f;
  CHECK_THROWS_AS(deserialize(bad), bsa::CheckpointError);
}

TEST_CASE("run config") {
  bsa::RunConfig cfg;
  CHECK(cfg.train.epochs == 20);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.lambda_train == 5.0);
  CHECK(cfg.train.lambda_eval == 1.0);
  CHECK(cfg.corruption.mask_fraction == 0.3);
  CHECK(cfg.corruption.noise_variance == 0.7);
  CHECK(cfg.dynamics.gamma == 1.0);
  CHECK(cfg.patch_side == 2);

  const auto keys = cfg.parse(
      "# comment\n"
      "epochs = 3\n"
      "\n"
      "task=denoise\n"
      "learning_rate=0.25\n"
      "norm_mode = ln\n"
      "data_dir=/tmp/x\n");
  CHECK(keys.size() == 5);
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.corruption.kind == bsa::CorruptionKind::kNoise);
  CHECK(cfg.train.learning_rate == 0.25);
  CHECK(cfg.dynamics.norm_mode == bsa::NormMode::kLayerNorm);
  CHECK(cfg.get("data_dir") == "/tmp/x");
  CHECK(cfg.get("learning_rate") == "0.25");
  CHECK(cfg.checkpoint_path() == fs::path("out") / "model.bsa");

  CHECK_THROWS_AS(cfg.parse("no_such_key=1\n"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.parse("epochs=three\n"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.parse("epochs\n"), std::invalid_argument);
  CHECK_THROWS_AS(cfg.set("task", "classify"), std::invalid_argument);

  cfg.set("mask_fraction", "1.5");
  CHECK_THROWS(cfg.validate());
  for (const auto& k : bsa::RunConfig::keys()) CHECK_NOTHROW(cfg.get(k));
}

TEST_CASE("csv and pgm exports") {
  bsa::CurveResult curve;
  curve.mean_mse = {0.5, 0.25};
  curve.std_mse = {0.1, 0.05};
  std::ostringstream csv;
  bsa::write_curve_csv(csv, curve);
  CHECK(csv.str() == "t,mean_mse,std_mse\n1,0.5,0.10000000000000001\n2,0.25,0.050000000000000003\n");

  bsa::Histogram h{{0.0, 0.5, 1.0}, {0.75, 0.25}};
  std::ostringstream hcsv;
  bsa::write_histogram_csv(hcsv, h);
  CHECK(hcsv.str() == "bin_left,bin_right,mass\n0,0.5,0.75\n0.5,1,0.25\n");

  bsa::Image im(2, 3);
  im << 0.0, 0.5, 1.0, 0.2, 0.8, 0.999;
  const fs::path p = fs::temp_directory_path() / "bsa_io_test.pgm";
  bsa::write_pgm(p, im);
  CHECK(fs::file_size(p) == std::string("P5\n3 2\n255\n").size() + 6);
  const bsa::Image back = bsa::read_pgm(p);
  CHECK(back(0, 1) == doctest::Approx(128.0 / 255.0));
  CHECK(back(1, 2) == 1.0);
  CHECK((back - im).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);

  std::vector<bsa::Image> parts{im, im};
  CHECK(bsa::hstack(parts).cols() == 6);
}
