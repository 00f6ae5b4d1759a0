// Command-line driver: train, eval, probe, variance.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bsa/checkpoint.hpp"
#include "bsa/corpus.hpp"
#include "bsa/evaluation.hpp"
#include "bsa/export.hpp"
#include "bsa/run_config.hpp"
#include "bsa/training.hpp"

namespace fs = std::filesystem;

namespace {

// Files written by a command; removed unless the command completes.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const fs::path& p : written_) fs::remove(p, ec);
  }

  // `name` relative to the output directory.
  fs::path add(const fs::path& name) { return track(dir_ / name); }

  // `path` as given.
  fs::path track(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    written_.push_back(path);
    return path;
  }

  std::ofstream open(const fs::path& name) {
    const fs::path p = add(name);
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  }

  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool committed_ = false;
};

struct Session {
  bsa::RunConfig cfg;
  std::set<std::string> explicit_keys;
};

bsa::CorpusView test_view(const bsa::ImageCorpus& test, std::size_t n_test) {
  return bsa::split(test, std::min(n_test, test.size())).first;
}

struct Model {
  bsa::Checkpoint ckpt;
  bsa::EmbeddingMap map;
  bsa::DynamicsConfig dyn;
};

Model load_model(const Session& s, const bsa::ImageCorpus& data) {
  Model m{bsa::load_checkpoint(s.cfg.checkpoint_path()), {}, s.cfg.dynamics};
  const bsa::PatchGeometry& g = m.ckpt.geometry;
  if (static_cast<std::size_t>(g.rows) != data.rows ||
      static_cast<std::size_t>(g.cols) != data.cols) {
    throw std::runtime_error("checkpoint geometry " + std::to_string(g.rows) + "x" +
                             std::to_string(g.cols) + " does not match data " +
                             std::to_string(data.rows) + "x" + std::to_string(data.cols));
  }
  m.map = bsa::build_embedding(m.ckpt.embedding_seed, g);
  if (!s.explicit_keys.contains("lambda_eval")) m.dyn.lambda_eval = m.ckpt.couplings.lambda;
  if (!s.explicit_keys.contains("norm_mode")) m.dyn.norm_mode = m.ckpt.norm_mode;
  return m;
}

bsa::ImageCorpus load_test(const Session& s) {
  const auto files = bsa::mnist_files(s.cfg.data_dir);
  return bsa::load_idx(files.test_images, files.test_labels);
}

void cmd_train(const Session& s) {
  const bsa::RunConfig& cfg = s.cfg;
  const auto files = bsa::mnist_files(cfg.data_dir);
  const bsa::ImageCorpus corpus = bsa::load_idx(files.train_images, files.train_labels);
  const auto [train, rest] = bsa::split(corpus, cfg.n_train);
  const auto geom = bsa::PatchGeometry::make(static_cast<int>(corpus.rows),
                                             static_cast<int>(corpus.cols),
                                             cfg.patch_side, cfg.embed_dim);
  const bsa::EmbeddingMap map = bsa::build_embedding(cfg.embed_seed, geom);
  std::cout << "training on " << train.size() << " images, N=" << geom.n
            << " d=" << geom.d << '\n';

  Outputs out(cfg.out_dir);
  auto result = bsa::train(train, map, geom, cfg.train, [](const bsa::EpochRecord& r) {
    std::cout << "epoch " << r.epoch << " mean_loss " << r.mean_loss
              << " grad_norm " << r.grad_norm_mean << " clipped " << r.clip_events
              << std::endl;
  });

  bsa::Checkpoint ckpt{geom, cfg.embed_seed, cfg.dynamics.norm_mode,
                       std::move(result.couplings)};
  bsa::save_checkpoint(out.track(cfg.checkpoint_path()), ckpt);
  auto csv = out.open("train_report.csv");
  bsa::write_report_csv(csv, result.report);
  std::cout << "wrote " << cfg.checkpoint_path().string() << " ("
            << result.report.wall_seconds << " s)\n";
  out.commit();
}

void cmd_eval(const Session& s) {
  const bsa::RunConfig& cfg = s.cfg;
  const bsa::ImageCorpus test = load_test(s);
  const Model m = load_model(s, test);
  const auto view = test_view(test, cfg.n_test);
  const std::string task(bsa::to_string(cfg.corruption.kind));

  bsa::CurveOptions opts;
  opts.steps = cfg.dynamics.max_iter;
  opts.keep_samples = cfg.samples;
  const bsa::CurveResult curve = bsa::evaluate_curve(
      m.ckpt.couplings, m.map, m.ckpt.geometry, view, cfg.corruption, m.dyn, opts);

  Outputs out(cfg.out_dir);
  {
    auto csv = out.open("curve_" + task + ".csv");
    bsa::write_curve_csv(csv, curve);
  }
  {
    auto summary = out.open("summary_" + task + ".txt");
    summary.precision(10);
    summary << "task=" << task << " argmin_t=" << curve.argmin_t()
            << " min_mse=" << curve.min_mse()
            << " corrupted_mse=" << curve.corrupted_mse << '\n';
    std::cout << "task=" << task << " argmin_t=" << curve.argmin_t()
              << " min_mse=" << curve.min_mse()
              << " corrupted_mse=" << curve.corrupted_mse << '\n';
  }
  for (std::size_t k = 0; k < curve.samples.size(); ++k) {
    std::vector<bsa::Image> strip{view[k], curve.sample_corrupted[k]};
    for (const bsa::Image& im : curve.samples[k].images) strip.push_back(im);
    bsa::write_pgm(out.add("sample_" + task + "_" + std::to_string(k) + ".pgm"),
                   bsa::hstack(strip));
  }
  out.commit();
}

void cmd_probe(const Session& s) {
  const bsa::RunConfig& cfg = s.cfg;
  const bsa::ImageCorpus test = load_test(s);
  const Model m = load_model(s, test);
  const auto files = bsa::mnist_files(cfg.data_dir);
  const bsa::ImageCorpus train = bsa::load_idx(files.train_images, files.train_labels);
  const auto view = test_view(test, cfg.n_test);
  const bsa::Image train_mean =
      bsa::mean_image(bsa::split(train, std::min(cfg.n_train, train.size())).first);

  const auto want = static_cast<std::size_t>(cfg.probe_inputs);
  std::vector<std::size_t> picks = bsa::distinct_label_indices(view, want);
  for (std::size_t k = 0; picks.size() < std::min(want, view.size()); ++k) {
    if (std::find(picks.begin(), picks.end(), k) == picks.end()) picks.push_back(k);
  }
  std::vector<bsa::Image> inputs;
  for (std::size_t k : picks) inputs.push_back(view[k]);

  const bsa::ProbeReport rep = bsa::attractor_probe(
      m.ckpt.couplings, m.map, m.ckpt.geometry, inputs, train_mean, m.dyn,
      cfg.probe_iters);

  Outputs out(cfg.out_dir);
  {
    auto csv = out.open("probe_similarity.csv");
    bsa::write_matrix_csv(csv, rep.final_similarity);
  }
  {
    auto csv = out.open("probe_input_similarity.csv");
    bsa::write_matrix_csv(csv, rep.input_similarity);
  }
  {
    auto csv = out.open("probe_mean_similarity.csv");
    csv << "input,test_index,similarity_to_train_mean\n";
    csv.precision(17);
    for (std::size_t k = 0; k < picks.size(); ++k) {
      csv << k << ',' << picks[k] << ',' << rep.similarity_to_mean[k] << '\n';
    }
  }
  bsa::write_pgm(out.add("train_mean.pgm"), train_mean);
  bsa::write_pgm(out.add("probe_finals.pgm"), bsa::hstack(rep.finals));
  std::cout << "mean pairwise similarity: finals " << rep.mean_pairwise_final
            << " inputs " << rep.mean_pairwise_input << '\n';
  out.commit();
}

void cmd_variance(const Session& s) {
  const bsa::RunConfig& cfg = s.cfg;
  const bsa::ImageCorpus test = load_test(s);
  const Model m = load_model(s, test);
  const auto view = test_view(test, cfg.n_test);

  bsa::CurveOptions opts;
  opts.steps = cfg.dynamics.max_iter;
  const bsa::CurveResult curve = bsa::evaluate_curve(
      m.ckpt.couplings, m.map, m.ckpt.geometry, view, cfg.corruption, m.dyn, opts);
  opts.keep_predictions_at = {curve.argmin_t()};
  const bsa::CurveResult kept = bsa::evaluate_curve(
      m.ckpt.couplings, m.map, m.ckpt.geometry, view, cfg.corruption, m.dyn, opts);
  const bsa::Histogram hist = bsa::patch_variance_histogram(
      kept.predictions.at(curve.argmin_t()), m.ckpt.geometry, cfg.hist_bins);

  Outputs out(cfg.out_dir);
  auto csv = out.open("variance_hist.csv");
  bsa::write_histogram_csv(csv, hist);
  std::cout << "patch variance at t=" << curve.argmin_t() << ": median "
            << hist.median() << '\n';
  out.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bare self-attention attractor network"};
  app.require_subcommand(1);

  std::string config_path;
  std::map<std::string, std::string> overrides;
  app.add_option("--config", config_path, "key=value config file");
  for (const std::string& key : bsa::RunConfig::keys()) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app.add_option_function<std::string>(
        "--" + flag, [&overrides, key](const std::string& v) { overrides[key] = v; },
        "override " + key);
  }

  auto* train = app.add_subcommand("train", "train couplings, write checkpoint");
  auto* eval = app.add_subcommand("eval", "MSE-vs-iteration curve for a task");
  auto* probe = app.add_subcommand("probe", "long-run attractor similarity probe");
  auto* variance = app.add_subcommand("variance", "within-patch variance histogram");
  for (auto* sub : {train, eval, probe, variance}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    Session s;
    if (!config_path.empty()) {
      for (std::string& key : s.cfg.load(config_path)) {
        s.explicit_keys.insert(std::move(key));
      }
    }
    for (const auto& [key, value] : overrides) {
      s.cfg.set(key, value);
      s.explicit_keys.insert(key);
    }
    s.cfg.validate();

    if (train->parsed()) cmd_train(s);
    if (eval->parsed()) cmd_eval(s);
    if (probe->parsed()) cmd_probe(s);
    if (variance->parsed()) cmd_variance(s);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
