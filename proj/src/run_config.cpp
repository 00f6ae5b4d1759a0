#include "bsa/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bsa {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::invalid_argument("bad value '" + std::string(text) + "' for " +
                                std::string(key));
  }
  return value;
}

std::string format(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

struct Field {
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field numeric(Access access) {
  return {[access](RunConfig& c, std::string_view k, std::string_view v) {
            access(c) = parse_number<T>(k, v);
          },
          [access](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format(access(c));
            } else {
              return std::to_string(access(c));
            }
          }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      {"data_dir",
       {[](RunConfig& c, auto, auto v) { c.data_dir = std::string(v); },
        [](const RunConfig& c) { return c.data_dir.string(); }}},
      {"out_dir",
       {[](RunConfig& c, auto, auto v) { c.out_dir = std::string(v); },
        [](const RunConfig& c) { return c.out_dir.string(); }}},
      {"checkpoint",
       {[](RunConfig& c, auto, auto v) { c.checkpoint = std::string(v); },
        [](const RunConfig& c) { return c.checkpoint.string(); }}},
      {"n_train", numeric<std::size_t>([](auto& c) -> auto& { return c.n_train; })},
      {"n_test", numeric<std::size_t>([](auto& c) -> auto& { return c.n_test; })},
      {"patch_side", numeric<int>([](auto& c) -> auto& { return c.patch_side; })},
      {"embed_dim", numeric<int>([](auto& c) -> auto& { return c.embed_dim; })},
      {"embed_seed",
       numeric<std::uint64_t>([](auto& c) -> auto& { return c.embed_seed; })},
      {"epochs", numeric<int>([](auto& c) -> auto& { return c.train.epochs; })},
      {"batch_size", numeric<int>([](auto& c) -> auto& { return c.train.batch_size; })},
      {"lambda_train",
       numeric<double>([](auto& c) -> auto& { return c.train.lambda_train; })},
      {"lambda_eval",
       numeric<double>([](auto& c) -> auto& { return c.train.lambda_eval; })},
      {"learning_rate",
       numeric<double>([](auto& c) -> auto& { return c.train.learning_rate; })},
      {"clip_threshold",
       numeric<double>([](auto& c) -> auto& { return c.train.clip_threshold; })},
      {"seed", numeric<std::uint64_t>([](auto& c) -> auto& { return c.train.seed; })},
      {"norm_fixing",
       {[](RunConfig& c, auto, std::string_view v) {
          if (v == "global") {
            c.train.norm_fixing = NormFixing::kGlobal;
          } else if (v == "per_block") {
            c.train.norm_fixing = NormFixing::kPerBlock;
          } else {
            throw std::invalid_argument("norm_fixing must be global or per_block");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.train.norm_fixing == NormFixing::kGlobal ? "global"
                                                                        : "per_block");
        }}},
      {"gamma", numeric<double>([](auto& c) -> auto& { return c.dynamics.gamma; })},
      {"iters", numeric<int>([](auto& c) -> auto& { return c.dynamics.max_iter; })},
      {"norm_mode",
       {[](RunConfig& c, auto, std::string_view v) {
          c.dynamics.norm_mode = parse_norm_mode(v);
        },
        [](const RunConfig& c) { return std::string(to_string(c.dynamics.norm_mode)); }}},
      {"task",
       {[](RunConfig& c, auto, std::string_view v) { c.corruption.kind = parse_task(v); },
        [](const RunConfig& c) { return std::string(to_string(c.corruption.kind)); }}},
      {"mask_fraction",
       numeric<double>([](auto& c) -> auto& { return c.corruption.mask_fraction; })},
      {"noise_variance",
       numeric<double>([](auto& c) -> auto& { return c.corruption.noise_variance; })},
      {"corruption_seed",
       numeric<std::uint64_t>([](auto& c) -> auto& { return c.corruption.seed; })},
      {"samples", numeric<int>([](auto& c) -> auto& { return c.samples; })},
      {"probe_inputs", numeric<int>([](auto& c) -> auto& { return c.probe_inputs; })},
      {"probe_iters", numeric<int>([](auto& c) -> auto& { return c.probe_iters; })},
      {"hist_bins", numeric<int>([](auto& c) -> auto& { return c.hist_bins; })},
  };
  return table;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) {
  const auto it = fields().find(key);
  if (it == fields().end()) {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
  it->second.set(*this, key, trim(value));
}

std::string RunConfig::get(std::string_view key) const {
  const auto it = fields().find(key);
  if (it == fields().end()) {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
  return it->second.get(*this);
}

std::vector<std::string> RunConfig::parse(std::string_view text) {
  std::vector<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    set(key, line.substr(eq + 1));
    seen.emplace_back(key);
  }
  return seen;
}

std::vector<std::string> RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void RunConfig::validate() const {
  train.validate();
  corruption.validate();
  if (patch_side < 1) throw std::invalid_argument("patch_side must be >= 1");
  if (embed_dim < 0) throw std::invalid_argument("embed_dim must be >= 0");
  if (dynamics.max_iter < 1) throw std::invalid_argument("iters must be >= 1");
  if (!(dynamics.gamma >= 0)) throw std::invalid_argument("gamma must be >= 0");
  if (samples < 0 || probe_inputs < 1 || probe_iters < 1 || hist_bins < 1) {
    throw std::invalid_argument("output counts out of range");
  }
}

std::filesystem::path RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? out_dir / "model.bsa" : checkpoint;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : fields()) k.push_back(name);
    return k;
  }();
  return names;
}

}  // namespace bsa
