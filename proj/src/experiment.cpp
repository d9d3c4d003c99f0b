#include "ncap/experiment.hpp"

#include "ncap/errors.hpp"
#include "ncap/reference.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace ncap {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string out = "invalid config";
  for (const std::string& e : errors) out += "\n  " + e;
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error(join_errors(errors)), errors_(std::move(errors)) {}

std::string format_number(double value) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(6) << value;
  return os.str();
}

std::string cell_name(ChannelKind channel, double snr_db, const std::string& estimator) {
  return std::string(to_string(channel)) + "_" + format_number(snr_db) + "dB_" + estimator;
}

namespace {

// Collects problems instead of stopping at the first one, so a config with
// several typos is fixed in one pass.
class Checker {
 public:
  explicit Checker(const std::string& text) : text_(text) {}

  void error(const std::string& path, const std::string& what) {
    std::string msg = path + ": " + what;
    if (const int line = line_of(path); line > 0) msg = "line " + std::to_string(line) + ": " + msg;
    errors_.push_back(std::move(msg));
  }

  bool ok() const { return errors_.empty(); }
  std::vector<std::string> take() { return std::move(errors_); }

  void allow_only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    for (const auto& [key, value] : obj.items()) {
      bool known = false;
      for (const char* k : keys) known = known || key == k;
      if (!known) error(join(path, key), "unknown key");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

 private:
  // Line of the first occurrence of the path's last key in the source text.
  // Good enough to point at a typo; repeated key names resolve to the first.
  int line_of(const std::string& path) const {
    std::string key = path.substr(path.find_last_of('.') + 1);
    if (const auto bracket = key.find('['); bracket != std::string::npos) key.resize(bracket);
    if (key.empty()) return 0;
    const auto pos = text_.find('"' + key + '"');
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<long>(pos), '\n'));
  }

  const std::string& text_;
  std::vector<std::string> errors_;
};

std::string dump_value(const json& v) { return v.dump(); }

template <typename T>
bool read_number(Checker& c, const json& obj, const std::string& path, const char* key, T& out) {
  if (!obj.contains(key)) return false;
  const json& v = obj.at(key);
  const std::string p = Checker::join(path, key);
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      c.error(p, "expected an integer, got " + dump_value(v));
      return true;
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (v.get<long long>() < 0) {
        c.error(p, "must be >= 0");
        return true;
      }
    }
  } else {
    if (!v.is_number()) {
      c.error(p, "expected a number, got " + dump_value(v));
      return true;
    }
  }
  out = v.get<T>();
  return true;
}

bool read_bool(Checker& c, const json& obj, const std::string& path, const char* key, bool& out) {
  if (!obj.contains(key)) return false;
  if (!obj.at(key).is_boolean()) {
    c.error(Checker::join(path, key), "expected true or false");
    return true;
  }
  out = obj.at(key).get<bool>();
  return true;
}

bool read_widths(Checker& c, const json& obj, const std::string& path, const char* key,
                 std::vector<int>& out) {
  if (!obj.contains(key)) return false;
  const json& v = obj.at(key);
  const std::string p = Checker::join(path, key);
  if (!v.is_array() || v.empty()) {
    c.error(p, "expected a nonempty list of layer widths");
    return true;
  }
  std::vector<int> widths;
  for (const json& w : v) {
    if (!w.is_number_integer() || w.get<long long>() < 1) {
      c.error(p, "layer widths must be positive integers");
      return true;
    }
    widths.push_back(w.get<int>());
  }
  out = std::move(widths);
  return true;
}

constexpr std::initializer_list<const char*> kTrainKeys = {
    "batch_size",   "lr",          "phase0_iters",       "max_iters",
    "grad_clip",    "rounds",      "convergence_window", "convergence_tol",
    "seed",         "eval_samples", "nit_hidden",        "threads"};

// Applies the keys present in `obj` to `cfg`; returns the keys it saw.
std::set<std::string> read_train(Checker& c, const json& obj, const std::string& path,
                                 TrainConfig& cfg) {
  std::set<std::string> seen;
  if (!obj.is_object()) {
    c.error(path, "expected an object");
    return seen;
  }
  c.allow_only(obj, path, kTrainKeys);
  auto note = [&](bool present, const char* key) {
    if (present) seen.insert(key);
  };
  note(read_number(c, obj, path, "batch_size", cfg.batch_size), "batch_size");
  note(read_number(c, obj, path, "lr", cfg.lr), "lr");
  note(read_number(c, obj, path, "phase0_iters", cfg.phase0_iters), "phase0_iters");
  note(read_number(c, obj, path, "max_iters", cfg.max_iters), "max_iters");
  if (obj.contains("grad_clip") && obj.at("grad_clip").is_null()) {
    cfg.grad_clip = 0.0;
    seen.insert("grad_clip");
  } else {
    note(read_number(c, obj, path, "grad_clip", cfg.grad_clip), "grad_clip");
  }
  note(read_number(c, obj, path, "rounds", cfg.rounds), "rounds");
  note(read_number(c, obj, path, "convergence_window", cfg.convergence_window),
       "convergence_window");
  note(read_number(c, obj, path, "convergence_tol", cfg.convergence_tol), "convergence_tol");
  note(read_number(c, obj, path, "seed", cfg.seed), "seed");
  note(read_number(c, obj, path, "eval_samples", cfg.eval_samples), "eval_samples");
  note(read_widths(c, obj, path, "nit_hidden", cfg.nit_hidden), "nit_hidden");
  note(read_number(c, obj, path, "threads", cfg.threads), "threads");
  return seen;
}

void check_train(Checker& c, const TrainConfig& cfg, const std::string& path) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    c.error(path, e.what());
  }
}

std::string default_text(const TrainConfig& t, const std::string& key) {
  if (key == "batch_size") return std::to_string(t.batch_size);
  if (key == "lr") return format_number(t.lr);
  if (key == "phase0_iters") return std::to_string(t.phase0_iters);
  if (key == "max_iters") return std::to_string(t.max_iters);
  if (key == "grad_clip") return format_number(t.grad_clip);
  if (key == "rounds") return std::to_string(t.rounds);
  if (key == "convergence_window") return std::to_string(t.convergence_window);
  if (key == "convergence_tol") return format_number(t.convergence_tol);
  if (key == "seed") return std::to_string(t.seed);
  if (key == "eval_samples") return std::to_string(t.eval_samples);
  if (key == "threads") return std::to_string(t.threads);
  if (key == "nit_hidden") return json(t.nit_hidden).dump();
  return "";
}

constexpr int kChiSquareBatch = 10000;

EstimatorEntry read_estimator(Checker& c, const json& item, const std::string& path,
                              const TrainConfig& global, const std::set<std::string>& global_seen,
                              std::map<std::string, std::string>& defaults) {
  EstimatorEntry entry;
  entry.train = global;
  std::set<std::string> own_seen;
  if (item.is_string()) {
    try {
      entry.spec.method = parse_estimator_method(item.get<std::string>());
    } catch (const std::invalid_argument& e) {
      c.error(path, e.what());
    }
  } else if (item.is_object()) {
    c.allow_only(item, path,
                 {"method", "label", "tau", "alpha", "ema_rate", "hist_bins", "reference",
                  "hidden", "train"});
    if (!item.contains("method") || !item.at("method").is_string()) {
      c.error(Checker::join(path, "method"), "required string");
    } else {
      try {
        entry.spec.method = parse_estimator_method(item.at("method").get<std::string>());
      } catch (const std::invalid_argument& e) {
        c.error(Checker::join(path, "method"), e.what());
      }
    }
    if (item.contains("label")) {
      if (item.at("label").is_string() && !item.at("label").get<std::string>().empty()) {
        entry.label = item.at("label").get<std::string>();
      } else {
        c.error(Checker::join(path, "label"), "expected a nonempty string");
      }
    }
    read_number(c, item, path, "tau", entry.spec.tau);
    read_number(c, item, path, "alpha", entry.spec.alpha);
    read_number(c, item, path, "ema_rate", entry.spec.ema_rate);
    read_number(c, item, path, "hist_bins", entry.spec.hist_bins);
    read_widths(c, item, path, "hidden", entry.spec.hidden);
    if (item.contains("reference")) {
      const json& r = item.at("reference");
      if (r == "gaussian") {
        entry.spec.reference = ReferenceFamily::gaussian;
      } else if (r == "uniform") {
        entry.spec.reference = ReferenceFamily::uniform_box;
      } else {
        c.error(Checker::join(path, "reference"), "expected \"gaussian\" or \"uniform\"");
      }
    }
    if (item.contains("train")) {
      own_seen = read_train(c, item.at("train"), Checker::join(path, "train"), entry.train);
    }
  } else {
    c.error(path, "expected a method name or an object");
  }
  if (entry.label.empty()) entry.label = std::string(to_string(entry.spec.method));

  if (entry.spec.method == EstimatorMethod::chi_square && !own_seen.count("batch_size") &&
      !global_seen.count("batch_size")) {
    entry.train.batch_size = kChiSquareBatch;
    defaults[Checker::join(path, "train.batch_size")] = std::to_string(kChiSquareBatch);
  }
  try {
    entry.spec.validate();
  } catch (const std::invalid_argument& e) {
    c.error(path, e.what());
  }
  check_train(c, entry.train, Checker::join(path, "train"));
  return entry;
}

}  // namespace

ExperimentConfig validate_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("parse error: ") + e.what()});
  }
  Checker c(text);
  ExperimentConfig cfg;
  if (!root.is_object()) {
    c.error("config", "top level must be an object");
    throw ConfigError(c.take());
  }
  c.allow_only(root, "", {"channel", "snr_db_list", "estimators", "train", "outputs"});

  // channel: "awgn" or {"kind": "awgn", "noise_variance": 1.0}
  if (!root.contains("channel")) {
    c.error("channel", "required");
  } else {
    const json& ch = root.at("channel");
    auto parse_kind = [&](const json& v, const std::string& path) {
      if (!v.is_string()) {
        c.error(path, "expected a channel name");
        return;
      }
      try {
        cfg.channel = parse_channel_kind(v.get<std::string>());
      } catch (const std::invalid_argument& e) {
        c.error(path, e.what());
      }
    };
    if (ch.is_object()) {
      c.allow_only(ch, "channel", {"kind", "noise_variance"});
      if (ch.contains("kind")) {
        parse_kind(ch.at("kind"), "channel.kind");
      } else {
        c.error("channel.kind", "required");
      }
      if (!read_number(c, ch, "channel", "noise_variance", cfg.noise_variance)) {
        cfg.applied_defaults["channel.noise_variance"] = format_number(cfg.noise_variance);
      }
    } else {
      parse_kind(ch, "channel");
      cfg.applied_defaults["channel.noise_variance"] = format_number(cfg.noise_variance);
    }
    if (!(cfg.noise_variance > 0.0) || !std::isfinite(cfg.noise_variance)) {
      c.error("channel.noise_variance", "must be a positive finite number");
    }
  }

  if (!root.contains("snr_db_list")) {
    c.error("snr_db_list", "required");
  } else if (!root.at("snr_db_list").is_array() || root.at("snr_db_list").empty()) {
    c.error("snr_db_list", "expected a nonempty list of numbers");
  } else {
    std::set<double> seen;
    for (const json& v : root.at("snr_db_list")) {
      if (!v.is_number() || !std::isfinite(v.get<double>())) {
        c.error("snr_db_list", "entries must be finite numbers, got " + v.dump());
        continue;
      }
      if (!seen.insert(v.get<double>()).second) {
        c.error("snr_db_list", "duplicate SNR " + v.dump());
      }
      cfg.snr_db_list.push_back(v.get<double>());
    }
  }

  TrainConfig train;
  std::set<std::string> train_seen;
  if (root.contains("train")) train_seen = read_train(c, root.at("train"), "train", train);
  for (const char* key : kTrainKeys) {
    if (!train_seen.count(key)) cfg.applied_defaults[std::string("train.") + key] = default_text(train, key);
  }
  check_train(c, train, "train");

  if (!root.contains("estimators")) {
    c.error("estimators", "required");
  } else if (!root.at("estimators").is_array() || root.at("estimators").empty()) {
    c.error("estimators", "expected a nonempty list");
  } else {
    std::set<std::string> labels;
    const json& list = root.at("estimators");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "estimators[" + std::to_string(i) + "]";
      EstimatorEntry e = read_estimator(c, list[i], path, train, train_seen, cfg.applied_defaults);
      if (!labels.insert(e.label).second) {
        c.error(path, "duplicate estimator '" + e.label + "'; give it a distinct label");
      }
      cfg.estimators.push_back(std::move(e));
    }
  }

  if (root.contains("outputs")) {
    const json& out = root.at("outputs");
    if (!out.is_object()) {
      c.error("outputs", "expected an object");
    } else {
      c.allow_only(out, "outputs",
                   {"dir", "traces", "histograms", "histogram_bins", "histogram_samples"});
      if (out.contains("dir")) {
        if (out.at("dir").is_string() && !out.at("dir").get<std::string>().empty()) {
          cfg.out_dir = out.at("dir").get<std::string>();
        } else {
          c.error("outputs.dir", "expected a nonempty path");
        }
      }
      read_bool(c, out, "outputs", "traces", cfg.write_traces);
      read_bool(c, out, "outputs", "histograms", cfg.write_histograms);
      read_number(c, out, "outputs", "histogram_bins", cfg.histogram_bins);
      read_number(c, out, "outputs", "histogram_samples", cfg.histogram_samples);
    }
  }
  if (cfg.histogram_bins < 1) c.error("outputs.histogram_bins", "must be >= 1");
  if (cfg.histogram_samples < 2) c.error("outputs.histogram_samples", "must be >= 2");

  if (!c.ok()) throw ConfigError(c.take());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  std::ostringstream ss;
  ss << in.rdbuf();
  return validate_config(ss.str());
}

void apply_overrides(ExperimentConfig& config, const ConfigOverrides& overrides) {
  if (overrides.out_dir) config.out_dir = *overrides.out_dir;
  for (EstimatorEntry& e : config.estimators) {
    if (overrides.seed) e.train.seed = *overrides.seed;
    if (overrides.rounds) e.train.rounds = *overrides.rounds;
  }
  if (overrides.seed) config.applied_defaults.erase("train.seed");
  if (overrides.rounds) config.applied_defaults.erase("train.rounds");
  for (const EstimatorEntry& e : config.estimators) e.train.validate();
}

ReferenceValues reference_values(ChannelKind kind, double snr_db, double noise_variance) {
  ReferenceValues out;
  const ChannelSpec channel = make_channel(kind, snr_db, noise_variance);
  const ConstraintSpec constraint = default_constraint(kind, snr_db, noise_variance);
  if (kind == ChannelKind::awgn) {
    out.closed_form = awgn_capacity(constraint.power / noise_variance);
  }
  try {
    out.bounds = literature_bounds(kind, snr_db);
  } catch (const NotFound&) {
  }
  if (kind != ChannelKind::awgn) {
    const DiscreteChannel dc = discretize_channel(channel, constraint, kReferenceInputs,
                                                  kReferenceOutputs);
    const auto budget = kind == ChannelKind::peak_awgn ? std::nullopt
                                                       : std::optional<double>(constraint.power);
    out.blahut_arimoto = blahut_arimoto(dc, budget).capacity;
  }
  return out;
}

namespace {

json train_json(const TrainConfig& t) {
  return json{{"batch_size", t.batch_size},
              {"lr", t.lr},
              {"phase0_iters", t.phase0_iters},
              {"max_iters", t.max_iters},
              {"grad_clip", t.grad_clip},
              {"rounds", t.rounds},
              {"convergence_window", t.convergence_window},
              {"convergence_tol", t.convergence_tol},
              {"seed", t.seed},
              {"eval_samples", t.eval_samples},
              {"nit_hidden", t.nit_hidden},
              {"threads", t.threads}};
}

json estimator_json(const EstimatorEntry& e) {
  return json{{"label", e.label},
              {"method", std::string(to_string(e.spec.method))},
              {"tau", e.spec.tau},
              {"alpha", e.spec.alpha},
              {"ema_rate", e.spec.ema_rate},
              {"hist_bins", e.spec.hist_bins},
              {"reference",
               e.spec.reference == ReferenceFamily::gaussian ? "gaussian" : "uniform"},
              {"hidden", e.spec.hidden},
              {"train", train_json(e.train)}};
}

json reference_json(const ReferenceValues& r) {
  json j = json::object();
  if (r.closed_form) j["closed_form_nats"] = *r.closed_form;
  if (r.blahut_arimoto) j["blahut_arimoto_nats"] = *r.blahut_arimoto;
  if (r.bounds) j["published_bounds_nats"] = {r.bounds->lower, r.bounds->upper};
  return j;
}

json cell_json(const CellResult& cell, const ReferenceValues& ref) {
  json j{{"snr_db", cell.snr_db},
         {"estimator", cell.estimator},
         {"completed", cell.completed},
         {"reference", reference_json(ref)}};
  if (!cell.error.empty()) j["error"] = cell.error;
  if (cell.completed) {
    j["mean_nats"] = cell.estimate.mean;
    j["variance"] = cell.estimate.variance;
    j["per_round"] = cell.estimate.per_round;
    j["converged"] = cell.estimate.converged;
  }
  json rounds = json::array();
  for (const RoundResult& r : cell.estimate.rounds) {
    json rj{{"index", r.index},
            {"seed", r.seed},
            {"aborted", r.aborted},
            {"converged", r.converged},
            {"iterations", r.iterations},
            {"skipped_steps", r.skipped_steps},
            {"seconds", r.seconds}};
    if (!r.aborted) {
      rj["estimate"] = r.estimate;
      rj["training_estimate"] = r.training_estimate;
    }
    if (!r.diagnostic.empty()) rj["diagnostic"] = r.diagnostic;
    rounds.push_back(std::move(rj));
  }
  j["rounds"] = std::move(rounds);
  return j;
}

void write_trace(const std::filesystem::path& file, const CapacityEstimate& est) {
  std::ofstream os(file);
  os << "iteration";
  std::size_t longest = 0;
  for (const RoundResult& r : est.rounds) {
    os << ",round_" << r.index;
    longest = std::max(longest, r.trace.size());
  }
  os << '\n';
  for (std::size_t it = 0; it < longest; ++it) {
    os << it;
    for (const RoundResult& r : est.rounds) {
      os << ',';
      if (it < r.trace.size() && std::isfinite(r.trace[it])) os << format_number(r.trace[it]);
    }
    os << '\n';
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

int run_experiment(const ExperimentConfig& config, const CellCallback& on_cell,
                   std::vector<CellResult>* cells_out) {
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);
  if (config.write_traces) fs::create_directories(config.out_dir / "traces");
  if (config.write_histograms) fs::create_directories(config.out_dir / "histograms");

  const bool with_bounds = config.channel == ChannelKind::optical_intensity;
  std::vector<CellResult> cells;
  json cell_list = json::array();
  int completed = 0;

  for (double snr : config.snr_db_list) {
    const ChannelSpec channel = make_channel(config.channel, snr, config.noise_variance);
    const ConstraintSpec constraint = default_constraint(config.channel, snr, config.noise_variance);
    const ReferenceValues ref = reference_values(config.channel, snr, config.noise_variance);
    for (const EstimatorEntry& e : config.estimators) {
      CellResult cell;
      cell.snr_db = snr;
      cell.estimator = e.label;
      try {
        cell.estimate = estimate_capacity(channel, constraint, e.spec, e.train);
        cell.completed = true;
        ++completed;
      } catch (const EstimationFailure& ex) {
        cell.error = ex.what();
      } catch (const std::exception& ex) {
        cell.error = ex.what();
      }

      const std::string name = cell_name(config.channel, snr, e.label);
      if (config.write_traces && !cell.estimate.rounds.empty()) {
        write_trace(config.out_dir / "traces" / (name + ".csv"), cell.estimate);
      }
      if (config.write_histograms && cell.completed) {
        for (const RoundResult& r : cell.estimate.rounds) {
          if (r.aborted) continue;
          Rng rng = Rng(r.seed).derive(3);
          const InputHistogram h =
              extract_histogram(r.nit, config.histogram_samples, config.histogram_bins, rng);
          std::ofstream os(config.out_dir / "histograms" / (name + ".csv"));
          h.write_csv(os);
          break;
        }
      }
      cell_list.push_back(cell_json(cell, ref));
      if (on_cell) on_cell(cell);
      cells.push_back(std::move(cell));
    }
  }

  {
    std::ofstream os(config.out_dir / "results.csv");
    os << "channel,snr_db,estimator,mean_nats,variance,rounds,converged";
    if (with_bounds) os << ",bound_lower,bound_upper";
    os << '\n';
    for (const CellResult& cell : cells) {
      if (!cell.completed) continue;
      os << to_string(config.channel) << ',' << format_number(cell.snr_db) << ','
         << cell.estimator << ',' << format_number(cell.estimate.mean) << ','
         << format_number(cell.estimate.variance) << ',' << cell.estimate.completed() << ','
         << (cell.estimate.converged ? "true" : "false");
      if (with_bounds) {
        try {
          const CapacityBounds b = literature_bounds(config.channel, cell.snr_db);
          os << ',' << format_number(b.lower) << ',' << format_number(b.upper);
        } catch (const NotFound&) {
          os << ",,";
        }
      }
      os << '\n';
    }
  }

  const int total = static_cast<int>(cells.size());
  const int status = completed == total ? kExitOk : completed == 0 ? kExitFailed : kExitPartial;
  {
    json estimators = json::array();
    for (const EstimatorEntry& e : config.estimators) estimators.push_back(estimator_json(e));
    json summary{{"timestamp", timestamp()},
                 {"channel", std::string(to_string(config.channel))},
                 {"noise_variance", config.noise_variance},
                 {"snr_db_list", config.snr_db_list},
                 {"estimators", std::move(estimators)},
                 {"applied_defaults", config.applied_defaults},
                 {"cells", std::move(cell_list)},
                 {"completed_cells", completed},
                 {"total_cells", total},
                 {"exit_status", status}};
    std::ofstream os(config.out_dir / "summary.json");
    os << summary.dump(2) << '\n';
  }
  if (cells_out) *cells_out = std::move(cells);
  return status;
}

}  // namespace ncap
