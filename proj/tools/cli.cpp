#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "tfa/activation_store.hpp"
#include "tfa/analysis.hpp"
#include "tfa/checkpoint.hpp"
#include "tfa/codes_file.hpp"
#include "tfa/datagen.hpp"
#include "tfa/error.hpp"
#include "tfa/metrics.hpp"
#include "tfa/report_io.hpp"
#include "tfa/trainer.hpp"

namespace tfa::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  std::string out;
  std::uint64_t seed = 0;
  int layer = 0;
  CLI::Option* layer_opt = nullptr;
  bool heatmaps = false;
};

void add_common(CLI::App* app, Common& c, bool heatmaps) {
  app->add_option("--out", c.out, "Output directory")->required();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  c.layer_opt = app->add_option("--layer", c.layer, "Layer recorded in (synth) or required of the input");
  if (heatmaps) app->add_flag("--emit-heatmaps", c.heatmaps, "Also write PPM and SVG heatmaps");
}

std::optional<int> layer_of(const Common& c) {
  if (c.layer_opt == nullptr || c.layer_opt->count() == 0) return std::nullopt;
  return c.layer;
}

ActivationSet load_input(const std::string& path, const Common& c) {
  auto set = load_activations(path);
  if (auto layer = layer_of(c)) {
    if (!set.layer || *set.layer != *layer) {
      throw DataError(path + " does not hold layer " + std::to_string(*layer) + " activations");
    }
  }
  return set;
}

/// Brings a set into the units a model was trained in.
ActivationSet scaled_for(const ActivationSet& set, std::optional<double> scale) {
  if (!scale) return set;
  if (set.norm_scale) {
    if (*set.norm_scale != *scale) throw DataError("input normalization differs from the model's");
    return set;
  }
  return apply_scale(set, *scale);
}

/// Writes the options of one command as a TOML table that --config accepts.
void write_resolved_config(const CLI::App& root, const std::string& section, const fs::path& dir) {
  std::istringstream all(root.config_to_str(true, false));
  std::ostringstream body;
  body << "[" << section << "]\n";
  const std::string prefix = section + ".";
  std::string line;
  while (std::getline(all, line)) {
    if (line.rfind(prefix, 0) != 0) continue;
    std::string rest = line.substr(prefix.size());
    auto eq = rest.find('=');
    if (eq == std::string::npos || rest.substr(0, eq).find('.') != std::string::npos) continue;
    if (rest.substr(eq + 1) == "\"\"") continue;  // unset option without a default
    body << rest << '\n';
  }
  std::FILE* f = std::fopen((dir / kResolvedConfigName).string().c_str(), "wb");
  if (f == nullptr) throw DataError("cannot write resolved config in " + dir.string());
  std::string text = body.str();
  std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
}

std::string safe_name(std::string s) {
  for (auto& ch : s) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) ch = '_';
  }
  return s;
}

void write_heatmaps(const fs::path& base, const Eigen::MatrixXd& m, ColorMap map) {
  write_heatmap_ppm(base.string() + ".ppm", m, map);
  write_heatmap_svg(base.string() + ".svg", m, map);
}

Eigen::MatrixXd stack_rows(const std::vector<Eigen::MatrixXd>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = parts.empty() ? 0 : parts.front().cols();
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

json nan_as_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// ---------------------------------------------------------------- synth

struct SynthOpts {
  Common c;
  std::string kind;
  std::size_t n = 16;
  std::size_t length = 64;
  std::size_t sequences = 64;
  std::size_t atoms = 32;
  std::size_t k = 3;
  std::string schedule = "constant";
  std::size_t step = 8;
  std::string pool = "nested";
  double coeff_min = 0.5;
  double coeff_max = 1.5;
  std::size_t events = 4;
  std::size_t slow_dim = 4;
  std::size_t fast_k = 2;
  std::size_t fast_atoms = 32;
  double slow_scale = 1.0;
  double fast_scale = 1.0;
  double noise = 0.05;
  std::size_t points = 512;
  double circle_noise = 0.0;
};

void add_synth(CLI::App* app, SynthOpts& o) {
  add_common(app, o.c, false);
  app->add_option("--kind", o.kind, "dictionary, events or circle")
      ->required()
      ->check(CLI::IsMember({"dictionary", "events", "circle"}));
  app->add_option("--n", o.n, "Ambient dimension")->capture_default_str();
  app->add_option("--length", o.length, "Tokens per sequence (dictionary, events)")->capture_default_str();
  app->add_option("--sequences", o.sequences, "Number of sequences (dictionary, events)")->capture_default_str();
  app->add_option("--atoms", o.atoms, "Dictionary size")->capture_default_str();
  app->add_option("--k", o.k, "Active atoms (constant) or cap (linear schedule)")->capture_default_str();
  app->add_option("--schedule", o.schedule, "constant, staircase or linear")
      ->capture_default_str()
      ->check(CLI::IsMember({"constant", "staircase", "linear"}));
  app->add_option("--step", o.step, "Staircase step length")->capture_default_str();
  app->add_option("--pool", o.pool, "nested or global atom pool")
      ->capture_default_str()
      ->check(CLI::IsMember({"nested", "global"}));
  app->add_option("--coeff-min", o.coeff_min)->capture_default_str();
  app->add_option("--coeff-max", o.coeff_max)->capture_default_str();
  app->add_option("--events", o.events, "Events per sequence")->capture_default_str();
  app->add_option("--slow-dim", o.slow_dim)->capture_default_str();
  app->add_option("--fast-k", o.fast_k)->capture_default_str();
  app->add_option("--fast-atoms", o.fast_atoms)->capture_default_str();
  app->add_option("--slow-scale", o.slow_scale)->capture_default_str();
  app->add_option("--fast-scale", o.fast_scale)->capture_default_str();
  app->add_option("--noise", o.noise, "Event data noise std")->capture_default_str();
  app->add_option("--points", o.points, "Circle points")->capture_default_str();
  app->add_option("--circle-noise", o.circle_noise)->capture_default_str();
}

void cmd_synth(const SynthOpts& o, std::ostream& out) {
  fs::path dir(o.c.out);
  ActivationSet set;
  if (o.kind == "dictionary") {
    DictionaryProcessConfig cfg;
    cfg.n = o.n;
    cfg.atoms = o.atoms;
    cfg.length = o.length;
    cfg.sequences = o.sequences;
    cfg.coeff_min = o.coeff_min;
    cfg.coeff_max = o.coeff_max;
    cfg.pool = o.pool == "global" ? AtomPool::kGlobal : AtomPool::kNested;
    cfg.seed = o.c.seed;
    if (o.schedule == "constant") {
      cfg.schedule = constant_schedule(o.k, o.length);
    } else if (o.schedule == "staircase") {
      cfg.schedule = staircase_schedule(o.length, o.step);
    } else {
      cfg.schedule = linear_schedule(o.length, o.k);
    }
    auto data = gen_dictionary_process(cfg);
    write_matrix_csv(dir / "dictionary.csv", data.process.dictionary);
    set = std::move(data.set);
  } else if (o.kind == "events") {
    EventConfig cfg;
    cfg.n = o.n;
    cfg.length = o.length;
    cfg.sequences = o.sequences;
    cfg.events = o.events;
    cfg.slow_dim = o.slow_dim;
    cfg.fast_k = o.fast_k;
    cfg.fast_atoms = o.fast_atoms;
    cfg.slow_scale = o.slow_scale;
    cfg.fast_scale = o.fast_scale;
    cfg.noise = o.noise;
    cfg.seed = o.c.seed;
    auto data = gen_event_sequences(cfg);
    write_matrix_csv(dir / "slow_basis.csv", data.slow_basis);
    set = std::move(data.set);
  } else {
    set = gen_manifold_circle(o.points, o.n, o.circle_noise, o.c.seed);
  }
  set.source = "synth:" + o.kind;
  set.layer = layer_of(o.c);
  save_activations(set, dir / "activations.tfa1");
  out << "wrote " << set.size() << " sequences (" << set.total_tokens() << " tokens, dim " << set.dim
      << ") to " << (dir / "activations.tfa1").string() << '\n';
}

// ---------------------------------------------------------------- profile

struct ProfileOpts {
  Common c;
  std::string input;
  std::vector<std::size_t> lags{1, 2, 4, 8};
  std::vector<std::size_t> windows{1, 2, 4, 8};
  std::vector<std::size_t> positions;
};

void add_profile(CLI::App* app, ProfileOpts& o) {
  add_common(app, o.c, true);
  app->add_option("--input", o.input, "TFA1 activations")->required();
  app->add_option("--lags", o.lags, "Autocorrelation lags")->delimiter(',')->default_str("1,2,4,8");
  app->add_option("--windows", o.windows, "Context windows")->delimiter(',')->default_str("1,2,4,8");
  app->add_option("--positions", o.positions, "Positions (default: every shared position)")->delimiter(',');
}

Eigen::MatrixXd lag_table(const std::vector<std::size_t>& lags, const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out(values.rows(), values.cols() + 1);
  for (std::size_t i = 0; i < lags.size(); ++i) out(static_cast<Eigen::Index>(i), 0) = static_cast<double>(lags[i]);
  out.rightCols(values.cols()) = values;
  return out;
}

void cmd_profile(const ProfileOpts& o, std::ostream& out, std::ostream& err) {
  fs::path dir(o.c.out);
  auto set = load_input(o.input, o.c);
  if (set.size() < 2) throw DataError("profiling needs at least two sequences");
  auto surrogate = permutation_surrogate(set, o.c.seed);
  auto positions = o.positions.empty() ? shared_positions(set) : o.positions;

  auto curve = ustat_curve(set, positions);
  auto curve_s = ustat_curve(surrogate, positions);
  Eigen::MatrixXd u(static_cast<Eigen::Index>(positions.size()), 3);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    u.row(r) << static_cast<double>(positions[i]), curve[i], curve_s[i];
  }
  write_matrix_csv(dir / "ustat_curve.csv", u, {"position", "data", "permutation_surrogate"});

  std::vector<std::size_t> lags;
  for (auto w : o.lags) {
    if (w >= 1 && w < set.min_length()) {
      lags.push_back(w);
    } else {
      err << "skipping lag " << w << " (shortest sequence has " << set.min_length() << " tokens)\n";
    }
  }
  if (lags.empty()) throw DataError("no lag fits the shortest sequence");
  auto map = autocorr_map(set, lags);
  auto map_s = autocorr_map(surrogate, lags);
  Eigen::MatrixXd sim = position_similarity(set);
  Eigen::MatrixXd sim_d = diagonal_mean_surrogate(sim);
  Eigen::MatrixXd map_d(map.values.rows(), map.values.cols());
  for (std::size_t l = 0; l < lags.size(); ++l) {
    for (std::size_t p = 0; p < map.positions.size(); ++p) {
      auto t = static_cast<Eigen::Index>(map.positions[p]);
      map_d(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(p)) = sim_d(t, t - static_cast<Eigen::Index>(lags[l]));
    }
  }
  std::vector<std::string> header{"lag"};
  for (auto t : map.positions) header.push_back("t" + std::to_string(t));
  write_matrix_csv(dir / "autocorr_map.csv", lag_table(lags, map.values), header);
  write_matrix_csv(dir / "autocorr_map_permutation.csv", lag_table(lags, map_s.values), header);
  write_matrix_csv(dir / "autocorr_map_diagonal.csv", lag_table(lags, map_d), header);
  write_matrix_csv(dir / "position_similarity.csv", sim);
  write_matrix_csv(dir / "position_similarity_diagonal.csv", sim_d);
  if (o.c.heatmaps) {
    write_heatmaps(dir / "position_similarity", sim, ColorMap::kDiverging);
    write_heatmaps(dir / "position_similarity_diagonal", sim_d, ColorMap::kDiverging);
    write_heatmaps(dir / "autocorr_map", map.values, ColorMap::kDiverging);
  }

  std::vector<Eigen::RowVector4d> rows;
  for (auto t : positions) {
    for (auto w : o.windows) {
      if (w == 0 || w > t) continue;
      rows.emplace_back(static_cast<double>(t), static_cast<double>(w), context_projection_ev(set, t, w),
                        context_projection_ev(surrogate, t, w));
    }
  }
  Eigen::MatrixXd ev(static_cast<Eigen::Index>(rows.size()), 4);
  for (std::size_t i = 0; i < rows.size(); ++i) ev.row(static_cast<Eigen::Index>(i)) = rows[i];
  write_matrix_csv(dir / "context_projection_ev.csv", ev, {"t", "w", "data", "permutation_surrogate"});
  out << "profiled " << set.size() << " sequences at " << positions.size() << " positions into " << dir.string()
      << '\n';
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  Common c;
  std::string input;
  std::string kind;
  std::string resume;
  std::size_t latents = 64;
  std::size_t k = 4;
  double lambda = 1e-3;
  std::size_t d_attn = 16;
  std::string novel_kind = "batchtopk";
  std::string value_mode = "identity";
  bool split_dictionary = false;
  bool init_mean = true;
  TrainConfig cfg;
};

void add_train(CLI::App* app, TrainOpts& o) {
  add_common(app, o.c, false);
  app->add_option("--input", o.input, "TFA1 activations")->required();
  app->add_option("--kind", o.kind, "relu, topk, batchtopk, temporal or temporal-pred-only")->required();
  app->add_option("--resume", o.resume, "Checkpoint to continue from");
  app->add_option("--latents", o.latents)->capture_default_str();
  app->add_option("--k", o.k, "Sparsity budget (topk, batchtopk, novel code)")->capture_default_str();
  app->add_option("--lambda", o.lambda, "L1 coefficient (relu)")->capture_default_str();
  app->add_option("--d-attn", o.d_attn)->capture_default_str();
  app->add_option("--novel-kind", o.novel_kind, "topk or batchtopk")->capture_default_str();
  app->add_option("--value-mode", o.value_mode, "identity or learned")->capture_default_str();
  app->add_option("--split-dictionary", o.split_dictionary)->capture_default_str();
  app->add_option("--init-mean", o.init_mean, "Start the decoder bias at the data mean")->capture_default_str();
  app->add_option("--steps", o.cfg.steps)->capture_default_str();
  app->add_option("--batch-tokens", o.cfg.batch_tokens)->capture_default_str();
  app->add_option("--lr", o.cfg.lr_peak)->capture_default_str();
  app->add_option("--lr-min", o.cfg.lr_min)->capture_default_str();
  app->add_option("--warmup", o.cfg.warmup_steps)->capture_default_str();
  app->add_option("--beta1", o.cfg.beta1)->capture_default_str();
  app->add_option("--beta2", o.cfg.beta2)->capture_default_str();
  app->add_option("--eps", o.cfg.eps)->capture_default_str();
  app->add_option("--grad-clip", o.cfg.grad_clip)->capture_default_str();
  app->add_option("--checkpoint-every", o.cfg.checkpoint_every)->capture_default_str();
}

AnyModel build_model(const TrainOpts& o, ModelKind kind, std::size_t n, const std::optional<Eigen::VectorXd>& mean) {
  if (!is_temporal(kind)) {
    return init_sae(sae_kind_from_string(o.kind), n, o.latents, o.k, o.lambda, o.c.seed, mean);
  }
  TemporalInit init;
  init.n = n;
  init.latents = o.latents;
  init.k = o.k;
  init.d_attn = o.d_attn;
  init.novel_kind = novel_kind_from_string(o.novel_kind);
  init.value_mode = value_mode_from_string(o.value_mode);
  init.pred_only = kind == ModelKind::kTemporalPredOnly;
  init.split_dictionary = o.split_dictionary;
  init.seed = o.c.seed;
  init.mean = mean;
  return init_temporal(init);
}

std::string step_name(std::uint64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08llu.tfam", static_cast<unsigned long long>(step));
  return buf;
}

void cmd_train(const TrainOpts& o, std::ostream& out) {
  fs::path dir(o.c.out);
  auto kind = model_kind_from_string(o.kind);
  TrainConfig cfg = o.cfg;
  cfg.seed = o.c.seed;
  cfg.validate();
  auto set = load_input(o.input, o.c);

  Checkpoint state;
  ActivationSet train_set;
  if (!o.resume.empty()) {
    state = load_checkpoint(o.resume);
    if (kind_of(state.model) != kind) throw ConfigError("checkpoint holds a " + to_string(kind_of(state.model)) + " model");
    if (!state.norm_scale) throw DataError("checkpoint has no normalization scale");
    if (!state.adam) throw DataError("checkpoint has no optimizer state to resume from");
    train_set = scaled_for(set, state.norm_scale);
  } else {
    double scale = 0.0;
    if (set.norm_scale) {
      train_set = set;
      scale = *set.norm_scale;
    } else {
      std::tie(train_set, scale) = normalize_unit_expected_norm(set);
    }
    std::optional<Eigen::VectorXd> mean;
    if (o.init_mean) mean = train_set.stacked().colwise().mean().transpose();
    state = start_state(build_model(o, kind, train_set.dim, mean), scale);
  }
  if (input_dim_of(state.model) != train_set.dim) throw DataError("model and input dimensions differ");

  fs::path ckpt_dir = dir / "checkpoints";
  CheckpointCallback on_ckpt;
  if (cfg.checkpoint_every > 0) {
    fs::create_directories(ckpt_dir);
    on_ckpt = [&](const Checkpoint& c) { save_checkpoint(c, ckpt_dir / step_name(c.step)); };
  }
  auto result = train(std::move(state), train_set, cfg, on_ckpt);
  save_checkpoint(result.state, dir / "model.tfam");
  result.log.write_csv(dir / "train_log.csv");
  write_json(dir / "summary.json", result.log.summary());
  out << "trained " << o.kind << " to step " << result.state.step;
  if (!result.log.records.empty()) out << ", final nmse " << result.log.records.back().nmse;
  out << '\n';
}

// ---------------------------------------------------------------- encode

struct EncodeOpts {
  Common c;
  std::string input;
  std::string model;
};

void add_encode(CLI::App* app, EncodeOpts& o) {
  add_common(app, o.c, false);
  app->add_option("--input", o.input, "TFA1 activations")->required();
  app->add_option("--model", o.model, "TFAM checkpoint")->required();
}

void cmd_encode(const EncodeOpts& o, std::ostream& out) {
  fs::path dir(o.c.out);
  auto ckpt = load_checkpoint(o.model);
  auto set = load_input(o.input, o.c);
  if (input_dim_of(ckpt.model) != set.dim) throw DataError("model and input dimensions differ");
  CodeSet codes;
  codes.kind = kind_of(ckpt.model);
  codes.latents = latents_of(ckpt.model);
  if (!set.empty()) {
    auto enc = model_encoder(ckpt.model)(scaled_for(set, ckpt.norm_scale).sequences);
    if (is_temporal(codes.kind)) {
      codes.predictive = enc.kind("predictive").per_sequence;
      if (codes.kind == ModelKind::kTemporal) {
        codes.sparse = enc.kind("novel").per_sequence;
      } else {
        for (const auto& p : codes.predictive) codes.sparse.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      }
    } else {
      codes.sparse = enc.kinds.front().per_sequence;
    }
  }
  save_codes(codes, dir / "codes.tfac");
  out << "encoded " << codes.sparse.size() << " sequences into " << (dir / "codes.tfac").string() << '\n';
}

// ---------------------------------------------------------------- analyze

struct AnalyzeOpts {
  Common c;
  std::string input;
  std::string model;
  std::string control;
  std::string centering = "per-sequence";
  std::string cutoff = "equal-energy";
  std::string code_kind;
  std::vector<double> sigmas{0.0, 0.05, 0.1, 0.2, 0.5};
  double threshold = 0.3;
  std::size_t sequence = 0;
  std::size_t components = 3;
};

const std::vector<std::string> kPipelines{"event", "gardenpath", "geometry", "split", "fourier",
                                          "cka",   "tortuosity", "noise",    "cluster"};

void add_analyze(CLI::App* app, const std::string& name, AnalyzeOpts& o) {
  add_common(app, o.c, true);
  app->add_option("--input", o.input, "TFA1 activations")->required();
  app->add_option("--model", o.model, name == "split" ? "TFAM temporal checkpoint" : "TFAM checkpoint (default: raw activations)");
  if (name == "split") app->get_option("--model")->required();
  if (name == "event") {
    app->add_option("--centering", o.centering, "per-sequence or corpus")
        ->capture_default_str()
        ->check(CLI::IsMember({"per-sequence", "corpus"}));
  }
  if (name == "gardenpath") app->add_option("--control", o.control, "Control TFA1 paired with --input")->required();
  if (name == "fourier") {
    app->add_option("--cutoff", o.cutoff, "equal-energy or tenth-nyquist")
        ->capture_default_str()
        ->check(CLI::IsMember({"equal-energy", "tenth-nyquist"}));
  }
  if (name == "noise") {
    app->add_option("--sigmas", o.sigmas, "Noise levels")->delimiter(',')->default_str("0,0.05,0.1,0.2,0.5");
  }
  if (name == "cluster") {
    app->add_option("--threshold", o.threshold, "Cosine-distance cut for flat clusters")->capture_default_str();
    app->add_option("--kind", o.code_kind, "Code kind to cluster (default: all)");
  }
  if (name == "geometry") app->add_option("--components", o.components)->capture_default_str();
  if (name == "event" || name == "fourier" || name == "noise" || name == "cluster" || name == "geometry") {
    app->add_option("--sequence", o.sequence, "Sequence for per-sequence maps")->capture_default_str();
  }
}

struct Prepared {
  ActivationSet set;
  Encoder encoder;
  std::optional<AnyModel> model;
  std::optional<double> scale;
};

Prepared prepare(const AnalyzeOpts& o) {
  Prepared p{load_input(o.input, o.c), raw_encoder(), std::nullopt, std::nullopt};
  if (p.set.empty()) throw DataError(o.input + " holds no sequences");
  if (o.model.empty()) return p;
  auto ckpt = load_checkpoint(o.model);
  if (input_dim_of(ckpt.model) != p.set.dim) throw DataError("model and input dimensions differ");
  p.set = scaled_for(p.set, ckpt.norm_scale);
  p.encoder = model_encoder(ckpt.model);
  p.model = std::move(ckpt.model);
  p.scale = ckpt.norm_scale;
  return p;
}

void check_sequence(const ActivationSet& set, std::size_t i) {
  if (i >= set.size()) throw ConfigError("--sequence " + std::to_string(i) + " is out of range");
}

void cmd_analyze(const std::string& name, const AnalyzeOpts& o, std::ostream& out) {
  fs::path dir(o.c.out);
  auto p = prepare(o);
  json report;

  if (name == "event") {
    check_sequence(p.set, o.sequence);
    auto centering = o.centering == "corpus" ? Centering::kCorpus : Centering::kPerSequence;
    report = json::array();
    for (const auto& r : event_similarity_report(p.set, p.encoder, centering)) report.push_back(r.to_json());
    if (o.c.heatmaps) {
      auto enc = p.encoder(p.set.sequences);
      for (const auto& k : enc.kinds) {
        auto sim = cosine_similarity_matrix(k.per_sequence[o.sequence], true).values;
        write_heatmaps(dir / ("event_" + safe_name(k.name)), sim, ColorMap::kDiverging);
      }
    }
  } else if (name == "gardenpath") {
    auto control = scaled_for(load_input(o.control, o.c), p.scale);
    report = json::array();
    for (const auto& r : garden_path_battery(p.set, control, p.encoder)) report.push_back(r.to_json());
  } else if (name == "geometry") {
    check_sequence(p.set, o.sequence);
    auto enc = p.encoder(p.set.sequences);
    for (const auto& k : enc.kinds) {
      auto pca = pca_project(k.per_sequence[o.sequence], o.components);
      std::vector<std::string> header;
      for (Eigen::Index i = 0; i < pca.projection.cols(); ++i) header.push_back("pc" + std::to_string(i + 1));
      write_matrix_csv(dir / ("geometry_" + safe_name(k.name) + ".csv"), pca.projection, header);
      json entry;
      entry["explained_variance_ratios"] = std::vector<double>(pca.ratios.data(), pca.ratios.data() + pca.ratios.size());
      Eigen::MatrixXd all = stack_rows(k.per_sequence);
      entry["effective_rank"] = all.squaredNorm() > 0.0 ? json(effective_rank(all)) : json(nullptr);
      report[k.name] = entry;
    }
  } else if (name == "split") {
    if (!p.model || !std::holds_alternative<TemporalModel>(*p.model)) {
      throw ConfigError("analyze split needs a temporal checkpoint");
    }
    report = dictionary_split_report(std::get<TemporalModel>(*p.model), p.set).to_json();
  } else if (name == "fourier") {
    check_sequence(p.set, o.sequence);
    auto mode = o.cutoff == "tenth-nyquist" ? FourierCutoff::kTenthNyquist : FourierCutoff::kEqualEnergy;
    report = fourier_alignment(p.set, p.encoder, mode, o.sequence).to_json();
  } else if (name == "cka") {
    auto enc = p.encoder(p.set.sequences);
    std::vector<std::string> names{"activations"};
    std::vector<Eigen::MatrixXd> mats{p.set.stacked()};
    for (const auto& k : enc.kinds) {
      names.push_back(k.name);
      mats.push_back(stack_rows(k.per_sequence));
    }
    auto m = static_cast<Eigen::Index>(mats.size());
    Eigen::MatrixXd table(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        table(i, j) = linear_cka(mats[static_cast<std::size_t>(i)], mats[static_cast<std::size_t>(j)]);
      }
    }
    write_matrix_csv(dir / "cka.csv", table, names);
    report["names"] = names;
    report["matrix"] = json::array();
    for (Eigen::Index i = 0; i < m; ++i) {
      report["matrix"].push_back(std::vector<double>(table.row(i).data(), table.row(i).data() + m));
    }
  } else if (name == "tortuosity") {
    report = json::array();
    for (const auto& r : code_tortuosity(p.set, p.encoder)) {
      json per = json::array();
      for (double v : r.per_sequence) per.push_back(nan_as_null(v));
      report.push_back({{"kind", r.kind}, {"per_sequence", per}, {"mean", nan_as_null(r.mean)},
                        {"median", nan_as_null(r.median)}});
    }
  } else if (name == "noise") {
    check_sequence(p.set, o.sequence);
    auto levels = noise_robustness(p.set, p.encoder, o.sigmas, o.c.seed, o.sequence);
    report = json::array();
    for (std::size_t i = 0; i < levels.size(); ++i) {
      report.push_back({{"sigma", levels[i].sigma}, {"explained_variance", levels[i].explained_variance}});
      if (!o.c.heatmaps) continue;
      for (const auto& [kind, sim] : levels[i].similarity) {
        write_heatmaps(dir / ("noise_" + safe_name(kind) + "_" + std::to_string(i)), sim, ColorMap::kDiverging);
      }
    }
  } else if (name == "cluster") {
    check_sequence(p.set, o.sequence);
    auto enc = p.encoder(p.set.sequences);
    bool found = false;
    for (const auto& k : enc.kinds) {
      if (!o.code_kind.empty() && k.name != o.code_kind) continue;
      found = true;
      const auto& codes = k.per_sequence[o.sequence];
      report[k.name] = hierarchical_clusters(codes, o.threshold).to_json();
      if (o.c.heatmaps) {
        write_heatmaps(dir / ("cluster_" + safe_name(k.name)), cosine_similarity_matrix(codes, false).values,
                       ColorMap::kDiverging);
      }
    }
    if (!found) throw ConfigError("no code kind named '" + o.code_kind + "'");
  }
  write_json(dir / (name + ".json"), report);
  out << "wrote " << (dir / (name + ".json")).string() << '\n';
}

const std::map<std::string, std::string> kPipelineHelp{
    {"event", "Within- vs across-event code similarity"},
    {"gardenpath", "Garden-path vs control phrase similarity"},
    {"geometry", "PCA projection of one sequence's codes"},
    {"split", "Predictive vs novel dictionary usage"},
    {"fourier", "CKA of codes against slow and fast Fourier parts"},
    {"cka", "CKA table over the activations and every code kind"},
    {"tortuosity", "Path tortuosity of codes over time"},
    {"noise", "Code stability under input noise"},
    {"cluster", "Hierarchical clustering of one sequence's codes"},
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse autoencoders and temporal feature analyzers on activation sequences", "tfa"};
  app.set_config("--config", "", "TOML file with [command] tables; flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);

  SynthOpts synth;
  ProfileOpts profile;
  TrainOpts train_opts;
  EncodeOpts encode;
  std::map<std::string, AnalyzeOpts> analyze;

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic activation sets");
  add_synth(synth_cmd, synth);
  auto* profile_cmd = app.add_subcommand("profile", "Temporal-structure profile against surrogates");
  add_profile(profile_cmd, profile);
  auto* train_cmd = app.add_subcommand("train", "Train an SAE or temporal model");
  add_train(train_cmd, train_opts);
  auto* encode_cmd = app.add_subcommand("encode", "Write latent codes to a TFAC file");
  add_encode(encode_cmd, encode);
  auto* analyze_cmd = app.add_subcommand("analyze", "Run an analysis pipeline");
  analyze_cmd->require_subcommand(1);
  std::map<std::string, CLI::App*> analyze_cmds;
  for (const auto& name : kPipelines) {
    analyze_cmds[name] = analyze_cmd->add_subcommand(name, kPipelineHelp.at(name));
    add_analyze(analyze_cmds[name], name, analyze[name]);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    auto prepare_out = [&](const std::string& section, const Common& c) {
      fs::create_directories(c.out);
      write_resolved_config(app, section, c.out);
    };
    if (synth_cmd->parsed()) {
      prepare_out("synth", synth.c);
      cmd_synth(synth, out);
    } else if (profile_cmd->parsed()) {
      prepare_out("profile", profile.c);
      cmd_profile(profile, out, err);
    } else if (train_cmd->parsed()) {
      prepare_out("train", train_opts.c);
      cmd_train(train_opts, out);
    } else if (encode_cmd->parsed()) {
      prepare_out("encode", encode.c);
      cmd_encode(encode, out);
    } else {
      for (const auto& name : kPipelines) {
        if (!analyze_cmds[name]->parsed()) continue;
        prepare_out("analyze." + name, analyze[name].c);
        cmd_analyze(name, analyze[name], out);
      }
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace tfa::cli
