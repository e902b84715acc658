#pragma once

// Config-driven experiment commands behind the command-line tool.
//
// Seed derivation (seed = experiment seed):
//   train frame i   mix_seed(mix_seed(seed, 1), i)
//   test frame i    mix_seed(mix_seed(seed, 2), i)
//   label subset f  mix_seed(mix_seed(seed, 3), f)
//   training        mix_seed(seed, 4), unless train.seed is given
//   bench vector i  mix_seed(mix_seed(seed, 5), i)
//
// Every output directory gets a meta.json with version, config hash and
// geometry id; file headers carry the same fields.

#include "srspec/array_model.hpp"
#include "srspec/iaa.hpp"
#include "srspec/io.hpp"
#include "srspec/metrics.hpp"
#include "srspec/rd_io.hpp"
#include "srspec/rd_pipeline.hpp"
#include "srspec/scene_sim.hpp"
#include "srspec/specnet.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <set>

namespace srspec {

struct ExperimentConfig {
  std::size_t n_ch = 10;
  std::vector<double> spacings;  // custom geometry when non-empty
  std::size_t grid_l = 256;

  std::size_t n_fast = 256;
  std::size_t n_slow = 64;
  std::size_t range_trunc = 100;
  WindowKind window = WindowKind::rectangular;

  ScenePolicy scene;
  IaaConfig iaa;
  TrainConfig train;
  bool train_seed_given = false;
  std::vector<LossKind> loss_kinds{LossKind::mse, LossKind::snr_weighted};

  std::string dataset_size = "small";
  std::map<std::string, std::size_t> dataset_sizes{{"small", 200}, {"medium", 700}, {"large", 1400}};
  std::size_t test_frames = 20;
  std::size_t max_bins_per_frame = 0;  // 0 = every range-Doppler bin

  InferMode infer_mode = InferMode::normalized;

  std::size_t bench_vectors = 1000;
  std::size_t bench_warmup = 10;
  std::size_t bench_batch = 64;

  bool metrics_db = false;
  double dynamic_range_db = 40.0;

  std::uint64_t seed = 0;

  ArrayGeometry geometry() const { return spacings.empty() ? ArrayGeometry::ula(n_ch) : ArrayGeometry(spacings); }
  SteeringMatrix steering() const { return build_steering_matrix(geometry(), AngularGrid(grid_l)); }
  std::size_t train_frames() const { return dataset_sizes.at(dataset_size); }
  TrainConfig resolved_train() const {
    TrainConfig t = train;
    if (!train_seed_given) t.seed = mix_seed(seed, 4);
    return t;
  }

  void validate() const {
    const auto g = geometry();
    if (grid_l < 2) throw ValidationError("grid_l must be >= 2");
    if (n_fast == 0 || n_slow == 0) throw ValidationError("cube dims must be positive");
    if (range_trunc < 1 || range_trunc > n_fast) throw ValidationError("range_trunc must lie in [1, n_fast]");
    scene.validate();
    if (scene.grid_l != grid_l) throw ValidationError("scene.grid_l must equal grid_l");
    if (scene.range_bins > n_fast || scene.doppler_bins > n_slow)
      throw ValidationError("scene range/doppler bins exceed the cube dims");
    iaa.validate();
    train.validate();
    if (loss_kinds.empty()) throw ValidationError("train.loss_kinds must not be empty");
    if (!dataset_sizes.count(dataset_size)) throw ValidationError("unknown dataset size '" + dataset_size + "'");
    if (bench_vectors == 0 || bench_batch == 0) throw ValidationError("bench vectors and batch must be positive");
    if (!(dynamic_range_db > 0.0)) throw ValidationError("metrics.dynamic_range_db must be positive");
    (void)g;
  }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ValidationError("unknown key '" + k + "' in " + where);
}

template <typename T>
std::set<std::string> keys_of(const T& defaults) {
  std::set<std::string> out;
  nlohmann::json j;
  to_json(j, defaults);
  for (const auto& [k, v] : j.items()) out.insert(k);
  return out;
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json geom = {{"n_ch", c.n_ch}};
  if (!c.spacings.empty()) geom["spacings"] = c.spacings;
  nlohmann::json train;
  to_json(train, c.resolved_train());
  std::vector<std::string> kinds;
  for (auto k : c.loss_kinds) kinds.push_back(to_string(k));
  train["loss_kinds"] = kinds;
  nlohmann::json scene, iaa;
  to_json(scene, c.scene);
  to_json(iaa, c.iaa);
  return {{"geometry", geom},
          {"grid_l", c.grid_l},
          {"cube", {{"n_fast", c.n_fast}, {"n_slow", c.n_slow}, {"range_trunc", c.range_trunc},
                    {"window", to_string(c.window)}}},
          {"scene", scene},
          {"iaa", iaa},
          {"train", train},
          {"dataset", {{"size", c.dataset_size}, {"sizes", c.dataset_sizes}, {"test_frames", c.test_frames},
                       {"max_bins_per_frame", c.max_bins_per_frame}}},
          {"infer", {{"mode", c.infer_mode == InferMode::normalized ? "normalized" : "direct"}}},
          {"bench", {{"vectors", c.bench_vectors}, {"warmup", c.bench_warmup}, {"batch", c.bench_batch}}},
          {"metrics", {{"db", c.metrics_db}, {"dynamic_range_db", c.dynamic_range_db}}},
          {"seed", c.seed}};
}

/// Missing keys take defaults; unknown keys are errors.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    detail::check_keys(j, {"geometry", "grid_l", "cube", "scene", "iaa", "train", "dataset", "infer", "bench",
                           "metrics", "seed"},
                       "config");
    c.seed = j.value("seed", c.seed);
    c.grid_l = j.value("grid_l", c.grid_l);
    if (j.contains("geometry")) {
      const auto& g = j["geometry"];
      detail::check_keys(g, {"n_ch", "spacings"}, "geometry");
      if (g.contains("spacings")) {
        c.spacings = g["spacings"].get<std::vector<double>>();
        c.n_ch = c.spacings.size();
        if (g.contains("n_ch") && g["n_ch"].get<std::size_t>() != c.n_ch)
          throw ValidationError("geometry.n_ch does not match the number of spacings");
      } else {
        c.n_ch = g.value("n_ch", c.n_ch);
      }
    }
    if (j.contains("cube")) {
      const auto& q = j["cube"];
      detail::check_keys(q, {"n_fast", "n_slow", "range_trunc", "window"}, "cube");
      c.n_fast = q.value("n_fast", c.n_fast);
      c.n_slow = q.value("n_slow", c.n_slow);
      c.range_trunc = q.value("range_trunc", c.range_trunc);
      c.window = window_from_string(q.value("window", to_string(c.window)));
    }
    c.scene.grid_l = c.grid_l;
    if (j.contains("scene")) {
      detail::check_keys(j["scene"], detail::keys_of(ScenePolicy{}), "scene");
      nlohmann::json s = j["scene"];
      if (!s.contains("grid_l")) s["grid_l"] = c.grid_l;
      c.scene = s.get<ScenePolicy>();
    }
    if (j.contains("iaa")) {
      detail::check_keys(j["iaa"], detail::keys_of(IaaConfig{}), "iaa");
      c.iaa = j["iaa"].get<IaaConfig>();
    }
    if (j.contains("train")) {
      auto allowed = detail::keys_of(TrainConfig{});
      allowed.insert("loss_kinds");
      detail::check_keys(j["train"], allowed, "train");
      c.train = j["train"].get<TrainConfig>();
      c.train_seed_given = j["train"].contains("seed");
      if (j["train"].contains("loss_kinds")) {
        const auto& lk = j["train"]["loss_kinds"];
        c.loss_kinds.clear();
        if (lk.is_string() && lk.get<std::string>() == "both") {
          c.loss_kinds = {LossKind::mse, LossKind::snr_weighted};
        } else if (lk.is_string()) {
          c.loss_kinds.push_back(loss_from_string(lk.get<std::string>()));
        } else {
          for (const auto& k : lk) c.loss_kinds.push_back(loss_from_string(k.get<std::string>()));
        }
      }
    }
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      detail::check_keys(d, {"size", "sizes", "test_frames", "max_bins_per_frame"}, "dataset");
      if (d.contains("sizes"))
        for (const auto& [k, v] : d["sizes"].items()) c.dataset_sizes[k] = v.get<std::size_t>();
      c.dataset_size = d.value("size", c.dataset_size);
      c.test_frames = d.value("test_frames", c.test_frames);
      c.max_bins_per_frame = d.value("max_bins_per_frame", c.max_bins_per_frame);
    }
    if (j.contains("infer")) {
      detail::check_keys(j["infer"], {"mode"}, "infer");
      c.infer_mode = infer_mode_from_string(j["infer"].value("mode", std::string("normalized")));
    }
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      detail::check_keys(b, {"vectors", "warmup", "batch"}, "bench");
      c.bench_vectors = b.value("vectors", c.bench_vectors);
      c.bench_warmup = b.value("warmup", c.bench_warmup);
      c.bench_batch = b.value("batch", c.bench_batch);
    }
    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      detail::check_keys(m, {"db", "dynamic_range_db"}, "metrics");
      c.metrics_db = m.value("db", c.metrics_db);
      c.dynamic_range_db = m.value("dynamic_range_db", c.dynamic_range_db);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

/// Hash of the resolved config; identical for equivalent files.
inline std::string config_hash(const ExperimentConfig& c) { return io::json_hash(to_json(c)); }

// ---------------------------------------------------------------------------
// Provenance

struct RunContext {
  ExperimentConfig cfg;
  unsigned workers = 1;
  std::ostream* log = &std::cerr;
};

inline nlohmann::json provenance(const ExperimentConfig& c) {
  return {{"version", kVersion}, {"config_hash", config_hash(c)}, {"geometry_id", c.geometry().id()}};
}

inline void write_meta(const std::filesystem::path& dir, const std::string& kind, const ExperimentConfig& c,
                       nlohmann::json extra = {}) {
  nlohmann::json m = provenance(c);
  m["kind"] = kind;
  if (extra.is_object()) m.update(extra);
  auto os = io::open_out(dir / "meta.json");
  os << m.dump(2) << '\n';
}

inline nlohmann::json read_meta(const std::filesystem::path& dir) {
  const auto p = dir / "meta.json";
  if (!std::filesystem::exists(p)) throw DataError(dir.string() + ": missing meta.json");
  try {
    return nlohmann::json::parse(io::read_text(p));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

inline void require_geometry(const nlohmann::json& meta, const std::string& expected, const std::string& what) {
  const std::string found = meta.value("geometry_id", "");
  if (found != expected)
    throw ValidationError(what + " was produced for geometry '" + found + "', expected '" + expected + "'");
}

inline std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu", i);
  return buf;
}

/// Sorted paths in `dir` with the given extension.
inline std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& ext) {
  if (!std::filesystem::is_directory(dir)) throw DataError(dir.string() + ": not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateResult {
  std::size_t frames = 0;
  std::vector<std::filesystem::path> cubes;
};

inline SimulateResult cmd_simulate(const RunContext& ctx, const std::filesystem::path& out, const std::string& split,
                                   std::optional<std::size_t> frames_override = std::nullopt) {
  const auto& c = ctx.cfg;
  c.validate();
  std::uint64_t stream;
  std::size_t frames;
  if (split == "train") {
    stream = mix_seed(c.seed, 1);
    frames = c.train_frames();
  } else if (split == "test") {
    stream = mix_seed(c.seed, 2);
    frames = c.test_frames;
  } else {
    throw ValidationError("split must be 'train' or 'test'");
  }
  if (frames_override) frames = *frames_override;

  const auto geom = c.geometry();
  std::vector<SceneSpec> scenes(frames);
  for (std::size_t i = 0; i < frames; ++i) scenes[i] = sample_training_scene(mix_seed(stream, i), c.scene);

  SimulateResult res;
  res.frames = frames;
  res.cubes.resize(frames);
  const auto prov = provenance(c);
  parallel_for(frames, ctx.workers, [&](std::size_t i) {
    const auto cube = simulate_adc_cube(geom, scenes[i], c.n_fast, c.n_slow);
    nlohmann::json h = prov;
    h["frame"] = frame_name(i);
    h["split"] = split;
    res.cubes[i] = out / (frame_name(i) + ".cube");
    write_cube(res.cubes[i], cube.data, "adc", h);
  });

  nlohmann::json manifest = prov;
  manifest["split"] = split;
  manifest["frames"] = nlohmann::json::array();
  for (std::size_t i = 0; i < frames; ++i) manifest["frames"].push_back({{"frame", frame_name(i)}, {"scene", scenes[i]}});
  {
    auto os = io::open_out(out / "scenes.json");
    os << manifest.dump(2) << '\n';
  }
  write_meta(out, "cubes", c, {{"split", split}, {"frames", frames}, {"config", to_json(c)}});
  *ctx.log << "simulate: wrote " << frames << " " << split << " frames to " << out.string() << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// label

struct LabelReport {
  std::size_t frames = 0;
  std::size_t candidates = 0;
  std::size_t written = 0;
  std::size_t dropped_zero = 0;
  std::vector<std::string> failures;  // "frame (range, doppler): message"
};

inline RdcCube load_rdc(const ExperimentConfig& c, const std::filesystem::path& cube_path) {
  auto f = read_cube(cube_path);
  if (f.header.value("kind", "") != "adc") throw DataError(cube_path.string() + ": expected an ADC cube");
  require_geometry(f.header, c.geometry().id(), cube_path.string());
  if (f.data.d2 != c.geometry().n_ch()) throw DataError(cube_path.string() + ": channel count mismatch");
  if (c.range_trunc > f.data.d0)
    throw ValidationError(cube_path.string() + ": range_trunc exceeds the cube's fast-time length");
  return adc_to_rdc(AdcCube{std::move(f.data)}, c.range_trunc, c.window);
}

inline LabelReport cmd_label(const RunContext& ctx, const std::filesystem::path& cubes_dir,
                             const std::filesystem::path& out) {
  const auto& c = ctx.cfg;
  c.validate();
  require_geometry(read_meta(cubes_dir), c.geometry().id(), cubes_dir.string());
  const auto cubes = list_files(cubes_dir, ".cube");
  if (cubes.empty()) throw DataError(cubes_dir.string() + ": no cube files");
  const auto a = c.steering();

  LabelReport rep;
  rep.frames = cubes.size();
  const auto payload_path = out / "records.payload.tmp";
  std::size_t written = 0;
  {
    auto payload = io::open_out(payload_path);
    io::F32Writer wr(payload);
    for (std::size_t f = 0; f < cubes.size(); ++f) {
      const auto rdc = load_rdc(c, cubes[f]);
      const std::size_t nr = rdc.n_range(), nd = rdc.n_doppler();
      std::vector<std::size_t> bins(nr * nd);
      std::iota(bins.begin(), bins.end(), std::size_t{0});
      if (c.max_bins_per_frame > 0 && c.max_bins_per_frame < bins.size()) {
        std::mt19937_64 rng(mix_seed(mix_seed(c.seed, 3), f));
        std::shuffle(bins.begin(), bins.end(), rng);
        bins.resize(c.max_bins_per_frame);
        std::sort(bins.begin(), bins.end());
      }
      rep.candidates += bins.size();
      std::vector<BeamVector> ys(bins.size());
      for (std::size_t i = 0; i < bins.size(); ++i) ys[i] = extract_beam_vector(rdc, bins[i] / nd, bins[i] % nd);
      const auto labels = iaa_batch(a, ys, c.iaa, ctx.workers);
      std::vector<bool> failed(bins.size(), false);
      for (const auto& [i, msg] : labels.errors) {
        failed[i] = true;
        rep.failures.push_back(cubes[f].stem().string() + " (" + std::to_string(bins[i] / nd) + ", " +
                               std::to_string(bins[i] % nd) + "): " + msg);
      }
      for (std::size_t i = 0; i < bins.size(); ++i) {
        if (failed[i]) continue;
        const auto rec = make_record(a, ys[i], labels.results[i]);
        if (!rec) {
          ++rep.dropped_zero;
          continue;
        }
        for (double v : rec->input) wr.put(v);
        for (double v : rec->label) wr.put(v);
        wr.put(rec->alpha);
        ++written;
      }
    }
  }
  rep.written = written;

  nlohmann::json h = provenance(c);
  h["format"] = "srspec-records";
  h["dtype"] = "float32";
  h["n_ch"] = a.n_ch();
  h["l"] = a.l();
  h["count"] = written;
  h["iaa_config_hash"] = io::json_hash(nlohmann::json(c.iaa));
  {
    auto os = io::open_out(out / "records.bin");
    io::write_header(os, h);
    if (std::filesystem::file_size(payload_path) > 0) {
      auto is = io::open_in(payload_path);
      os << is.rdbuf();
    }
    if (!os) throw DataError("failed writing " + (out / "records.bin").string());
  }
  std::filesystem::remove(payload_path);

  nlohmann::json report = {{"frames", rep.frames},
                           {"candidates", rep.candidates},
                           {"written", rep.written},
                           {"dropped_zero_alpha", rep.dropped_zero},
                           {"failed", rep.failures.size()},
                           {"failures", rep.failures}};
  {
    auto os = io::open_out(out / "label_report.json");
    os << report.dump(2) << '\n';
  }
  write_meta(out, "records", c, {{"records", written}});
  *ctx.log << "label: " << rep.candidates << " candidate bins, " << written << " records, " << rep.dropped_zero
           << " dropped (alpha = 0), " << rep.failures.size() << " failed\n";
  for (const auto& f : rep.failures) *ctx.log << "  IAA failure at " << f << "\n";
  return rep;
}

// ---------------------------------------------------------------------------
// train

inline std::filesystem::path model_path(const std::filesystem::path& dir, LossKind k) {
  return dir / ("model_" + to_string(k) + ".bin");
}

/// Streams a record file straight into a float batch.
inline Batch<float> load_record_batch(const std::filesystem::path& path, std::size_t expect_n_ch, std::size_t expect_l) {
  auto is = io::open_in(path);
  const auto h = io::read_header(is, path.string());
  if (h.value("format", "") != "srspec-records") throw DataError(path.string() + ": not a record file");
  const auto n_ch = h.at("n_ch").get<std::size_t>(), l = h.at("l").get<std::size_t>();
  if (n_ch != expect_n_ch || l != expect_l)
    throw ValidationError(path.string() + ": records are " + std::to_string(n_ch) + " ch x " + std::to_string(l) +
                          " bins, config expects " + std::to_string(expect_n_ch) + " ch x " + std::to_string(expect_l));
  const auto count = h.at("count").get<std::size_t>();
  if (count == 0) throw DataError(path.string() + ": record file is empty");
  const std::size_t stride = 2 * n_ch + l + 1;
  Batch<float> b;
  const auto n = static_cast<Eigen::Index>(count);
  b.inputs.resize(static_cast<Eigen::Index>(2 * n_ch), n);
  b.labels.resize(static_cast<Eigen::Index>(l), n);
  b.alphas.resize(n);
  const std::size_t chunk = 4096;
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t m = std::min(chunk, count - start);
    const auto v = io::read_f32(is, m * stride, path.string());
    for (std::size_t i = 0; i < m; ++i) {
      const float* p = v.data() + i * stride;
      const auto col = static_cast<Eigen::Index>(start + i);
      b.inputs.col(col) = Eigen::Map<const Eigen::VectorXf>(p, static_cast<Eigen::Index>(2 * n_ch));
      b.labels.col(col) = Eigen::Map<const Eigen::VectorXf>(p + 2 * n_ch, static_cast<Eigen::Index>(l));
      b.alphas[col] = p[stride - 1];
    }
  }
  io::expect_eof(is, path.string());
  return b;
}

inline std::vector<std::filesystem::path> cmd_train(const RunContext& ctx, const std::filesystem::path& records,
                                                    const std::filesystem::path& out, bool resume,
                                                    std::optional<int> epochs_override = std::nullopt) {
  const auto& c = ctx.cfg;
  c.validate();
  const auto geom = c.geometry();
  const auto rec_file = std::filesystem::is_directory(records) ? records / "records.bin" : records;
  {
    auto is = io::open_in(rec_file);
    require_geometry(io::read_header(is, rec_file.string()), geom.id(), rec_file.string());
  }
  const auto data = load_record_batch(rec_file, geom.n_ch(), c.grid_l);
  TrainConfig tc = c.resolved_train();
  if (epochs_override) tc.epochs = *epochs_override;

  std::vector<std::filesystem::path> models;
  for (auto kind : c.loss_kinds) {
    tc.loss_kind = kind;
    tc.validate();
    const auto tag = to_string(kind);
    const auto ckpt = out / ("checkpoint_" + tag + ".bin");
    TrainState<float> st;
    if (resume && std::filesystem::exists(ckpt)) {
      st = load_checkpoint<float>(ckpt);
      if (st.model.n_ch() != geom.n_ch() || st.model.l() != c.grid_l)
        throw ValidationError(ckpt.string() + ": checkpoint shape does not match the config");
      *ctx.log << "train[" << tag << "]: resuming after epoch " << st.epochs_done << "\n";
    } else {
      st = initial_train_state<float>(geom.n_ch(), c.grid_l, tc);
    }
    train<float>(st, data, tc, [&](const TrainState<float>& s) {
      *ctx.log << "train[" << tag << "]: epoch " << s.epochs_done << " loss " << s.log.back().train_loss << "\n";
      if (tc.checkpoint_every > 0 && s.epochs_done % tc.checkpoint_every == 0) save_checkpoint(ckpt, s, tc);
    });
    if (tc.checkpoint_every > 0) save_checkpoint(ckpt, st, tc);

    nlohmann::json h = provenance(c);
    h["loss_kind"] = tag;
    h["epochs"] = st.epochs_done;
    h["train_config_hash"] = io::json_hash(nlohmann::json(tc));
    h["records"] = data.size();
    save_model(model_path(out, kind), st.model, h);
    {
      auto os = io::open_out(out / ("loss_" + tag + ".csv"));
      os << "epoch,train_loss\n";
      char buf[64];
      for (const auto& e : st.log) {
        std::snprintf(buf, sizeof buf, "%d,%.9g\n", e.epoch, e.train_loss);
        os << buf;
      }
    }
    models.push_back(model_path(out, kind));
  }
  std::vector<std::string> kinds;
  for (auto k : c.loss_kinds) kinds.push_back(to_string(k));
  write_meta(out, "models", c, {{"loss_kinds", kinds}, {"records", data.size()}});
  return models;
}

// ---------------------------------------------------------------------------
// infer

struct InferOptions {
  std::vector<std::filesystem::path> models;
  bool with_dbf = false;
  bool with_iaa = false;
  int pgm_bits = 8;
};

inline void write_map(const std::filesystem::path& dir, const std::string& frame, const RaMap& map, double peak,
                      const nlohmann::json& prov, const std::string& estimator, int pgm_bits) {
  write_csv(dir / (frame + ".csv"), map.data);
  write_pgm(dir / (frame + ".pgm"), map.data, pgm_bits);
  nlohmann::json side = prov;
  side["frame"] = frame;
  side["estimator"] = estimator;
  side["rows"] = map.data.rows();
  side["cols"] = map.data.cols();
  side["all_zero"] = map.all_zero;
  side["peak_before_normalization"] = peak;
  auto os = io::open_out(dir / (frame + ".json"));
  os << side.dump(2) << '\n';
}

/// Returns the estimator directories written under `out`.
inline std::vector<std::filesystem::path> cmd_infer(const RunContext& ctx, const std::filesystem::path& cubes_dir,
                                                    const std::filesystem::path& out, const InferOptions& opt) {
  const auto& c = ctx.cfg;
  c.validate();
  const auto geom = c.geometry();
  require_geometry(read_meta(cubes_dir), geom.id(), cubes_dir.string());
  const auto a = c.steering();

  struct Net {
    std::string name;
    Mlp<float> model;
  };
  std::vector<Net> nets;
  for (const auto& p : opt.models) {
    nlohmann::json h;
    auto m = load_model<float>(p, geom.n_ch(), c.grid_l, &h);
    if (h.contains("geometry_id")) require_geometry(h, geom.id(), p.string());
    nets.push_back({p.stem().string(), std::move(m)});
  }
  if (nets.empty() && !opt.with_dbf && !opt.with_iaa) throw ValidationError("infer: nothing to do (no model, no --with-dbf/--with-iaa)");

  std::vector<std::string> names;
  if (opt.with_dbf) names.push_back("dbf");
  if (opt.with_iaa) names.push_back("iaa");
  for (const auto& n : nets) names.push_back(n.name);

  const auto cubes = list_files(cubes_dir, ".cube");
  if (cubes.empty()) throw DataError(cubes_dir.string() + ": no cube files");
  const auto prov = provenance(c);
  for (const auto& cube_path : cubes) {
    const auto frame = cube_path.stem().string();
    const auto rdc = load_rdc(c, cube_path);
    auto emit = [&](const std::string& name, const RdaCube& rda) {
      const RaMap raw = rda_to_ra(rda, false);
      const double peak = raw.data.size() ? raw.data.maxCoeff() : 0.0;
      write_map(out / name, frame, normalize_map(raw), peak, prov, name, opt.pgm_bits);
    };
    if (opt.with_dbf) emit("dbf", assemble_rda(rdc, DbfEstimator(a), ctx.workers));
    if (opt.with_iaa) emit("iaa", assemble_rda(rdc, IaaEstimator(a, c.iaa), ctx.workers));
    for (const auto& n : nets) emit(n.name, assemble_rda(rdc, NetworkEstimator<float>(n.model, a, c.infer_mode), ctx.workers));
  }
  std::vector<std::filesystem::path> dirs;
  for (const auto& n : names) {
    write_meta(out / n, "maps", c, {{"estimator", n}, {"frames", cubes.size()}});
    dirs.push_back(out / n);
  }
  *ctx.log << "infer: " << cubes.size() << " frames x " << names.size() << " estimators -> " << out.string() << "\n";
  return dirs;
}

// ---------------------------------------------------------------------------
// evaluate

inline std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline nlohmann::json metric_json(double v) {
  if (std::isinf(v)) return format_metric(v);
  return v;
}

inline metrics::MetricReport cmd_evaluate(const RunContext& ctx, const std::filesystem::path& truth_dir,
                                          const std::filesystem::path& pred_dir, const std::filesystem::path& out,
                                          std::ostream& table) {
  const auto& c = ctx.cfg;
  const auto tm = read_meta(truth_dir), pm = read_meta(pred_dir);
  const std::string tg = tm.value("geometry_id", ""), pg = pm.value("geometry_id", "");
  if (tg != pg)
    throw ValidationError("refusing to compare maps from different geometries: '" + tg + "' (truth) vs '" + pg +
                          "' (pred)");

  const auto truth_files = list_files(truth_dir, ".csv"), pred_files = list_files(pred_dir, ".csv");
  std::set<std::string> ts, ps;
  for (const auto& p : truth_files) ts.insert(p.stem().string());
  for (const auto& p : pred_files) ps.insert(p.stem().string());
  std::vector<std::string> unpaired;
  for (const auto& s : ts)
    if (!ps.count(s)) unpaired.push_back(s + " (missing in prediction)");
  for (const auto& s : ps)
    if (!ts.count(s)) unpaired.push_back(s + " (missing in truth)");
  if (!unpaired.empty()) {
    std::string msg = "unpaired frames:";
    for (const auto& u : unpaired) msg += " " + u + ";";
    throw DataError(msg);
  }
  if (ts.empty()) throw DataError(truth_dir.string() + ": no maps to evaluate");

  const std::vector<std::string> frames(ts.begin(), ts.end());
  std::vector<metrics::FrameMetrics> rows(frames.size());
  parallel_for(frames.size(), ctx.workers, [&](std::size_t i) {
    RMatrix t = read_csv(truth_dir / (frames[i] + ".csv"));
    RMatrix p = read_csv(pred_dir / (frames[i] + ".csv"));
    if (c.metrics_db) {
      t = db_scale(t, c.dynamic_range_db);
      p = db_scale(p, c.dynamic_range_db);
    }
    try {
      rows[i] = metrics::evaluate_frame(frames[i], t, p);
    } catch (const ValidationError& e) {
      throw DataError(frames[i] + ": " + e.what());
    }
  });
  auto report = metrics::aggregate(std::move(rows));

  // CSV: one row per frame and one aggregate (mean) row.
  {
    auto os = io::open_out(out / "metrics.csv");
    os << "frame,nmse,ssim,psnr_db\n";
    for (const auto& f : report.frames)
      os << f.frame << ',' << format_metric(f.nmse) << ',' << format_metric(f.ssim) << ',' << format_metric(f.psnr_db)
         << '\n';
    os << "mean," << format_metric(report.mean.nmse) << ',' << format_metric(report.mean.ssim) << ','
       << format_metric(report.mean.psnr_db) << '\n';
  }
  {
    nlohmann::json j = provenance(c);
    j["truth"] = truth_dir.filename().string();
    j["pred"] = pred_dir.filename().string();
    j["scale"] = c.metrics_db ? "db" : "linear";
    j["frames"] = nlohmann::json::array();
    auto row = [](const metrics::FrameMetrics& f) {
      return nlohmann::json{{"frame", f.frame}, {"nmse", metric_json(f.nmse)}, {"ssim", metric_json(f.ssim)},
                            {"psnr_db", metric_json(f.psnr_db)}};
    };
    for (const auto& f : report.frames) j["frames"].push_back(row(f));
    j["mean"] = row(report.mean);
    j["median"] = row(report.median);
    auto os = io::open_out(out / "metrics.json");
    os << j.dump(2) << '\n';
  }

  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s\n", pred_dir.filename().string().c_str(), "NMSE(lower)",
                "SSIM(higher)", "PSNR(higher)");
  table << buf;
  auto line = [&](const metrics::FrameMetrics& f) {
    std::snprintf(buf, sizeof buf, "%-16s %12s %12s %12s\n", f.frame.c_str(), format_metric(f.nmse).c_str(),
                  format_metric(f.ssim).c_str(), format_metric(f.psnr_db).c_str());
    table << buf;
  };
  for (const auto& f : report.frames) line(f);
  line(report.mean);
  line(report.median);
  return report;
}

// ---------------------------------------------------------------------------
// bench

inline nlohmann::json cmd_bench(const RunContext& ctx, const std::optional<std::filesystem::path>& model_file,
                                const std::filesystem::path& out) {
  const auto& c = ctx.cfg;
  c.validate();
  const auto a = c.steering();
  const auto geom = a.geometry;

  Mlp<float> model;
  std::string model_note;
  if (model_file) {
    nlohmann::json h;
    model = load_model<float>(*model_file, geom.n_ch(), c.grid_l, &h);
    model_note = model_file->filename().string();
  } else {
    model = Mlp<float>(geom.n_ch(), c.grid_l);
    model.initialize(mix_seed(c.seed, 4));
    model_note = "untrained (random init; latency does not depend on weights)";
  }

  const std::uint64_t stream = mix_seed(c.seed, 5);
  std::vector<BeamVector> ys(c.bench_vectors);
  for (std::size_t i = 0; i < ys.size(); ++i)
    ys[i] = simulate_beam_vector(geom, sample_training_scene(mix_seed(stream, i), c.scene));

  LatencyReport dbf;
  dbf.estimator = "dbf";
  dbf.n_ch = a.n_ch();
  dbf.l = a.l();
  dbf.hardware = hardware_note();
  {
    volatile double sink = 0.0;
    dbf.samples_ms = time_each(ys.size(), c.bench_warmup, [&](std::size_t i) { sink = sink + dbf_spectrum(a, ys[i])[0].real(); });
    summarize(dbf);
  }
  const auto iaa = time_iaa(a, ys, c.iaa, c.bench_warmup);
  const auto net = time_network(model, a, ys, 1, c.bench_warmup);
  const auto net_b = time_network(model, a, ys, c.bench_batch, c.bench_warmup);

  const double bins = static_cast<double>(c.range_trunc * c.n_slow);
  nlohmann::json ests = nlohmann::json::array();
  for (const LatencyReport* r : std::initializer_list<const LatencyReport*>{&dbf, &iaa, &net, &net_b}) {
    auto j = to_json(*r);
    j["per_frame_ms_estimated"] = r->median_ms * bins;
    ests.push_back(j);
  }
  nlohmann::json rep = provenance(c);
  rep["format"] = "srspec-bench";
  rep["n_ch"] = a.n_ch();
  rep["l"] = a.l();
  rep["iaa_iters"] = c.iaa.max_iters;
  rep["vectors"] = ys.size();
  rep["warmup"] = c.bench_warmup;
  rep["workers"] = 1;
  rep["bins_per_frame"] = c.range_trunc * c.n_slow;
  rep["hardware"] = hardware_note();
  rep["model"] = model_note;
  rep["estimators"] = ests;
  rep["speedup"] = {{"iaa_over_network", iaa.median_ms / net.median_ms},
                    {"iaa_over_network_batched", iaa.median_ms / net_b.median_ms},
                    {"iaa_over_dbf", iaa.median_ms / dbf.median_ms},
                    {"network_over_dbf", net.median_ms / dbf.median_ms}};
  {
    auto os = io::open_out(out / "bench.json");
    os << rep.dump(2) << '\n';
  }
  write_meta(out, "bench", c);
  *ctx.log << "bench (median ms per beam vector, 1 worker): dbf " << dbf.median_ms << ", iaa " << iaa.median_ms
           << ", network " << net.median_ms << ", network x" << c.bench_batch << " " << net_b.median_ms
           << "; iaa/network " << iaa.median_ms / net.median_ms << "\n";
  return rep;
}

}  // namespace srspec
