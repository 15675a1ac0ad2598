#include "cava/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "cava/csv.hpp"
#include "cava/image.hpp"
#include "cava/image_io.hpp"
#include "cava/rng.hpp"

namespace cava {

namespace {

using nlohmann::json;

double elapsed_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + where);
    }
  }
}

SynthParams synth_params_from_json(const json& j) {
  SynthParams p;
  reject_unknown_keys(j, {"kind", "n_per_class", "noise", "center_jitter", "amp_jitter",
                          "width_jitter"},
                      "dataset");
  p.noise = j.value("noise", p.noise);
  p.center_jitter = j.value("center_jitter", p.center_jitter);
  p.amp_jitter = j.value("amp_jitter", p.amp_jitter);
  p.width_jitter = j.value("width_jitter", p.width_jitter);
  return p;
}

ClassifierConfig classifier_from_json(const json& j) {
  const std::string kind = j.value("kind", "mlp");
  if (kind == "mlp") {
    reject_unknown_keys(j, {"kind", "hidden", "activation", "learning_rate", "epochs",
                            "batch_size", "l2_penalty"},
                        "classifier");
    MlpConfig cfg;
    if (j.contains("hidden")) cfg.hidden = j.at("hidden").get<std::vector<int>>();
    if (j.contains("activation")) {
      const std::string a = j.at("activation");
      if (a == "relu") cfg.activation = Activation::Relu;
      else if (a == "tanh") cfg.activation = Activation::Tanh;
      else throw ConfigError("config: unknown activation '" + a + "'");
    }
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.l2_penalty = j.value("l2_penalty", cfg.l2_penalty);
    return cfg;
  }
  if (kind == "knn") {
    reject_unknown_keys(j, {"kind", "k"}, "classifier");
    KnnConfig cfg;
    cfg.k = j.value("k", cfg.k);
    if (cfg.k < 1) throw ConfigError("config: knn k must be >= 1");
    return cfg;
  }
  if (kind == "gnb") {
    reject_unknown_keys(j, {"kind"}, "classifier");
    return GnbConfig{};
  }
  throw ConfigError("config: unknown classifier kind '" + kind + "'");
}

SolverOptions solver_from_json(const json& j) {
  reject_unknown_keys(j, {"max_iters", "feasibility_tol", "step_min", "step_max",
                          "nonmonotone_window", "newton_tol", "opt_tol",
                          "max_newton_iters", "rescale_operator"},
                      "solver");
  SolverOptions s;
  s.max_iters = j.value("max_iters", s.max_iters);
  s.feasibility_tol = j.value("feasibility_tol", s.feasibility_tol);
  s.step_min = j.value("step_min", s.step_min);
  s.step_max = j.value("step_max", s.step_max);
  s.nonmonotone_window = j.value("nonmonotone_window", s.nonmonotone_window);
  s.newton_tol = j.value("newton_tol", s.newton_tol);
  s.opt_tol = j.value("opt_tol", s.opt_tol);
  s.max_newton_iters = j.value("max_newton_iters", s.max_newton_iters);
  s.rescale_operator = j.value("rescale_operator", s.rescale_operator);
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!is_power_of_two(side) || side < 2) {
    throw ConfigError("config: side must be a power of two >= 2, got " +
                      std::to_string(side));
  }
  if (wavelet_order < 1 || wavelet_order > 10) {
    throw ConfigError("config: wavelet_order must be in [1,10]");
  }
  if (m_values.empty()) throw ConfigError("config: m_values must be nonempty");
  const Index n = static_cast<Index>(side) * side;
  for (const Index m : m_values) {
    if (m < 1 || m > n) {
      throw ConfigError("config: m value " + std::to_string(m) + " outside [1, " +
                        std::to_string(n) + "]");
    }
  }
  if (folds < 2) throw ConfigError("config: folds must be >= 2");
  if (psnr_samples < 0) throw ConfigError("config: psnr_samples must be >= 0");
  if (const auto* syn = std::get_if<SyntheticSpec>(&dataset)) {
    if (syn->n_per_class < 1) throw ConfigError("config: n_per_class must be >= 1");
    if (syn->params.noise < 0) throw ConfigError("config: noise must be >= 0");
  }
  try {
    wavelet();
    resolved_level();
    solver.validate();
    if (const auto* mlp = std::get_if<MlpConfig>(&classifier)) mlp->validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

int ExperimentConfig::resolved_level() const {
  const int lmax = max_level(side, wavelet().filter_len());
  if (!level) return lmax;
  if (*level < 1 || *level > lmax) {
    throw ConfigError("config: level " + std::to_string(*level) + " outside [1, " +
                      std::to_string(lmax) + "] for side " + std::to_string(side) +
                      " and db" + std::to_string(wavelet_order));
  }
  return *level;
}

std::uint64_t ExperimentConfig::operator_seed_for_m(Index m) const {
  return derive_seed(operator_seed, static_cast<std::uint64_t>(m));
}

ExperimentConfig config_from_json_text(const std::string& text, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(name + ": invalid JSON: " + e.what());
  }
  try {
    reject_unknown_keys(j, {"dataset", "side", "wavelet_order", "level", "m_values",
                            "operator_seed", "fold_seed", "model_seed", "data_seed",
                            "folds", "classifier", "valence_map", "allow_upsample",
                            "psnr_samples", "solver", "output_dir"},
                        "top level");
    ExperimentConfig cfg;
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      const std::string kind = d.value("kind", "synthetic");
      if (kind == "synthetic") {
        SyntheticSpec s;
        s.n_per_class = d.value("n_per_class", s.n_per_class);
        s.params = synth_params_from_json(d);
        cfg.dataset = s;
      } else if (kind == "directory") {
        reject_unknown_keys(d, {"kind", "dir", "manifest"}, "dataset");
        DirectorySpec s;
        if (!d.contains("dir")) throw ConfigError("config: dataset.dir is required");
        s.dir = d.at("dir").get<std::string>();
        if (d.contains("manifest")) s.manifest = d.at("manifest").get<std::string>();
        cfg.dataset = s;
      } else {
        throw ConfigError("config: unknown dataset kind '" + kind + "'");
      }
    }
    cfg.side = j.value("side", cfg.side);
    cfg.wavelet_order = j.value("wavelet_order", cfg.wavelet_order);
    if (j.contains("level")) {
      if (j.at("level").is_string()) {
        if (j.at("level") != "max") throw ConfigError("config: level must be an int or \"max\"");
      } else {
        cfg.level = j.at("level").get<int>();
      }
    }
    if (j.contains("m_values")) cfg.m_values = j.at("m_values").get<std::vector<Index>>();
    cfg.operator_seed = j.value("operator_seed", cfg.operator_seed);
    cfg.fold_seed = j.value("fold_seed", cfg.fold_seed);
    cfg.model_seed = j.value("model_seed", cfg.model_seed);
    cfg.data_seed = j.value("data_seed", cfg.data_seed);
    cfg.folds = j.value("folds", cfg.folds);
    if (j.contains("classifier")) cfg.classifier = classifier_from_json(j.at("classifier"));
    if (j.contains("valence_map")) {
      for (const auto& [code, val] : j.at("valence_map").items()) {
        const auto expr = expression_from_code(code);
        if (!expr) throw ConfigError("config: unknown expression code '" + code + "'");
        const auto v = valence_from_name(val.get<std::string>());
        if (!v) throw ConfigError("config: unknown valence '" + val.get<std::string>() + "'");
        cfg.valence_map[static_cast<std::size_t>(*expr)] = *v;
      }
    }
    cfg.allow_upsample = j.value("allow_upsample", cfg.allow_upsample);
    cfg.psnr_samples = j.value("psnr_samples", cfg.psnr_samples);
    if (j.contains("solver")) cfg.solver = solver_from_json(j.at("solver"));
    if (j.contains("output_dir")) {
      cfg.output_dir = j.at("output_dir").get<std::string>();
    }
    return cfg;
  } catch (const ConfigError&) {
    throw;
  } catch (const json::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text, path.string());
}

// ---------------------------------------------------------------------------
// dataset resolution
// ---------------------------------------------------------------------------

namespace {

std::string synth_name(int class_idx, int per_class_idx, int serial) {
  const Expression expr = class_idx == 0   ? Expression::Happy
                          : class_idx == 1 ? Expression::Neutral
                                           : Expression::Sad;
  return std::string("SYN.") + expression_code(expr) + std::to_string(per_class_idx) +
         "." + std::to_string(serial);
}

}  // namespace

ResolvedDataset resolve_dataset(const ExperimentConfig& cfg) {
  ResolvedDataset out;
  if (const auto* syn = std::get_if<SyntheticSpec>(&cfg.dataset)) {
    auto items = synth_dataset(syn->n_per_class, cfg.side, cfg.data_seed, syn->params);
    int serial = 0;
    for (int i = 0; i < syn->n_per_class; ++i) {
      for (int cls = 0; cls < kValenceCount; ++cls) {
        auto& item = items[static_cast<std::size_t>(serial)];
        out.images.push_back(std::move(item.image));
        out.labels.push_back(item.label);
        out.names.push_back(synth_name(cls, i, serial));
        ++serial;
      }
    }
    return out;
  }

  const auto& spec = std::get<DirectorySpec>(cfg.dataset);
  std::vector<DatasetEntry> entries;
  try {
    entries = spec.manifest ? read_manifest_csv(*spec.manifest) : scan_dataset_dir(spec.dir);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
  for (const auto& entry : entries) {
    try {
      Image img = preprocess(load_image(entry.path), cfg.side, cfg.allow_upsample);
      out.images.push_back(std::move(img));
      out.labels.push_back(map_valence(entry.expression, cfg.valence_map));
      out.names.push_back(entry.path.stem().string());
    } catch (const std::exception& e) {
      out.failures.push_back(e.what());
    }
  }
  if (out.images.empty()) {
    throw DataError("dataset: no image could be ingested (" +
                    std::to_string(out.failures.size()) + " failure(s))");
  }
  return out;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const ExperimentConfig& cfg) {
  if (!std::holds_alternative<SyntheticSpec>(cfg.dataset)) {
    throw ConfigError("synth: config must use a synthetic dataset spec");
  }
  const ResolvedDataset data = resolve_dataset(cfg);
  const auto dir = cfg.output_dir / "synth";
  std::filesystem::create_directories(dir);

  std::vector<std::pair<std::string, std::string>> rows;  // filename, code
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    const std::string filename = data.names[i] + ".pgm";
    write_pgm(dir / filename, data.images[i]);
    const std::string code = data.names[i].substr(4, 2);
    rows.emplace_back(filename, code);
  }
  std::sort(rows.begin(), rows.end());

  CsvWriter csv({"path", "expression"});
  for (const auto& [file, code] : rows) csv.append_row({file, code});
  write_text_atomic(dir / "labels.csv", csv.str());

  std::cout << "synth: wrote " << data.images.size() << " images + labels.csv to "
            << dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// compress + manifest
// ---------------------------------------------------------------------------

namespace {

std::string archive_filename(Index m) {
  return "samples_m" + std::to_string(m) + ".bin";
}

struct ManifestEntry {
  Index m = 0;
  std::uint64_t operator_seed = 0;
  std::string file;
  double ratio = 0.0;
};

struct ManifestInfo {
  int side = 0;
  int wavelet_order = 0;
  int level = 0;
  Index n = 0;
  std::vector<std::string> names;
  std::vector<ManifestEntry> entries;
};

json manifest_to_json(const ManifestInfo& info) {
  json j;
  j["format"] = "cava-manifest-1";
  j["side"] = info.side;
  j["wavelet_order"] = info.wavelet_order;
  j["level"] = info.level;
  j["n"] = info.n;
  j["sample_count"] = info.names.size();
  j["names"] = info.names;
  json entries = json::array();
  for (const auto& e : info.entries) {
    entries.push_back({{"m", e.m},
                       {"operator_seed", e.operator_seed},
                       {"file", e.file},
                       {"compression_ratio_percent", e.ratio}});
  }
  j["m_values"] = entries;
  return j;
}

ManifestInfo manifest_from_json(const json& j, const std::string& name) {
  if (j.value("format", "") != "cava-manifest-1") {
    throw DataError(name + ": unrecognized manifest format");
  }
  ManifestInfo info;
  info.side = j.at("side").get<int>();
  info.wavelet_order = j.at("wavelet_order").get<int>();
  info.level = j.at("level").get<int>();
  info.n = j.at("n").get<Index>();
  info.names = j.at("names").get<std::vector<std::string>>();
  for (const auto& e : j.at("m_values")) {
    info.entries.push_back({e.at("m").get<Index>(),
                            e.at("operator_seed").get<std::uint64_t>(),
                            e.at("file").get<std::string>(),
                            e.at("compression_ratio_percent").get<double>()});
  }
  return info;
}

std::optional<ManifestInfo> try_load_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid manifest JSON: " + e.what());
  }
  try {
    return manifest_from_json(j, path.string());
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
}

void check_manifest_matches(const ManifestInfo& info, const ExperimentConfig& cfg) {
  if (info.side != cfg.side || info.wavelet_order != cfg.wavelet_order ||
      info.level != cfg.resolved_level() ||
      info.n != static_cast<Index>(cfg.side) * cfg.side) {
    throw DataError("manifest.json does not match the configured side/wavelet/level; "
                    "re-run compress or point output_dir elsewhere");
  }
}

SampleArchive build_archive(const ExperimentConfig& cfg, const ResolvedDataset& data,
                            Index m) {
  const WaveletSpec spec = cfg.wavelet();
  const int level = cfg.resolved_level();
  const Index n = static_cast<Index>(cfg.side) * cfg.side;
  const SensingOperator op(m, n, cfg.operator_seed_for_m(m));
  SampleArchive archive;
  archive.m = m;
  archive.n = n;
  archive.operator_seed = op.seed();
  archive.samples.reserve(data.images.size());
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    CompressedSample s = compress_image(data.images[i], spec, level, op);
    s.label = data.labels[i];
    archive.samples.push_back(std::move(s));
  }
  return archive;
}

// Loads the archive for m from the manifest when present and consistent;
// otherwise computes it in memory from the resolved dataset.
SampleArchive obtain_archive(const ExperimentConfig& cfg,
                             const std::optional<ManifestInfo>& manifest,
                             const ResolvedDataset& data, Index m) {
  if (manifest) {
    for (const auto& e : manifest->entries) {
      if (e.m != m) continue;
      const auto path = cfg.output_dir / e.file;
      if (!std::filesystem::exists(path)) break;
      SampleArchive archive = read_sample_archive(path);
      if (archive.m != m || archive.operator_seed != e.operator_seed) {
        throw DataError(path.string() + ": archive does not match manifest entry");
      }
      return archive;
    }
  }
  return build_archive(cfg, data, m);
}

}  // namespace

int cmd_compress(const ExperimentConfig& cfg) {
  const ResolvedDataset data = resolve_dataset(cfg);
  std::filesystem::create_directories(cfg.output_dir);

  ManifestInfo info;
  info.side = cfg.side;
  info.wavelet_order = cfg.wavelet_order;
  info.level = cfg.resolved_level();
  info.n = static_cast<Index>(cfg.side) * cfg.side;
  info.names = data.names;

  for (const Index m : cfg.m_values) {
    SampleArchive archive = build_archive(cfg, data, m);
    const std::string file = archive_filename(m);
    write_sample_archive(cfg.output_dir / file, archive);
    info.entries.push_back({m, archive.operator_seed, file, compression_ratio(m, info.n)});
    std::cout << "compress: m=" << m << " -> " << file << " (" << archive.samples.size()
              << " samples)\n";
  }
  write_text_atomic(cfg.output_dir / "manifest.json", manifest_to_json(info).dump(2) + "\n");

  for (const auto& f : data.failures) std::cerr << "compress: skipped: " << f << "\n";
  return static_cast<int>(data.failures.size());
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

SweepReport run_sweep(const ExperimentConfig& cfg) {
  const auto manifest = try_load_manifest(cfg.output_dir);
  if (manifest) check_manifest_matches(*manifest, cfg);
  const ResolvedDataset data = resolve_dataset(cfg);
  if (manifest && manifest->names != data.names) {
    throw DataError("manifest.json sample names do not match the configured dataset");
  }
  const std::uint64_t cv_seed = derive_seed(cfg.fold_seed, cfg.model_seed);

  SweepReport report;
  for (const Index m : cfg.m_values) {
    const auto t0 = std::chrono::steady_clock::now();
    const SampleArchive archive = obtain_archive(cfg, manifest, data, m);

    Matrix X(static_cast<Index>(archive.samples.size()), m);
    std::vector<Valence> y;
    y.reserve(archive.samples.size());
    for (std::size_t i = 0; i < archive.samples.size(); ++i) {
      if (!archive.samples[i].label) {
        throw DataError("sweep: archive for m=" + std::to_string(m) +
                        " contains unlabeled samples");
      }
      X.row(static_cast<Index>(i)) = archive.samples[i].y.transpose();
      y.push_back(*archive.samples[i].label);
    }

    SweepRow row;
    row.m = m;
    row.compression_ratio_percent = compression_ratio(m, archive.n);
    row.report = cross_validate(cfg.classifier, X, y, cfg.folds, cv_seed);
    row.train_accuracy = row.report.train_accuracy;
    row.test_accuracy = row.report.accuracy;

    if (cfg.psnr_samples > 0) {
      const WaveletSpec spec = cfg.wavelet();
      const int level = cfg.resolved_level();
      const SensingOperator op(m, archive.n, archive.operator_seed);
      const int count = std::min<int>(cfg.psnr_samples,
                                      static_cast<int>(archive.samples.size()));
      double sum = 0.0;
      for (int i = 0; i < count; ++i) {
        const auto [img, rec] = reconstruct_image(archive.samples[static_cast<std::size_t>(i)],
                                                  op, spec, level, cfg.side, cfg.solver);
        sum += psnr(data.images[static_cast<std::size_t>(i)], img);
      }
      row.mean_psnr = sum / count;
    }

    row.wall_time_seconds = elapsed_seconds(t0);
    std::cout << "sweep: m=" << m << " test_accuracy=" << fmt("%.4f", row.test_accuracy)
              << " train_accuracy=" << fmt("%.4f", row.train_accuracy) << " ("
              << fmt("%.2f", row.wall_time_seconds) << " s)\n";
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

void write_sweep_outputs(const ExperimentConfig& cfg, const SweepReport& report) {
  std::filesystem::create_directories(cfg.output_dir);

  CsvWriter csv({"m", "compression_ratio_percent", "train_accuracy", "test_accuracy",
                 "mean_psnr", "wall_time_seconds"});
  for (const auto& r : report.rows) {
    csv.append_row({std::to_string(r.m), fmt("%.10g", r.compression_ratio_percent),
                    fmt("%.6f", r.train_accuracy), fmt("%.6f", r.test_accuracy),
                    r.mean_psnr ? fmt("%.4f", *r.mean_psnr) : "",
                    fmt("%.3f", r.wall_time_seconds)});
  }
  write_text_atomic(cfg.output_dir / "report.csv", csv.str());

  // plot-ready series, ascending m
  auto sorted = report.rows;
  std::sort(sorted.begin(), sorted.end(),
            [](const SweepRow& a, const SweepRow& b) { return a.m < b.m; });
  CsvWriter series({"m", "test_accuracy", "train_accuracy"});
  for (const auto& r : sorted) {
    series.append_row({std::to_string(r.m), fmt("%.6f", r.test_accuracy),
                       fmt("%.6f", r.train_accuracy)});
  }
  write_text_atomic(cfg.output_dir / "accuracy_vs_m.csv", series.str());

  json j;
  j["format"] = "cava-sweep-1";
  j["classifier"] = classifier_name(cfg.classifier);
  j["folds"] = cfg.folds;
  json rows = json::array();
  for (const auto& r : report.rows) {
    json confusion = json::array();
    for (int a = 0; a < kValenceCount; ++a) {
      json line = json::array();
      for (int b = 0; b < kValenceCount; ++b) line.push_back(r.report.confusion(a, b));
      confusion.push_back(line);
    }
    json row{{"m", r.m},
             {"compression_ratio_percent", r.compression_ratio_percent},
             {"train_accuracy", r.train_accuracy},
             {"test_accuracy", r.test_accuracy},
             {"macro_f1", r.report.macro_f1},
             {"per_fold", r.report.per_fold},
             {"confusion", confusion},
             {"wall_time_seconds", r.wall_time_seconds}};
    if (r.mean_psnr) row["mean_psnr"] = *r.mean_psnr;
    rows.push_back(row);
  }
  j["rows"] = rows;
  write_text_atomic(cfg.output_dir / "report.json", j.dump(2) + "\n");
}

}  // namespace

int cmd_sweep(const ExperimentConfig& cfg) {
  const SweepReport report = run_sweep(cfg);
  write_sweep_outputs(cfg, report);
  std::cout << "sweep: wrote report.csv, accuracy_vs_m.csv, report.json to "
            << cfg.output_dir.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int cmd_reconstruct(const ExperimentConfig& cfg, const std::vector<Index>& m_list,
                    const std::vector<int>& ids) {
  const auto manifest = try_load_manifest(cfg.output_dir);
  if (manifest) check_manifest_matches(*manifest, cfg);
  const ResolvedDataset data = resolve_dataset(cfg);
  if (manifest && manifest->names != data.names) {
    throw DataError("manifest.json sample names do not match the configured dataset");
  }
  const WaveletSpec spec = cfg.wavelet();
  const int level = cfg.resolved_level();

  std::vector<Index> ms = m_list.empty() ? cfg.m_values : m_list;
  std::sort(ms.begin(), ms.end(), std::greater<Index>());  // gallery order: descending m
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());

  for (const int id : ids) {
    if (id < 0 || id >= static_cast<int>(data.images.size())) {
      throw DataError("reconstruct: image id " + std::to_string(id) +
                      " outside [0, " + std::to_string(data.images.size()) + ")");
    }
  }

  std::map<Index, SampleArchive> archives;
  std::map<Index, SensingOperator> operators;
  if (!ids.empty()) {
    for (const Index m : ms) {
      SampleArchive archive = obtain_archive(cfg, manifest, data, m);
      for (const int id : ids) {
        if (id >= static_cast<int>(archive.samples.size())) {
          throw DataError("reconstruct: archive for m=" + std::to_string(m) +
                          " has fewer samples than requested id");
        }
      }
      operators.emplace(m, SensingOperator(m, archive.n, archive.operator_seed));
      archives.emplace(m, std::move(archive));
    }
  }

  const auto dir = cfg.output_dir / "recon";
  std::filesystem::create_directories(dir);
  CsvWriter csv({"name", "m", "psnr_db", "residual_norm", "l1_norm", "iterations",
                 "converged", "wall_time_seconds"});
  int nonconverged = 0;

  for (const int id : ids) {
    const Image& original = data.images[static_cast<std::size_t>(id)];
    const std::string& name = data.names[static_cast<std::size_t>(id)];
    const auto img_dir = dir / name;
    std::filesystem::create_directories(img_dir);
    write_pgm(img_dir / "original.pgm", original);

    for (const Index m : ms) {
      const auto t0 = std::chrono::steady_clock::now();
      const SampleArchive& archive = archives.at(m);
      const SensingOperator& op = operators.at(m);
      const auto [img, rec] = reconstruct_image(archive.samples[static_cast<std::size_t>(id)],
                                                op, spec, level, cfg.side, cfg.solver);
      const double quality = psnr(original, img);
      nonconverged += !rec.converged;

      const std::string stem = "m" + std::to_string(m);
      write_pgm(img_dir / (stem + ".pgm"), normalize_minmax(img));
      write_raw_f64(img_dir / (stem + ".f64"), img);
      csv.append_row({name, std::to_string(m), fmt("%.4f", quality),
                      fmt("%.6e", rec.residual_norm), fmt("%.6e", rec.l1_norm),
                      std::to_string(rec.iterations), rec.converged ? "true" : "false",
                      fmt("%.3f", elapsed_seconds(t0))});
      std::cout << "reconstruct: " << name << " m=" << m << " psnr="
                << fmt("%.2f", quality) << " dB" << (rec.converged ? "" : " (not converged)")
                << "\n";
    }
  }
  write_text_atomic(dir / "recon_metrics.csv", csv.str());
  if (nonconverged > 0) {
    std::cerr << "reconstruct: " << nonconverged << " solve(s) did not reach the residual "
              << "target; see recon_metrics.csv\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

std::vector<int> parse_id_list(const std::string& text) {
  std::vector<int> ids;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    try {
      std::size_t used = 0;
      ids.push_back(std::stoi(cur, &used));
      if (used != cur.size()) throw std::invalid_argument(cur);
    } catch (const std::exception&) {
      throw ConfigError("reconstruct: invalid sample id '" + cur + "'");
    }
    cur.clear();
  };
  for (const char c : text) {
    if (c == ',') {
      flush();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur.push_back(c);
    }
  }
  flush();
  return ids;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"cava: compressed acquisition of faces with valence analysis"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "JSON experiment configuration")->check(CLI::ExistingFile);

  // common overrides (flags win over the config file)
  std::optional<std::string> output_dir;
  std::optional<int> side, folds, wavelet_order, psnr_samples, epochs;
  std::optional<std::string> level, classifier_kind;
  std::optional<std::uint64_t> operator_seed, fold_seed, model_seed, data_seed;
  std::vector<Index> m_override;
  app.add_option("--output-dir", output_dir, "output directory");
  app.add_option("--side", side, "square image side (power of two)");
  app.add_option("--wavelet", wavelet_order, "Daubechies order (1..10)");
  app.add_option("--level", level, "decomposition level or 'max'");
  app.add_option("--folds", folds, "cross-validation folds");
  app.add_option("--classifier", classifier_kind, "mlp | knn | gnb");
  app.add_option("--epochs", epochs, "MLP training epochs");
  app.add_option("--m", m_override, "measurement counts (repeatable)");
  app.add_option("--operator-seed", operator_seed, "sensing operator master seed");
  app.add_option("--fold-seed", fold_seed, "fold split seed");
  app.add_option("--model-seed", model_seed, "model init seed");
  app.add_option("--data-seed", data_seed, "synthetic corpus seed");
  app.add_option("--psnr-samples", psnr_samples,
                 "images reconstructed per m during sweep (0 = off)");

  auto* synth = app.add_subcommand("synth", "materialize the synthetic corpus");
  auto* compress = app.add_subcommand("compress", "compressively acquire the dataset");
  auto* sweep = app.add_subcommand("sweep", "cross-validated accuracy across m values");
  auto* reconstruct = app.add_subcommand("reconstruct", "basis-pursuit reconstruction gallery");

  std::vector<Index> recon_m;
  std::string recon_ids_text;
  reconstruct->add_option("--m", recon_m, "m values to reconstruct (default: config m_values)");
  auto* ids_opt = reconstruct->add_option(
      "--ids", recon_ids_text, "comma-separated sample ids; empty = none (default: first 4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfigError;
  }

  try {
    ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
    if (output_dir) cfg.output_dir = *output_dir;
    if (side) cfg.side = *side;
    if (wavelet_order) cfg.wavelet_order = *wavelet_order;
    if (level) {
      if (*level == "max") cfg.level.reset();
      else cfg.level = std::stoi(*level);
    }
    if (folds) cfg.folds = *folds;
    if (classifier_kind) {
      if (*classifier_kind == "mlp") {
        if (!std::holds_alternative<MlpConfig>(cfg.classifier)) cfg.classifier = MlpConfig{};
      } else if (*classifier_kind == "knn") {
        if (!std::holds_alternative<KnnConfig>(cfg.classifier)) cfg.classifier = KnnConfig{};
      } else if (*classifier_kind == "gnb") {
        cfg.classifier = GnbConfig{};
      } else {
        throw ConfigError("unknown classifier '" + *classifier_kind + "'");
      }
    }
    if (epochs) {
      if (auto* mlp = std::get_if<MlpConfig>(&cfg.classifier)) mlp->epochs = *epochs;
    }
    if (!m_override.empty()) cfg.m_values = m_override;
    if (operator_seed) cfg.operator_seed = *operator_seed;
    if (fold_seed) cfg.fold_seed = *fold_seed;
    if (model_seed) cfg.model_seed = *model_seed;
    if (data_seed) cfg.data_seed = *data_seed;
    if (psnr_samples) cfg.psnr_samples = *psnr_samples;
    cfg.validate();

    int failures = 0;
    if (synth->parsed()) {
      failures = cmd_synth(cfg);
    } else if (compress->parsed()) {
      failures = cmd_compress(cfg);
    } else if (sweep->parsed()) {
      failures = cmd_sweep(cfg);
    } else if (reconstruct->parsed()) {
      std::vector<int> ids;
      if (ids_opt->count() > 0) {
        ids = parse_id_list(recon_ids_text);
      } else {
        const ResolvedDataset probe = resolve_dataset(cfg);
        const int count = std::min<int>(4, static_cast<int>(probe.images.size()));
        for (int i = 0; i < count; ++i) ids.push_back(i);
      }
      failures = cmd_reconstruct(cfg, recon_m, ids);
    }
    return failures > 0 ? kExitPartialFailure : kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDataError;
  }
}

}  // namespace cava
