#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cava/classify.hpp"
#include "cava/dataset.hpp"
#include "cava/recover.hpp"
#include "cava/sensing.hpp"
#include "cava/types.hpp"
#include "cava/wavelet.hpp"

namespace cava {

/// Bad configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Unreadable or inconsistent data (CLI exit code 2).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitPartialFailure = 3;

struct SyntheticSpec {
  int n_per_class = 40;
  SynthParams params;
};

struct DirectorySpec {
  std::filesystem::path dir;
  std::optional<std::filesystem::path> manifest;  // CSV of (path, expression)
};

struct ExperimentConfig {
  std::variant<SyntheticSpec, DirectorySpec> dataset = SyntheticSpec{};
  int side = 64;
  int wavelet_order = 2;
  std::optional<int> level;  // nullopt = max_level(side, filter_len)
  std::vector<Index> m_values = {800, 500, 200, 100, 50, 20, 10, 5, 2, 1};
  std::uint64_t operator_seed = 1;
  std::uint64_t fold_seed = 2;
  std::uint64_t model_seed = 3;
  std::uint64_t data_seed = 4;
  int folds = 5;
  ClassifierConfig classifier = MlpConfig{};
  ValenceMap valence_map = default_valence_map();
  bool allow_upsample = false;
  int psnr_samples = 0;  // images reconstructed per m during a sweep (0 = off)
  SolverOptions solver;
  std::filesystem::path output_dir = "out";

  void validate() const;  // throws ConfigError
  WaveletSpec wavelet() const { return WaveletSpec::daubechies(wavelet_order); }
  int resolved_level() const;
  std::uint64_t operator_seed_for_m(Index m) const;
};

/// Parses the JSON config document; unknown keys raise ConfigError.
ExperimentConfig config_from_json_text(const std::string& text, const std::string& name);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Images resolved to side x side rasters with valence labels. Per-file
/// ingestion failures are collected, not fatal.
struct ResolvedDataset {
  std::vector<Image> images;
  std::vector<Valence> labels;
  std::vector<std::string> names;
  std::vector<std::string> failures;
};

ResolvedDataset resolve_dataset(const ExperimentConfig& cfg);

/// synth: materialize the synthetic corpus as PGM files plus labels.csv.
/// Returns the number of per-item failures (0 on success).
int cmd_synth(const ExperimentConfig& cfg);

/// compress: one sample archive per m value plus manifest.json binding the
/// per-m operator seeds (the manifest is the reconstruction secret).
int cmd_compress(const ExperimentConfig& cfg);

struct SweepRow {
  Index m = 0;
  double compression_ratio_percent = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::optional<double> mean_psnr;
  double wall_time_seconds = 0.0;
  EvalReport report;
};

struct SweepReport {
  std::vector<SweepRow> rows;  // one per requested m, config order
};

/// sweep: cross-validate at every m; writes report.csv / report.json and an
/// ascending-m accuracy series (accuracy_vs_m.csv).
SweepReport run_sweep(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);

/// reconstruct: basis-pursuit galleries for the given sample ids at each m,
/// plus a metrics sidecar CSV; non-convergence is flagged per image, not fatal.
int cmd_reconstruct(const ExperimentConfig& cfg, const std::vector<Index>& m_list,
                    const std::vector<int>& ids);

/// Full command-line entry point (subcommands synth / compress / sweep /
/// reconstruct); returns the process exit code.
int cli_main(int argc, const char* const* argv);

}  // namespace cava
