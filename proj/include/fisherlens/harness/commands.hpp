#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fisherlens/harness/config.hpp"

namespace fisherlens::harness {

/// Command-line overrides applied on top of a config file.
struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
};

struct RunManifest {
  std::string config_hash;
  std::string command;
  std::uint64_t seed = 0;
  std::filesystem::path metrics_csv;
  std::vector<std::filesystem::path> checkpoints;
  double wall_clock_seconds = 0.0;
  double seconds_per_epoch = 0.0;
  int epochs_completed = 0;
  bool diverged = false;
  std::string diagnostic;
};

std::string manifest_json(const RunManifest& m);

/// Exclusive claim on an output directory, released on destruction.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Trains one model; writes metrics.csv, checkpoints and manifest.json.
RunManifest cmd_train(const std::filesystem::path& config_path, const Overrides& ov = {});
RunManifest train_from_config(const ExperimentConfig& cfg, const std::string& command = "train");

struct EvalReport {
  std::size_t num_test = 0;
  double clean_accuracy = 0.0;
  double robust_pgd = 0.0;
  double robust_cw = 0.0;
  double robust_fgsm = 0.0;
  double robust_fisher_eig = 0.0;
  double mean_cckl = 0.0;
  double mean_fisher_fro = 0.0;
  double mean_lambda_max = 0.0;
  double mean_cramer_rao = 0.0;
  std::size_t lin_bound_violations = 0;
};

std::string eval_report_json(const EvalReport& r, const ExperimentConfig& cfg);

/// Evaluates a checkpoint; writes eval_report.json.
EvalReport cmd_eval(const std::filesystem::path& config_path, const Overrides& ov = {});
EvalReport eval_from_config(const ExperimentConfig& cfg);

struct SweepRow {
  std::string name;
  double clean_acc = 0.0;
  double pgd_acc = 0.0;
  double cw_acc = 0.0;
};

/// TRADES-trains each listed architecture under the shared seed and
/// schedule; writes <out>/<name>/..., sweep_table.csv and sweep_table.txt.
std::vector<SweepRow> cmd_sweep(const std::filesystem::path& config_path, const Overrides& ov = {});
std::vector<SweepRow> sweep_from_config(const ExperimentConfig& cfg);

/// Table text rendered from the final rows of per-architecture CSVs.
std::string sweep_table_csv(const std::vector<SweepRow>& rows);
std::string sweep_table_text(const std::vector<SweepRow>& rows);

/// Renders the configured SVG; returns the written path.
std::filesystem::path cmd_plot(const std::filesystem::path& config_path, const Overrides& ov = {});

/// Renders glyph images into IDX train/test files; returns the four paths.
std::vector<std::filesystem::path> cmd_synth_idx(const std::filesystem::path& config_path,
                                                 const Overrides& ov = {});

}  // namespace fisherlens::harness
