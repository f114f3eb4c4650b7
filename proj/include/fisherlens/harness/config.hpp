#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fisherlens/attacks.hpp"
#include "fisherlens/data.hpp"
#include "fisherlens/network.hpp"
#include "fisherlens/training.hpp"

namespace fisherlens::harness {

/// Where the train/test data come from.
struct DatasetSource {
  enum class Kind { Synthetic, Glyphs, Idx };
  Kind kind = Kind::Synthetic;
  SynthSpec synth{};
  GlyphSpec glyphs{};
  // IDX: either a train pair plus an optional test pair, or one pair + split.
  std::filesystem::path train_images, train_labels;
  std::filesystem::path test_images, test_labels;
  std::size_t limit = 5000;
  std::size_t test_limit = 1000;
  double train_fraction = 0.8;
  /// Forces num_classes (0 keeps the value inferred from labels).
  std::size_t num_classes = 0;
};

struct NamedArchitecture {
  std::string name;
  Architecture arch;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DatasetSource dataset{};
  Architecture arch{};
  bool arch_specified = false;  // eval: an architecture to check the checkpoint against
  std::vector<NamedArchitecture> sweep;  // sweep command only
  TrainConfig train{};
  EvalConfig eval{};
  AttackConfig fgsm{};
  AttackConfig fisher_eig{};
  int checkpoint_every = 0;  // 0: final checkpoint only
  std::filesystem::path checkpoint;  // eval command only
};

struct PlotConfig {
  enum class Kind { AccCcklLoss, FisherTrajectory, NatVsAdvOverlay };
  Kind kind = Kind::FisherTrajectory;
  std::vector<std::filesystem::path> csv;
  std::vector<std::string> labels;
  std::filesystem::path output = "plot.svg";
};

struct SynthIdxConfig {
  GlyphSpec glyphs{};
  std::filesystem::path output_dir = "data";
  std::string prefix = "glyphs";
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
};

enum class CommandKind { Train, Eval, Sweep, Plot, SynthIdx };

/// Parses JSON config text. Unknown keys, wrong types and failed invariants
/// raise ErrorKind::Config naming the JSON path (and line/column for syntax
/// errors). Seeds of sub-configs that the file leaves unset are derived from
/// the top-level seed.
ExperimentConfig parse_experiment_config(const std::string& text, CommandKind command,
                                         std::optional<std::uint64_t> seed_override = {});
PlotConfig parse_plot_config(const std::string& text);
SynthIdxConfig parse_synth_idx_config(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);

/// Canonical JSON of every field that affects results (output_dir excluded);
/// object keys sorted, so field order in the source file is irrelevant.
std::string canonical_config(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

/// Materializes (train, test) for a config; honors named RNG sub-streams.
std::pair<Dataset, Dataset> load_datasets(const DatasetSource& src, std::uint64_t seed);

}  // namespace fisherlens::harness
