// fisherlens train|eval|sweep|plot|synth-idx --config <path> [--out <dir>] [--seed <u64>]
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fisherlens/fisherlens.h"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* sub, Args& args) {
  sub->add_option("--config", args.config, "config file (JSON)")->required();
  sub->add_option("--out", args.out, "output directory (overrides the config)");
  sub->add_option("--seed", args.seed, "global seed (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fisherlens: input-space Fisher diagnostics for classifiers"};
  app.set_version_flag("--version", std::string(fl_version()));
  app.require_subcommand(1);

  using Command = fl_status (*)(const char*, const char*, const uint64_t*);
  struct Entry {
    const char* name;
    const char* help;
    Command fn;
  };
  const Entry entries[] = {
      {"train", "train one model and log per-epoch metrics", fl_cmd_train},
      {"eval", "evaluate a checkpoint (clean, attacks, CCKL, Fisher)", fl_cmd_eval},
      {"sweep", "TRADES-train several architectures and tabulate accuracies", fl_cmd_sweep},
      {"plot", "render metrics CSVs as SVG charts", fl_cmd_plot},
      {"synth-idx", "render synthetic glyph images as IDX files", fl_cmd_synth_idx},
  };
  Args args;
  Command chosen = nullptr;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    add_common(sub, args);
    sub->callback([&chosen, fn = e.fn] { chosen = fn; });
  }
  CLI11_PARSE(app, argc, argv);

  const std::uint64_t seed = args.seed.value_or(0);
  const fl_status st = chosen(args.config.c_str(), args.out.empty() ? nullptr : args.out.c_str(),
                              args.seed ? &seed : nullptr);
  if (st != FL_OK) {
    std::fprintf(stderr, "error (%s): %s\n", fl_status_name(st), fl_last_error());
    return 1 + static_cast<int>(st);
  }
  std::printf("%s\n", fl_last_summary());
  return 0;
}
