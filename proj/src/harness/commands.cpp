#include "fisherlens/harness/commands.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fisherlens/attacks.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/harness/metrics.hpp"
#include "fisherlens/harness/plot.hpp"
#include "fisherlens/rng.hpp"
#include "fisherlens/version.hpp"

namespace fisherlens::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double accuracy_on(const Network& net, const Tensor& xs, std::span<const std::size_t> ys) {
  if (ys.empty()) return 0.0;
  const Tensor probs = net.record(xs).probs;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const auto row = probs.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    correct += best == ys[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ys.size());
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

ExperimentConfig load_config(const fs::path& path, CommandKind kind, const Overrides& ov) {
  ExperimentConfig cfg = parse_experiment_config(read_text_file(path), kind, ov.seed);
  if (ov.out_dir) cfg.output_dir = *ov.out_dir;
  return cfg;
}

fs::path checkpoint_name(const fs::path& dir, int epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_epoch_%03d.flnet", epoch);
  return dir / buf;
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
  json j;
  j["config_hash"] = m.config_hash;
  j["command"] = m.command;
  j["seed"] = m.seed;
  j["versions"] = {{"fisherlens", kVersion},
                   {"metrics_schema", kMetricsSchemaVersion},
                   {"checkpoint_format", kCheckpointVersion}};
  j["metrics_csv"] = m.metrics_csv.string();
  json cks = json::array();
  for (const auto& c : m.checkpoints) cks.push_back(c.string());
  j["checkpoints"] = cks;
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  j["seconds_per_epoch"] = m.seconds_per_epoch;
  j["epochs_completed"] = m.epochs_completed;
  j["diverged"] = m.diverged;
  j["diagnostic"] = m.diagnostic;
  return j.dump(2) + "\n";
}

OutputLock::OutputLock(const fs::path& dir) {
  fs::create_directories(dir);
  path_ = dir / ".fisherlens.lock";
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    path_.clear();
    fail(ErrorKind::State, "output directory " + dir.string() +
                               " is locked by another run (remove .fisherlens.lock if stale)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  if (path_.empty()) return;
  std::error_code ec;
  fs::remove(path_, ec);
}

RunManifest train_from_config(const ExperimentConfig& cfg, const std::string& command) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = cfg.output_dir;
  OutputLock lock(dir);
  auto [train, test] = load_datasets(cfg.dataset, cfg.seed);

  RunManifest m;
  m.config_hash = config_hash(cfg);
  m.command = command;
  m.seed = cfg.seed;
  m.metrics_csv = dir / "metrics.csv";

  std::vector<MetricRecord> rows;
  TrainingHooks hooks;
  hooks.on_epoch = [&](const MetricRecord& rec, const Network& net) {
    rows.push_back(rec);
    write_file_atomic(m.metrics_csv, metrics_csv(rows));
    if (cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0) {
      const fs::path p = checkpoint_name(dir, rec.epoch);
      save_checkpoint(net, p);
      m.checkpoints.push_back(p);
    }
  };
  TrainingRun run = run_training(train, test, cfg.arch, cfg.train, cfg.eval, hooks);
  if (rows.empty()) write_file_atomic(m.metrics_csv, metrics_csv(rows));
  const fs::path final_ck = dir / "checkpoint_final.flnet";
  save_checkpoint(run.final_net, final_ck);
  m.checkpoints.push_back(final_ck);

  m.epochs_completed = static_cast<int>(run.records.size());
  m.diverged = run.diverged;
  m.diagnostic = run.diagnostic;
  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  m.seconds_per_epoch = m.epochs_completed ? m.wall_clock_seconds / m.epochs_completed : 0.0;
  write_file_atomic(dir / "manifest.json", manifest_json(m));
  return m;
}

RunManifest cmd_train(const fs::path& config_path, const Overrides& ov) {
  return train_from_config(load_config(config_path, CommandKind::Train, ov));
}

std::string eval_report_json(const EvalReport& r, const ExperimentConfig& cfg) {
  json j;
  j["checkpoint"] = cfg.checkpoint.string();
  j["config_hash"] = config_hash(cfg);
  j["num_test"] = r.num_test;
  j["clean_accuracy"] = r.clean_accuracy;
  j["robust_accuracy"] = {{"pgd", r.robust_pgd},
                          {"cw", r.robust_cw},
                          {"fgsm", r.robust_fgsm},
                          {"fisher_eig", r.robust_fisher_eig}};
  j["mean_cckl"] = r.mean_cckl;
  j["mean_fisher_fro"] = r.mean_fisher_fro;
  j["mean_lambda_max"] = r.mean_lambda_max;
  j["mean_cramer_rao"] = finite_or_null(r.mean_cramer_rao);
  j["lin_bound_violations"] = r.lin_bound_violations;
  return j.dump(2) + "\n";
}

EvalReport eval_from_config(const ExperimentConfig& cfg) {
  const Network net = load_checkpoint(cfg.checkpoint);
  if (cfg.arch_specified && !(cfg.arch == net.arch()))
    fail(ErrorKind::Format, "checkpoint " + cfg.checkpoint.string() +
                                " does not match the configured architecture");
  auto [train, test] = load_datasets(cfg.dataset, cfg.seed);
  if (test.dim() != net.input_dim())
    fail(ErrorKind::Format, "checkpoint input_dim " + std::to_string(net.input_dim()) +
                                " does not match dataset dimension " + std::to_string(test.dim()));
  if (test.num_classes > net.num_classes())
    fail(ErrorKind::Format, "dataset has more classes than checkpoint " + cfg.checkpoint.string());

  const std::uint64_t eval_seed = Rng::derive(cfg.seed, "eval").next_u64();
  const auto probe_rows = sample_rows(test.size(), cfg.eval.fisher_probes,
                                      Rng::derive(cfg.seed, "probe").next_u64());
  const auto adv_rows =
      sample_rows(test.size(), cfg.eval.adv_eval_points ? cfg.eval.adv_eval_points : test.size(),
                  Rng::derive(cfg.seed, "adv_rows").next_u64());
  EvalConfig ec = cfg.eval;
  ec.pairs.seed = cfg.eval.pairs.seed ^ Rng::derive(cfg.seed, "pairs").next_u64();
  const Evaluation ev = evaluate(net, test, ec, probe_rows, adv_rows, eval_seed);

  EvalReport r;
  r.num_test = test.size();
  r.clean_accuracy = ev.clean_acc;
  r.robust_pgd = ev.adv_acc_pgd;
  r.robust_cw = ev.adv_acc_cw;
  r.mean_cckl = ev.cckl_sym;
  r.mean_fisher_fro = ev.avg_fisher_fro;
  r.mean_lambda_max = ev.avg_lambda_max;
  r.mean_cramer_rao = ev.avg_cramer_rao;
  r.lin_bound_violations = ev.lin.violations;
  if (cfg.eval.adversarial && !adv_rows.empty()) {
    const Dataset attacked = test.subset(adv_rows);
    AttackConfig f = cfg.fgsm;
    f.clip_lo = test.range_lo;
    f.clip_hi = test.range_hi;
    r.robust_fgsm = accuracy_on(net, fgsm_batch(net, attacked.xs, attacked.ys, f).x_adv, attacked.ys);
    AttackConfig e = cfg.fisher_eig;
    e.clip_lo = test.range_lo;
    e.clip_hi = test.range_hi;
    Tensor adv = attacked.xs;
    for (std::size_t i = 0; i < attacked.size(); ++i) {
      const auto res = fisher_eig_attack(net, attacked.x(i), e);
      std::copy(res.x_adv.begin(), res.x_adv.end(), adv.row(i).begin());
    }
    r.robust_fisher_eig = accuracy_on(net, adv, attacked.ys);
  } else {
    r.robust_pgd = r.robust_cw = r.robust_fgsm = r.robust_fisher_eig = r.clean_accuracy;
  }
  return r;
}

EvalReport cmd_eval(const fs::path& config_path, const Overrides& ov) {
  const ExperimentConfig cfg = load_config(config_path, CommandKind::Eval, ov);
  OutputLock lock(cfg.output_dir);
  const EvalReport r = eval_from_config(cfg);
  write_file_atomic(cfg.output_dir / "eval_report.json", eval_report_json(r, cfg));
  return r;
}

std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
  std::string out = "model,clean_acc,pgd_acc,cw_acc\n";
  for (const auto& r : rows)
    out += r.name + "," + format_number(r.clean_acc) + "," + format_number(r.pgd_acc) + "," +
           format_number(r.cw_acc) + "\n";
  return out;
}

std::string sweep_table_text(const std::vector<SweepRow>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  auto pad = [](std::string s, std::size_t n) {
    s.resize(std::max(n, s.size()), ' ');
    return s;
  };
  auto pct = [](double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * v);
    return std::string(buf);
  };
  std::string out = pad("Model", w) + "  Standard       PGD        CW\n";
  out += std::string(w + 32, '-') + "\n";
  for (const auto& r : rows)
    out += pad(r.name, w) + "  " + pct(r.clean_acc) + "  " + pct(r.pgd_acc) + "  " + pct(r.cw_acc) + "\n";
  return out;
}

std::vector<SweepRow> sweep_from_config(const ExperimentConfig& cfg) {
  if (cfg.sweep.empty()) fail(ErrorKind::Config, "$.architectures: empty architecture list");
  std::vector<SweepRow> rows;
  for (const auto& na : cfg.sweep) {
    ExperimentConfig one = cfg;
    one.sweep.clear();
    one.arch = na.arch;
    one.train.regime = Regime::TRADES;
    one.output_dir = cfg.output_dir / na.name;
    const RunManifest m = train_from_config(one, "sweep");
    // Table cells come from the CSV, never from in-memory state.
    const CsvTable t = read_csv(m.metrics_csv);
    require(!t.rows.empty(), ErrorKind::Format, m.metrics_csv.string() + ": no epochs logged");
    rows.push_back({na.name, t.column("test_acc").back(), t.column("adv_acc_pgd").back(),
                    t.column("adv_acc_cw").back()});
  }
  write_file_atomic(cfg.output_dir / "sweep_table.csv", sweep_table_csv(rows));
  write_file_atomic(cfg.output_dir / "sweep_table.txt", sweep_table_text(rows));
  return rows;
}

std::vector<SweepRow> cmd_sweep(const fs::path& config_path, const Overrides& ov) {
  return sweep_from_config(load_config(config_path, CommandKind::Sweep, ov));
}

fs::path cmd_plot(const fs::path& config_path, const Overrides& ov) {
  PlotConfig p = parse_plot_config(read_text_file(config_path));
  if (ov.out_dir) p.output = *ov.out_dir / p.output.filename();
  std::vector<CsvTable> tables;
  for (const auto& c : p.csv) {
    CsvTable t = read_csv(c);
    require_metrics_schema(t, c.string());
    tables.push_back(std::move(t));
  }
  const std::string svg = render_svg(to_string(p.kind), build_panels(p.kind, tables, p.labels));
  write_file_atomic(p.output, svg);
  return p.output;
}

std::vector<fs::path> cmd_synth_idx(const fs::path& config_path, const Overrides& ov) {
  SynthIdxConfig c = parse_synth_idx_config(read_text_file(config_path));
  if (ov.out_dir) c.output_dir = *ov.out_dir;
  if (ov.seed) {
    c.glyphs.seed = Rng::derive(*ov.seed, "data").next_u64();
    c.split_seed = Rng::derive(*ov.seed, "split").next_u64();
  }
  const Dataset all = render_glyphs(c.glyphs);
  auto [train, test] = split(all, c.train_fraction, c.split_seed);
  fs::create_directories(c.output_dir);
  const std::vector<fs::path> paths = {
      c.output_dir / (c.prefix + "-train-images-idx3-ubyte"),
      c.output_dir / (c.prefix + "-train-labels-idx1-ubyte"),
      c.output_dir / (c.prefix + "-test-images-idx3-ubyte"),
      c.output_dir / (c.prefix + "-test-labels-idx1-ubyte")};
  write_idx(train, c.glyphs.side, c.glyphs.side, paths[0], paths[1]);
  write_idx(test, c.glyphs.side, c.glyphs.side, paths[2], paths[3]);
  return paths;
}

}  // namespace fisherlens::harness
