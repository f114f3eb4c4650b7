#include "fisherlens/harness/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

#include "fisherlens/error.hpp"
#include "fisherlens/rng.hpp"

namespace fisherlens::harness {

using nlohmann::json;

namespace {

/// JSON object cursor that remembers which keys were read so that leftovers
/// can be reported as unknown.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(ErrorKind::Config, path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!node_.contains(key)) return fallback;
    return convert<T>(node_.at(key), key);
  }

  template <class T>
  T required(const std::string& key) {
    seen_.insert(key);
    if (!node_.contains(key)) fail(ErrorKind::Config, path_ + "." + key + ": missing required key");
    return convert<T>(node_.at(key), key);
  }

  /// Absent keys read as an empty object, so every field takes its default.
  Section child(const std::string& key) {
    static const json empty = json::object();
    seen_.insert(key);
    return Section(node_.contains(key) ? node_.at(key) : empty, path_ + "." + key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : node_.items())
      if (!seen_.count(key)) fail(ErrorKind::Config, path_ + "." + key + ": unknown key");
  }

  const std::string& path() const { return path_; }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, std::uint64_t> || std::is_same_v<T, std::size_t>) {
        if (!v.is_number_unsigned())
          fail(ErrorKind::Config, path_ + "." + key + ": expected a non-negative integer");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) fail(ErrorKind::Config, path_ + "." + key + ": expected an integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) fail(ErrorKind::Config, path_ + "." + key + ": expected a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(ErrorKind::Config, path_ + "." + key + ": expected true/false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) fail(ErrorKind::Config, path_ + "." + key + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, path_ + "." + key + ": " + e.what());
    }
  }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann messages carry "line L, column C".
    fail(ErrorKind::Config, std::string("config syntax error: ") + e.what());
  }
}

/// Runs `fn`, re-raising contract failures as config errors tagged with a path.
template <class Fn>
void validated(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    fail(ErrorKind::Config, path + ": " + e.what());
  }
}

AttackConfig parse_attack(Section s, AttackConfig a) {
  a.epsilon = s.get("epsilon", a.epsilon);
  a.step_size = s.get("step_size", a.step_size);
  a.num_steps = s.get("num_steps", a.num_steps);
  if (s.has("loss")) a.loss_kind = parse_attack_loss(s.required<std::string>("loss"));
  a.cw_c = s.get("cw_c", a.cw_c);
  if (s.has("clip_range")) {
    const json& r = s.raw("clip_range");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
      fail(ErrorKind::Config, s.path() + ".clip_range: expected [lo, hi]");
    a.clip_lo = r[0].get<double>();
    a.clip_hi = r[1].get<double>();
  }
  if (s.has("start")) a.start = parse_start_mode(s.required<std::string>("start"));
  a.gaussian_start_scale = s.get("gaussian_start_scale", a.gaussian_start_scale);
  a.rng_seed = s.get("rng_seed", a.rng_seed);
  s.finish();
  validated(s.path(), [&] { a.validate(); });
  return a;
}

Architecture parse_arch(Section s) {
  Architecture a;
  a.input_dim = s.required<std::size_t>("input_dim");
  a.layer_widths = s.required<std::vector<std::size_t>>("layer_widths");
  a.activation = parse_activation(s.get<std::string>("activation", "relu"));
  a.activation_mask = s.get<std::vector<bool>>("activation_mask", {});
  a.num_classes = s.get<std::size_t>("num_classes", a.layer_widths.empty() ? 0 : a.layer_widths.back());
  s.finish();
  validated(s.path(), [&] { a.validate(); });
  return a;
}

SynthSpec parse_synth(Section s) {
  SynthSpec spec;
  spec.kind = parse_synth_kind(s.get<std::string>("kind", to_string(spec.kind)));
  spec.n_per_class = s.get("n_per_class", spec.n_per_class);
  spec.noise_std = s.get("noise_std", spec.noise_std);
  spec.separation = s.get("separation", spec.separation);
  spec.dim = s.get("dim", spec.dim);
  spec.seed = s.get("seed", spec.seed);
  s.finish();
  validated(s.path(), [&] { spec.validate(); });
  return spec;
}

GlyphSpec parse_glyphs(Section s) {
  GlyphSpec g;
  g.num_classes = s.get("num_classes", g.num_classes);
  g.n_per_class = s.get("n_per_class", g.n_per_class);
  g.side = s.get("side", g.side);
  g.max_shift = s.get("max_shift", g.max_shift);
  g.scale_jitter = s.get("scale_jitter", g.scale_jitter);
  g.noise_std = s.get("noise_std", g.noise_std);
  g.ink_min = s.get("ink_min", g.ink_min);
  g.seed = s.get("seed", g.seed);
  s.finish();
  validated(s.path(), [&] { g.validate(); });
  return g;
}

DatasetSource parse_dataset(Section s, std::uint64_t seed) {
  DatasetSource d;
  const auto kind = s.required<std::string>("kind");
  d.train_fraction = s.get("train_fraction", d.train_fraction);
  d.num_classes = s.get("num_classes", d.num_classes);
  const std::uint64_t data_seed = Rng::derive(seed, "data").next_u64();
  if (kind == "synthetic") {
    d.kind = DatasetSource::Kind::Synthetic;
    const bool explicit_seed = s.has("synth") && s.raw("synth").contains("seed");
    d.synth = parse_synth(s.child("synth"));
    if (!explicit_seed) d.synth.seed = data_seed;
  } else if (kind == "glyphs") {
    d.kind = DatasetSource::Kind::Glyphs;
    const bool explicit_seed = s.has("glyphs") && s.raw("glyphs").contains("seed");
    d.glyphs = parse_glyphs(s.child("glyphs"));
    if (!explicit_seed) d.glyphs.seed = data_seed;
  } else if (kind == "idx") {
    d.kind = DatasetSource::Kind::Idx;
    d.train_images = s.required<std::string>("train_images");
    d.train_labels = s.required<std::string>("train_labels");
    d.test_images = s.get<std::string>("test_images", "");
    d.test_labels = s.get<std::string>("test_labels", "");
    d.limit = s.get("limit", d.limit);
    d.test_limit = s.get("test_limit", d.test_limit);
    if (d.test_images.empty() != d.test_labels.empty())
      fail(ErrorKind::Config, s.path() + ": test_images and test_labels must be given together");
  } else {
    fail(ErrorKind::Config, s.path() + ".kind: unknown dataset kind '" + kind +
                                "' (expected synthetic|glyphs|idx)");
  }
  if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0))
    fail(ErrorKind::Config, s.path() + ".train_fraction: must lie in (0, 1)");
  s.finish();
  return d;
}

TrainConfig parse_train(Section s, std::uint64_t seed) {
  TrainConfig t;
  t.seed = seed;
  t.epochs = s.get("epochs", t.epochs);
  t.batch_size = s.get("batch_size", t.batch_size);
  t.lr = s.get("lr", t.lr);
  t.momentum = s.get("momentum", t.momentum);
  t.weight_decay = s.get("weight_decay", t.weight_decay);
  t.lr_decay_epochs = s.get("lr_decay_epochs", t.lr_decay_epochs);
  t.lr_decay_factor = s.get("lr_decay_factor", t.lr_decay_factor);
  if (s.has("regime")) t.regime = parse_regime(s.required<std::string>("regime"));
  t.trades_inv_lambda = s.get("trades_inv_lambda", t.trades_inv_lambda);
  if (s.has("inner_attack")) t.inner_attack = parse_attack(s.child("inner_attack"), t.inner_attack);
  s.finish();
  validated(s.path(), [&] { t.validate(); });
  return t;
}

EvalConfig parse_eval(Section s, ExperimentConfig& cfg) {
  EvalConfig e;
  if (s.has("max_pairs")) {
    const json& mp = s.raw("max_pairs");
    if (mp.is_string() && mp.get<std::string>() == "all") {
      e.pairs.max_pairs.reset();
    } else if (mp.is_number_unsigned() && mp.get<std::size_t>() >= 1) {
      e.pairs.max_pairs = mp.get<std::size_t>();
    } else {
      fail(ErrorKind::Config, s.path() + ".max_pairs: expected a positive integer or \"all\"");
    }
  }
  e.pairs.seed = s.get("pair_seed", e.pairs.seed);
  e.fisher_probes = s.get("fisher_probes", e.fisher_probes);
  e.adv_eval_points = s.get("adv_eval_points", e.adv_eval_points);
  e.adversarial = s.get("adversarial", e.adversarial);
  e.power.tol = s.get("power_tol", e.power.tol);
  e.power.max_iter = s.get("power_max_iter", e.power.max_iter);
  if (s.has("pgd")) e.pgd = parse_attack(s.child("pgd"), e.pgd);
  if (s.has("cw")) e.cw = parse_attack(s.child("cw"), e.cw);
  e.cw.loss_kind = AttackLoss::CW;
  e.pgd.loss_kind = AttackLoss::CrossEntropy;
  if (s.has("fgsm")) cfg.fgsm = parse_attack(s.child("fgsm"), cfg.fgsm);
  if (s.has("fisher_eig")) cfg.fisher_eig = parse_attack(s.child("fisher_eig"), cfg.fisher_eig);
  s.finish();
  return e;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig parse_experiment_config(const std::string& text, CommandKind command,
                                         std::optional<std::uint64_t> seed_override) {
  const json root_json = parse_json(text);
  Section root(root_json, "$");
  ExperimentConfig cfg;
  cfg.seed = root.get("seed", cfg.seed);
  if (seed_override) cfg.seed = *seed_override;
  cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir.string());
  cfg.checkpoint_every = root.get("checkpoint_every", cfg.checkpoint_every);
  if (cfg.checkpoint_every < 0) fail(ErrorKind::Config, "$.checkpoint_every: must be >= 0");
  cfg.dataset = parse_dataset(root.child("dataset"), cfg.seed);

  if (command == CommandKind::Sweep) {
    if (!root.has("architectures")) fail(ErrorKind::Config, "$.architectures: missing required key");
    const json& list = root.raw("architectures");
    if (!list.is_array() || list.empty())
      fail(ErrorKind::Config, "$.architectures: sweep needs a non-empty list of architectures");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = "$.architectures[" + std::to_string(i) + "]";
      if (!list[i].is_object()) fail(ErrorKind::Config, path + ": expected an object");
      json body = list[i];
      if (!body.contains("name") || !body["name"].is_string())
        fail(ErrorKind::Config, path + ".name: missing required key");
      NamedArchitecture na;
      na.name = body["name"].get<std::string>();
      body.erase("name");
      na.arch = parse_arch(Section(body, path));
      cfg.sweep.push_back(std::move(na));
    }
    if (cfg.sweep.size() < 2)
      fail(ErrorKind::Config, "$.architectures: sweep needs at least 2 architectures");
    cfg.arch = cfg.sweep.front().arch;
  } else if (command != CommandKind::Eval || root.has("architecture")) {
    cfg.arch = parse_arch(root.child("architecture"));
    cfg.arch_specified = true;
  }

  if (command == CommandKind::Eval) {
    cfg.checkpoint = root.required<std::string>("checkpoint");
  }
  if (root.has("train")) cfg.train = parse_train(root.child("train"), cfg.seed);
  else cfg.train.seed = cfg.seed;
  if (command == CommandKind::Sweep) cfg.train.regime = Regime::TRADES;
  if (root.has("eval")) cfg.eval = parse_eval(root.child("eval"), cfg);
  root.finish();
  return cfg;
}

PlotConfig parse_plot_config(const std::string& text) {
  const json root_json = parse_json(text);
  Section root(root_json, "$");
  PlotConfig p;
  const auto kind = root.required<std::string>("kind");
  if (kind == "acc_cckl_loss") p.kind = PlotConfig::Kind::AccCcklLoss;
  else if (kind == "fisher_trajectory") p.kind = PlotConfig::Kind::FisherTrajectory;
  else if (kind == "nat_vs_adv_overlay") p.kind = PlotConfig::Kind::NatVsAdvOverlay;
  else
    fail(ErrorKind::Config, "$.kind: unknown plot kind '" + kind +
                                "' (expected acc_cckl_loss|fisher_trajectory|nat_vs_adv_overlay)");
  for (const auto& s : root.required<std::vector<std::string>>("csv")) p.csv.emplace_back(s);
  p.labels = root.get<std::vector<std::string>>("labels", {});
  p.output = root.get<std::string>("output", p.output.string());
  root.finish();
  if (p.csv.empty()) fail(ErrorKind::Config, "$.csv: at least one CSV path is required");
  if (!p.labels.empty() && p.labels.size() != p.csv.size())
    fail(ErrorKind::Config, "$.labels: one label per CSV path");
  if (p.kind == PlotConfig::Kind::NatVsAdvOverlay && p.csv.size() < 2)
    fail(ErrorKind::Config, "$.csv: overlay needs at least two runs");
  if (p.labels.empty())
    for (const auto& c : p.csv) p.labels.push_back(c.parent_path().filename().string().empty()
                                                       ? c.stem().string()
                                                       : c.parent_path().filename().string());
  return p;
}

SynthIdxConfig parse_synth_idx_config(const std::string& text) {
  const json root_json = parse_json(text);
  Section root(root_json, "$");
  SynthIdxConfig c;
  c.glyphs = parse_glyphs(root.child("glyphs"));
  c.output_dir = root.get<std::string>("output_dir", c.output_dir.string());
  c.prefix = root.get<std::string>("prefix", c.prefix);
  c.train_fraction = root.get("train_fraction", c.train_fraction);
  c.split_seed = root.get("split_seed", c.split_seed);
  root.finish();
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    fail(ErrorKind::Config, "$.train_fraction: must lie in (0, 1)");
  return c;
}

namespace {

json attack_json(const AttackConfig& a) {
  return {{"epsilon", a.epsilon},     {"step_size", a.step_size},
          {"num_steps", a.num_steps}, {"loss", to_string(a.loss_kind)},
          {"cw_c", a.cw_c},           {"clip_range", {a.clip_lo, a.clip_hi}},
          {"start", to_string(a.start)}, {"gaussian_start_scale", a.gaussian_start_scale},
          {"rng_seed", a.rng_seed}};
}

json arch_json(const Architecture& a) {
  return {{"input_dim", a.input_dim},
          {"layer_widths", a.layer_widths},
          {"activation", to_string(a.activation)},
          {"activation_mask", a.activation_mask},
          {"num_classes", a.num_classes}};
}

}  // namespace

std::string canonical_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["checkpoint_every"] = cfg.checkpoint_every;
  const auto& d = cfg.dataset;
  json ds{{"train_fraction", d.train_fraction}, {"num_classes", d.num_classes}};
  switch (d.kind) {
    case DatasetSource::Kind::Synthetic:
      ds["kind"] = "synthetic";
      ds["synth"] = {{"kind", to_string(d.synth.kind)}, {"n_per_class", d.synth.n_per_class},
                     {"noise_std", d.synth.noise_std},  {"separation", d.synth.separation},
                     {"dim", d.synth.dim},              {"seed", d.synth.seed}};
      break;
    case DatasetSource::Kind::Glyphs:
      ds["kind"] = "glyphs";
      ds["glyphs"] = {{"num_classes", d.glyphs.num_classes}, {"n_per_class", d.glyphs.n_per_class},
                      {"side", d.glyphs.side},               {"max_shift", d.glyphs.max_shift},
                      {"scale_jitter", d.glyphs.scale_jitter}, {"noise_std", d.glyphs.noise_std},
                      {"ink_min", d.glyphs.ink_min},         {"seed", d.glyphs.seed}};
      break;
    case DatasetSource::Kind::Idx:
      ds["kind"] = "idx";
      ds["train_images"] = d.train_images.string();
      ds["train_labels"] = d.train_labels.string();
      ds["test_images"] = d.test_images.string();
      ds["test_labels"] = d.test_labels.string();
      ds["limit"] = d.limit;
      ds["test_limit"] = d.test_limit;
      break;
  }
  j["dataset"] = ds;
  if (cfg.sweep.empty()) {
    j["architecture"] = arch_json(cfg.arch);
  } else {
    json list = json::array();
    for (const auto& na : cfg.sweep) {
      json a = arch_json(na.arch);
      a["name"] = na.name;
      list.push_back(a);
    }
    j["architectures"] = list;
  }
  const auto& t = cfg.train;
  j["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"lr", t.lr},
                {"momentum", t.momentum},
                {"weight_decay", t.weight_decay},
                {"lr_decay_epochs", t.lr_decay_epochs},
                {"lr_decay_factor", t.lr_decay_factor},
                {"regime", to_string(t.regime)},
                {"trades_inv_lambda", t.trades_inv_lambda},
                {"inner_attack", attack_json(t.inner_attack)}};
  const auto& e = cfg.eval;
  j["eval"] = {{"max_pairs", e.pairs.max_pairs ? json(*e.pairs.max_pairs) : json("all")},
               {"pair_seed", e.pairs.seed},
               {"fisher_probes", e.fisher_probes},
               {"adv_eval_points", e.adv_eval_points},
               {"adversarial", e.adversarial},
               {"power_tol", e.power.tol},
               {"power_max_iter", e.power.max_iter},
               {"pgd", attack_json(e.pgd)},
               {"cw", attack_json(e.cw)},
               {"fgsm", attack_json(cfg.fgsm)},
               {"fisher_eig", attack_json(cfg.fisher_eig)}};
  if (!cfg.checkpoint.empty()) j["checkpoint"] = cfg.checkpoint.string();
  return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(canonical_config(cfg));
  return os.str();
}

std::pair<Dataset, Dataset> load_datasets(const DatasetSource& src, std::uint64_t seed) {
  const std::uint64_t split_seed = Rng::derive(seed, "split").next_u64();
  auto finish = [&](Dataset ds) {
    if (src.num_classes) ds.num_classes = std::max(ds.num_classes, src.num_classes);
    return ds;
  };
  switch (src.kind) {
    case DatasetSource::Kind::Synthetic:
      return split(finish(generate(src.synth)), src.train_fraction, split_seed);
    case DatasetSource::Kind::Glyphs:
      return split(finish(render_glyphs(src.glyphs)), src.train_fraction, split_seed);
    case DatasetSource::Kind::Idx: {
      Dataset train = finish(load_idx(src.train_images, src.train_labels, src.limit));
      if (src.test_images.empty()) return split(train, src.train_fraction, split_seed);
      Dataset test = finish(load_idx(src.test_images, src.test_labels, src.test_limit));
      const std::size_t classes = std::max(train.num_classes, test.num_classes);
      train.num_classes = test.num_classes = classes;
      train.split = "train";
      test.split = "test";
      require(test.distinct_labels() >= 2, ErrorKind::Degenerate,
              "test set holds a single class (cross-label pairs need >= 2)");
      return {std::move(train), std::move(test)};
    }
  }
  fail(ErrorKind::Config, "unknown dataset kind");
}

}  // namespace fisherlens::harness
