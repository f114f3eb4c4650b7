#include "fisherlens/fisherlens.h"

#include <cmath>
#include <exception>
#include <new>
#include <string>

#include "fisherlens/data.hpp"
#include "fisherlens/divergences.hpp"
#include "fisherlens/error.hpp"
#include "fisherlens/fisher.hpp"
#include "fisherlens/harness/commands.hpp"
#include "fisherlens/harness/metrics.hpp"
#include "fisherlens/network.hpp"
#include "fisherlens/rng.hpp"
#include "fisherlens/version.hpp"

struct fl_network {
  fisherlens::Network net;
};

struct fl_dataset {
  fisherlens::Dataset ds;
};

namespace {

using namespace fisherlens;

thread_local std::string g_last_error;
thread_local std::string g_last_summary;

fl_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Dimension: return FL_ERR_DIMENSION;
    case ErrorKind::Contract: return FL_ERR_CONTRACT;
    case ErrorKind::Degenerate: return FL_ERR_DEGENERATE;
    case ErrorKind::Format: return FL_ERR_FORMAT;
    case ErrorKind::Numeric: return FL_ERR_NUMERIC;
    case ErrorKind::State: return FL_ERR_STATE;
    case ErrorKind::Config: return FL_ERR_CONFIG;
    case ErrorKind::Io: return FL_ERR_IO;
  }
  return FL_ERR_INTERNAL;
}

template <class Fn>
fl_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return FL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FL_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return FL_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FL_ERR_INTERNAL;
  }
}

void out_len_is(std::size_t have, std::size_t want, const char* what) {
  require(have == want, ErrorKind::Dimension,
          std::string(what) + ": output buffer holds " + std::to_string(have) + ", need " +
              std::to_string(want));
}

harness::Overrides overrides(const char* out_dir, const std::uint64_t* seed) {
  harness::Overrides ov;
  if (out_dir) ov.out_dir = out_dir;
  if (seed) ov.seed = *seed;
  return ov;
}

fl_status null_arg(const char* fn) {
  g_last_error = std::string(fn) + ": null argument";
  return FL_ERR_NULL_ARGUMENT;
}

std::string fmt(double v) { return harness::format_number(v); }

}  // namespace

extern "C" {

const char* fl_version(void) { return kVersion; }

const char* fl_status_name(fl_status s) {
  switch (s) {
    case FL_OK: return "ok";
    case FL_ERR_DIMENSION: return "dimension";
    case FL_ERR_CONTRACT: return "contract";
    case FL_ERR_DEGENERATE: return "degenerate";
    case FL_ERR_FORMAT: return "format";
    case FL_ERR_NUMERIC: return "numeric";
    case FL_ERR_STATE: return "state";
    case FL_ERR_CONFIG: return "config";
    case FL_ERR_IO: return "io";
    case FL_ERR_NULL_ARGUMENT: return "null_argument";
    case FL_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* fl_last_error(void) { return g_last_error.c_str(); }
const char* fl_last_summary(void) { return g_last_summary.c_str(); }

fl_status fl_network_create(size_t input_dim, const size_t* widths, size_t num_layers,
                            fl_activation activation, uint64_t seed, fl_network** out) {
  if (!out || !widths) return null_arg(__func__);
  *out = nullptr;
  return guarded([&] {
    require(activation >= FL_ACT_NONE && activation <= FL_ACT_TANH, ErrorKind::Contract,
            "unknown activation code " + std::to_string(static_cast<int>(activation)));
    Architecture arch;
    arch.input_dim = input_dim;
    arch.layer_widths.assign(widths, widths + num_layers);
    arch.activation = static_cast<Activation>(activation);
    arch.num_classes = num_layers ? widths[num_layers - 1] : 0;
    Rng rng = Rng::derive(seed, "init");
    *out = new fl_network{Network(arch, rng)};
  });
}

fl_status fl_network_load(const char* path, fl_network** out) {
  if (!out || !path) return null_arg(__func__);
  *out = nullptr;
  return guarded([&] { *out = new fl_network{load_checkpoint(path)}; });
}

fl_status fl_network_save(const fl_network* net, const char* path) {
  if (!net || !path) return null_arg(__func__);
  return guarded([&] { save_checkpoint(net->net, path); });
}

void fl_network_free(fl_network* net) { delete net; }

size_t fl_network_input_dim(const fl_network* net) { return net ? net->net.input_dim() : 0; }
size_t fl_network_num_classes(const fl_network* net) { return net ? net->net.num_classes() : 0; }

fl_status fl_network_forward(const fl_network* net, const double* x, size_t dim,
                             double* probs_out, size_t out_len) {
  if (!net || !x || !probs_out) return null_arg(__func__);
  return guarded([&] {
    out_len_is(out_len, net->net.num_classes(), "forward");
    const ProbDist p = net->net.forward(std::span<const double>(x, dim));
    std::copy(p.values().begin(), p.values().end(), probs_out);
  });
}

fl_status fl_network_jacobian_logp(const fl_network* net, const double* x, size_t dim,
                                   double* out, size_t out_len) {
  if (!net || !x || !out) return null_arg(__func__);
  return guarded([&] {
    out_len_is(out_len, net->net.num_classes() * dim, "jacobian");
    const Tensor j = net->net.input_jacobian_logp(std::span<const double>(x, dim));
    std::copy(j.values().begin(), j.values().end(), out);
  });
}

fl_status fl_fisher_matrix(const fl_network* net, const double* x, size_t dim, double* out,
                           size_t out_len) {
  if (!net || !x || !out) return null_arg(__func__);
  return guarded([&] {
    out_len_is(out_len, dim * dim, "fisher matrix");
    const FisherInfo fi = fisher_at(net->net, std::span<const double>(x, dim), dim);
    const Tensor& m = fi.matrix();
    std::copy(m.values().begin(), m.values().end(), out);
  });
}

fl_status fl_fisher_stats_at(const fl_network* net, const double* x, size_t dim, uint64_t seed,
                             fl_fisher_stats* out) {
  if (!net || !x || !out) return null_arg(__func__);
  return guarded([&] {
    const FisherInfo fi = fisher_at(net->net, std::span<const double>(x, dim));
    Rng rng(seed);
    const EigenPair top = fisher_spectral(fi, rng);
    out->fro_norm = fisher_fro_norm(fi, {.allow_column_probes = true});
    out->lambda_max = top.zero_flagged ? 0.0 : top.lambda_max;
    out->trace = fi.trace();
    out->cramer_rao = out->lambda_max > 0.0 ? 1.0 / out->lambda_max : INFINITY;
  });
}

fl_status fl_kl(const double* p, const double* q, size_t n, double* out) {
  if (!p || !q || !out) return null_arg(__func__);
  return guarded([&] { *out = kl(std::span<const double>(p, n), std::span<const double>(q, n)); });
}

fl_status fl_js(const double* p, const double* q, size_t n, double* out) {
  if (!p || !q || !out) return null_arg(__func__);
  return guarded([&] { *out = js(std::span<const double>(p, n), std::span<const double>(q, n)); });
}

fl_status fl_cross_entropy(size_t label, const double* p, size_t n, double* out) {
  if (!p || !out) return null_arg(__func__);
  return guarded([&] { *out = cross_entropy(LabelDist{label, n}, std::span<const double>(p, n)); });
}

fl_status fl_dataset_load_idx(const char* images, const char* labels, size_t limit,
                              fl_dataset** out) {
  if (!images || !labels || !out) return null_arg(__func__);
  *out = nullptr;
  return guarded([&] { *out = new fl_dataset{load_idx(images, labels, limit)}; });
}

void fl_dataset_free(fl_dataset* ds) { delete ds; }
size_t fl_dataset_size(const fl_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t fl_dataset_dim(const fl_dataset* ds) { return ds ? ds->ds.dim() : 0; }
size_t fl_dataset_num_classes(const fl_dataset* ds) { return ds ? ds->ds.num_classes : 0; }

fl_status fl_dataset_row(const fl_dataset* ds, size_t index, double* x_out, size_t dim,
                         size_t* label_out) {
  if (!ds || !x_out || !label_out) return null_arg(__func__);
  return guarded([&] {
    require(index < ds->ds.size(), ErrorKind::Contract, "dataset row index out of range");
    out_len_is(dim, ds->ds.dim(), "dataset row");
    const auto row = ds->ds.x(index);
    std::copy(row.begin(), row.end(), x_out);
    *label_out = ds->ds.ys[index];
  });
}

fl_status fl_cckl(const fl_network* net, const fl_dataset* ds, size_t max_pairs, uint64_t seed,
                  double* out) {
  if (!net || !ds || !out) return null_arg(__func__);
  return guarded([&] {
    PairSamplingPlan plan;
    if (max_pairs == 0) plan.max_pairs.reset();
    else plan.max_pairs = max_pairs;
    plan.seed = seed;
    *out = cckl(net->net, ds->ds.xs, ds->ds.ys, plan);
  });
}

fl_status fl_cmd_train(const char* config_path, const char* out_dir, const uint64_t* seed) {
  if (!config_path) return null_arg(__func__);
  return guarded([&] {
    const auto m = harness::cmd_train(config_path, overrides(out_dir, seed));
    g_last_summary = "trained " + std::to_string(m.epochs_completed) + " epochs; metrics " +
                     m.metrics_csv.string() + "; config_hash " + m.config_hash +
                     (m.diverged ? "; DIVERGED: " + m.diagnostic : "");
  });
}

fl_status fl_cmd_eval(const char* config_path, const char* out_dir, const uint64_t* seed) {
  if (!config_path) return null_arg(__func__);
  return guarded([&] {
    const auto r = harness::cmd_eval(config_path, overrides(out_dir, seed));
    g_last_summary = "clean " + fmt(r.clean_accuracy) + "  pgd " + fmt(r.robust_pgd) + "  cw " +
                     fmt(r.robust_cw) + "  fgsm " + fmt(r.robust_fgsm) + "  fisher_eig " +
                     fmt(r.robust_fisher_eig) + "  cckl " + fmt(r.mean_cckl);
  });
}

fl_status fl_cmd_sweep(const char* config_path, const char* out_dir, const uint64_t* seed) {
  if (!config_path) return null_arg(__func__);
  return guarded([&] {
    g_last_summary =
        harness::sweep_table_text(harness::cmd_sweep(config_path, overrides(out_dir, seed)));
  });
}

fl_status fl_cmd_plot(const char* config_path, const char* out_dir, const uint64_t* seed) {
  if (!config_path) return null_arg(__func__);
  return guarded([&] {
    g_last_summary = "wrote " + harness::cmd_plot(config_path, overrides(out_dir, seed)).string();
  });
}

fl_status fl_cmd_synth_idx(const char* config_path, const char* out_dir, const uint64_t* seed) {
  if (!config_path) return null_arg(__func__);
  return guarded([&] {
    g_last_summary = "wrote";
    for (const auto& p : harness::cmd_synth_idx(config_path, overrides(out_dir, seed)))
      g_last_summary += " " + p.string();
  });
}

}  // extern "C"
