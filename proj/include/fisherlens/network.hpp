#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fisherlens/rng.hpp"
#include "fisherlens/tensor.hpp"

namespace fisherlens {

enum class Activation { None, ReLU, Tanh };

const char* to_string(Activation a) noexcept;
Activation parse_activation(const std::string& name);

/// Layered MLP shape. `layer_widths` lists every affine layer's output width;
/// the last one is the class count. Hidden layers are all layers but the last.
struct Architecture {
  std::size_t input_dim = 0;
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::ReLU;
  /// One flag per hidden layer; empty means the activation applies everywhere.
  std::vector<bool> activation_mask;
  std::size_t num_classes = 0;

  void validate() const;
  std::size_t num_layers() const noexcept { return layer_widths.size(); }
  std::size_t hidden_layers() const noexcept {
    return layer_widths.empty() ? 0 : layer_widths.size() - 1;
  }
  /// Whether hidden layer `l` applies the nonlinearity.
  bool activates(std::size_t l) const;
  std::size_t fan_in(std::size_t l) const {
    return l == 0 ? input_dim : layer_widths[l - 1];
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Probability vector over classes.
class ProbDist {
 public:
  ProbDist() = default;
  /// Validates nonnegativity and unit sum within 1e-9.
  explicit ProbDist(std::vector<double> p);

  std::size_t size() const noexcept { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const noexcept { return p_; }
  std::size_t argmax() const;

 private:
  std::vector<double> p_;
};

/// One-hot label.
struct LabelDist {
  std::size_t cls = 0;
  std::size_t num_classes = 0;

  double operator[](std::size_t i) const { return i == cls ? 1.0 : 0.0; }
  friend bool operator==(const LabelDist&, const LabelDist&) = default;
};

/// Numerically stable softmax of one logit row (max-logit subtraction).
void softmax_inplace(std::span<double> z);

/// Parameter-shaped container: weights are out×in, biases have length out.
struct Gradients {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  void scale(double s);
  /// this += s·other
  void axpy(double s, const Gradients& other);
  std::size_t size() const;
  std::vector<double> flatten() const;
};

class Network;

/// Activations recorded by a batched forward pass; consumed by backward.
/// Bound to the producing network object and its parameter version.
struct ForwardTape {
  Tensor input;                  // B×d
  std::vector<Tensor> pre;       // per layer, B×width (pre-activation)
  std::vector<Tensor> post;      // per hidden layer, B×width (post-activation)
  Tensor logits;                 // B×classes
  Tensor probs;                  // B×classes
  const Network* owner = nullptr;
  std::uint64_t version = 0;

  std::size_t batch() const { return input.rows(); }
};

struct BackwardResult {
  Gradients params;   // empty when only the input gradient was requested
  Tensor input_grad;  // B×d
};

/// Feed-forward classifier with a softmax head.
///
/// Evaluation methods are const and safe to call concurrently. Every mutable
/// parameter access bumps `version()`, which invalidates outstanding tapes.
class Network {
 public:
  Network() = default;
  /// Gaussian init with std 1/√fan_in for weights, zero biases.
  Network(Architecture arch, Rng& init);
  /// All parameters zero.
  static Network zeros(Architecture arch);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Architecture& arch() const noexcept { return arch_; }
  std::size_t input_dim() const noexcept { return arch_.input_dim; }
  std::size_t num_classes() const noexcept { return arch_.num_classes; }

  const Tensor& weight(std::size_t l) const { return weights_.at(l); }
  const Tensor& bias(std::size_t l) const { return biases_.at(l); }
  Tensor& mutable_weight(std::size_t l);
  Tensor& mutable_bias(std::size_t l);

  std::uint64_t version() const noexcept { return version_; }
  std::size_t num_params() const;
  std::vector<double> flat_params() const;
  void set_flat_params(std::span<const double> flat);
  Gradients zero_gradients() const;

  /// Records every intermediate for a B×d batch.
  ForwardTape record(const Tensor& xs) const;
  Tensor logits(std::span<const double> x) const;
  ProbDist forward(std::span<const double> x) const;
  ProbDist forward(const Tensor& x) const { return forward(x.values()); }

  /// Reverse pass for a scalar loss whose gradient w.r.t. the logits is
  /// `grad_logits` (B×classes). Returns parameter and input gradients.
  BackwardResult param_gradient(const ForwardTape& tape, const Tensor& grad_logits) const;
  /// Input gradient only (skips parameter accumulation).
  Tensor input_gradient(const ForwardTape& tape, const Tensor& grad_logits) const;

  /// Row j is ∇ₓ log fⱼ(x); one reverse pass per class.
  Tensor input_jacobian_logp(std::span<const double> x) const;

  friend bool operator==(const Network& a, const Network& b) {
    return a.arch_ == b.arch_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  explicit Network(Architecture arch);
  BackwardResult backward(const ForwardTape& tape, const Tensor& grad_logits,
                          bool with_params) const;
  void check_input(std::size_t d) const;

  Architecture arch_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  std::uint64_t version_ = 0;
};

/// Binary checkpoint, little-endian:
///   "FLNETCK\0", u32 format version, u32 activation, u64 input_dim,
///   u64 num_classes, u64 L, u64 widths[L], u8 mask_present, u8 mask[L-1],
///   per layer: f64 weights (out×in row-major) then f64 biases,
///   u64 FNV-1a of every preceding byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

std::vector<unsigned char> encode_checkpoint(const Network& net);
Network decode_checkpoint(std::span<const unsigned char> bytes);

}  // namespace fisherlens
