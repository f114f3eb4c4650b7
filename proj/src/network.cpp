#include "fisherlens/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fisherlens/error.hpp"

namespace fisherlens {

const char* to_string(Activation a) noexcept {
  switch (a) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "none" || name == "linear") return Activation::None;
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  fail(ErrorKind::Config, "unknown activation '" + name + "' (expected none|relu|tanh)");
}

void Architecture::validate() const {
  require(input_dim >= 1, ErrorKind::Contract, "architecture: input_dim must be >= 1");
  require(!layer_widths.empty(), ErrorKind::Contract,
          "architecture: at least one layer is required");
  for (std::size_t w : layer_widths)
    require(w >= 1, ErrorKind::Contract, "architecture: all widths must be >= 1");
  require(layer_widths.back() == num_classes, ErrorKind::Contract,
          "architecture: last width " + std::to_string(layer_widths.back()) +
              " must equal num_classes " + std::to_string(num_classes));
  require(num_classes >= 2, ErrorKind::Contract, "architecture: num_classes must be >= 2");
  require(activation_mask.empty() || activation_mask.size() == hidden_layers(),
          ErrorKind::Contract,
          "architecture: activation_mask needs one flag per hidden layer (" +
              std::to_string(hidden_layers()) + ")");
}

bool Architecture::activates(std::size_t l) const {
  if (activation == Activation::None || l >= hidden_layers()) return false;
  return activation_mask.empty() || activation_mask[l];
}

// ---------------------------------------------------------------------------

ProbDist::ProbDist(std::vector<double> p) : p_(std::move(p)) {
  double s = 0.0;
  for (double x : p_) {
    require(x >= 0.0 && std::isfinite(x), ErrorKind::Contract,
            "probability entries must be finite and nonnegative");
    s += x;
  }
  require(std::abs(s - 1.0) <= 1e-9, ErrorKind::Contract,
          "probability vector sums to " + std::to_string(s));
}

std::size_t ProbDist::argmax() const {
  return static_cast<std::size_t>(std::max_element(p_.begin(), p_.end()) - p_.begin());
}

void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : z) v /= s;
}

// ---------------------------------------------------------------------------

void Gradients::scale(double s) {
  for (auto& w : weights)
    for (double& x : w.values()) x *= s;
  for (auto& b : biases)
    for (double& x : b.values()) x *= s;
}

void Gradients::axpy(double s, const Gradients& other) {
  require(weights.size() == other.weights.size(), ErrorKind::Dimension,
          "gradient structures differ in layer count");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    require(weights[l].shape() == other.weights[l].shape() &&
                biases[l].shape() == other.biases[l].shape(),
            ErrorKind::Dimension, "gradient shapes differ at layer " + std::to_string(l));
    auto dst = weights[l].values();
    auto src = other.weights[l].values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
    auto bd = biases[l].values();
    auto bs = other.biases[l].values();
    for (std::size_t i = 0; i < bd.size(); ++i) bd[i] += s * bs[i];
  }
}

std::size_t Gradients::size() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.insert(out.end(), weights[l].values().begin(), weights[l].values().end());
    out.insert(out.end(), biases[l].values().begin(), biases[l].values().end());
  }
  return out;
}

// ---------------------------------------------------------------------------

Network::Network(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
    weights_.emplace_back(std::vector<std::size_t>{arch_.layer_widths[l], arch_.fan_in(l)});
    biases_.emplace_back(std::vector<std::size_t>{arch_.layer_widths[l]});
  }
}

Network::Network(Architecture arch, Rng& init) : Network(std::move(arch)) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(arch_.fan_in(l)));
    for (double& w : weights_[l].values()) w = init.normal(0.0, stddev);
  }
}

Network Network::zeros(Architecture arch) { return Network(std::move(arch)); }

Network::Network(const Network& other)
    : arch_(other.arch_), weights_(other.weights_), biases_(other.biases_),
      version_(other.version_) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    arch_ = other.arch_;
    weights_ = other.weights_;
    biases_ = other.biases_;
    version_ = std::max(version_, other.version_) + 1;
  }
  return *this;
}

Tensor& Network::mutable_weight(std::size_t l) {
  ++version_;
  return weights_.at(l);
}

Tensor& Network::mutable_bias(std::size_t l) {
  ++version_;
  return biases_.at(l);
}

std::size_t Network::num_params() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
  return n;
}

std::vector<double> Network::flat_params() const {
  std::vector<double> out;
  out.reserve(num_params());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.insert(out.end(), weights_[l].values().begin(), weights_[l].values().end());
    out.insert(out.end(), biases_[l].values().begin(), biases_[l].values().end());
  }
  return out;
}

void Network::set_flat_params(std::span<const double> flat) {
  require(flat.size() == num_params(), ErrorKind::Dimension,
          "set_flat_params: expected " + std::to_string(num_params()) + " values, got " +
              std::to_string(flat.size()));
  ++version_;
  std::size_t k = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    for (double& w : weights_[l].values()) w = flat[k++];
    for (double& b : biases_[l].values()) b = flat[k++];
  }
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.weights.emplace_back(weights_[l].shape());
    g.biases.emplace_back(biases_[l].shape());
  }
  return g;
}

void Network::check_input(std::size_t d) const {
  require(d == arch_.input_dim, ErrorKind::Dimension,
          "network expects " + std::to_string(arch_.input_dim) + " inputs, got " +
              std::to_string(d));
}

ForwardTape Network::record(const Tensor& xs) const {
  require(xs.rank() == 2, ErrorKind::Dimension,
          "record: expected a B×d batch, got " + xs.shape_string());
  check_input(xs.cols());
  ForwardTape tape;
  tape.input = xs;
  tape.owner = this;
  tape.version = version_;

  const std::size_t batch = xs.rows();
  const Tensor* a = &tape.input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Tensor z = matmul_transposed(*a, weights_[l]);
    const std::size_t width = z.cols();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < width; ++j) z.at(b, j) += biases_[l][j];
    tape.pre.push_back(std::move(z));
    if (l + 1 < weights_.size()) {
      Tensor h = tape.pre.back();
      if (arch_.activates(l)) {
        if (arch_.activation == Activation::ReLU) {
          for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
        } else {
          for (double& v : h.values()) v = std::tanh(v);
        }
      }
      tape.post.push_back(std::move(h));
      a = &tape.post.back();
    }
  }
  tape.logits = tape.pre.back();
  tape.probs = tape.logits;
  for (std::size_t b = 0; b < batch; ++b) softmax_inplace(tape.probs.row(b));
  return tape;
}

Tensor Network::logits(std::span<const double> x) const {
  check_input(x.size());
  Tensor xs({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  return record(xs).logits;
}

ProbDist Network::forward(std::span<const double> x) const {
  check_input(x.size());
  Tensor xs({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  auto tape = record(xs);
  auto row = tape.probs.row(0);
  return ProbDist(std::vector<double>(row.begin(), row.end()));
}

BackwardResult Network::backward(const ForwardTape& tape, const Tensor& grad_logits,
                                 bool with_params) const {
  require(tape.owner != nullptr, ErrorKind::State, "backward: no forward pass was recorded");
  require(tape.owner == this && tape.version == version_, ErrorKind::State,
          "backward: forward record is stale (parameters changed or different network)");
  require(grad_logits.rank() == 2 && grad_logits.rows() == tape.batch() &&
              grad_logits.cols() == arch_.num_classes,
          ErrorKind::Dimension,
          "backward: gradient " + grad_logits.shape_string() + " does not match logits " +
              tape.logits.shape_string());

  BackwardResult result;
  if (with_params) result.params = zero_gradients();

  Tensor delta = grad_logits;  // dL/dz for the current layer
  for (std::size_t l = weights_.size(); l-- > 0;) {
    const Tensor& layer_in = l == 0 ? tape.input : tape.post[l - 1];
    if (with_params) {
      result.params.weights[l] = transposed_matmul(delta, layer_in);
      auto& db = result.params.biases[l];
      for (std::size_t b = 0; b < delta.rows(); ++b)
        for (std::size_t j = 0; j < delta.cols(); ++j) db[j] += delta.at(b, j);
    }
    Tensor upstream = matmul(delta, weights_[l]);  // dL/d(layer_in)
    if (l > 0 && arch_.activates(l - 1)) {
      const Tensor& pre = tape.pre[l - 1];
      const Tensor& post = tape.post[l - 1];
      auto up = upstream.values();
      if (arch_.activation == Activation::ReLU) {
        auto z = pre.values();
        for (std::size_t i = 0; i < up.size(); ++i)
          if (!(z[i] > 0.0)) up[i] = 0.0;
      } else {
        auto h = post.values();
        for (std::size_t i = 0; i < up.size(); ++i) up[i] *= 1.0 - h[i] * h[i];
      }
    }
    delta = std::move(upstream);
  }
  result.input_grad = std::move(delta);
  return result;
}

BackwardResult Network::param_gradient(const ForwardTape& tape,
                                       const Tensor& grad_logits) const {
  return backward(tape, grad_logits, true);
}

Tensor Network::input_gradient(const ForwardTape& tape, const Tensor& grad_logits) const {
  return backward(tape, grad_logits, false).input_grad;
}

Tensor Network::input_jacobian_logp(std::span<const double> x) const {
  check_input(x.size());
  const std::size_t n = arch_.num_classes;
  const std::size_t d = x.size();
  Tensor xs({n, d});
  for (std::size_t j = 0; j < n; ++j) std::copy(x.begin(), x.end(), xs.row(j).begin());
  auto tape = record(xs);
  // d log f_j / d z = e_j − f
  Tensor seed({n, n});
  auto f = tape.probs.row(0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k) seed.at(j, k) = (j == k ? 1.0 : 0.0) - f[k];
  return input_gradient(tape, seed);
}

// ---------------------------------------------------------------------------
// Checkpoint encoding

namespace {

constexpr char kMagic[8] = {'F', 'L', 'N', 'E', 'T', 'C', 'K', '\0'};

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    auto c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  template <class T>
  void le(T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    raw(buf, sizeof(T));
  }
  std::vector<unsigned char>& bytes() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> in) : in_(in) {}

  template <class T>
  T le(const char* what) {
    need(sizeof(T), what);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > in_.size())
      fail(ErrorKind::Format, std::string("checkpoint truncated while reading ") + what +
                                  " at offset " + std::to_string(pos_));
  }
  std::size_t pos() const { return pos_; }
  std::span<const unsigned char> consumed() const { return in_.subspan(0, pos_); }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

std::uint64_t checksum(std::span<const unsigned char> bytes) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Network& net) {
  const auto& arch = net.arch();
  ByteWriter w;
  w.raw(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(arch.activation));
  w.le<std::uint64_t>(arch.input_dim);
  w.le<std::uint64_t>(arch.num_classes);
  w.le<std::uint64_t>(arch.layer_widths.size());
  for (auto width : arch.layer_widths) w.le<std::uint64_t>(width);
  w.le<std::uint8_t>(arch.activation_mask.empty() ? 0 : 1);
  for (bool m : arch.activation_mask) w.le<std::uint8_t>(m ? 1 : 0);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    for (double v : net.weight(l).values()) w.le<double>(v);
    for (double v : net.bias(l).values()) w.le<double>(v);
  }
  const auto sum = checksum(w.bytes());
  w.le<std::uint64_t>(sum);
  return std::move(w.bytes());
}

Network decode_checkpoint(std::span<const unsigned char> bytes) {
  ByteReader r(bytes);
  r.need(sizeof(kMagic), "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    fail(ErrorKind::Format, "not a fisherlens checkpoint (bad magic at offset 0)");
  r.skip(sizeof(kMagic));
  const auto version = r.le<std::uint32_t>("format version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::Format, "unsupported checkpoint format version " + std::to_string(version) +
                                " at offset 8");
  Architecture arch;
  const auto act = r.le<std::uint32_t>("activation");
  if (act > static_cast<std::uint32_t>(Activation::Tanh))
    fail(ErrorKind::Format, "invalid activation code " + std::to_string(act) + " at offset 12");
  arch.activation = static_cast<Activation>(act);
  arch.input_dim = r.le<std::uint64_t>("input_dim");
  arch.num_classes = r.le<std::uint64_t>("num_classes");
  const auto layers = r.le<std::uint64_t>("layer count");
  if (layers == 0 || layers > 4096)
    fail(ErrorKind::Format, "implausible layer count " + std::to_string(layers));
  for (std::uint64_t l = 0; l < layers; ++l)
    arch.layer_widths.push_back(r.le<std::uint64_t>("layer width"));
  const auto has_mask = r.le<std::uint8_t>("mask flag");
  if (has_mask)
    for (std::uint64_t l = 0; l + 1 < layers; ++l)
      arch.activation_mask.push_back(r.le<std::uint8_t>("mask") != 0);
  try {
    arch.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, std::string("checkpoint architecture invalid: ") + e.what());
  }
  Network net = Network::zeros(arch);
  std::vector<double> flat(net.num_params());
  r.need(flat.size() * sizeof(double), "parameters");
  for (double& v : flat) v = r.le<double>("parameter");
  const auto expected = checksum(r.consumed());
  const auto stored = r.le<std::uint64_t>("checksum");
  if (stored != expected)
    fail(ErrorKind::Format, "checkpoint checksum mismatch at offset " +
                                std::to_string(r.pos() - sizeof(std::uint64_t)));
  if (r.pos() != bytes.size())
    fail(ErrorKind::Format, "trailing bytes after checkpoint at offset " + std::to_string(r.pos()));
  net.set_flat_params(flat);
  return net;
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(net);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fisherlens
