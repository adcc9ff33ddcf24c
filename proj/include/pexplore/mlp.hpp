#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pexplore/rng.hpp"
#include "pexplore/text.hpp"

namespace pexplore {

enum class OutputActivation { Identity, ScaledTanh };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Parameter-shaped gradient, plus the gradient with respect to the network input.
struct MlpGradient {
  std::vector<DenseLayer> layers;
  Eigen::VectorXd input;

  MlpGradient& operator+=(const MlpGradient& o) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight += o.layers[i].weight;
      layers[i].bias += o.layers[i].bias;
    }
    input += o.input;
    return *this;
  }

  MlpGradient& operator*=(double s) {
    for (auto& l : layers) {
      l.weight *= s;
      l.bias *= s;
    }
    input *= s;
    return *this;
  }

  bool is_zero() const {
    for (const auto& l : layers) {
      if (!l.weight.isZero(0.0) || !l.bias.isZero(0.0)) return false;
    }
    return true;
  }
};

// Dense network: ReLU hidden layers, identity or bound * tanh output.
class Mlp {
 public:
  // Activations recorded by forward_tape(), consumed by backward().
  struct Tape {
    std::vector<Eigen::VectorXd> inputs;  // input to each layer
    Eigen::VectorXd pre_output;           // last layer pre-activation
    Eigen::VectorXd output;
  };

  Mlp() = default;

  Mlp(std::vector<int> dims, OutputActivation out, double output_scale = 1.0)
      : dims_(std::move(dims)), out_(out), scale_(output_scale) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    for (int d : dims_) {
      if (d < 1) throw std::invalid_argument("Mlp layer dims must be >= 1");
    }
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
      layers_.push_back({Eigen::MatrixXd::Zero(dims_[i + 1], dims_[i]),
                         Eigen::VectorXd::Zero(dims_[i + 1])});
    }
  }

  // Hidden layers U(-1/sqrt(fan_in), 1/sqrt(fan_in)); output layer U(-3e-3, 3e-3).
  static Mlp random(std::vector<int> dims, OutputActivation out, double output_scale, Rng& rng) {
    Mlp net(std::move(dims), out, output_scale);
    for (std::size_t l = 0; l < net.layers_.size(); ++l) {
      const bool last = l + 1 == net.layers_.size();
      const double r = last ? 3e-3 : 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
      for (auto& v : net.layers_[l].weight.reshaped()) v = uniform_real(rng, -r, r);
      for (auto& v : net.layers_[l].bias) v = uniform_real(rng, -r, r);
    }
    return net;
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  OutputActivation output_activation() const { return out_; }
  double output_scale() const { return scale_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const { return forward_tape(x).output; }

  Tape forward_tape(const Eigen::VectorXd& x) const {
    if (x.size() != input_dim()) {
      throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.size()) +
                                  " entries, expected " + std::to_string(input_dim()));
    }
    Tape tape;
    tape.inputs.reserve(layers_.size());
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      tape.inputs.push_back(h);
      Eigen::VectorXd z = layers_[l].weight * h + layers_[l].bias;
      if (l + 1 < layers_.size()) {
        h = z.cwiseMax(0.0);
      } else {
        tape.pre_output = z;
        h = out_ == OutputActivation::Identity ? z : Eigen::VectorXd(scale_ * z.array().tanh());
      }
    }
    tape.output = std::move(h);
    return tape;
  }

  // Gradients of a scalar loss given d loss / d output.
  MlpGradient backward(const Tape& tape, const Eigen::VectorXd& output_grad) const {
    if (tape.inputs.size() != layers_.size()) {
      throw std::logic_error("Mlp::backward: no forward pass recorded");
    }
    if (output_grad.size() != output_dim()) {
      throw std::invalid_argument("Mlp::backward: output gradient shape mismatch");
    }
    MlpGradient g;
    g.layers.resize(layers_.size());
    Eigen::VectorXd delta = output_grad;
    if (out_ == OutputActivation::ScaledTanh) {
      delta = delta.array() * scale_ * (1.0 - tape.pre_output.array().tanh().square());
    }
    for (std::size_t l = layers_.size(); l-- > 0;) {
      g.layers[l].weight = delta * tape.inputs[l].transpose();
      g.layers[l].bias = delta;
      Eigen::VectorXd back = layers_[l].weight.transpose() * delta;
      if (l > 0) {
        // ReLU derivative from the layer input, which is the previous ReLU output.
        back = (tape.inputs[l].array() > 0.0).select(back, 0.0);
      }
      delta = std::move(back);
    }
    g.input = std::move(delta);
    return g;
  }

  MlpGradient zero_gradient() const {
    MlpGradient g;
    for (const auto& l : layers_) {
      g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                          Eigen::VectorXd::Zero(l.bias.size())});
    }
    g.input = Eigen::VectorXd::Zero(input_dim());
    return g;
  }

  // params += step * grad
  void apply(const MlpGradient& grad, double step) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight += step * grad.layers[l].weight;
      layers_[l].bias += step * grad.layers[l].bias;
    }
  }

  // this <- polyak * this + (1 - polyak) * live
  void blend_toward(const Mlp& live, double polyak) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].weight = polyak * layers_[l].weight + (1.0 - polyak) * live.layers_[l].weight;
      layers_[l].bias = polyak * layers_[l].bias + (1.0 - polyak) * live.layers_[l].bias;
    }
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  // Flat view: layer by layer, weights (column-major) then biases.
  double& parameter(std::size_t i) {
    for (auto& l : layers_) {
      const auto nw = static_cast<std::size_t>(l.weight.size());
      if (i < nw) return l.weight.data()[i];
      i -= nw;
      const auto nb = static_cast<std::size_t>(l.bias.size());
      if (i < nb) return l.bias.data()[i];
      i -= nb;
    }
    throw std::out_of_range("Mlp::parameter index");
  }

  static double gradient_entry(const MlpGradient& g, std::size_t i) {
    for (const auto& l : g.layers) {
      const auto nw = static_cast<std::size_t>(l.weight.size());
      if (i < nw) return l.weight.data()[i];
      i -= nw;
      const auto nb = static_cast<std::size_t>(l.bias.size());
      if (i < nb) return l.bias.data()[i];
      i -= nb;
    }
    throw std::out_of_range("gradient index");
  }

  double max_abs_difference(const Mlp& o) const {
    double m = 0.0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      m = std::max(m, (layers_[l].weight - o.layers_[l].weight).cwiseAbs().maxCoeff());
      m = std::max(m, (layers_[l].bias - o.layers_[l].bias).cwiseAbs().maxCoeff());
    }
    return m;
  }

  bool all_finite() const {
    for (const auto& l : layers_) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
    return true;
  }

  friend bool operator==(const Mlp& a, const Mlp& b) {
    if (a.dims_ != b.dims_ || a.out_ != b.out_ || a.scale_ != b.scale_) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
      if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
        return false;
      }
    }
    return true;
  }

  // Text checkpoint:
  //   mlp <n_dims> <d0> ... <dn> <identity|tanh> <scale>
  // then per layer one line of row-major weights and one line of biases.
  void save(std::ostream& os) const {
    os << "mlp " << dims_.size();
    for (int d : dims_) os << ' ' << d;
    os << ' ' << (out_ == OutputActivation::Identity ? "identity" : "tanh") << ' '
       << format_double(scale_) << '\n';
    for (const auto& l : layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) {
          os << (r || c ? " " : "") << format_double(l.weight(r, c));
        }
      }
      os << '\n';
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
        os << (i ? " " : "") << format_double(l.bias(i));
      }
      os << '\n';
    }
  }

  static Mlp load(std::istream& is) {
    std::string tag;
    std::size_t n = 0;
    if (!(is >> tag >> n) || tag != "mlp" || n < 2) {
      throw std::runtime_error("Mlp::load: bad header");
    }
    std::vector<int> dims(n);
    for (auto& d : dims) {
      if (!(is >> d)) throw std::runtime_error("Mlp::load: bad dims");
    }
    std::string act;
    std::string scale;
    if (!(is >> act >> scale)) throw std::runtime_error("Mlp::load: bad activation");
    if (act != "identity" && act != "tanh") throw std::runtime_error("Mlp::load: unknown activation " + act);
    Mlp net(dims, act == "identity" ? OutputActivation::Identity : OutputActivation::ScaledTanh,
            std::strtod(scale.c_str(), nullptr));
    std::string tok;
    auto next = [&] {
      if (!(is >> tok)) throw std::runtime_error("Mlp::load: truncated parameters");
      return std::strtod(tok.c_str(), nullptr);
    };
    for (auto& l : net.layers_) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = next();
      }
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = next();
    }
    return net;
  }

 private:
  std::vector<int> dims_;
  OutputActivation out_ = OutputActivation::Identity;
  double scale_ = 1.0;
  std::vector<DenseLayer> layers_;
};

}  // namespace pexplore
