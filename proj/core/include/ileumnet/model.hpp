#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ileumnet/autograd.hpp"
#include "ileumnet/kernels.hpp"

namespace ileumnet {

struct StageSpec {
  std::size_t channels = 0;
  std::size_t blocks = 0;
};

/// Residual network geometry. Each stage opens with a stride-2 block; the
/// attention gate reads the output of the second-to-last stage.
struct ResNetConfig {
  std::vector<StageSpec> stages{{64, 3}, {128, 3}, {256, 3}};
  std::array<std::size_t, 3> input_window{31, 87, 87};
  std::size_t in_channels = 1;
  std::size_t num_classes = 2;
  double dropout_rate = 0.5;
  PaddingMode padding = PaddingMode::kMirror;
  bool attention_enabled = true;
  double attention_weight = 0.5;

  static ResNetConfig paper();
  static ResNetConfig desk();

  // Throws kConfig on malformed geometry.
  void validate() const;

  // Smallest extent per axis the network accepts: every stride-2 stage must
  // be valid, and mirror padding needs at least 2 voxels in the last stage.
  std::size_t min_input_extent() const;

  std::size_t pooled_features() const { return stages.back().channels; }
  std::size_t gated_channels() const { return stages[stages.size() - 2].channels; }
};

/// One named parameter tensor shape, in initialisation order.
struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;  // 0 marks a bias (zero-initialised)
};

std::vector<ParamSpec> param_layout(const ResNetConfig& config);
std::size_t count_params(const ResNetConfig& config);

/// Ordered, named parameter tensors.
template <typename T>
class ParameterSet {
 public:
  void add(std::string name, Tensor<T> value);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& operator[](std::size_t i) { return tensors_.at(i); }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_.at(i); }
  const Tensor<T>* find(const std::string& name) const;
  std::size_t total_elements() const;

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// He-normal weights (std sqrt(2 / fan_in)), zero biases. Backbone and main
/// head draw first so toggling attention leaves them unchanged.
template <typename T>
ParameterSet<T> init_params(const ResNetConfig& config, Rng& rng);

// Zero-initialised set with the config's layout.
template <typename T>
ParameterSet<T> zero_params(const ResNetConfig& config);

template <typename T>
std::vector<Var> bind_params(Tape<T>& tape, const ParameterSet<T>& params, bool requires_grad);

template <typename T>
struct Prediction {
  Var logits_main;
  std::optional<Var> logits_attended;
  Var logits_combined;
  // [1, D, H, W] on the gated feature-map grid.
  std::optional<Tensor<T>> attention_map;
  std::vector<Shape> stage_shapes;
  Shape pooled_shape;
};

/// Runs the network on one [C, D, H, W] window.
template <typename T>
Prediction<T> forward(Tape<T>& tape, const std::vector<Var>& params, Var input, const ResNetConfig& config,
                      bool training, Rng& rng);

struct AttentionOutput {
  Var attended;  // [C]
  Var map;       // [1, D, H, W]
};

/// Additive gate: c(pos) = psi . relu(Wf f(pos) + Wg g + b), alpha = softmax
/// over positions, attended = sum alpha(pos) f(pos).
template <typename T>
AttentionOutput attention_gate(Tape<T>& tape, Var features, Var gating, Var wf, Var wg, Var bias, Var psi);

// (1 - w) * main + w * attended.
template <typename T>
Var combine_predictions(Tape<T>& tape, Var main, Var attended, double weight);

/// Checkpoint file: the ASCII line "ILEUMNET-CKPT v1\n", then one record per
/// tensor until end of file: uint32 name length, name bytes, uint32 rank,
/// rank x uint32 extents, little-endian float32 data. Integers are
/// little-endian.
void save_checkpoint(const std::string& path, const ParameterSet<float>& params);
ParameterSet<float> load_checkpoint(const std::string& path);

}  // namespace ileumnet
