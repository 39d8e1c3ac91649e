#include "ileumnet/model.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "ileumnet/ops.hpp"

namespace ileumnet {

ResNetConfig ResNetConfig::paper() { return ResNetConfig{}; }

ResNetConfig ResNetConfig::desk() {
  ResNetConfig c;
  c.stages = {{16, 3}, {32, 3}, {64, 3}};
  c.input_window = {12, 24, 24};
  return c;
}

void ResNetConfig::validate() const {
  require(stages.size() >= 2, ErrorCode::kConfig, "network needs at least two stages (attention reads the penultimate)");
  for (const auto& s : stages) {
    require(s.channels > 0 && s.blocks > 0, ErrorCode::kConfig, "stage channels and block counts must be positive");
  }
  require(in_channels > 0 && num_classes >= 2, ErrorCode::kConfig, "invalid channel or class count");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, ErrorCode::kConfig, "dropout rate must be in [0,1)");
  require(attention_weight >= 0.0 && attention_weight <= 1.0, ErrorCode::kConfig, "attention weight must be in [0,1]");
  for (auto e : input_window) {
    require(e >= min_input_extent(), ErrorCode::kConfig,
            "input window extent " + std::to_string(e) + " below minimum " + std::to_string(min_input_extent()));
  }
}

std::size_t ResNetConfig::min_input_extent() const {
  const std::size_t floor = std::size_t{1} << stages.size();
  const std::size_t last_needed = padding == PaddingMode::kMirror ? 2 : 1;
  for (std::size_t n = floor;; ++n) {
    std::size_t e = n;
    for (std::size_t s = 0; s < stages.size(); ++s) e = (e + 1) / 2;
    if (e >= last_needed) return n;
  }
}

std::vector<ParamSpec> param_layout(const ResNetConfig& config) {
  std::vector<ParamSpec> out;
  auto conv = [&](const std::string& prefix, std::size_t out_c, std::size_t in_c, std::size_t k) {
    out.push_back({prefix + ".weight", {out_c, in_c, k, k, k}, in_c * k * k * k});
    out.push_back({prefix + ".bias", {out_c}, 0});
  };
  std::size_t in_c = config.in_channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const std::size_t c = config.stages[s].channels;
    for (std::size_t b = 0; b < config.stages[s].blocks; ++b) {
      const std::string prefix = "d" + std::to_string(s + 1) + ".b" + std::to_string(b);
      const std::size_t block_in = b == 0 ? in_c : c;
      conv(prefix + ".conv1", c, block_in, 3);
      conv(prefix + ".conv2", c, c, 3);
      if (b == 0) conv(prefix + ".proj", c, block_in, 1);
    }
    in_c = c;
  }
  const std::size_t pooled = config.pooled_features();
  out.push_back({"head.weight", {config.num_classes, pooled}, pooled});
  out.push_back({"head.bias", {config.num_classes}, 0});
  if (config.attention_enabled) {
    const std::size_t gated = config.gated_channels();
    const std::size_t inter = gated;
    out.push_back({"attention.wf.weight", {inter, gated, 1, 1, 1}, gated});
    out.push_back({"attention.wg.weight", {inter, pooled}, pooled});
    out.push_back({"attention.bias", {inter}, 0});
    out.push_back({"attention.psi.weight", {1, inter, 1, 1, 1}, inter});
    out.push_back({"attention_head.weight", {config.num_classes, gated}, gated});
    out.push_back({"attention_head.bias", {config.num_classes}, 0});
  }
  return out;
}

std::size_t count_params(const ResNetConfig& config) {
  std::size_t total = 0;
  for (const auto& p : param_layout(config)) total += numel(p.shape);
  return total;
}

template <typename T>
void ParameterSet<T>::add(std::string name, Tensor<T> value) {
  require(!index_.contains(name), ErrorCode::kInvalidArgument, "duplicate parameter '" + name + "'");
  index_.emplace(name, names_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

template <typename T>
const Tensor<T>* ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &tensors_[it->second];
}

template <typename T>
std::size_t ParameterSet<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

template <typename T>
ParameterSet<T> init_params(const ResNetConfig& config, Rng& rng) {
  ParameterSet<T> out;
  for (const auto& spec : param_layout(config)) {
    Tensor<T> t(spec.shape);
    if (spec.fan_in > 0) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(spec.fan_in)));
      for (auto& v : t.data()) v = static_cast<T>(normal(rng));
    }
    out.add(spec.name, std::move(t));
  }
  return out;
}

template <typename T>
ParameterSet<T> zero_params(const ResNetConfig& config) {
  ParameterSet<T> out;
  for (const auto& spec : param_layout(config)) out.add(spec.name, Tensor<T>(spec.shape));
  return out;
}

template <typename T>
std::vector<Var> bind_params(Tape<T>& tape, const ParameterSet<T>& params, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back(tape.bind(params[i], requires_grad));
  return vars;
}

template <typename T>
AttentionOutput attention_gate(Tape<T>& tape, Var features, Var gating, Var wf, Var wg, Var bias, Var psi) {
  const auto& f = tape.value(features);
  const auto& g = tape.value(gating);
  const auto& wfv = tape.value(wf);
  require(f.rank() == 4 && g.rank() == 1 && wfv.rank() == 5 && wfv.dim(1) == f.dim(0), ErrorCode::kShapeMismatch,
          "attention_gate: features " + to_string(f.shape()) + " gating " + to_string(g.shape()) + " wf " +
              to_string(wfv.shape()));
  const std::size_t inter = wfv.dim(0);
  const ConvSpec project{f.dim(0), inter, 1, 1, PaddingMode::kZero};
  const ConvSpec score{inter, 1, 1, 1, PaddingMode::kZero};

  const Var local = ops::conv3d(tape, features, wf, Var{}, project);
  const Var global = ops::dense(tape, gating, wg, bias);
  const Var hidden = ops::relu(tape, ops::add_channel_bias(tape, local, global));
  const Var scores = ops::conv3d(tape, hidden, psi, Var{}, score);
  const Var alpha = ops::spatial_softmax(tape, scores);
  return {ops::attention_pool(tape, features, alpha), alpha};
}

template <typename T>
Var combine_predictions(Tape<T>& tape, Var main, Var attended, double weight) {
  require(weight >= 0.0 && weight <= 1.0, ErrorCode::kWeightOutOfRange,
          "combination weight must be in [0,1], got " + std::to_string(weight));
  return ops::weighted_sum(tape, main, static_cast<T>(1.0 - weight), attended, static_cast<T>(weight));
}

template <typename T>
Prediction<T> forward(Tape<T>& tape, const std::vector<Var>& params, Var input, const ResNetConfig& config,
                      bool training, Rng& rng) {
  const auto& x0 = tape.value(input);
  require(x0.rank() == 4 && x0.dim(0) == config.in_channels, ErrorCode::kShapeMismatch,
          "network input must be [" + std::to_string(config.in_channels) + ",D,H,W], got " + to_string(x0.shape()));
  const std::size_t min_extent = config.min_input_extent();
  for (std::size_t a = 1; a < 4; ++a) {
    require(x0.dim(a) >= min_extent, ErrorCode::kWindowTooSmall,
            "input " + to_string(x0.shape()) + " has an extent below " + std::to_string(min_extent));
  }
  const auto layout = param_layout(config);
  require(params.size() == layout.size(), ErrorCode::kShapeMismatch,
          "expected " + std::to_string(layout.size()) + " parameters, got " + std::to_string(params.size()));
  std::size_t cursor = 0;
  auto next = [&]() {
    const Var v = params[cursor];
    require(tape.value(v).shape() == layout[cursor].shape, ErrorCode::kShapeMismatch,
            "parameter " + layout[cursor].name + " has shape " + to_string(tape.value(v).shape()));
    ++cursor;
    return v;
  };

  Prediction<T> pred;
  Var x = input;
  Var gated;
  std::size_t in_c = config.in_channels;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const std::size_t c = config.stages[s].channels;
    for (std::size_t b = 0; b < config.stages[s].blocks; ++b) {
      const std::size_t block_in = b == 0 ? in_c : c;
      const std::size_t stride = b == 0 ? 2 : 1;
      const Var w1 = next(), b1 = next(), w2 = next(), b2 = next();
      Var h = ops::relu(tape, ops::conv3d(tape, x, w1, b1, ConvSpec{block_in, c, 3, stride, config.padding}));
      h = ops::conv3d(tape, h, w2, b2, ConvSpec{c, c, 3, 1, config.padding});
      Var skip = x;
      if (b == 0) {
        const Var wp = next(), bp = next();
        skip = ops::conv3d(tape, x, wp, bp, ConvSpec{block_in, c, 1, 2, config.padding});
      }
      x = ops::relu(tape, ops::add(tape, h, skip));
    }
    pred.stage_shapes.push_back(tape.value(x).shape());
    if (s + 2 == config.stages.size()) gated = x;
    in_c = c;
  }

  const Var pooled = ops::global_avg_pool(tape, x);
  pred.pooled_shape = tape.value(pooled).shape();
  const Var head_w = next(), head_b = next();
  pred.logits_main = ops::dense(tape, ops::dropout(tape, pooled, config.dropout_rate, training, rng), head_w, head_b);
  pred.logits_combined = pred.logits_main;

  if (config.attention_enabled) {
    const Var wf = next(), wg = next(), ab = next(), psi = next();
    const Var att_w = next(), att_b = next();
    const auto gate = attention_gate(tape, gated, pooled, wf, wg, ab, psi);
    const Var logits = ops::dense(tape, ops::dropout(tape, gate.attended, config.dropout_rate, training, rng), att_w, att_b);
    pred.logits_attended = logits;
    pred.attention_map = tape.value(gate.map);
    pred.logits_combined = combine_predictions(tape, pred.logits_main, logits, config.attention_weight);
  }
  return pred;
}

namespace {

constexpr std::string_view kCheckpointMagic = "ILEUMNET-CKPT v1\n";

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet<float>& params) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& name = params.name(i);
    const auto& t = params[i];
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing checkpoint: " + path);
}

ParameterSet<float> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open checkpoint: " + path);
  std::string magic(kCheckpointMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  require(in && magic == kCheckpointMagic, ErrorCode::kIo, "not an ILEUMNET-CKPT v1 file: " + path);
  ParameterSet<float> params;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len)) {
    require(name_len > 0 && name_len < 4096, ErrorCode::kIo, "corrupt checkpoint record in " + path);
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    require(static_cast<bool>(in.read(name.data(), name_len)) && get_u32(in, rank) && rank > 0 && rank <= 8,
            ErrorCode::kIo, "corrupt checkpoint record in " + path);
    Shape shape(rank);
    for (auto& e : shape) {
      std::uint32_t v = 0;
      require(get_u32(in, v) && v > 0, ErrorCode::kIo, "corrupt checkpoint extents in " + path);
      e = v;
    }
    std::vector<float> data(numel(shape));
    for (auto& v : data) {
      std::uint32_t bits = 0;
      require(get_u32(in, bits), ErrorCode::kIo, "truncated checkpoint " + path);
      v = std::bit_cast<float>(bits);
    }
    params.add(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return params;
}

#define ILEUMNET_INSTANTIATE_MODEL(T)                                                                      \
  template class ParameterSet<T>;                                                                          \
  template ParameterSet<T> init_params(const ResNetConfig&, Rng&);                                         \
  template ParameterSet<T> zero_params(const ResNetConfig&);                                               \
  template std::vector<Var> bind_params(Tape<T>&, const ParameterSet<T>&, bool);                           \
  template AttentionOutput attention_gate(Tape<T>&, Var, Var, Var, Var, Var, Var);                         \
  template Var combine_predictions(Tape<T>&, Var, Var, double);                                            \
  template Prediction<T> forward(Tape<T>&, const std::vector<Var>&, Var, const ResNetConfig&, bool, Rng&);

ILEUMNET_INSTANTIATE_MODEL(float)
ILEUMNET_INSTANTIATE_MODEL(double)

}  // namespace ileumnet
