#include "ileumnet/ops.hpp"

#include <algorithm>
#include <cmath>

namespace ileumnet::ops {
namespace {

template <typename T>
void accumulate(Tape<T>& tape, Var v, const Tensor<T>& g) {
  if (v.valid() && tape.requires_grad(v)) tape.grad_buffer(v).add_(g);
}

}  // namespace

template <typename T>
Var pad3d(Tape<T>& tape, Var x, std::size_t width, PaddingMode mode) {
  return tape.record(kernels::pad3d(tape.value(x), width, mode), {x},
                     [x, width, mode](Tape<T>& t, const Tensor<T>& g) {
                       accumulate(t, x, kernels::pad3d_backward(g, t.value(x).shape(), width, mode));
                     });
}

template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var weight, Var bias, const ConvSpec& spec) {
  const Tensor<T>* b = bias.valid() ? &tape.value(bias) : nullptr;
  auto out = kernels::conv3d(tape.value(x), tape.value(weight), b, spec);
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias, spec](Tape<T>& t, const Tensor<T>& g) {
    Tensor<T>* dx = t.requires_grad(x) ? &t.grad_buffer(x) : nullptr;
    Tensor<T>* dw = t.requires_grad(weight) ? &t.grad_buffer(weight) : nullptr;
    Tensor<T>* db = bias.valid() && t.requires_grad(bias) ? &t.grad_buffer(bias) : nullptr;
    kernels::conv3d_backward(t.value(x), t.value(weight), g, spec, dx, dw, db);
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return tape.record(kernels::relu(tape.value(x)), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    const auto& in = t.value(x);
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (in[i] > T{0}) dx[i] += g[i];
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  Tensor<T> out = tape.value(a);
  out.add_(tape.value(b));
  return tape.record(std::move(out), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var a, T wa, Var b, T wb) {
  const auto& va = tape.value(a);
  const auto& vb = tape.value(b);
  require(va.shape() == vb.shape(), ErrorCode::kShapeMismatch, "weighted_sum operand shapes differ");
  Tensor<T> out(va.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * va[i] + wb * vb[i];
  return tape.record(std::move(out), {a, b}, [a, wa, b, wb](Tape<T>& t, const Tensor<T>& g) {
    if (t.requires_grad(a)) {
      auto& da = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += wa * g[i];
    }
    if (t.requires_grad(b)) {
      auto& db = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += wb * g[i];
    }
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  return tape.record(kernels::global_avg_pool(tape.value(x)), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    auto& dx = t.grad_buffer(x);
    const std::size_t c = dx.dim(0);
    const std::size_t spatial = dx.size() / c;
    const T scale = T{1} / static_cast<T>(spatial);
    for (std::size_t i = 0; i < c; ++i) {
      T* row = dx.ptr() + i * spatial;
      const T v = g[i] * scale;
      for (std::size_t j = 0; j < spatial; ++j) row[j] += v;
    }
  });
}

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias) {
  const Tensor<T>* b = bias.valid() ? &tape.value(bias) : nullptr;
  auto out = kernels::dense(tape.value(x), tape.value(weight), b);
  return tape.record(std::move(out), {x, weight, bias}, [x, weight, bias](Tape<T>& t, const Tensor<T>& g) {
    const auto& w = t.value(weight);
    const auto& in = t.value(x);
    const std::size_t o = w.dim(0), f = w.dim(1);
    if (t.requires_grad(x)) {
      auto& dx = t.grad_buffer(x);
      for (std::size_t i = 0; i < o; ++i) {
        const T* row = w.ptr() + i * f;
        for (std::size_t j = 0; j < f; ++j) dx[j] += row[j] * g[i];
      }
    }
    if (t.requires_grad(weight)) {
      auto& dw = t.grad_buffer(weight);
      for (std::size_t i = 0; i < o; ++i) {
        T* row = dw.ptr() + i * f;
        for (std::size_t j = 0; j < f; ++j) row[j] += g[i] * in[j];
      }
    }
    if (bias.valid() && t.requires_grad(bias)) accumulate(t, bias, g);
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, bool training, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, ErrorCode::kInvalidRate, "dropout rate must be in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const auto& in = tape.value(x);
  Tensor<T> mask(in.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::bernoulli_distribution drop(rate);
  for (auto& m : mask.data()) m = drop(rng) ? T{0} : keep_scale;
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return tape.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape<T>& t, const Tensor<T>& g) {
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::size_t label) {
  const auto& z = tape.value(logits);
  require(z.rank() == 1 && label < z.size(), ErrorCode::kShapeMismatch,
          "softmax_cross_entropy: label " + std::to_string(label) + " for logits " + to_string(z.shape()));
  const T peak = *std::max_element(z.data().begin(), z.data().end());
  T sum{0};
  for (auto v : z.data()) sum += std::exp(v - peak);
  const T loss = std::log(sum) - (z[label] - peak);
  Tensor<T> probs = kernels::softmax(z);
  return tape.record(Tensor<T>({1}, std::vector<T>{loss}), {logits},
                     [logits, label, probs = std::move(probs)](Tape<T>& t, const Tensor<T>& g) {
                       auto& dz = t.grad_buffer(logits);
                       for (std::size_t i = 0; i < probs.size(); ++i) {
                         dz[i] += g[0] * (probs[i] - (i == label ? T{1} : T{0}));
                       }
                     });
}

template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var v) {
  const auto& in = tape.value(x);
  const auto& bias = tape.value(v);
  require(in.rank() == 4 && bias.shape() == Shape{in.dim(0)}, ErrorCode::kShapeMismatch,
          "add_channel_bias: " + to_string(in.shape()) + " + " + to_string(bias.shape()));
  const std::size_t c = in.dim(0), spatial = in.size() / c;
  Tensor<T> out = in;
  for (std::size_t i = 0; i < c; ++i) {
    T* row = out.ptr() + i * spatial;
    for (std::size_t j = 0; j < spatial; ++j) row[j] += bias[i];
  }
  return tape.record(std::move(out), {x, v}, [x, v, c, spatial](Tape<T>& t, const Tensor<T>& g) {
    accumulate(t, x, g);
    if (t.requires_grad(v)) {
      auto& dv = t.grad_buffer(v);
      for (std::size_t i = 0; i < c; ++i) {
        const T* row = g.ptr() + i * spatial;
        T acc{0};
        for (std::size_t j = 0; j < spatial; ++j) acc += row[j];
        dv[i] += acc;
      }
    }
  });
}

template <typename T>
Var spatial_softmax(Tape<T>& tape, Var x) {
  Tensor<T> alpha = kernels::softmax(tape.value(x));
  Tensor<T> saved = alpha;
  return tape.record(std::move(alpha), {x}, [x, a = std::move(saved)](Tape<T>& t, const Tensor<T>& g) {
    T dot{0};
    for (std::size_t i = 0; i < a.size(); ++i) dot += g[i] * a[i];
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < a.size(); ++i) dx[i] += a[i] * (g[i] - dot);
  });
}

template <typename T>
Var attention_pool(Tape<T>& tape, Var features, Var weights) {
  const auto& f = tape.value(features);
  const auto& w = tape.value(weights);
  require(f.rank() == 4 && w.rank() == 4 && w.dim(0) == 1 && f.dim(1) == w.dim(1) && f.dim(2) == w.dim(2) &&
              f.dim(3) == w.dim(3),
          ErrorCode::kShapeMismatch, "attention_pool: features " + to_string(f.shape()) + " weights " + to_string(w.shape()));
  const std::size_t c = f.dim(0), spatial = w.size();
  Tensor<T> out({c});
  for (std::size_t i = 0; i < c; ++i) {
    const T* row = f.ptr() + i * spatial;
    T acc{0};
    for (std::size_t j = 0; j < spatial; ++j) acc += row[j] * w[j];
    out[i] = acc;
  }
  return tape.record(std::move(out), {features, weights},
                     [features, weights, c, spatial](Tape<T>& t, const Tensor<T>& g) {
                       const auto& fv = t.value(features);
                       const auto& wv = t.value(weights);
                       if (t.requires_grad(features)) {
                         auto& df = t.grad_buffer(features);
                         for (std::size_t i = 0; i < c; ++i) {
                           T* row = df.ptr() + i * spatial;
                           for (std::size_t j = 0; j < spatial; ++j) row[j] += g[i] * wv[j];
                         }
                       }
                       if (t.requires_grad(weights)) {
                         auto& dw = t.grad_buffer(weights);
                         for (std::size_t i = 0; i < c; ++i) {
                           const T* row = fv.ptr() + i * spatial;
                           for (std::size_t j = 0; j < spatial; ++j) dw[j] += g[i] * row[j];
                         }
                       }
                     });
}

template <typename T>
Var sum_squares(Tape<T>& tape, Var x) {
  T acc{0};
  for (auto v : tape.value(x).data()) acc += v * v;
  return tape.record(Tensor<T>({1}, std::vector<T>{acc}), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    const auto& in = t.value(x);
    auto& dx = t.grad_buffer(x);
    for (std::size_t i = 0; i < in.size(); ++i) dx[i] += T{2} * in[i] * g[0];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var x) {
  T acc{0};
  for (auto v : tape.value(x).data()) acc += v;
  return tape.record(Tensor<T>({1}, std::vector<T>{acc}), {x}, [x](Tape<T>& t, const Tensor<T>& g) {
    auto& dx = t.grad_buffer(x);
    for (auto& v : dx.data()) v += g[0];
  });
}

#define ILEUMNET_INSTANTIATE_OPS(T)                                              \
  template Var pad3d(Tape<T>&, Var, std::size_t, PaddingMode);                   \
  template Var conv3d(Tape<T>&, Var, Var, Var, const ConvSpec&);                 \
  template Var relu(Tape<T>&, Var);                                              \
  template Var add(Tape<T>&, Var, Var);                                          \
  template Var weighted_sum(Tape<T>&, Var, T, Var, T);                           \
  template Var global_avg_pool(Tape<T>&, Var);                                   \
  template Var dense(Tape<T>&, Var, Var, Var);                                   \
  template Var dropout(Tape<T>&, Var, double, bool, Rng&);                       \
  template Var softmax_cross_entropy(Tape<T>&, Var, std::size_t);                \
  template Var add_channel_bias(Tape<T>&, Var, Var);                             \
  template Var spatial_softmax(Tape<T>&, Var);                                   \
  template Var attention_pool(Tape<T>&, Var, Var);                               \
  template Var sum_squares(Tape<T>&, Var);                                       \
  template Var sum(Tape<T>&, Var);

ILEUMNET_INSTANTIATE_OPS(float)
ILEUMNET_INSTANTIATE_OPS(double)

}  // namespace ileumnet::ops
