#pragma once

// Differentiable operations over a Tape. Each returns a new Var whose backward
// closure accumulates into its inputs.

#include <cstddef>

#include "ileumnet/autograd.hpp"
#include "ileumnet/kernels.hpp"

namespace ileumnet::ops {

template <typename T>
Var pad3d(Tape<T>& tape, Var x, std::size_t width, PaddingMode mode);

// `bias` may be an invalid Var for a bias-free convolution.
template <typename T>
Var conv3d(Tape<T>& tape, Var x, Var weight, Var bias, const ConvSpec& spec);

template <typename T>
Var relu(Tape<T>& tape, Var x);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

// out = wa * a + wb * b
template <typename T>
Var weighted_sum(Tape<T>& tape, Var a, T wa, Var b, T wb);

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x);

template <typename T>
Var dense(Tape<T>& tape, Var x, Var weight, Var bias);

/// Inverted dropout: survivors are scaled by 1/(1-rate) during training;
/// identity when not training.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double rate, bool training, Rng& rng);

// -log softmax(logits)[label], stabilised by max subtraction. Returns shape [1].
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::size_t label);

// x [C,D,H,W] + v [C] broadcast over spatial positions.
template <typename T>
Var add_channel_bias(Tape<T>& tape, Var x, Var v);

// Softmax over every element of x (all spatial positions of a score map).
template <typename T>
Var spatial_softmax(Tape<T>& tape, Var x);

// features [C,D,H,W], weights [1,D,H,W] -> [C]: sum over positions of w * f.
template <typename T>
Var attention_pool(Tape<T>& tape, Var features, Var weights);

template <typename T>
Var sum_squares(Tape<T>& tape, Var x);

template <typename T>
Var sum(Tape<T>& tape, Var x);

}  // namespace ileumnet::ops
