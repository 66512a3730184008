#pragma once

// Finite-difference checks of every backward kernel against the binary64
// reference forwards. Each check returns the worst relative error over all
// gradient coordinates for one seeded random instance.

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "oracle/metric_reference.hpp"
#include "oracle/reference_ops.hpp"
#include "reid/layers.hpp"
#include "reid/triplet.hpp"

namespace checks {

inline constexpr double kStep = 1e-3;

using oracle::Vec;

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

inline Vec widen(const std::vector<float>& v) { return Vec(v.begin(), v.end()); }
inline Vec widen(const reid::Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

inline Vec concat(std::initializer_list<Vec> parts) {
  Vec out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

inline double linear_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t batch = 4, in = 5, out = 3;
  const reid::Tensor x({batch, in}, random_floats(rng, batch * in));
  const reid::Tensor w({out, in}, random_floats(rng, out * in));
  const reid::Tensor b({out}, random_floats(rng, out));
  const reid::Tensor r({batch, out}, random_floats(rng, batch * out));
  const auto g = reid::linear_backward(x, w, r, reid::Precision::Binary32);
  const Vec analytic = concat({widen(g.input), widen(g.weight), widen(g.bias)});
  const Vec rr = widen(r);
  auto loss = [&](const Vec& p) {
    const Vec xs(p.begin(), p.begin() + batch * in);
    const Vec ws(p.begin() + batch * in, p.begin() + batch * in + out * in);
    const Vec bs(p.begin() + batch * in + out * in, p.end());
    return oracle::dot(oracle::linear(xs, ws, bs, batch, in, out), rr);
  };
  const Vec numeric = oracle::central_difference(loss, concat({widen(x), widen(w), widen(b)}), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

inline double conv_error(std::uint64_t seed, reid::ConvKind kind, std::size_t stride = 1) {
  std::mt19937_64 rng(seed);
  reid::ConvSpec spec;
  spec.kind = kind;
  spec.in_channels = 3;
  spec.out_channels = kind == reid::ConvKind::Depthwise ? 3 : 4;
  spec.kernel = kind == reid::ConvKind::Pointwise ? 1 : 3;
  spec.padding = kind == reid::ConvKind::Pointwise ? 0 : 1;
  spec.stride = stride;
  const std::size_t batch = 2, h = 5, w = 5;
  const reid::Tensor x({batch, spec.in_channels, h, w}, random_floats(rng, batch * spec.in_channels * h * w));
  const reid::Tensor wt(spec.weight_shape(), random_floats(rng, spec.param_count()));
  const oracle::ConvShape s{batch, spec.in_channels, h, w, spec.out_channels, spec.kernel, spec.stride, spec.padding,
                            kind == reid::ConvKind::Depthwise};
  const std::size_t out_n = batch * spec.out_channels * s.out_h() * s.out_w();
  const reid::Tensor r({batch, spec.out_channels, s.out_h(), s.out_w()}, random_floats(rng, out_n));
  const auto g = reid::conv2d_backward(x, wt, r, spec, reid::Precision::Binary32);
  const Vec analytic = concat({widen(g.input), widen(g.weight)});
  const Vec rr = widen(r);
  const std::size_t nx = x.size();
  auto loss = [&](const Vec& p) {
    return oracle::dot(oracle::conv2d(Vec(p.begin(), p.begin() + nx), Vec(p.begin() + nx, p.end()), s), rr);
  };
  const Vec numeric = oracle::central_difference(loss, concat({widen(x), widen(wt)}), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

/// Training-mode batch norm over [batch, C] (spatial == 1) or NCHW.
inline double batchnorm_error(std::uint64_t seed, bool spatial_input) {
  std::mt19937_64 rng(seed);
  const std::size_t batch = spatial_input ? 2 : 8, c = spatial_input ? 3 : 4, spatial = spatial_input ? 6 : 1;
  const reid::Shape shape = spatial_input ? reid::Shape{batch, c, 2, 3} : reid::Shape{batch, c};
  const reid::Tensor x(shape, random_floats(rng, batch * c * spatial, -2.0f, 2.0f));
  reid::BnParams p = reid::BnParams::identity(c);
  p.gamma = random_floats(rng, c, 0.5f, 1.5f);
  p.beta = random_floats(rng, c);
  const reid::Tensor r(shape, random_floats(rng, x.size()));
  const auto g = reid::batchnorm_backward(x, p, r);
  const Vec analytic = concat({widen(g.input), widen(g.gamma), widen(g.beta)});
  const Vec rr = widen(r);
  const std::size_t nx = x.size();
  auto loss = [&](const Vec& q) {
    const Vec xs(q.begin(), q.begin() + nx), gamma(q.begin() + nx, q.begin() + nx + c), beta(q.begin() + nx + c, q.end());
    return oracle::dot(oracle::batchnorm(xs, gamma, beta, p.epsilon, batch, c, spatial), rr);
  };
  const Vec numeric = oracle::central_difference(loss, concat({widen(x), widen(p.gamma), widen(p.beta)}), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

inline double relu_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<float> xs = random_floats(rng, 40, 0.05f, 1.0f);
  for (std::size_t i = 0; i < xs.size(); i += 2) xs[i] = -xs[i];
  std::shuffle(xs.begin(), xs.end(), rng);
  const reid::Tensor x({2, 20}, xs);
  const reid::Tensor r({2, 20}, random_floats(rng, 40));
  const Vec analytic = widen(reid::relu_backward(x, r));
  const Vec rr = widen(r);
  const Vec numeric =
      oracle::central_difference([&](const Vec& q) { return oracle::dot(oracle::relu(q), rr); }, widen(x), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

inline double avgpool_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const reid::Tensor x({2, 3, 4, 6}, random_floats(rng, 144));
  const reid::Tensor r({2, 3, 2, 2}, random_floats(rng, 24));
  const Vec analytic = widen(reid::avgpool2d_backward(r, x.shape(), 2, 3));
  const Vec rr = widen(r);
  const Vec numeric = oracle::central_difference(
      [&](const Vec& q) { return oracle::dot(oracle::avgpool(q, 6, 4, 6, 2, 3), rr); }, widen(x), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

/// y = x + W2 (W1 x + b1) + b2, differentiated with respect to x, W1, b1, W2, b2.
inline double residual_error(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t batch = 3, d = 4, hidden = 5;
  const auto B32 = reid::Precision::Binary32;
  const reid::Tensor x({batch, d}, random_floats(rng, batch * d));
  const reid::Tensor w1({hidden, d}, random_floats(rng, hidden * d)), b1({hidden}, random_floats(rng, hidden));
  const reid::Tensor w2({d, hidden}, random_floats(rng, d * hidden)), b2({d}, random_floats(rng, d));
  const reid::Tensor r({batch, d}, random_floats(rng, batch * d));

  const reid::Tensor h = reid::linear_forward(x, w1, b1, B32);
  const auto split = reid::residual_add_backward(r);
  const auto g2 = reid::linear_backward(h, w2, split.branch, B32);
  const auto g1 = reid::linear_backward(x, w1, g2.input, B32);
  Vec gx = widen(g1.input);
  for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += split.shortcut[i];
  const Vec analytic = concat({gx, widen(g1.weight), widen(g1.bias), widen(g2.weight), widen(g2.bias)});

  const Vec rr = widen(r);
  auto loss = [&](const Vec& q) {
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
      Vec v(q.begin() + at, q.begin() + at + n);
      at += n;
      return v;
    };
    const Vec xs = take(batch * d), w1s = take(hidden * d), b1s = take(hidden), w2s = take(d * hidden), b2s = take(d);
    const Vec hs = oracle::linear(xs, w1s, b1s, batch, d, hidden);
    Vec y = oracle::linear(hs, w2s, b2s, batch, hidden, d);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += xs[i];
    return oracle::dot(y, rr);
  };
  const Vec numeric =
      oracle::central_difference(loss, concat({widen(x), widen(w1), widen(b1), widen(w2), widen(b2)}), kStep);
  return oracle::max_relative_error(analytic, numeric);
}

/// Batch-hard loss over 4 ids x 2 instances, step 1e-5.
inline double triplet_error(std::uint64_t seed, bool squared) {
  std::mt19937_64 rng(seed);
  const std::size_t n = 8, dim = 4;
  const std::vector<std::uint32_t> labels{0, 0, 1, 1, 2, 2, 3, 3};
  const reid::Tensor e({n, dim}, random_floats(rng, n * dim));
  reid::TripletOptions opts;
  opts.squared = squared;
  opts.margin = 1.0f;
  const auto out = reid::batch_hard_triplet_loss(e, labels, opts);
  const Vec analytic = widen(reid::batch_hard_triplet_backward(e, out, opts, 1.0f));
  const Vec numeric = oracle::central_difference(
      [&](const Vec& q) { return oracle::batch_hard(q, dim, labels, opts.margin, squared).loss; }, widen(e), 1e-5);
  return oracle::max_relative_error(analytic, numeric);
}

}  // namespace checks
