#include "reid/layers.hpp"

#include <cmath>

#include "reid/error.hpp"
#include "reid/half.hpp"

namespace reid {

namespace {

std::vector<float> values_as(const Tensor& t, Precision mode) {
  std::vector<float> out(t.data().begin(), t.data().end());
  if (mode == Precision::Binary16Emulated && t.mode() != Precision::Binary16Emulated) {
    for (float& v : out) v = quantize_f16(v);
  }
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

Precision narrower(Precision a, Precision b) {
  return (a == Precision::Binary16Emulated || b == Precision::Binary16Emulated)
             ? Precision::Binary16Emulated
             : Precision::Binary32;
}

// Channel layout shared by the batch-norm kernels.
struct ChannelView {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t spatial = 1;

  std::size_t index(std::size_t n, std::size_t c, std::size_t s) const {
    return (n * channels + c) * spatial + s;
  }
  std::size_t count() const { return batch * spatial; }
};

ChannelView channel_view(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batch norm expects [N, C] or [N, C, H, W], got " + shape_string(x.shape()));
  }
  ChannelView v;
  v.batch = x.dim(0);
  v.channels = x.dim(1);
  if (x.rank() == 4) v.spatial = x.dim(2) * x.dim(3);
  if (v.count() == 0) throw ShapeError("batch norm over an empty batch");
  return v;
}

struct BatchStats {
  std::vector<float> mean;
  std::vector<float> var;  // biased
};

BatchStats batch_stats(std::span<const float> x, const ChannelView& v) {
  BatchStats s{std::vector<float>(v.channels, 0.0f), std::vector<float>(v.channels, 0.0f)};
  const auto m = static_cast<float>(v.count());
  for (std::size_t c = 0; c < v.channels; ++c) {
    float sum = 0.0f;
    for (std::size_t n = 0; n < v.batch; ++n)
      for (std::size_t i = 0; i < v.spatial; ++i) sum += x[v.index(n, c, i)];
    const float mean = sum / m;
    float sq = 0.0f;
    for (std::size_t n = 0; n < v.batch; ++n)
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const float d = x[v.index(n, c, i)] - mean;
        sq += d * d;
      }
    s.mean[c] = mean;
    s.var[c] = sq / m;
  }
  return s;
}

}  // namespace

std::string to_string(ConvKind kind) {
  switch (kind) {
    case ConvKind::Standard: return "Standard";
    case ConvKind::Depthwise: return "Depthwise";
    case ConvKind::Pointwise: return "Pointwise";
  }
  return "?";
}

void ConvSpec::validate() const {
  if (kernel == 0 || in_channels == 0 || out_channels == 0 || stride == 0) {
    throw InvalidArgument("conv spec fields must be positive");
  }
  if (kind == ConvKind::Pointwise && kernel != 1) {
    throw InvalidArgument("pointwise convolution requires kernel 1, got " + std::to_string(kernel));
  }
  if (kind == ConvKind::Depthwise && out_channels != in_channels) {
    throw InvalidArgument("depthwise convolution requires out_channels == in_channels");
  }
}

Shape ConvSpec::weight_shape() const {
  if (kind == ConvKind::Depthwise) return {in_channels, 1, kernel, kernel};
  return {out_channels, in_channels, kernel, kernel};
}

std::size_t ConvSpec::out_extent(std::size_t in_extent) const {
  const std::size_t padded = in_extent + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("input extent " + std::to_string(in_extent) + " smaller than kernel " +
                     std::to_string(kernel));
  }
  return (padded - kernel) / stride + 1;
}

Tensor gemm(const Tensor& a, const Tensor& b, Precision mode) {
  require_rank(a, 2, "gemm lhs");
  require_rank(b, 2, "gemm rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("gemm inner dimensions differ: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t rows = a.dim(0), inner = a.dim(1), cols = b.dim(1);
  const auto av = values_as(a, mode);
  const auto bv = values_as(b, mode);
  std::vector<float> out(rows * cols, 0.0f);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < inner; ++k) acc += av[i * inner + k] * bv[k * cols + j];
      out[i * cols + j] = acc;
    }
  return Tensor({rows, cols}, std::move(out), mode);
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, Precision mode) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
  if (weight.dim(1) != in || bias.dim(0) != out_features) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + ", weight " +
                     shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const auto xv = values_as(x, mode);
  const auto wv = values_as(weight, mode);
  const auto bv = values_as(bias, mode);
  std::vector<float> out(batch * out_features);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_features; ++o) {
      float acc = 0.0f;
      for (std::size_t i = 0; i < in; ++i) acc += xv[n * in + i] * wv[o * in + i];
      out[n * out_features + o] = acc + bv[o];
    }
  return Tensor({batch, out_features}, std::move(out), mode);
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                            Precision mode) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(grad_out, 2, "linear grad");
  const std::size_t batch = x.dim(0), in = x.dim(1), out_features = weight.dim(0);
  if (weight.dim(1) != in || grad_out.dim(0) != batch || grad_out.dim(1) != out_features) {
    throw ShapeError("linear backward: shapes inconsistent with forward");
  }
  const auto xv = values_as(x, mode);
  const auto wv = values_as(weight, mode);
  const auto gv = values_as(grad_out, mode);

  std::vector<float> gx(batch * in, 0.0f), gw(out_features * in, 0.0f), gb(out_features, 0.0f);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < out_features; ++o) {
      const float g = gv[n * out_features + o];
      gb[o] += g;
      for (std::size_t i = 0; i < in; ++i) {
        gx[n * in + i] += g * wv[o * in + i];
        gw[o * in + i] += g * xv[n * in + i];
      }
    }
  return {Tensor({batch, in}, std::move(gx), mode), Tensor({out_features, in}, std::move(gw), mode),
          Tensor({out_features}, std::move(gb), mode)};
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w, out_c, out_h, out_w;
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& weight, const ConvSpec& spec) {
  spec.validate();
  require_rank(x, 4, "conv input");
  if (x.dim(1) != spec.in_channels) {
    throw ShapeError("conv input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw ShapeError("conv weight " + shape_string(weight.shape()) + " does not match spec " +
                     shape_string(spec.weight_shape()));
  }
  return {x.dim(0),          x.dim(1),  x.dim(2), x.dim(3), spec.out_channels,
          spec.out_extent(x.dim(2)), spec.out_extent(x.dim(3))};
}

// Input coordinate under output position o and kernel tap k, or -1 in the padding.
inline long long source_index(std::size_t o, std::size_t k, const ConvSpec& spec) {
  return static_cast<long long>(o * spec.stride + k) - static_cast<long long>(spec.padding);
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& weight, const ConvSpec& spec, Precision mode) {
  const ConvGeometry g = conv_geometry(x, weight, spec);
  const auto xv = values_as(x, mode);
  const auto wv = values_as(weight, mode);
  const std::size_t K = spec.kernel;
  std::vector<float> out(g.batch * g.out_c * g.out_h * g.out_w, 0.0f);

  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_c; ++oc)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          float acc = 0.0f;
          // depthwise filters only see their own channel
          const std::size_t ic_begin = spec.kind == ConvKind::Depthwise ? oc : 0;
          const std::size_t ic_end = spec.kind == ConvKind::Depthwise ? oc + 1 : g.in_c;
          for (std::size_t ic = ic_begin; ic < ic_end; ++ic) {
            const std::size_t w_base =
                spec.kind == ConvKind::Depthwise ? oc * K * K : (oc * g.in_c + ic) * K * K;
            for (std::size_t kh = 0; kh < K; ++kh) {
              const long long ih = source_index(oh, kh, spec);
              if (ih < 0 || ih >= static_cast<long long>(g.in_h)) continue;
              for (std::size_t kw = 0; kw < K; ++kw) {
                const long long iw = source_index(ow, kw, spec);
                if (iw < 0 || iw >= static_cast<long long>(g.in_w)) continue;
                acc += xv[((n * g.in_c + ic) * g.in_h + ih) * g.in_w + iw] * wv[w_base + kh * K + kw];
              }
            }
          }
          out[((n * g.out_c + oc) * g.out_h + oh) * g.out_w + ow] = acc;
        }
  return Tensor({g.batch, g.out_c, g.out_h, g.out_w}, std::move(out), mode);
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& grad_out,
                          const ConvSpec& spec, Precision mode) {
  const ConvGeometry g = conv_geometry(x, weight, spec);
  const Shape expected{g.batch, g.out_c, g.out_h, g.out_w};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv grad_out " + shape_string(grad_out.shape()) + ", expected " +
                     shape_string(expected));
  }
  const auto xv = values_as(x, mode);
  const auto wv = values_as(weight, mode);
  const auto gv = values_as(grad_out, mode);
  const std::size_t K = spec.kernel;
  std::vector<float> gx(xv.size(), 0.0f), gw(wv.size(), 0.0f);

  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t oc = 0; oc < g.out_c; ++oc)
      for (std::size_t oh = 0; oh < g.out_h; ++oh)
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          const float go = gv[((n * g.out_c + oc) * g.out_h + oh) * g.out_w + ow];
          if (go == 0.0f) continue;
          const std::size_t ic_begin = spec.kind == ConvKind::Depthwise ? oc : 0;
          const std::size_t ic_end = spec.kind == ConvKind::Depthwise ? oc + 1 : g.in_c;
          for (std::size_t ic = ic_begin; ic < ic_end; ++ic) {
            const std::size_t w_base =
                spec.kind == ConvKind::Depthwise ? oc * K * K : (oc * g.in_c + ic) * K * K;
            for (std::size_t kh = 0; kh < K; ++kh) {
              const long long ih = source_index(oh, kh, spec);
              if (ih < 0 || ih >= static_cast<long long>(g.in_h)) continue;
              for (std::size_t kw = 0; kw < K; ++kw) {
                const long long iw = source_index(ow, kw, spec);
                if (iw < 0 || iw >= static_cast<long long>(g.in_w)) continue;
                const std::size_t xi = ((n * g.in_c + ic) * g.in_h + ih) * g.in_w + iw;
                gx[xi] += go * wv[w_base + kh * K + kw];
                gw[w_base + kh * K + kw] += go * xv[xi];
              }
            }
          }
        }
  return {Tensor(x.shape(), std::move(gx), mode), Tensor(weight.shape(), std::move(gw), mode)};
}

BnParams BnParams::identity(std::size_t channels) {
  BnParams p;
  p.gamma.assign(channels, 1.0f);
  p.beta.assign(channels, 0.0f);
  p.running_mean.assign(channels, 0.0f);
  p.running_var.assign(channels, 1.0f);
  return p;
}

void BnParams::validate() const {
  const std::size_t c = gamma.size();
  if (beta.size() != c || running_mean.size() != c || running_var.size() != c) {
    throw ShapeError("batch norm parameter vectors differ in length");
  }
  if (!(epsilon > 0.0f)) throw InvalidArgument("batch norm epsilon must be positive");
  for (float v : running_var) {
    if (!(v >= 0.0f)) throw InvalidArgument("batch norm running variance must be non-negative");
  }
}

Tensor batchnorm_forward(const Tensor& x, BnParams& params, bool training) {
  if (x.mode() == Precision::Binary16Emulated) {
    throw PrecisionViolation("batch norm input must be binary32; binary16 inputs do not converge");
  }
  params.validate();
  const ChannelView v = channel_view(x);
  if (v.channels != params.channels()) {
    throw ShapeError("batch norm over " + std::to_string(v.channels) + " channels with " +
                     std::to_string(params.channels()) + " parameters");
  }
  const auto xv = x.data();
  std::vector<float> mean = params.running_mean;
  std::vector<float> var = params.running_var;
  if (training) {
    BatchStats s = batch_stats(xv, v);
    const auto m = static_cast<float>(v.count());
    const float unbias = v.count() > 1 ? m / (m - 1.0f) : 1.0f;
    for (std::size_t c = 0; c < v.channels; ++c) {
      params.running_mean[c] = params.momentum * params.running_mean[c] + (1.0f - params.momentum) * s.mean[c];
      params.running_var[c] =
          params.momentum * params.running_var[c] + (1.0f - params.momentum) * s.var[c] * unbias;
    }
    mean = std::move(s.mean);
    var = std::move(s.var);
  }
  std::vector<float> out(xv.size());
  for (std::size_t c = 0; c < v.channels; ++c) {
    const float inv_std = 1.0f / std::sqrt(var[c] + params.epsilon);
    for (std::size_t n = 0; n < v.batch; ++n)
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const std::size_t k = v.index(n, c, i);
        out[k] = (xv[k] - mean[c]) * inv_std * params.gamma[c] + params.beta[c];
      }
  }
  return Tensor(x.shape(), std::move(out), Precision::Binary32);
}

BnGrads batchnorm_backward(const Tensor& x, const BnParams& params, const Tensor& grad_out) {
  if (x.mode() == Precision::Binary16Emulated) {
    throw PrecisionViolation("batch norm input must be binary32");
  }
  params.validate();
  require_same_shape(x, grad_out, "batch norm backward");
  const ChannelView v = channel_view(x);
  if (v.channels != params.channels()) throw ShapeError("batch norm channel mismatch");

  const auto xv = x.data();
  const auto gv = grad_out.data();
  const BatchStats s = batch_stats(xv, v);
  const auto m = static_cast<float>(v.count());

  BnGrads grads{Tensor(), std::vector<float>(v.channels, 0.0f), std::vector<float>(v.channels, 0.0f)};
  std::vector<float> gx(xv.size());
  for (std::size_t c = 0; c < v.channels; ++c) {
    const float inv_std = 1.0f / std::sqrt(s.var[c] + params.epsilon);
    float sum_g = 0.0f, sum_gx = 0.0f;
    for (std::size_t n = 0; n < v.batch; ++n)
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const std::size_t k = v.index(n, c, i);
        sum_g += gv[k];
        sum_gx += gv[k] * (xv[k] - s.mean[c]) * inv_std;
      }
    grads.beta[c] = sum_g;
    grads.gamma[c] = sum_gx;
    const float scale = params.gamma[c] * inv_std / m;
    for (std::size_t n = 0; n < v.batch; ++n)
      for (std::size_t i = 0; i < v.spatial; ++i) {
        const std::size_t k = v.index(n, c, i);
        const float xhat = (xv[k] - s.mean[c]) * inv_std;
        gx[k] = scale * (m * gv[k] - sum_g - xhat * sum_gx);
      }
  }
  grads.input = Tensor(x.shape(), std::move(gx), Precision::Binary32);
  return grads;
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (float& v : out) v = v > 0.0f ? v : 0.0f;
  return Tensor(x.shape(), std::move(out), x.mode());
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu backward");
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0f ? grad_out[i] : 0.0f;
  return Tensor(x.shape(), std::move(out), grad_out.mode());
}

Tensor avgpool2d(const Tensor& x, std::size_t kh, std::size_t kw) {
  require_rank(x, 4, "avgpool input");
  if (kh == 0 || kw == 0 || x.dim(2) % kh != 0 || x.dim(3) % kw != 0) {
    throw ShapeError("avgpool window (" + std::to_string(kh) + ", " + std::to_string(kw) +
                     ") does not tile " + shape_string(x.shape()));
  }
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t oh_n = H / kh, ow_n = W / kw;
  const float inv = 1.0f / static_cast<float>(kh * kw);
  std::vector<float> out(N * C * oh_n * ow_n);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t oh = 0; oh < oh_n; ++oh)
        for (std::size_t ow = 0; ow < ow_n; ++ow) {
          float acc = 0.0f;
          for (std::size_t i = 0; i < kh; ++i)
            for (std::size_t j = 0; j < kw; ++j)
              acc += x[((n * C + c) * H + oh * kh + i) * W + ow * kw + j];
          out[((n * C + c) * oh_n + oh) * ow_n + ow] = acc * inv;
        }
  return Tensor({N, C, oh_n, ow_n}, std::move(out), x.mode());
}

Tensor avgpool2d_backward(const Tensor& grad_out, const Shape& input_shape, std::size_t kh,
                          std::size_t kw) {
  if (input_shape.size() != 4 || kh == 0 || kw == 0 || input_shape[2] % kh != 0 ||
      input_shape[3] % kw != 0) {
    throw ShapeError("avgpool backward: window does not tile " + shape_string(input_shape));
  }
  const std::size_t N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
  const std::size_t oh_n = H / kh, ow_n = W / kw;
  if (grad_out.shape() != Shape{N, C, oh_n, ow_n}) {
    throw ShapeError("avgpool backward: grad_out " + shape_string(grad_out.shape()));
  }
  const float inv = 1.0f / static_cast<float>(kh * kw);
  std::vector<float> out(shape_numel(input_shape));
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t w = 0; w < W; ++w)
          out[((n * C + c) * H + h) * W + w] = grad_out[((n * C + c) * oh_n + h / kh) * ow_n + w / kw] * inv;
  return Tensor(input_shape, std::move(out), grad_out.mode());
}

Tensor residual_add(const Tensor& x, const Tensor& fx) {
  require_same_shape(x, fx, "residual add");
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + fx[i];
  return Tensor(x.shape(), std::move(out), narrower(x.mode(), fx.mode()));
}

ResidualGrads residual_add_backward(const Tensor& grad_out) { return {grad_out, grad_out}; }

}  // namespace reid
