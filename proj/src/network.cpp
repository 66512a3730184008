#include "reid/network.hpp"

#include "reid/error.hpp"

namespace reid {

namespace {

enum ParamIndex : std::size_t {
  kStemW, kBn1Gamma, kBn1Beta, kDwW, kBn2Gamma, kBn2Beta, kPwW, kBn3Gamma, kBn3Beta, kFcW, kFcB, kParamCount
};

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

BnParams bn_params(const ParameterSet& params, const ParameterSet& buffers, std::size_t gamma_index,
                   std::size_t buffer_index) {
  BnParams p;
  p.gamma = values(params[gamma_index].value);
  p.beta = values(params[gamma_index + 1].value);
  p.running_mean = values(buffers[buffer_index].value);
  p.running_var = values(buffers[buffer_index + 1].value);
  return p;
}

void store_running(ParameterSet& buffers, std::size_t buffer_index, const BnParams& p) {
  const std::size_t c = p.channels();
  buffers[buffer_index].value = Tensor({c}, p.running_mean);
  buffers[buffer_index + 1].value = Tensor({c}, p.running_var);
}

void check_layout(const NetGeometry& g, const ParameterSet& params, const ParameterSet& buffers) {
  const ParameterSet want = make_parameters(g);
  const ParameterSet want_buf = make_bn_buffers(g);
  if (params.size() != want.size() || buffers.size() != want_buf.size()) {
    throw ShapeError("parameter set does not match the network layout");
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (params[i].name != want[i].name || params[i].value.shape() != want[i].value.shape()) {
      throw ShapeError("parameter '" + params[i].name + "' does not match layout entry '" + want[i].name + "'");
    }
  }
  for (std::size_t i = 0; i < want_buf.size(); ++i) {
    if (buffers[i].value.shape() != want_buf[i].value.shape()) {
      throw ShapeError("buffer '" + buffers[i].name + "' has the wrong shape");
    }
  }
}

}  // namespace

void NetGeometry::validate() const {
  if (in_channels == 0 || height == 0 || width == 0 || channels == 0 || embedding_dim == 0) {
    throw InvalidArgument("network geometry fields must be positive");
  }
}

ConvSpec stem_spec(const NetGeometry& g) { return {ConvKind::Standard, 3, g.in_channels, g.channels, 1, 1}; }
ConvSpec depthwise_spec(const NetGeometry& g) { return {ConvKind::Depthwise, 3, g.channels, g.channels, 1, 1}; }
ConvSpec pointwise_spec(const NetGeometry& g) { return {ConvKind::Pointwise, 1, g.channels, g.channels, 1, 0}; }

ParameterSet make_parameters(const NetGeometry& g) {
  g.validate();
  const std::size_t C = g.channels;
  ParameterSet p;
  p.push_back({"stem.weight", "stem", Tensor(stem_spec(g).weight_shape())});
  p.push_back({"bn1.gamma", "bn1", Tensor({C}, std::vector<float>(C, 1.0f))});
  p.push_back({"bn1.beta", "bn1", Tensor({C})});
  p.push_back({"dw.weight", "dw", Tensor(depthwise_spec(g).weight_shape())});
  p.push_back({"bn2.gamma", "bn2", Tensor({C}, std::vector<float>(C, 1.0f))});
  p.push_back({"bn2.beta", "bn2", Tensor({C})});
  p.push_back({"pw.weight", "pw", Tensor(pointwise_spec(g).weight_shape())});
  p.push_back({"bn3.gamma", "bn3", Tensor({C}, std::vector<float>(C, 1.0f))});
  p.push_back({"bn3.beta", "bn3", Tensor({C})});
  p.push_back({"fc.weight", "fc", Tensor({g.embedding_dim, C})});
  p.push_back({"fc.bias", "fc", Tensor({g.embedding_dim})});
  return p;
}

ParameterSet make_bn_buffers(const NetGeometry& g) {
  const std::size_t C = g.channels;
  ParameterSet b;
  for (const char* layer : {"bn1", "bn2", "bn3"}) {
    b.push_back({std::string(layer) + ".running_mean", layer, Tensor({C})});
    b.push_back({std::string(layer) + ".running_var", layer, Tensor({C}, std::vector<float>(C, 1.0f))});
  }
  return b;
}

LayerManifest network_manifest(const NetGeometry& g) {
  g.validate();
  const std::uint64_t C = g.channels;
  auto conv = [&](const std::string& name, OpKind op, const ConvSpec& spec) {
    return LayerEntry{name, op, spec.param_count(), ConvGeometry2d{spec, g.height, g.width}};
  };
  LayerManifest m;
  m.entries.push_back(conv("stem", OpKind::Conv, stem_spec(g)));
  m.entries.push_back({"bn1", OpKind::BatchNorm, 4 * C, {}});
  m.entries.push_back({"relu1", OpKind::ReLU, 0, {}});
  m.entries.push_back(conv("dw", OpKind::DepthwiseConv, depthwise_spec(g)));
  m.entries.push_back({"bn2", OpKind::BatchNorm, 4 * C, {}});
  m.entries.push_back({"relu2", OpKind::ReLU, 0, {}});
  m.entries.push_back(conv("pw", OpKind::PointwiseConv, pointwise_spec(g)));
  m.entries.push_back({"bn3", OpKind::BatchNorm, 4 * C, {}});
  m.entries.push_back({"add", OpKind::ResidualAdd, 0, {}});
  m.entries.push_back({"relu3", OpKind::ReLU, 0, {}});
  m.entries.push_back({"pool", OpKind::AvgPool, 0, {}});
  m.entries.push_back({"fc", OpKind::Linear, C * g.embedding_dim + g.embedding_dim, {}});
  m.entries.push_back({"loss", OpKind::Loss, 0, {}});
  return m;
}

Precision layer_mode(const PrecisionPlan& plan, const std::string& layer) {
  return plan.at(layer) == LayerPrecision::Binary16 ? Precision::Binary16Emulated : Precision::Binary32;
}

ForwardTrace network_forward(const NetGeometry& g, const ParameterSet& working, const ParameterSet& buffers,
                             const PrecisionPlan& plan, const Tensor& input, bool training) {
  check_layout(g, working, buffers);
  const Shape want{input.rank() > 0 ? input.dim(0) : 0, g.in_channels, g.height, g.width};
  if (input.shape() != want) {
    throw ShapeError("network input " + shape_string(input.shape()) + ", expected " + shape_string(want));
  }
  auto mode = [&](const char* layer) { return layer_mode(plan, layer); };
  const std::size_t N = input.dim(0);

  ForwardTrace t;
  t.input = input;
  t.buffers_after = buffers;

  BnParams bn1 = bn_params(working, buffers, kBn1Gamma, 0);
  BnParams bn2 = bn_params(working, buffers, kBn2Gamma, 2);
  BnParams bn3 = bn_params(working, buffers, kBn3Gamma, 4);

  t.stem_out = conv2d_forward(input.as(mode("stem")), working[kStemW].value, stem_spec(g), mode("stem"));
  t.bn1_out = batchnorm_forward(t.stem_out.as(mode("bn1")), bn1, training);
  t.relu1_out = relu(t.bn1_out.as(mode("relu1")));

  t.dw_out = conv2d_forward(t.relu1_out.as(mode("dw")), working[kDwW].value, depthwise_spec(g), mode("dw"));
  t.bn2_out = batchnorm_forward(t.dw_out.as(mode("bn2")), bn2, training);
  t.relu2_out = relu(t.bn2_out.as(mode("relu2")));

  t.pw_out = conv2d_forward(t.relu2_out.as(mode("pw")), working[kPwW].value, pointwise_spec(g), mode("pw"));
  t.bn3_out = batchnorm_forward(t.pw_out.as(mode("bn3")), bn3, training);

  t.add_out = residual_add(t.relu1_out.as(mode("add")), t.bn3_out.as(mode("add")));
  t.relu3_out = relu(t.add_out.as(mode("relu3")));
  t.pooled = avgpool2d(t.relu3_out.as(mode("pool")), g.height, g.width).reshaped({N, g.channels});

  const Tensor fc_out = linear_forward(t.pooled.as(mode("fc")), working[kFcW].value, working[kFcB].value, mode("fc"));
  t.embedding = fc_out.as(mode("loss"));
  if (t.embedding.mode() != Precision::Binary32) {
    throw PrecisionViolation("the loss layer must run in binary32");
  }

  if (training) {
    store_running(t.buffers_after, 0, bn1);
    store_running(t.buffers_after, 2, bn2);
    store_running(t.buffers_after, 4, bn3);
  }
  return t;
}

std::vector<Tensor> network_backward(const NetGeometry& g, const ParameterSet& working, const ParameterSet& buffers,
                                     const PrecisionPlan& plan, const ForwardTrace& t, const Tensor& grad_embedding) {
  check_layout(g, working, buffers);
  if (grad_embedding.shape() != t.embedding.shape()) {
    throw ShapeError("embedding gradient " + shape_string(grad_embedding.shape()) + " vs embedding " +
                     shape_string(t.embedding.shape()));
  }
  auto mode = [&](const char* layer) { return layer_mode(plan, layer); };
  const std::size_t N = t.input.dim(0);
  std::vector<Tensor> grads(kParamCount);

  const BnParams bn1 = bn_params(working, buffers, kBn1Gamma, 0);
  const BnParams bn2 = bn_params(working, buffers, kBn2Gamma, 2);
  const BnParams bn3 = bn_params(working, buffers, kBn3Gamma, 4);
  const Precision fc = mode("fc");

  const LinearGrads lin = linear_backward(t.pooled.as(fc), working[kFcW].value, grad_embedding.as(fc), fc);
  grads[kFcW] = lin.weight;
  grads[kFcB] = lin.bias;

  const Tensor g_pool_out = lin.input.reshaped({N, g.channels, 1, 1}).as(mode("pool"));
  const Tensor g_relu3_out = avgpool2d_backward(g_pool_out, t.relu3_out.shape(), g.height, g.width);
  const Tensor g_add_out = relu_backward(t.add_out, g_relu3_out.as(mode("relu3")));
  const ResidualGrads res = residual_add_backward(g_add_out.as(mode("add")));

  const BnGrads b3 = batchnorm_backward(t.pw_out.as(mode("bn3")), bn3, res.branch.as(mode("bn3")));
  grads[kBn3Gamma] = Tensor({g.channels}, b3.gamma);
  grads[kBn3Beta] = Tensor({g.channels}, b3.beta);

  const ConvGrads pw = conv2d_backward(t.relu2_out.as(mode("pw")), working[kPwW].value, b3.input.as(mode("pw")),
                                       pointwise_spec(g), mode("pw"));
  grads[kPwW] = pw.weight;

  const Tensor g_bn2_out = relu_backward(t.bn2_out, pw.input.as(mode("relu2")));
  const BnGrads b2 = batchnorm_backward(t.dw_out.as(mode("bn2")), bn2, g_bn2_out.as(mode("bn2")));
  grads[kBn2Gamma] = Tensor({g.channels}, b2.gamma);
  grads[kBn2Beta] = Tensor({g.channels}, b2.beta);

  const ConvGrads dw = conv2d_backward(t.relu1_out.as(mode("dw")), working[kDwW].value, b2.input.as(mode("dw")),
                                       depthwise_spec(g), mode("dw"));
  grads[kDwW] = dw.weight;

  // relu1 feeds both the shortcut and the depthwise branch
  const Tensor g_relu1_out = residual_add(res.shortcut.as(mode("relu1")), dw.input.as(mode("relu1")));
  const Tensor g_bn1_out = relu_backward(t.bn1_out, g_relu1_out);
  const BnGrads b1 = batchnorm_backward(t.stem_out.as(mode("bn1")), bn1, g_bn1_out.as(mode("bn1")));
  grads[kBn1Gamma] = Tensor({g.channels}, b1.gamma);
  grads[kBn1Beta] = Tensor({g.channels}, b1.beta);

  const ConvGrads stem = conv2d_backward(t.input.as(mode("stem")), working[kStemW].value, b1.input.as(mode("stem")),
                                         stem_spec(g), mode("stem"));
  grads[kStemW] = stem.weight;
  return grads;
}

}  // namespace reid
