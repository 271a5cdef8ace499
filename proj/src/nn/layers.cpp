#include "rpf/nn/layers.hpp"

#include <cmath>

namespace rpf::nn {

Conv2d::Conv2d(int in_c, int out_c, int k, int dilation_, bool with_bias, int pad_)
    : kernel(k), dilation(dilation_) {
    pad = pad_ >= 0 ? pad_ : dilation * (k - 1) / 2;
    weight = Variable(Tensor({out_c, in_c, k, k}), true);
    if (with_bias) bias = Variable(Tensor({out_c}), true);
}

void Conv2d::init(core::Rng& rng) {
    Tensor& w = weight.value_mut();
    const int fan_in = w.dim(1) * w.dim(2) * w.dim(3);
    const double std = std::sqrt(2.0 / fan_in);
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = rng.normal(0.0, std);
    // bias stays zero
}

Variable Conv2d::forward(const Variable& x) const {
    return conv2d(x, weight, bias, pad, dilation);
}

void Conv2d::collect(const std::string& prefix, ParamMap& params) {
    params.add(prefix + ".weight", weight);
    if (bias.defined()) params.add(prefix + ".bias", bias);
}

BatchNorm2d::BatchNorm2d(int channels) {
    gamma = Variable(Tensor::full({channels}, 1.0), true);
    beta = Variable(Tensor({channels}), true);
    running_mean = Tensor({channels});
    running_var = Tensor::full({channels}, 1.0);
}

Variable BatchNorm2d::forward(const Variable& x, BnMode mode) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, mode, eps, momentum);
}

void BatchNorm2d::collect(const std::string& prefix, ParamMap& params, BufferMap& buffers) {
    params.add(prefix + ".gamma", gamma);
    params.add(prefix + ".beta", beta);
    buffers.add(prefix + ".running_mean", &running_mean);
    buffers.add(prefix + ".running_var", &running_var);
}

ConvBlock::ConvBlock(int in_c, int out_c, int k, int dilation)
    : conv(in_c, out_c, k, dilation), bn(out_c) {}

Variable ConvBlock::forward(const Variable& x, BnMode mode) {
    return relu(bn.forward(conv.forward(x), mode));
}

void ConvBlock::collect(const std::string& prefix, ParamMap& params, BufferMap& buffers) {
    conv.collect(prefix + ".conv", params);
    bn.collect(prefix + ".bn", params, buffers);
}

}  // namespace rpf::nn
