#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rpf/core/rng.hpp"
#include "rpf/nn/ops.hpp"

namespace rpf::nn {

/// Named trainable parameters of a module tree. Ordering is deterministic
/// (registration order), which the optimizers and checkpoints rely on.
struct ParamMap {
    std::vector<std::pair<std::string, Variable>> items;
    void add(const std::string& name, const Variable& v) { items.emplace_back(name, v); }
    const Variable* find(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return &v;
        return nullptr;
    }
    int64_t total_elements() const {
        int64_t n = 0;
        for (const auto& [k, v] : items) n += v.value().numel();
        return n;
    }
};

/// Non-trainable state (batchnorm running statistics).
struct BufferMap {
    std::vector<std::pair<std::string, Tensor*>> items;
    void add(const std::string& name, Tensor* t) { items.emplace_back(name, t); }
};

class Conv2d {
public:
    Conv2d() = default;
    /// pad < 0 selects size-preserving padding dilation*(k-1)/2.
    Conv2d(int in_c, int out_c, int k, int dilation = 1, bool with_bias = true, int pad = -1);

    void init(core::Rng& rng);  // He-normal weights, zero bias
    Variable forward(const Variable& x) const;
    void collect(const std::string& prefix, ParamMap& params);

    Variable weight, bias;
    int kernel = 3, pad = 1, dilation = 1;
};

class BatchNorm2d {
public:
    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);

    Variable forward(const Variable& x, BnMode mode);
    void collect(const std::string& prefix, ParamMap& params, BufferMap& buffers);

    Variable gamma, beta;
    Tensor running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;
};

/// Conv -> BatchNorm -> ReLU.
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(int in_c, int out_c, int k, int dilation = 1);
    void init(core::Rng& rng) { conv.init(rng); }
    Variable forward(const Variable& x, BnMode mode);
    void collect(const std::string& prefix, ParamMap& params, BufferMap& buffers);

    Conv2d conv;
    BatchNorm2d bn;
};

}  // namespace rpf::nn
