#pragma once

#include <optional>
#include <string>

#include "rpf/imaging/imaging.hpp"
#include "rpf/nn/layers.hpp"

namespace rpf::net {

using imaging::SourcePair;
using nn::BnMode;
using nn::BufferMap;
using nn::ParamMap;
using nn::Tensor;
using nn::Variable;

enum class FdfmMode { Frequency, TransformerSub };

struct ModelConfig {
    int stages = 3;
    int channels = 32;
    std::vector<int> dilation_rates = {1, 3, 5};
    bool use_cpm = true;
    bool use_residual_branch = true;
    FdfmMode fdfm_mode = FdfmMode::Frequency;

    void validate() const;  // throws std::invalid_argument
};

/// How batchnorm behaves during a forward pass. TestIdentity turns every BN
/// into a pass-through so algebraic oracles are exact.
enum class RunMode { Train, Eval, TestIdentity };

/// Bidirectional exchange between the fusion and residual branches. Both
/// outputs are computed from the original inputs.
class CrossPromotion {
public:
    CrossPromotion() = default;
    CrossPromotion(int channels);
    /// Returns {enhanced_fusion, enhanced_residual}; identity when disabled.
    std::pair<Variable, Variable> forward(const Variable& f_fusion, const Variable& f_residual,
                                          BnMode mode, bool enabled);
    void collect(const std::string& prefix, ParamMap& params, BufferMap& buffers);

    nn::Conv2d conv_to_residual;  // fusion -> residual enrichment
    nn::BatchNorm2d bn_to_residual;
    nn::Conv2d conv_to_fusion;  // residual -> fusion attention
    nn::BatchNorm2d bn_to_fusion;
};

/// CBAM-style channel attention: sigmoid(MLP(avgpool) + MLP(maxpool)),
/// shared MLP with reduction ratio 8, no biases.
class ChannelAttention {
public:
    ChannelAttention() = default;
    ChannelAttention(int channels, int reduction = 8);
    Variable forward(const Variable& x) const;
    void collect(const std::string& prefix, ParamMap& params);

    nn::Conv2d fc1, fc2;  // 1x1 convs acting on (N,C,1,1)
};

/// CBAM-style spatial attention: sigmoid(7x7 conv over [mean_c, max_c]).
class SpatialAttention {
public:
    SpatialAttention();
    Variable forward(const Variable& x) const;
    void collect(const std::string& prefix, ParamMap& params);

    nn::Conv2d conv;
};

/// Residual prior module: CA -> SA -> parallel dilated 3x3 convolutions with
/// the configured rates, summed.
class ResidualPrior {
public:
    ResidualPrior() = default;
    ResidualPrior(int channels, const std::vector<int>& rates);
    Variable forward(const Variable& x) const;
    void collect(const std::string& prefix, ParamMap& params);

    ChannelAttention ca;
    SpatialAttention sa;
    std::vector<nn::Conv2d> dilated;
};

/// Minimal single-head self-attention over spatial positions, used when the
/// frequency path is swapped out for the ablation study.
class SelfAttentionBlock {
public:
    SelfAttentionBlock() = default;
    SelfAttentionBlock(int channels);
    Variable forward(const Variable& x) const;
    void collect(const std::string& prefix, ParamMap& params);

    nn::Conv2d q, k, v, proj;
};

/// Frequency-domain fusion: t = CB(x); out = t + IFFT(BN(Conv1x1(FFT(t)))).
/// The 1x1 frequency convolution mixes real/imaginary parts stacked along
/// channels; no nonlinearity is applied in the spectrum so the path stays
/// linear per frequency bin.
class FrequencyFusion {
public:
    FrequencyFusion() = default;
    FrequencyFusion(int channels, FdfmMode mode);
    Variable forward(const Variable& x, BnMode bn_mode);
    void collect(const std::string& prefix, ParamMap& params, BufferMap& buffers);

    nn::ConvBlock cb;
    nn::Conv2d freq_conv;
    nn::BatchNorm2d freq_bn;
    SelfAttentionBlock attn;
    FdfmMode mode = FdfmMode::Frequency;
};

struct StageOutputs {
    Variable fusion;
    Variable residual;
};

/// Training-only decoder reconstructing the signed residual map from the
/// final residual features: two CBs then a 1x1 conv with tanh.
class AuxDecoder {
public:
    AuxDecoder() = default;
    AuxDecoder(int channels);
    void init(core::Rng& rng);
    Variable forward(const Variable& f_residual, RunMode mode);
    void collect_params(ParamMap& params);
    void collect_buffers(BufferMap& buffers);

    nn::ConvBlock cb1, cb2;
    nn::Conv2d out_conv;
};

struct ForwardResult {
    Variable fused_y;         // (N,1,H,W), strictly inside (0,1)
    Variable final_fusion;    // F_F^N
    Variable final_residual;  // F_R^N (undefined when the branch is off)
};

/// Inference output for a single pair.
struct FusedOutput {
    Tensor fused_y;    // (H,W)
    Tensor fused_rgb;  // (3,H,W); empty for grayscale pairs
};

class RpfNet {
public:
    RpfNet() = default;
    explicit RpfNet(const ModelConfig& cfg);
    void init(core::Rng& rng);

    /// Full forward pass on a batch. ir/vis_y are (N,1,H,W). The residual map
    /// defaults to ir - vis_y built inside the graph; tests may override it.
    /// Eval and TestIdentity passes leave the model state untouched, so a
    /// trained model can serve concurrent inference calls.
    ForwardResult forward(const Variable& ir, const Variable& vis_y, RunMode mode,
                          const std::optional<Variable>& residual_override = {});

    /// Single-pair inference with chroma restoration.
    FusedOutput fuse(const SourcePair& pair);

    ParamMap parameters();
    BufferMap buffers();
    int64_t parameter_count() { return parameters().total_elements(); }

    const ModelConfig& config() const { return cfg_; }

    struct Stage {
        CrossPromotion cpm;
        ResidualPrior rpm;
        FrequencyFusion fdfm;
    };

    nn::ConvBlock init_fusion;    // CB over concat(ir, vis_y)
    nn::ConvBlock init_residual;  // CB over the residual map
    std::vector<Stage> stages;
    nn::ConvBlock head_cb;
    nn::Conv2d head_out;

private:
    ModelConfig cfg_;
};

BnMode to_bn_mode(RunMode mode);

}  // namespace rpf::net
