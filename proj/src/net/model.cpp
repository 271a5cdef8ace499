#include "rpf/net/model.hpp"

#include <stdexcept>

namespace rpf::net {

using namespace rpf::nn;

void ModelConfig::validate() const {
    if (stages < 1) throw std::invalid_argument("ModelConfig: stages must be >= 1");
    if (channels < 1) throw std::invalid_argument("ModelConfig: channels must be >= 1");
    for (size_t i = 1; i < dilation_rates.size(); ++i)
        if (dilation_rates[i] <= dilation_rates[i - 1])
            throw std::invalid_argument("ModelConfig: dilation rates must be strictly increasing");
}

BnMode to_bn_mode(RunMode mode) {
    switch (mode) {
        case RunMode::Train: return BnMode::Train;
        case RunMode::Eval: return BnMode::Eval;
        default: return BnMode::Identity;
    }
}

// ------------------------------------------------------------ CrossPromotion

CrossPromotion::CrossPromotion(int channels)
    : conv_to_residual(channels, channels, 3),
      bn_to_residual(channels),
      conv_to_fusion(channels, channels, 3),
      bn_to_fusion(channels) {}

std::pair<Variable, Variable> CrossPromotion::forward(const Variable& f_fusion,
                                                      const Variable& f_residual,
                                                      BnMode mode, bool enabled) {
    if (!enabled) return {f_fusion, f_residual};
    // both outputs are functions of the pre-update inputs
    Variable enriched_residual =
        add(relu(bn_to_residual.forward(conv_to_residual.forward(f_fusion), mode)), f_residual);
    Variable attention = sigmoid(bn_to_fusion.forward(conv_to_fusion.forward(f_residual), mode));
    Variable enhanced_fusion = add(mul(attention, f_fusion), f_fusion);
    return {enhanced_fusion, enriched_residual};
}

void CrossPromotion::collect(const std::string& prefix, ParamMap& params, BufferMap& buffers) {
    conv_to_residual.collect(prefix + ".conv_to_residual", params);
    bn_to_residual.collect(prefix + ".bn_to_residual", params, buffers);
    conv_to_fusion.collect(prefix + ".conv_to_fusion", params);
    bn_to_fusion.collect(prefix + ".bn_to_fusion", params, buffers);
}

// --------------------------------------------------------- Channel attention

ChannelAttention::ChannelAttention(int channels, int reduction)
    : fc1(channels, std::max(1, channels / reduction), 1, 1, false),
      fc2(std::max(1, channels / reduction), channels, 1, 1, false) {}

Variable ChannelAttention::forward(const Variable& x) const {
    Variable avg = fc2.forward(relu(fc1.forward(global_avg_pool(x))));
    Variable mx = fc2.forward(relu(fc1.forward(global_max_pool(x))));
    Variable scale = sigmoid(add(avg, mx));
    return broadcast_mul_channel(x, scale);
}

void ChannelAttention::collect(const std::string& prefix, ParamMap& params) {
    fc1.collect(prefix + ".fc1", params);
    fc2.collect(prefix + ".fc2", params);
}

// --------------------------------------------------------- Spatial attention

SpatialAttention::SpatialAttention() : conv(2, 1, 7, 1, false) {}

Variable SpatialAttention::forward(const Variable& x) const {
    Variable stat = concat_channels(channel_mean(x), channel_max(x));
    Variable scale = sigmoid(conv.forward(stat));
    return broadcast_mul_spatial(x, scale);
}

void SpatialAttention::collect(const std::string& prefix, ParamMap& params) {
    conv.collect(prefix + ".conv", params);
}

// -------------------------------------------------------------- ResidualPrior

ResidualPrior::ResidualPrior(int channels, const std::vector<int>& rates)
    : ca(channels), sa() {
    for (int r : rates) dilated.emplace_back(channels, channels, 3, r);
}

Variable ResidualPrior::forward(const Variable& x) const {
    Variable refined = sa.forward(ca.forward(x));
    Variable out;
    for (const auto& conv : dilated) {
        Variable branch = conv.forward(refined);
        out = out.defined() ? add(out, branch) : branch;
    }
    return out;
}

void ResidualPrior::collect(const std::string& prefix, ParamMap& params) {
    ca.collect(prefix + ".ca", params);
    sa.collect(prefix + ".sa", params);
    for (size_t i = 0; i < dilated.size(); ++i)
        dilated[i].collect(prefix + ".dilated" + std::to_string(i), params);
}

// -------------------------------------------------------- SelfAttentionBlock

SelfAttentionBlock::SelfAttentionBlock(int channels)
    : q(channels, channels, 1), k(channels, channels, 1), v(channels, channels, 1),
      proj(channels, channels, 1) {}

Variable SelfAttentionBlock::forward(const Variable& x) const {
    const Tensor& xv = x.value();
    const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
    const int hw = h * w;
    Variable qs = reshape(q.forward(x), {n, c, hw});
    Variable ks = reshape(k.forward(x), {n, c, hw});
    Variable vs = reshape(v.forward(x), {n, c, hw});
    // attention over key positions: scores (N,HW,HW)
    Variable scores = mul_scalar(matmul(qs, ks, true, false), 1.0 / std::sqrt(double(c)));
    Variable attn = softmax_lastdim(scores);
    Variable mixed = matmul(vs, attn, false, true);  // (N,C,HW)
    return proj.forward(reshape(mixed, {n, c, h, w}));
}

void SelfAttentionBlock::collect(const std::string& prefix, ParamMap& params) {
    q.collect(prefix + ".q", params);
    k.collect(prefix + ".k", params);
    v.collect(prefix + ".v", params);
    proj.collect(prefix + ".proj", params);
}

// ------------------------------------------------------------ FrequencyFusion

FrequencyFusion::FrequencyFusion(int channels, FdfmMode mode_)
    : cb(channels, channels, 3), freq_conv(2 * channels, 2 * channels, 1),
      freq_bn(2 * channels), mode(mode_) {
    if (mode == FdfmMode::TransformerSub) attn = SelfAttentionBlock(channels);
}

Variable FrequencyFusion::forward(const Variable& x, BnMode bn_mode) {
    Variable t = cb.forward(x, bn_mode);
    if (mode == FdfmMode::TransformerSub)
        return add(t, attn.forward(t));
    Variable spec = fft2_stack(t);
    Variable filtered = freq_bn.forward(freq_conv.forward(spec), bn_mode);
    return add(t, ifft2_real(filtered));
}

void FrequencyFusion::collect(const std::string& prefix, ParamMap& params, BufferMap& buffers) {
    cb.collect(prefix + ".cb", params, buffers);
    if (mode == FdfmMode::TransformerSub) {
        attn.collect(prefix + ".attn", params);
    } else {
        freq_conv.collect(prefix + ".freq_conv", params);
        freq_bn.collect(prefix + ".freq_bn", params, buffers);
    }
}

// ----------------------------------------------------------------- AuxDecoder

AuxDecoder::AuxDecoder(int channels)
    : cb1(channels, channels, 3), cb2(channels, channels, 3), out_conv(channels, 1, 1) {}

void AuxDecoder::init(core::Rng& rng) {
    cb1.init(rng);
    cb2.init(rng);
    out_conv.init(rng);
}

Variable AuxDecoder::forward(const Variable& f_residual, RunMode mode) {
    const BnMode bn = to_bn_mode(mode);
    return tanh_op(out_conv.forward(cb2.forward(cb1.forward(f_residual, bn), bn)));
}

void AuxDecoder::collect_params(ParamMap& params) {
    BufferMap scratch;
    cb1.collect("decoder.cb1", params, scratch);
    cb2.collect("decoder.cb2", params, scratch);
    out_conv.collect("decoder.out", params);
}

void AuxDecoder::collect_buffers(BufferMap& buffers) {
    ParamMap scratch;
    cb1.collect("decoder.cb1", scratch, buffers);
    cb2.collect("decoder.cb2", scratch, buffers);
}

// --------------------------------------------------------------------- RpfNet

RpfNet::RpfNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    const int c = cfg.channels;
    init_fusion = ConvBlock(2, c, 3);
    init_residual = ConvBlock(1, c, 3);
    stages.resize(cfg.stages);
    for (auto& st : stages) {
        st.cpm = CrossPromotion(c);
        st.rpm = ResidualPrior(c, cfg.dilation_rates);
        st.fdfm = FrequencyFusion(c, cfg.fdfm_mode);
    }
    head_cb = ConvBlock(c, c, 3);
    head_out = Conv2d(c, 1, 3);
}

void RpfNet::init(core::Rng& rng) {
    init_fusion.init(rng);
    init_residual.init(rng);
    for (auto& st : stages) {
        st.cpm.conv_to_residual.init(rng);
        st.cpm.conv_to_fusion.init(rng);
        st.rpm.ca.fc1.init(rng);
        st.rpm.ca.fc2.init(rng);
        st.rpm.sa.conv.init(rng);
        for (auto& d : st.rpm.dilated) d.init(rng);
        st.fdfm.cb.init(rng);
        if (cfg_.fdfm_mode == FdfmMode::TransformerSub) {
            st.fdfm.attn.q.init(rng);
            st.fdfm.attn.k.init(rng);
            st.fdfm.attn.v.init(rng);
            st.fdfm.attn.proj.init(rng);
        } else {
            st.fdfm.freq_conv.init(rng);
        }
    }
    head_cb.init(rng);
    head_out.init(rng);
}

ForwardResult RpfNet::forward(const Variable& ir, const Variable& vis_y, RunMode mode,
                              const std::optional<Variable>& residual_override) {
    if (!ir.value().same_shape(vis_y.value()))
        throw std::invalid_argument("RpfNet::forward: ir and vis_y must be registered (equal shapes)");
    const BnMode bn = to_bn_mode(mode);

    Variable fusion = init_fusion.forward(concat_channels(ir, vis_y), bn);
    Variable residual;
    if (cfg_.use_residual_branch) {
        Variable m = residual_override ? *residual_override : sub(ir, vis_y);
        residual = init_residual.forward(m, bn);
    }

    for (auto& st : stages) {
        if (cfg_.use_residual_branch) {
            auto [f_hat, r_hat] = st.cpm.forward(fusion, residual, bn, cfg_.use_cpm);
            residual = st.rpm.forward(r_hat);
            fusion = st.fdfm.forward(f_hat, bn);
        } else {
            fusion = st.fdfm.forward(fusion, bn);
        }
    }

    Variable head_in = cfg_.use_residual_branch ? add(fusion, residual) : fusion;
    Variable fused_y = sigmoid(head_out.forward(head_cb.forward(head_in, bn)));
    return {fused_y, fusion, residual};
}

FusedOutput RpfNet::fuse(const SourcePair& pair) {
    const int h = pair.height(), w = pair.width();
    Variable ir = Variable::constant(pair.ir.reshaped({1, 1, h, w}));
    Variable vis_y = Variable::constant(pair.vis_y.reshaped({1, 1, h, w}));
    ForwardResult r = forward(ir, vis_y, RunMode::Eval);
    FusedOutput out;
    out.fused_y = r.fused_y.value().reshaped({h, w});
    if (!pair.vis_rgb.empty())
        out.fused_rgb = imaging::ycbcr_to_rgb(out.fused_y, pair.vis_cb, pair.vis_cr);
    return out;
}

ParamMap RpfNet::parameters() {
    ParamMap params;
    BufferMap scratch;
    init_fusion.collect("init_fusion", params, scratch);
    init_residual.collect("init_residual", params, scratch);
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string p = "stage" + std::to_string(i);
        stages[i].cpm.collect(p + ".cpm", params, scratch);
        stages[i].rpm.collect(p + ".rpm", params);
        stages[i].fdfm.collect(p + ".fdfm", params, scratch);
    }
    head_cb.collect("head.cb", params, scratch);
    head_out.collect("head.out", params);
    return params;
}

BufferMap RpfNet::buffers() {
    ParamMap scratch;
    BufferMap buffers;
    init_fusion.collect("init_fusion", scratch, buffers);
    init_residual.collect("init_residual", scratch, buffers);
    for (size_t i = 0; i < stages.size(); ++i) {
        const std::string p = "stage" + std::to_string(i);
        stages[i].cpm.collect(p + ".cpm", scratch, buffers);
        stages[i].fdfm.collect(p + ".fdfm", scratch, buffers);
    }
    head_cb.collect("head.cb", scratch, buffers);
    return buffers;
}

}  // namespace rpf::net
