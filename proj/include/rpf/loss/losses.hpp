#pragma once

#include <optional>
#include <vector>

#include "rpf/imaging/imaging.hpp"
#include "rpf/nn/ops.hpp"

namespace rpf::loss {

using imaging::MaskSet;
using nn::Tensor;
using nn::Variable;

enum class ContrastiveMode {
    AdaptiveFreq,  // positive/negative spectral pairs gated by the adaptive weight
    PlainFreqL1,   // positive spectral distances only, no negatives
    Spatial        // the same contrastive ratio with spatial l1 distances
};

struct LossConfig {
    double lambda1 = 0.3;
    double lambda2 = 5.0;
    double eps = 1e-9;
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01, ssim_k2 = 0.03;  // dynamic range 1
    // The structural term as printed rewards dissimilarity under minimization;
    // the default uses (1 - SSIM) per source. The printed form stays
    // available for ablation.
    bool ssim_printed_form = false;
    ContrastiveMode contrastive = ContrastiveMode::AdaptiveFreq;
    bool use_adaptive_weight = true;  // false: w = 1, complement = 0
    bool use_ssim = true;             // false: structural term dropped
    bool use_saliency = true;         // false: auxiliary branch dropped

    void validate() const;  // throws std::invalid_argument
};

/// Scalar loss components of one step. The identities l_ss = l_grad + l_reg,
/// l_f = l_c + lambda2 * l_s, l_total = l_ss + l_f hold by construction.
struct LossBundle {
    double l_grad = 0, l_reg = 0, l_ss = 0, l_c = 0, l_s = 0, l_f = 0, l_total = 0;
    std::vector<MaskSet> masks;  // per-sample masks used, kept for audit
};

/// Graph-side counterparts of the bundle.
struct LossTerms {
    Variable l_grad, l_reg, l_ss, l_c, l_s, l_f, l_total;
};

/// Mean-normalized l2 (root mean square) of a tensor.
Variable rms(const Variable& x);

/// Differentiable Sobel magnitude (replicate borders) on a (1,1,H,W) plane.
Variable sobel_magnitude(const Variable& x);

/// Masks for one sample; honors cfg.use_adaptive_weight.
MaskSet make_masks(const Tensor& ir, const Tensor& vis_y, const LossConfig& cfg);

/// ||grad(M') - grad(IR)||2 - lambda1 * ||M' . texture_mask(VIS_Y)||2
Variable loss_grad(const Variable& m_prime, const Tensor& ir, const Tensor& vis_y,
                   const LossConfig& cfg);

/// -||M' . thermal_mask(IR)||2
Variable loss_reg(const Variable& m_prime, const Tensor& ir);

/// D_pos / (D_neg + eps) over masked spectral distances (mode-dependent).
Variable loss_contrastive(const Variable& fused_y, const Tensor& ir, const Tensor& vis_y,
                          const MaskSet& masks, const LossConfig& cfg);

/// Mean SSIM over all (replicate-padded) windows; in [-1,1].
Variable ssim(const Variable& x, const Variable& y, const LossConfig& cfg);

/// Structural term against both sources.
Variable loss_s(const Variable& fused_y, const Tensor& ir, const Tensor& vis_y,
                const LossConfig& cfg);

/// Composes every term for one sample. m_prime may be absent (no auxiliary
/// branch); the saliency terms are then zero.
LossTerms compose_sample(const Variable& fused_y, const std::optional<Variable>& m_prime,
                         const Tensor& ir, const Tensor& vis_y, const MaskSet& masks,
                         const LossConfig& cfg);

struct BatchLoss {
    Variable total;
    LossBundle bundle;
};

/// Per-sample losses averaged over the batch; throws std::runtime_error
/// naming the first non-finite component.
BatchLoss batch_loss(const Variable& fused_batch, const std::optional<Variable>& m_prime_batch,
                     const std::vector<Tensor>& ir_planes, const std::vector<Tensor>& vis_y_planes,
                     const LossConfig& cfg);

// Plain-value conveniences for tests and reports.
double loss_grad_value(const Tensor& m_prime, const Tensor& ir, const Tensor& vis_y,
                       double lambda1);
double loss_reg_value(const Tensor& m_prime, const Tensor& ir);
double loss_contrastive_value(const Tensor& fused_y, const Tensor& ir, const Tensor& vis_y,
                              const Tensor& w, const Tensor& w_comp, double eps);
double freq_l1_value(const Tensor& a, const Tensor& b);
double ssim_value(const Tensor& x, const Tensor& y);

}  // namespace rpf::loss
