#include "rpf/loss/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace rpf::loss {

using namespace rpf::nn;

void LossConfig::validate() const {
    if (lambda1 <= 0.0 || lambda2 <= 0.0)
        throw std::invalid_argument("LossConfig: lambda1 and lambda2 must be positive");
    if (eps <= 0.0) throw std::invalid_argument("LossConfig: eps must be positive");
    if (ssim_window < 1 || ssim_window % 2 == 0)
        throw std::invalid_argument("LossConfig: ssim_window must be odd and positive");
}

namespace {

Variable as_plane_var(const Tensor& t) {
    return Variable::constant(t.reshaped({1, 1, t.height(), t.width()}));
}

Variable one_minus(const Variable& v) { return add_scalar(mul_scalar(v, -1.0), 1.0); }

Tensor gaussian_kernel(int n, double sigma) {
    Tensor k({1, 1, n, n});
    const double c = (n - 1) / 2.0;
    double sum = 0.0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double v =
                std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2.0 * sigma * sigma));
            k.at(0, 0, y, x) = v;
            sum += v;
        }
    for (int64_t i = 0; i < k.numel(); ++i) k[i] /= sum;
    return k;
}

}  // namespace

Variable rms(const Variable& x) { return sqrt_safe(mean(square(x))); }

Variable sobel_magnitude(const Variable& x) {
    Tensor kx({1, 1, 3, 3}), ky({1, 1, 3, 3});
    const double gx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
    const double gy[9] = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
    for (int i = 0; i < 9; ++i) {
        kx[i] = gx[i];
        ky[i] = gy[i];
    }
    Variable xp = pad_replicate(x, 1);
    Variable rx = conv2d(xp, Variable::constant(kx), Variable(), 0, 1);
    Variable ry = conv2d(xp, Variable::constant(ky), Variable(), 0, 1);
    return sqrt_safe(add(square(rx), square(ry)));
}

MaskSet make_masks(const Tensor& ir, const Tensor& vis_y, const LossConfig& cfg) {
    MaskSet masks;
    masks.texture_mask = imaging::texture_mask(vis_y);
    masks.thermal_mask = imaging::thermal_mask(ir);
    if (cfg.use_adaptive_weight) {
        auto [w, wc] = imaging::adaptive_weight(ir, imaging::compute_residual(ir, vis_y));
        masks.weight = std::move(w);
        masks.weight_complement = std::move(wc);
    } else {
        masks.weight = Tensor::full(ir.shape(), 1.0);
        masks.weight_complement = Tensor::zeros(ir.shape());
    }
    return masks;
}

Variable loss_grad(const Variable& m_prime, const Tensor& ir, const Tensor& vis_y,
                   const LossConfig& cfg) {
    const int h = ir.height(), w = ir.width();
    Variable grad_ir = as_plane_var(imaging::sobel_gradient(ir));
    Variable mask = as_plane_var(imaging::texture_mask(vis_y));
    (void)h;
    (void)w;
    Variable term1 = rms(sub(sobel_magnitude(m_prime), grad_ir));
    Variable term2 = rms(mul(m_prime, mask));
    return sub(term1, mul_scalar(term2, cfg.lambda1));
}

Variable loss_reg(const Variable& m_prime, const Tensor& ir) {
    Variable mask = as_plane_var(imaging::thermal_mask(ir));
    return mul_scalar(rms(mul(m_prime, mask)), -1.0);
}

Variable loss_contrastive(const Variable& fused_y, const Tensor& ir, const Tensor& vis_y,
                          const MaskSet& masks, const LossConfig& cfg) {
    Variable w = as_plane_var(masks.weight);
    Variable wc = as_plane_var(masks.weight_complement);
    Variable ir_v = as_plane_var(ir);
    Variable vis_v = as_plane_var(vis_y);

    auto dist = [&](const Variable& a, const Variable& b) {
        return cfg.contrastive == ContrastiveMode::Spatial ? spatial_l1(a, b) : freq_l1(a, b);
    };

    Variable fw = mul(fused_y, w), fwc = mul(fused_y, wc);
    Variable iw = mul(ir_v, w), iwc = mul(ir_v, wc);
    Variable vw = mul(vis_v, w), vwc = mul(vis_v, wc);

    Variable d_pos = add(dist(fw, iw), dist(fwc, vwc));
    if (cfg.contrastive == ContrastiveMode::PlainFreqL1) return d_pos;

    // negative pairs, as printed
    Variable d_neg = add(add(dist(fw, iwc), dist(fw, vw)), add(dist(fwc, iw), dist(fwc, vwc)));
    return divide(d_pos, add_scalar(d_neg, cfg.eps));
}

Variable ssim(const Variable& x, const Variable& y, const LossConfig& cfg) {
    const double c1 = cfg.ssim_k1 * cfg.ssim_k1;  // dynamic range 1
    const double c2 = cfg.ssim_k2 * cfg.ssim_k2;
    const int pad = (cfg.ssim_window - 1) / 2;
    Variable kernel = Variable::constant(gaussian_kernel(cfg.ssim_window, cfg.ssim_sigma));
    auto gauss = [&](const Variable& v) {
        return conv2d(pad_replicate(v, pad), kernel, Variable(), 0, 1);
    };
    Variable mu1 = gauss(x), mu2 = gauss(y);
    Variable mu1_sq = mul(mu1, mu1), mu2_sq = mul(mu2, mu2), mu1_mu2 = mul(mu1, mu2);
    Variable sigma1_sq = sub(gauss(mul(x, x)), mu1_sq);
    Variable sigma2_sq = sub(gauss(mul(y, y)), mu2_sq);
    Variable sigma12 = sub(gauss(mul(x, y)), mu1_mu2);
    Variable num = mul(add_scalar(mul_scalar(mu1_mu2, 2.0), c1),
                       add_scalar(mul_scalar(sigma12, 2.0), c2));
    Variable den = mul(add_scalar(add(mu1_sq, mu2_sq), c1),
                       add_scalar(add(sigma1_sq, sigma2_sq), c2));
    return mean(divide(num, den));
}

Variable loss_s(const Variable& fused_y, const Tensor& ir, const Tensor& vis_y,
                const LossConfig& cfg) {
    Variable s_ir = ssim(fused_y, as_plane_var(ir), cfg);
    Variable s_vis = ssim(fused_y, as_plane_var(vis_y), cfg);
    if (cfg.ssim_printed_form) return add(s_ir, s_vis);
    return add(one_minus(s_ir), one_minus(s_vis));
}

LossTerms compose_sample(const Variable& fused_y, const std::optional<Variable>& m_prime,
                         const Tensor& ir, const Tensor& vis_y, const MaskSet& masks,
                         const LossConfig& cfg) {
    LossTerms terms;
    Variable zero = Variable::constant(Tensor({1}));
    if (cfg.use_saliency && m_prime) {
        terms.l_grad = loss_grad(*m_prime, ir, vis_y, cfg);
        terms.l_reg = loss_reg(*m_prime, ir);
    } else {
        terms.l_grad = zero;
        terms.l_reg = zero;
    }
    terms.l_ss = add(terms.l_grad, terms.l_reg);
    terms.l_c = loss_contrastive(fused_y, ir, vis_y, masks, cfg);
    terms.l_s = cfg.use_ssim ? loss_s(fused_y, ir, vis_y, cfg) : zero;
    terms.l_f = add(terms.l_c, mul_scalar(terms.l_s, cfg.lambda2));
    terms.l_total = add(terms.l_ss, terms.l_f);
    return terms;
}

BatchLoss batch_loss(const Variable& fused_batch, const std::optional<Variable>& m_prime_batch,
                     const std::vector<Tensor>& ir_planes, const std::vector<Tensor>& vis_y_planes,
                     const LossConfig& cfg) {
    const int b = fused_batch.value().dim(0);
    const double inv_b = 1.0 / b;
    Variable l_grad, l_reg, l_c, l_s;
    BatchLoss out;
    for (int i = 0; i < b; ++i) {
        Variable fused = select_sample(fused_batch, i);
        std::optional<Variable> m_prime;
        if (m_prime_batch) m_prime = select_sample(*m_prime_batch, i);
        MaskSet masks = make_masks(ir_planes[i], vis_y_planes[i], cfg);
        LossTerms t = compose_sample(fused, m_prime, ir_planes[i], vis_y_planes[i], masks, cfg);
        l_grad = l_grad.defined() ? add(l_grad, t.l_grad) : t.l_grad;
        l_reg = l_reg.defined() ? add(l_reg, t.l_reg) : t.l_reg;
        l_c = l_c.defined() ? add(l_c, t.l_c) : t.l_c;
        l_s = l_s.defined() ? add(l_s, t.l_s) : t.l_s;
        out.bundle.masks.push_back(std::move(masks));
    }
    l_grad = mul_scalar(l_grad, inv_b);
    l_reg = mul_scalar(l_reg, inv_b);
    l_c = mul_scalar(l_c, inv_b);
    l_s = mul_scalar(l_s, inv_b);
    Variable l_ss = add(l_grad, l_reg);
    Variable l_f = add(l_c, mul_scalar(l_s, cfg.lambda2));
    Variable l_total = add(l_ss, l_f);

    out.bundle.l_grad = l_grad.value()[0];
    out.bundle.l_reg = l_reg.value()[0];
    out.bundle.l_ss = l_ss.value()[0];
    out.bundle.l_c = l_c.value()[0];
    out.bundle.l_s = l_s.value()[0];
    out.bundle.l_f = l_f.value()[0];
    out.bundle.l_total = l_total.value()[0];
    out.total = l_total;

    auto check = [](double v, const char* name) {
        if (!std::isfinite(v))
            throw std::runtime_error(std::string("non-finite loss component: ") + name);
    };
    check(out.bundle.l_grad, "l_grad");
    check(out.bundle.l_reg, "l_reg");
    check(out.bundle.l_c, "l_c");
    check(out.bundle.l_s, "l_s");
    check(out.bundle.l_total, "l_total");
    return out;
}

double loss_grad_value(const Tensor& m_prime, const Tensor& ir, const Tensor& vis_y,
                       double lambda1) {
    LossConfig cfg;
    cfg.lambda1 = lambda1;
    Variable m = Variable::constant(m_prime.reshaped({1, 1, m_prime.height(), m_prime.width()}));
    return loss_grad(m, ir, vis_y, cfg).value()[0];
}

double loss_reg_value(const Tensor& m_prime, const Tensor& ir) {
    Variable m = Variable::constant(m_prime.reshaped({1, 1, m_prime.height(), m_prime.width()}));
    return loss_reg(m, ir).value()[0];
}

double loss_contrastive_value(const Tensor& fused_y, const Tensor& ir, const Tensor& vis_y,
                              const Tensor& w, const Tensor& w_comp, double eps) {
    LossConfig cfg;
    cfg.eps = eps;
    MaskSet masks;
    masks.weight = w;
    masks.weight_complement = w_comp;
    Variable f = Variable::constant(fused_y.reshaped({1, 1, fused_y.height(), fused_y.width()}));
    return loss_contrastive(f, ir, vis_y, masks, cfg).value()[0];
}

double freq_l1_value(const Tensor& a, const Tensor& b) {
    return freq_l1(Variable::constant(a), Variable::constant(b)).value()[0];
}

double ssim_value(const Tensor& x, const Tensor& y) {
    LossConfig cfg;
    Variable xv = Variable::constant(x.reshaped({1, 1, x.height(), x.width()}));
    Variable yv = Variable::constant(y.reshaped({1, 1, y.height(), y.width()}));
    return ssim(xv, yv, cfg).value()[0];
}

}  // namespace rpf::loss
