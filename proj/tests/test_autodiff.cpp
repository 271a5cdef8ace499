#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rpf/nn/layers.hpp"
#include "rpf/nn/ops.hpp"
#include "test_util.hpp"

using namespace rpf;
using core::Tensor;
using nn::Variable;
using testutil::grad_max_err;
using testutil::numeric_gradient;
using testutil::random_tensor;

namespace {

/// Checks d(sum(probe * f(x)))/dx against finite differences.
void gradcheck(const std::function<Variable(const Variable&)>& f, Tensor x0,
               double tol = 1e-6, core::Rng* rng = nullptr) {
    core::Rng local(99);
    core::Rng& r = rng ? *rng : local;
    Variable probe_input(x0, true);
    Variable out = f(probe_input);
    const Tensor probe = random_tensor(out.value().shape(), r, -1.0, 1.0);

    auto scalar = [&](const Variable& v) {
        Variable weighted = nn::mul(v, Variable::constant(probe));
        return nn::sum(weighted);
    };
    Variable loss = scalar(out);
    loss.backward();
    const Tensor analytic = probe_input.grad();

    const Tensor numeric = numeric_gradient(
        [&](const Tensor& t) {
            Variable vx(t, false);
            return scalar(f(vx)).value()[0];
        },
        x0);
    CHECK(grad_max_err(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("elementwise op gradients") {
    core::Rng rng(1);
    const Tensor a = random_tensor({1, 2, 3, 4}, rng, 0.2, 1.5);
    const Tensor b = random_tensor({1, 2, 3, 4}, rng, 0.2, 1.5);
    const Variable bc = Variable::constant(b);
    gradcheck([&](const Variable& x) { return nn::add(x, bc); }, a);
    gradcheck([&](const Variable& x) { return nn::sub(bc, x); }, a);
    gradcheck([&](const Variable& x) { return nn::mul(x, bc); }, a);
    gradcheck([&](const Variable& x) { return nn::divide(bc, x); }, a);
    gradcheck([&](const Variable& x) { return nn::divide(x, bc); }, a);
    gradcheck([&](const Variable& x) { return nn::sigmoid(x); }, a);
    gradcheck([&](const Variable& x) { return nn::tanh_op(x); }, a);
    gradcheck([&](const Variable& x) { return nn::sqrt_safe(x); }, a);
    gradcheck([&](const Variable& x) { return nn::square(x); }, a);
    gradcheck([&](const Variable& x) { return nn::mul_scalar(nn::add_scalar(x, 0.7), -1.3); }, a);
    gradcheck([&](const Variable& x) { return nn::relu(nn::add_scalar(x, -0.8)); }, a, 1e-5);
}

TEST_CASE("reduction and shape op gradients") {
    core::Rng rng(2);
    const Tensor a = random_tensor({2, 3, 4, 5}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& x) { return nn::mean(x); }, a);
    gradcheck([&](const Variable& x) { return nn::sum(x); }, a);
    gradcheck([&](const Variable& x) { return nn::reshape(x, {2, 3, 20}); }, a);
    gradcheck([&](const Variable& x) { return nn::select_sample(x, 1); }, a);
    const Tensor b = random_tensor({2, 2, 4, 5}, rng);
    gradcheck([&](const Variable& x) { return nn::concat_channels(x, Variable::constant(b)); }, a);
}

TEST_CASE("conv, padding and batchnorm gradients") {
    core::Rng rng(3);
    const Tensor x = random_tensor({2, 2, 5, 6}, rng, -1.0, 1.0);
    const Tensor w = random_tensor({3, 2, 3, 3}, rng, -0.7, 0.7);
    const Tensor b = random_tensor({3}, rng, -0.2, 0.2);
    gradcheck([&](const Variable& v) {
        return nn::conv2d(v, Variable::constant(w), Variable::constant(b), 1, 1);
    }, x);
    // weight gradient
    {
        Variable wv(w, true);
        Variable out = nn::conv2d(Variable::constant(x), wv, Variable::constant(b), 1, 1);
        const Tensor probe = random_tensor(out.value().shape(), rng, -1.0, 1.0);
        Variable loss = nn::sum(nn::mul(out, Variable::constant(probe)));
        loss.backward();
        const Tensor numeric = numeric_gradient(
            [&](const Tensor& t) {
                Variable o = nn::conv2d(Variable::constant(x), Variable::constant(t),
                                        Variable::constant(b), 1, 1);
                return nn::sum(nn::mul(o, Variable::constant(probe))).value()[0];
            },
            w);
        CHECK(grad_max_err(wv.grad(), numeric) < 1e-6);
    }
    gradcheck([&](const Variable& v) { return nn::pad_replicate(v, 2); }, x);

    // batchnorm in training mode couples every element of a channel
    const Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
    const Tensor beta = random_tensor({2}, rng, -0.3, 0.3);
    Tensor rm({2}), rv = Tensor::full({2}, 1.0);
    gradcheck([&](const Variable& v) {
        Tensor rm_local = rm, rv_local = rv;
        return nn::batchnorm2d(v, Variable::constant(gamma), Variable::constant(beta), rm_local,
                               rv_local, nn::BnMode::Train);
    }, x, 1e-5);
    gradcheck([&](const Variable& v) {
        Tensor rm_local = rm, rv_local = rv;
        return nn::batchnorm2d(v, Variable::constant(gamma), Variable::constant(beta), rm_local,
                               rv_local, nn::BnMode::Eval);
    }, x);
    {  // gamma/beta gradients in training mode
        Variable gv(gamma, true), bv(beta, true);
        Tensor rm_local = rm, rv_local = rv;
        Variable out = nn::batchnorm2d(Variable::constant(x), gv, bv, rm_local, rv_local,
                                       nn::BnMode::Train);
        const Tensor probe = random_tensor(out.value().shape(), rng, -1.0, 1.0);
        nn::sum(nn::mul(out, Variable::constant(probe))).backward();
        const Tensor ng = numeric_gradient(
            [&](const Tensor& t) {
                Tensor rm2 = rm, rv2 = rv;
                Variable o = nn::batchnorm2d(Variable::constant(x), Variable::constant(t),
                                             Variable::constant(beta), rm2, rv2, nn::BnMode::Train);
                return nn::sum(nn::mul(o, Variable::constant(probe))).value()[0];
            },
            gamma);
        CHECK(grad_max_err(gv.grad(), ng) < 1e-5);
    }
}

TEST_CASE("batchnorm identity mode is a pass-through") {
    core::Rng rng(8);
    const Tensor x = random_tensor({1, 3, 4, 4}, rng);
    Tensor rm({3}), rv = Tensor::full({3}, 1.0);
    Variable out = nn::batchnorm2d(Variable::constant(x), Variable::constant(Tensor::full({3}, 2.0)),
                                   Variable::constant(Tensor::full({3}, 0.5)), rm, rv,
                                   nn::BnMode::Identity);
    CHECK(testutil::max_abs_diff(out.value(), x) == 0.0);
}

TEST_CASE("pooling and broadcast gradients") {
    core::Rng rng(4);
    const Tensor x = random_tensor({2, 3, 4, 5}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::global_avg_pool(v); }, x);
    gradcheck([&](const Variable& v) { return nn::global_max_pool(v); }, x, 1e-5);
    gradcheck([&](const Variable& v) { return nn::channel_mean(v); }, x);
    gradcheck([&](const Variable& v) { return nn::channel_max(v); }, x, 1e-5);

    const Tensor s_c = random_tensor({2, 3, 1, 1}, rng, 0.5, 1.5);
    const Tensor s_s = random_tensor({2, 1, 4, 5}, rng, 0.5, 1.5);
    gradcheck([&](const Variable& v) {
        return nn::broadcast_mul_channel(v, Variable::constant(s_c));
    }, x);
    gradcheck([&](const Variable& v) {
        return nn::broadcast_mul_spatial(v, Variable::constant(s_s));
    }, x);
    // gradient w.r.t. the scale operands
    gradcheck([&](const Variable& v) {
        return nn::broadcast_mul_channel(Variable::constant(x), v);
    }, s_c);
    gradcheck([&](const Variable& v) {
        return nn::broadcast_mul_spatial(Variable::constant(x), v);
    }, s_s);
}

TEST_CASE("matmul and softmax gradients") {
    core::Rng rng(5);
    const Tensor a = random_tensor({2, 3, 4}, rng, -1.0, 1.0);
    const Tensor b = random_tensor({2, 4, 5}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::matmul(v, Variable::constant(b)); }, a);
    gradcheck([&](const Variable& v) { return nn::matmul(Variable::constant(a), v); }, b);
    const Tensor at = random_tensor({2, 4, 3}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::matmul(v, Variable::constant(b), true, false); }, at);
    const Tensor bt = random_tensor({2, 5, 4}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::matmul(Variable::constant(a), v, false, true); }, bt);
    gradcheck([&](const Variable& v) { return nn::softmax_lastdim(v); }, a);
}

TEST_CASE("Fourier op gradients") {
    core::Rng rng(6);
    const Tensor x = random_tensor({1, 2, 4, 6}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::fft2_stack(v); }, x);
    const Tensor z = random_tensor({1, 4, 4, 6}, rng, -1.0, 1.0);
    gradcheck([&](const Variable& v) { return nn::ifft2_real(v); }, z);

    // composed round trip is the identity
    Variable xa(x, true);
    Variable rt = nn::ifft2_real(nn::fft2_stack(xa));
    CHECK(testutil::max_abs_diff(rt.value(), x) < 1e-9);
}

TEST_CASE("freq_l1 and spatial_l1 gradients and values") {
    core::Rng rng(7);
    const Tensor a = random_tensor({1, 1, 6, 5}, rng);
    const Tensor b = random_tensor({1, 1, 6, 5}, rng);
    gradcheck([&](const Variable& v) { return nn::freq_l1(v, Variable::constant(b)); }, a, 1e-5);
    gradcheck([&](const Variable& v) { return nn::freq_l1(Variable::constant(a), v); }, b, 1e-5);
    gradcheck([&](const Variable& v) { return nn::spatial_l1(v, Variable::constant(b)); }, a, 1e-5);

    CHECK(nn::freq_l1(Variable::constant(a), Variable::constant(a)).value()[0] == 0.0);
    const double ab = nn::freq_l1(Variable::constant(a), Variable::constant(b)).value()[0];
    const double ba = nn::freq_l1(Variable::constant(b), Variable::constant(a)).value()[0];
    CHECK(ab == doctest::Approx(ba).epsilon(1e-14));
}

TEST_CASE("stop_gradient cuts the graph") {
    const Tensor x = Tensor::full({1, 1, 2, 2}, 1.5);
    Variable v(x, true);
    Variable cut = nn::stop_gradient(nn::mul(v, v));
    Variable loss = nn::sum(cut);
    loss.backward();
    CHECK(v.grad().numel() == 0);  // no gradient ever flowed
}
