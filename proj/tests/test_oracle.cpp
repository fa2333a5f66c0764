#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowlab/oracle.hpp"

using namespace flowlab;

namespace {

// Brute-force 1D posterior mean: tensor-grid quadrature of
// E[x0 | x_t] = int x0 p(x_t|x0) p(x0) dx0 / int p(x_t|x0) p(x0) dx0
// with 2001 nodes over +-8 posterior standard deviations.
double quadrature_posterior_mean(const GmmSpec& gmm, const Schedule& sched, double x, double t) {
    double a = sched.alpha(t), sg = sched.sigma(t);
    double post_sd = std::sqrt(gmm.variance * sg * sg / (a * a * gmm.variance + sg * sg) + 1e-30);
    double center = x / std::max(a, 1e-12);
    double lo = center - 8.0 * (post_sd + std::sqrt(gmm.variance) + 1.0);
    double hi = center + 8.0 * (post_sd + std::sqrt(gmm.variance) + 1.0);
    const int N = 2001;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < N; ++i) {
        double x0 = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(N - 1);
        double prior = 0.0;
        for (std::size_t j = 0; j < gmm.weights.size(); ++j) {
            double d = x0 - gmm.means[j].data[0];
            prior += gmm.weights[j] * std::exp(-0.5 * d * d / gmm.variance);
        }
        double r = x - a * x0;
        double lik = std::exp(-0.5 * r * r / (sg * sg));
        num += x0 * prior * lik;
        den += prior * lik;
    }
    return num / den;
}

double closed_flow(double x, double t, double s) {
    return x * std::sqrt((1.0 + s * s) / (1.0 + t * t));
}

}  // namespace

TEST_CASE("posterior mean: closed forms and limits") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec single = GmmSpec::single(Array{0.0}, 1.0);
    // E[x0|x] = x/(1+t^2)
    CHECK(posterior_mean(single, edm, Array{2.0}, 1.0).data[0] == doctest::Approx(1.0).epsilon(1e-12));
    // t -> t_min: posterior concentrates on x
    CHECK(posterior_mean(single, edm, Array{0.7}, edm.t_min).data[0] ==
          doctest::Approx(0.7).epsilon(1e-4));
    // symmetric mixture at x = 0
    GmmSpec pair = GmmSpec::symmetric_pair(1.5, 0.25);
    CHECK(posterior_mean(pair, edm, Array{0.0}, 2.0).data[0] == doctest::Approx(0.0));
}

TEST_CASE("posterior mean matches 1D quadrature on a grid of (x, t)") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec pair = GmmSpec::symmetric_pair(1.0, 0.3);
    for (double t : {0.05, 0.4, 1.0, 3.0, 9.0}) {
        for (double x : {-4.0, -1.2, 0.3, 2.5, 6.0}) {
            double got = posterior_mean(pair, edm, Array{x}, t).data[0];
            double want = quadrature_posterior_mean(pair, edm, x, t);
            CHECK(std::abs(got - want) < 1e-6);
        }
    }
    Schedule fm = Schedule::fm();
    GmmSpec single = GmmSpec::single(Array{0.4}, 0.5);
    for (double t : {0.1, 0.5, 0.9}) {
        for (double x : {-1.0, 0.0, 1.3}) {
            double got = posterior_mean(single, fm, Array{x}, t).data[0];
            double want = quadrature_posterior_mean(single, fm, x, t);
            CHECK(std::abs(got - want) < 1e-6);
        }
    }
}

TEST_CASE("analytic drift: closed forms, symmetry, conversion agreement") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec single = GmmSpec::single(Array{0.0}, 1.0);
    DriftModel v = analytic_drift(single, edm);
    // v(x,t) = x t/(1+t^2)
    CHECK(v(Array{2.0}, 1.0).data[0] == doctest::Approx(1.0).epsilon(1e-12));

    GmmSpec pair = GmmSpec::symmetric_pair(1.0, 0.2);
    DriftModel vp = analytic_drift(pair, edm);
    CHECK(vp(Array{0.0}, 2.0).data[0] == doctest::Approx(0.0));

    Schedule fm = Schedule::fm();
    DriftModel vf = analytic_drift(single, fm);
    for (double x : {-2.0, 0.5, 3.0}) CHECK(vf(Array{x}, 0.5).data[0] == doctest::Approx(0.0));

    // wraps posterior_mean through denoiser_to_velocity wherever sigma > 0
    RngState rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        double t = 0.05 + 0.9 * rng.next_uniform();
        Array x = gaussian(rng, 1);
        Array via_conv = denoiser_to_velocity(fm, posterior_mean(single, fm, x, t), x, t);
        CHECK(std::abs(vf(x, t).data[0] - via_conv.data[0]) < 1e-10);
    }
}

TEST_CASE("reference flow map: closed form within 1e-8 at default resolution") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec single = GmmSpec::single(Array{0.0}, 1.0);
    ReferenceFlow ref = ReferenceFlow::for_gmm(single, edm);
    Array y = reference_flow_map(ref, Array{2.0}, 10.0, edm.t_min);
    CHECK(std::abs(y.data[0] - closed_flow(2.0, 10.0, edm.t_min)) < 1e-8);

    // spec example: Psi_{1 -> t_min}(2) ~ sqrt(2) * sqrt(1 + t_min^2)
    Array z = reference_flow_map(ref, Array{2.0}, 1.0, edm.t_min);
    CHECK(z.data[0] == doctest::Approx(std::sqrt(2.0) * std::sqrt(1.0 + edm.t_min * edm.t_min))
                           .epsilon(1e-9));
    // s == t -> identity
    Array id = reference_flow_map(ref, Array{2.0}, 1.0, 1.0);
    CHECK(id.data[0] == 2.0);
}

TEST_CASE("reference flow: semigroup and inversion on a mixture") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec pair = GmmSpec::symmetric_pair(1.0, 0.3);
    ReferenceFlow ref = ReferenceFlow::for_gmm(pair, edm, 4096);
    RngState rng(13);
    for (int rep = 0; rep < 5; ++rep) {
        Array x = sample_diffused(pair, edm, 10.0, rng);
        Array mid = reference_flow_map(ref, x, 10.0, 1.0);
        Array two_hop = reference_flow_map(ref, mid, 1.0, 0.01);
        Array direct = reference_flow_map(ref, x, 10.0, 0.01);
        CHECK(max_abs_diff(two_hop, direct) < 1e-7);

        Array back = reference_flow_map(ref, mid, 1.0, 10.0);
        CHECK(max_abs_diff(back, x) < 1e-7);
    }
}

TEST_CASE("oracle CM loss: zero-net head matches an independent Monte Carlo") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec single = GmmSpec::single(Array{0.0}, 1.0);
    ReferenceFlow ref = ReferenceFlow::for_gmm(single, edm, 512);

    MlpArch arch;
    arch.input_dim = 1;
    arch.hidden_widths = {8};
    arch.output_dim = 1;
    RngState prng(17);
    ConsistencyHead head{init_params(arch, prng), edm, 1.0};  // zero net: f = c_skip x

    RngState rng_batch(19);
    auto batch = sample_marginal_batch(single, edm, 4000, rng_batch);
    McEstimate got = oracle_cm_loss(head, ref, batch);

    // independent estimator with a separate stream and the closed-form flow:
    // E[(c_skip(t) x_t - S(t) x_t)^2], x_t ~ N(0, 1 + t^2)
    RngState rng_ind(831);
    double acc = 0.0, acc2 = 0.0;
    const std::size_t n = 200000;
    for (std::size_t i = 0; i < n; ++i) {
        double t = edm.t_min + (10.0 - edm.t_min) * rng_ind.next_uniform();
        double xt = std::sqrt(1.0 + t * t) * rng_ind.next_gaussian();
        double c_skip = 1.0 / (1.0 + t * t);
        double s_coef = std::sqrt((1.0 + edm.t_min * edm.t_min) / (1.0 + t * t));
        double v = (c_skip * xt - s_coef * xt) * (c_skip * xt - s_coef * xt);
        acc += v;
        acc2 += v * v;
    }
    double ind_mean = acc / static_cast<double>(n);
    double ind_var = acc2 / static_cast<double>(n) - ind_mean * ind_mean;
    double ind_se = std::sqrt(ind_var / static_cast<double>(n));
    double comb = std::sqrt(got.stderr_ * got.stderr_ + ind_se * ind_se);
    CHECK(std::abs(got.mean - ind_mean) < 3.0 * comb);
}

TEST_CASE("reverse-time oracle loss agrees; mismatched prior is detected") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec single = GmmSpec::single(Array{0.0}, 1.0);
    ReferenceFlow ref = ReferenceFlow::for_gmm(single, edm, 256);

    MlpArch arch;
    arch.input_dim = 1;
    arch.hidden_widths = {8};
    arch.output_dim = 1;
    RngState prng(23);
    NetParams p = init_params(arch, prng);
    RngState noise(24);
    for (double& v : p.values.data) v += 0.2 * noise.next_gaussian();
    ConsistencyHead head{p, edm, 1.0};

    const std::size_t n = 10000;
    RngState r1(301), r2(302), r3(303);
    McEstimate forward = oracle_cm_loss(head, ref, sample_marginal_batch(single, edm, n, r1));
    McEstimate reverse =
        oracle_cm_loss_reverse(head, ref, sample_prior_batch(single, edm, n, r2));
    double comb = std::sqrt(forward.stderr_ * forward.stderr_ + reverse.stderr_ * reverse.stderr_);
    CHECK(std::abs(forward.mean - reverse.mean) < 3.0 * comb);

    // prior with 2x variance: estimates must disagree beyond the band
    McEstimate wrong =
        oracle_cm_loss_reverse(head, ref, sample_prior_batch(single, edm, n, r3, 2.0));
    double comb2 = std::sqrt(forward.stderr_ * forward.stderr_ + wrong.stderr_ * wrong.stderr_);
    CHECK(std::abs(forward.mean - wrong.mean) > 3.0 * comb2);
}

TEST_CASE("diffused marginal sampler moments") {
    Schedule edm = Schedule::edm(0.002, 10.0);
    GmmSpec pair = GmmSpec::symmetric_pair(2.0, 0.5);
    RngState rng(41);
    const std::size_t n = 50000;
    double mean = 0.0, second = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double x = sample_diffused(pair, edm, 3.0, rng).data[0];
        mean += x;
        second += x * x;
    }
    mean /= static_cast<double>(n);
    second /= static_cast<double>(n);
    // E[x] = 0; E[x^2] = mu^2 + var + sigma^2 = 4 + 0.5 + 9
    CHECK(std::abs(mean) < 0.06);
    CHECK(std::abs(second - 13.5) < 0.3);
}
