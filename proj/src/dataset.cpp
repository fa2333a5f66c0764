#include "flowlab/dataset.hpp"

#include <cmath>

namespace flowlab {

Array Dataset::draw(RngState& rng) const {
    if (kind == Kind::gmm) return sample_gmm(gmm, rng);
    // two moons, centered at the origin
    double angle = 3.14159265358979323846 * rng.next_uniform();
    bool upper = rng.next_uniform() < 0.5;
    double cx = std::cos(angle), cy = std::sin(angle);
    Array x(2);
    if (upper) {
        x.data[0] = cx - 0.5;
        x.data[1] = cy - 0.25;
    } else {
        x.data[0] = 0.5 - cx;
        x.data[1] = 0.25 - cy;
    }
    x.data[0] *= moons_scale;
    x.data[1] *= moons_scale;
    Array noise = gaussian(rng, 2);
    axpy(moons_noise, noise, x);
    return x;
}

Dataset Dataset::gaussian1d(double mean, double variance) {
    Dataset d;
    d.kind = Kind::gmm;
    d.gmm = GmmSpec::single(Array{mean}, variance);
    return d;
}

Dataset Dataset::gmm1d(double mu, double variance) {
    Dataset d;
    d.kind = Kind::gmm;
    d.gmm = GmmSpec::symmetric_pair(mu, variance);
    return d;
}

Dataset Dataset::two_moons(double noise, double scale) {
    Dataset d;
    d.kind = Kind::two_moons;
    d.moons_noise = noise;
    d.moons_scale = scale;
    return d;
}

Array sample_prior(const Dataset& data, const Schedule& sched, RngState& rng) {
    if (data.has_oracle()) return sample_diffused(data.gmm, sched, sched.t_max, rng);
    Array x = gaussian(rng, data.dim());
    double sT = sched.sigma(sched.t_max);
    for (double& v : x.data) v *= sT;
    return x;
}

}  // namespace flowlab
