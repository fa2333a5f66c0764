#include "flowlab/heads.hpp"

#include <cmath>

namespace flowlab {

Preconditioner preconditioner(double sigma_data, double t) {
    if (!(sigma_data > 0.0)) throw DomainError("sigma_data must be positive");
    double sd2 = sigma_data * sigma_data;
    double denom = sd2 + t * t;
    Preconditioner p;
    p.c_skip = sd2 / denom;
    p.c_out = sigma_data * t / std::sqrt(denom);
    p.c_in = 1.0 / std::sqrt(denom);
    return p;
}

namespace {

Array precond_eval(const NetParams& params, const Schedule& sched, double sigma_data,
                   const Array& x, double t) {
    sched.check_time(t);
    Preconditioner pc = preconditioner(sigma_data, t);
    Array raw = mlp_forward(params, pc.c_in * x, {t});
    Array out = pc.c_skip * x;
    axpy(pc.c_out, raw, out);
    return out;
}

}  // namespace

Array denoiser_eval(const DenoiserHead& head, const Array& x, double t) {
    return precond_eval(head.params, head.sched, head.sigma_data, x, t);
}

Array consistency_eval(const ConsistencyHead& head, const Array& x, double t) {
    return precond_eval(head.params, head.sched, head.sigma_data, x, t);
}

Array velocity_eval(const VelocityHead& head, const Array& x, double t) {
    head.sched.check_time(t);
    return mlp_forward(head.params, x, {t});
}

Array avgdrift_eval(const AvgDriftHead& head, const Array& x, double t, double s) {
    if (t < s) throw DomainError("avg drift needs t >= s");
    return mlp_forward(head.params, x, {t, s});
}

Array flowmap_from_drift(const AvgDriftHead& head, const Array& x, double t, double s) {
    if (t == s) return x;
    Array out = x;
    axpy(s - t, avgdrift_eval(head, x, t, s), out);
    return out;
}

GradGraph::Node precond_node(GradGraph& g, double sigma_data, const Array& x, double t) {
    Preconditioner pc = preconditioner(sigma_data, t);
    GradGraph::Node raw = g.mlp(g.params(), pc.c_in * x, {t});
    return g.affine(raw, pc.c_out, pc.c_skip * x);
}

GradGraph::Node velocity_node(GradGraph& g, const Array& x, double t) {
    return g.mlp(g.params(), x, {t});
}

GradGraph::Node avgdrift_node(GradGraph& g, const Array& x, double t, double s) {
    if (t < s) throw DomainError("avg drift needs t >= s");
    return g.mlp(g.params(), x, {t, s});
}

}  // namespace flowlab
