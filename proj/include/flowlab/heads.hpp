#pragma once

#include "flowlab/gradgraph.hpp"
#include "flowlab/schedule.hpp"

namespace flowlab {

// Skip/output/input scalings shared by the denoiser and consistency heads.
// c_skip = sd^2/(sd^2+t^2), c_out = sd*t/sqrt(sd^2+t^2), c_in = 1/sqrt(sd^2+t^2).
struct Preconditioner {
    double c_skip;
    double c_out;
    double c_in;
};
Preconditioner preconditioner(double sigma_data, double t);

// Denoiser D(x,t) ~ E[x0 | x_t]; preconditioned raw net.
struct DenoiserHead {
    NetParams params;
    Schedule sched;
    double sigma_data = 0.5;
};

// Consistency function f(x,t) ~ flow map to the clean endpoint; same
// parameterization as the denoiser, so f(x, terminal) stays close to x.
struct ConsistencyHead {
    NetParams params;
    Schedule sched;
    double sigma_data = 0.5;
};

// Instantaneous velocity v(x,t); raw net output.
struct VelocityHead {
    NetParams params;
    Schedule sched;
};

// Two-time average drift h(x,t,s); raw net output, defined for t >= s.
struct AvgDriftHead {
    NetParams params;
    Schedule sched;
};

Array denoiser_eval(const DenoiserHead& head, const Array& x, double t);
Array consistency_eval(const ConsistencyHead& head, const Array& x, double t);
Array velocity_eval(const VelocityHead& head, const Array& x, double t);
Array avgdrift_eval(const AvgDriftHead& head, const Array& x, double t, double s);

// x + (s - t) * h(x, t, s); exactly x when t == s
Array flowmap_from_drift(const AvgDriftHead& head, const Array& x, double t, double s);

// Graph-node builders for training losses (parameters differentiable,
// x and times constant).
GradGraph::Node precond_node(GradGraph& g, double sigma_data, const Array& x, double t);
GradGraph::Node velocity_node(GradGraph& g, const Array& x, double t);
GradGraph::Node avgdrift_node(GradGraph& g, const Array& x, double t, double s);

}  // namespace flowlab
