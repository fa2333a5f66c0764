#pragma once

#include <map>
#include <optional>
#include <string>

#include "flowlab/dataset.hpp"
#include "flowlab/heads.hpp"
#include "flowlab/optimizer.hpp"
#include "flowlab/solvers.hpp"

namespace flowlab {

enum class Stage {
    pretrain_dm,
    pretrain_fm,
    midtrain_cm,
    midtrain_mf,
    posttrain_ct,
    posttrain_cd,
    posttrain_gcd,
    posttrain_mf
};
Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

enum class TimeSampling { uniform, log_uniform };
enum class MfVelocitySource { conditional, teacher };

struct TrainConfig {
    Stage stage = Stage::pretrain_dm;
    Dataset dataset = Dataset::gaussian1d();
    Schedule sched = Schedule::edm();
    MlpArch arch;  // input/time dims are overridden to fit the stage head
    double sigma_data = 0.5;
    std::size_t batch = 128;  // loss terms per iteration
    std::size_t steps = 1000;
    double lr = 1e-3;
    bool lr_linear_decay = false;  // decay to zero over the run
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_stab = 1e-8;
    bool plain_sgd = false;
    double delta_t = 1e-2;       // CT/CD
    double gcd_u = 0.0;          // gCD anchor time
    std::size_t gcd_substeps = 4;
    SolveMethod cd_method = SolveMethod::euler;  // teacher step inside CD/gCD
    std::uint64_t seed = 0;
    TimeSampling time_sampling = TimeSampling::uniform;
    MfVelocitySource mf_velocity = MfVelocitySource::conditional;
    double mf_diag_mass = 0.25;  // probability of t == s in MF time pairs
    // trajectory generation for mid-training
    std::size_t traj_M = 16;
    SolveMethod traj_method = SolveMethod::ms3;
    WarmupMode traj_warmup = WarmupMode::escalate;
    GridKind traj_grid = GridKind::power;
    std::size_t traj_anchors = 8;  // fresh anchors per iteration
    std::size_t report_every = 100;

    MlpArch head_arch() const;  // arch with stage-appropriate input/time dims
};

struct LossReport {
    long long step = 0;
    double loss = 0.0;
    std::map<std::string, double> aux;
};

struct TrainResult {
    NetParams params;
    std::vector<LossReport> reports;
    bool aborted = false;
    long long abort_step = -1;
    std::string abort_reason;
    long long teacher_nfes = 0;  // accumulated teacher drift evaluations
};

// Teacher-side inputs; which parts are needed depends on the stage.
struct TeacherBundle {
    std::optional<DriftModel> drift;  // CD / gCD / MF distillation / trajectory solver
    // mid-training trajectory generator; defaults to the ODE solver on `drift`
    std::function<Trajectory(const TimeGrid&, const Array&)> sampler;
};

DriftModel drift_from_denoiser(const DenoiserHead& head);
DriftModel drift_from_velocity(const VelocityHead& head);
// instantaneous limit h(x,t,t) of a two-time head as a drift
DriftModel drift_from_avgdrift(const AvgDriftHead& head);
// grid-node jump generation with a two-time head (the lightweight-MF teacher)
std::function<Trajectory(const TimeGrid&, const Array&)> jump_sampler(const AvgDriftHead& head);

// ------------------------------- batches ----------------------------------
struct PerturbSample {
    Array x0, eps;
    double t = 0.0;
};
struct MfSample {
    Array x0, eps;
    double t = 0.0, s = 0.0;
};

// ---------------------------- losses (values) ------------------------------
double loss_pretrain_dm(const DenoiserHead& head, const std::vector<PerturbSample>& batch);
double loss_pretrain_fm(const VelocityHead& head, const std::vector<PerturbSample>& batch);
double loss_cmt_cm(const ConsistencyHead& head, const Trajectory& traj,
                   const std::vector<std::size_t>& indices);
double loss_cmt_mf(const AvgDriftHead& head, const Trajectory& traj,
                   const std::vector<std::pair<std::size_t, std::size_t>>& pairs);
double loss_ct(const ConsistencyHead& head, const ConsistencyHead& frozen,
               const std::vector<PerturbSample>& batch, double delta_t);
double loss_cd(const ConsistencyHead& head, const ConsistencyHead& frozen,
               const DriftModel& teacher, const std::vector<PerturbSample>& batch, double delta_t,
               SolveMethod method);
double loss_gcd(const ConsistencyHead& head, const ConsistencyHead& frozen,
                const DriftModel& teacher, const std::vector<PerturbSample>& batch, double u,
                std::size_t substeps);
double loss_mf(const AvgDriftHead& head, const AvgDriftHead& frozen,
               const std::vector<MfSample>& batch, MfVelocitySource v_source,
               const DriftModel* teacher = nullptr);

// stop-gradient MF regression target: v - (t-s) (v dh/dx + dh/dt) at frozen params
Array mf_target(const AvgDriftHead& frozen, const Array& v_val, const Array& x, double t, double s);

// --------------------------- losses (graph nodes) --------------------------
// Build the same losses over a GradGraph whose parameter leaf is the trained
// head; used by the trainer and by the per-sample gradient estimators.
GradGraph::Node node_pretrain_dm(GradGraph& g, const Schedule& sched, double sigma_data,
                                 const std::vector<PerturbSample>& batch);
GradGraph::Node node_pretrain_fm(GradGraph& g, const Schedule& sched,
                                 const std::vector<PerturbSample>& batch);
GradGraph::Node node_cmt_cm(GradGraph& g, double sigma_data, const Trajectory& traj,
                            const std::vector<std::size_t>& indices);
GradGraph::Node node_cmt_mf(GradGraph& g, const Trajectory& traj,
                            const std::vector<std::pair<std::size_t, std::size_t>>& pairs);
GradGraph::Node node_ct(GradGraph& g, const ConsistencyHead& frozen, const Schedule& sched,
                        double sigma_data, const std::vector<PerturbSample>& batch, double delta_t);
GradGraph::Node node_cd(GradGraph& g, const ConsistencyHead& frozen, const DriftModel& teacher,
                        const Schedule& sched, double sigma_data,
                        const std::vector<PerturbSample>& batch, double delta_t,
                        SolveMethod method);
GradGraph::Node node_gcd(GradGraph& g, const ConsistencyHead& frozen, const DriftModel& teacher,
                         const Schedule& sched, double sigma_data,
                         const std::vector<PerturbSample>& batch, double u, std::size_t substeps);
GradGraph::Node node_mf(GradGraph& g, const AvgDriftHead& frozen, const Schedule& sched,
                        const std::vector<MfSample>& batch, MfVelocitySource v_source,
                        const DriftModel* teacher = nullptr);

// default CMT-MF pair enumeration: all ordered (i, j), i > j, minus the M
// adjacent pairs (their finite differences are plain one-step drifts);
// M = 8 gives the 28 pairs per trajectory
std::vector<std::pair<std::size_t, std::size_t>> default_mf_pairs(std::size_t M);

// ------------------------------- trainer ----------------------------------
// on_report, when set, sees every emitted LossReport together with the
// parameters at that step (used by the init-comparison diagnostics).
using ReportHook = std::function<void(const LossReport&, const NetParams&)>;
TrainResult train(const TrainConfig& config, const NetParams& init,
                  const TeacherBundle& teacher = {}, const ReportHook& on_report = {});

// ------------------------------- sampling ---------------------------------
// CM: f-denoise / re-noise ladder, geometric in sigma (EDM); n_steps >= 1.
std::vector<Array> sample_cm(const ConsistencyHead& head, std::size_t n_steps, std::size_t count,
                             RngState& rng);
// MF: deterministic jumps along a uniform grid from t_max to 0.
std::vector<Array> sample_mf(const AvgDriftHead& head, std::size_t n_steps, std::size_t count,
                             RngState& rng);

}  // namespace flowlab
