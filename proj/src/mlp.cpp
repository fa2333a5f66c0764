#include "flowlab/mlp.hpp"

#include <cmath>

namespace flowlab {

namespace {

inline double activate(Activation act, double z) {
    if (act == Activation::tanh) return std::tanh(z);
    double s = 1.0 / (1.0 + std::exp(-z));
    return z * s;  // silu
}

inline double activate_derivative(Activation act, double z) {
    if (act == Activation::tanh) {
        double th = std::tanh(z);
        return 1.0 - th * th;
    }
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

// assembled net input: [x, emb(t_0), emb(t_1), ...]
std::vector<double> build_input(const MlpArch& arch, const Array& x,
                                const std::vector<double>& times) {
    if (x.size() != arch.input_dim)
        throw ShapeError("mlp input has " + std::to_string(x.size()) + " entries, arch expects " +
                         std::to_string(arch.input_dim));
    if (times.size() != arch.time_inputs)
        throw ShapeError("mlp got " + std::to_string(times.size()) + " times, arch expects " +
                         std::to_string(arch.time_inputs));
    std::vector<double> u(arch.net_input_dim());
    for (std::size_t i = 0; i < arch.input_dim; ++i) u[i] = x.data[i];
    for (std::size_t j = 0; j < times.size(); ++j)
        time_embedding(times[j], u.data() + arch.input_dim + j * MlpArch::kTimeEmbedWidth);
    return u;
}

}  // namespace

// Sinusoidal features of tau = asinh(t). The warp spreads wide noise ranges
// logarithmically while staying defined at t = 0; the frequency bands run
// geometrically from 0.25 to 8, slow enough that conditioning cannot
// oscillate between the sparse grid times of a 16-step trajectory.
namespace {
constexpr double kEmbedBaseFreq = 0.25;
constexpr double kEmbedFreqStep = 1.6406707120299513;  // 32^(1/7)
}  // namespace

void time_embedding(double t, double* out) {
    double tau = std::asinh(t);
    double w = kEmbedBaseFreq;
    for (std::size_t k = 0; k < MlpArch::kTimeEmbedWidth / 2; ++k) {
        out[2 * k] = std::sin(w * tau);
        out[2 * k + 1] = std::cos(w * tau);
        w *= kEmbedFreqStep;
    }
}

void time_embedding_derivative(double t, double* dout) {
    double tau = std::asinh(t);
    double dtau = 1.0 / std::sqrt(1.0 + t * t);
    double w = kEmbedBaseFreq;
    for (std::size_t k = 0; k < MlpArch::kTimeEmbedWidth / 2; ++k) {
        dout[2 * k] = w * dtau * std::cos(w * tau);
        dout[2 * k + 1] = -w * dtau * std::sin(w * tau);
        w *= kEmbedFreqStep;
    }
}

std::vector<std::size_t> MlpArch::layer_dims() const {
    std::vector<std::size_t> dims;
    dims.push_back(net_input_dim());
    for (std::size_t h : hidden_widths) dims.push_back(h);
    dims.push_back(output_dim);
    return dims;
}

std::size_t MlpArch::param_count() const {
    auto dims = layer_dims();
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l] * dims[l + 1] + dims[l + 1];
    return n;
}

void MlpArch::validate() const {
    if (input_dim == 0 || output_dim == 0) throw ShapeError("mlp dims must be positive");
    if (time_inputs != 1 && time_inputs != 2) throw ShapeError("time_inputs must be 1 or 2");
    if (hidden_widths.empty()) throw ShapeError("hidden_widths must be nonempty");
    for (std::size_t h : hidden_widths)
        if (h == 0) throw ShapeError("hidden widths must be positive");
}

void NetParams::validate() const {
    arch.validate();
    if (values.size() != arch.param_count())
        throw ShapeError("param vector has " + std::to_string(values.size()) +
                         " entries, arch implies " + std::to_string(arch.param_count()));
}

NetParams init_params(const MlpArch& arch, RngState& rng) {
    arch.validate();
    NetParams p{arch, Array(arch.param_count())};
    auto dims = arch.layer_dims();
    std::size_t off = 0;
    std::size_t n_layers = dims.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        bool last = (l + 1 == n_layers);
        double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::size_t i = 0; i < out * in; ++i)
            p.values.data[off + i] = last ? 0.0 : scale * (2.0 * rng.next_uniform() - 1.0);
        off += out * in;
        off += out;  // biases stay zero
    }
    return p;
}

Array mlp_forward(const NetParams& params, const Array& x, const std::vector<double>& times) {
    params.validate();
    const MlpArch& arch = params.arch;
    std::vector<double> a = build_input(arch, x, times);
    auto dims = arch.layer_dims();
    const double* w = params.values.data.data();
    std::size_t off = 0;
    std::size_t n_layers = dims.size() - 1;
    std::vector<double> z;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        const double* W = w + off;
        const double* b = w + off + out * in;
        z.assign(out, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double* row = W + i * in;
            double s = b[i];
            for (std::size_t j = 0; j < in; ++j) s += row[j] * a[j];
            z[i] = s;
        }
        if (l + 1 < n_layers)
            for (double& v : z) v = activate(arch.activation, v);
        a.swap(z);
        off += out * in + out;
    }
    Array out(arch.output_dim);
    out.data = a;
    return out;
}

MlpVjpResult mlp_vjp(const NetParams& params, const Array& x, const std::vector<double>& times,
                     const Array& cotangent) {
    params.validate();
    const MlpArch& arch = params.arch;
    if (cotangent.size() != arch.output_dim) throw ShapeError("cotangent/output dim mismatch");
    auto dims = arch.layer_dims();
    std::size_t n_layers = dims.size() - 1;

    // forward with cached pre-activations and activations
    std::vector<std::vector<double>> acts(n_layers + 1);  // acts[l] feeds layer l
    std::vector<std::vector<double>> pre(n_layers);
    acts[0] = build_input(arch, x, times);
    const double* w = params.values.data.data();
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        const double* W = w + off;
        const double* b = w + off + out * in;
        pre[l].assign(out, 0.0);
        const std::vector<double>& a = acts[l];
        for (std::size_t i = 0; i < out; ++i) {
            const double* row = W + i * in;
            double s = b[i];
            for (std::size_t j = 0; j < in; ++j) s += row[j] * a[j];
            pre[l][i] = s;
        }
        acts[l + 1] = pre[l];
        if (l + 1 < n_layers)
            for (double& v : acts[l + 1]) v = activate(arch.activation, v);
        off += out * in + out;
    }

    // reverse sweep
    MlpVjpResult res;
    res.wrt_params = Array(params.values.size());
    std::vector<double> delta = cotangent.data;  // d loss / d z at current layer
    std::size_t offs_end = params.values.size();
    for (std::size_t li = n_layers; li-- > 0;) {
        std::size_t in = dims[li], out = dims[li + 1];
        offs_end -= out * in + out;
        const double* W = w + offs_end;
        double* gW = res.wrt_params.data.data() + offs_end;
        double* gb = gW + out * in;
        const std::vector<double>& a = acts[li];
        std::vector<double> prev(in, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            double d = delta[i];
            gb[i] = d;
            double* grow = gW + i * in;
            const double* row = W + i * in;
            for (std::size_t j = 0; j < in; ++j) {
                grow[j] = d * a[j];
                prev[j] += d * row[j];
            }
        }
        if (li > 0)
            for (std::size_t j = 0; j < in; ++j)
                prev[j] *= activate_derivative(arch.activation, pre[li - 1][j]);
        delta.swap(prev);
    }

    // delta now holds d loss / d(assembled input)
    res.wrt_x = Array(arch.input_dim);
    for (std::size_t i = 0; i < arch.input_dim; ++i) res.wrt_x.data[i] = delta[i];
    res.wrt_times.assign(arch.time_inputs, 0.0);
    double demb[MlpArch::kTimeEmbedWidth];
    for (std::size_t j = 0; j < arch.time_inputs; ++j) {
        time_embedding_derivative(times[j], demb);
        double s = 0.0;
        for (std::size_t k = 0; k < MlpArch::kTimeEmbedWidth; ++k)
            s += delta[arch.input_dim + j * MlpArch::kTimeEmbedWidth + k] * demb[k];
        res.wrt_times[j] = s;
    }
    return res;
}

std::pair<Array, Array> mlp_jvp(const NetParams& params, const Array& x,
                                const std::vector<double>& times, const Array& tangent_x,
                                const std::vector<double>& tangent_times) {
    params.validate();
    const MlpArch& arch = params.arch;
    if (tangent_x.size() != x.size()) throw ShapeError("tangent_x/x mismatch");
    if (tangent_times.size() != times.size()) throw ShapeError("tangent_times/times mismatch");

    std::vector<double> a = build_input(arch, x, times);
    std::vector<double> da(a.size(), 0.0);
    for (std::size_t i = 0; i < arch.input_dim; ++i) da[i] = tangent_x.data[i];
    double demb[MlpArch::kTimeEmbedWidth];
    for (std::size_t j = 0; j < arch.time_inputs; ++j) {
        time_embedding_derivative(times[j], demb);
        for (std::size_t k = 0; k < MlpArch::kTimeEmbedWidth; ++k)
            da[arch.input_dim + j * MlpArch::kTimeEmbedWidth + k] = demb[k] * tangent_times[j];
    }

    auto dims = arch.layer_dims();
    const double* w = params.values.data.data();
    std::size_t off = 0;
    std::size_t n_layers = dims.size() - 1;
    std::vector<double> z, dz;
    for (std::size_t l = 0; l < n_layers; ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        const double* W = w + off;
        const double* b = w + off + out * in;
        z.assign(out, 0.0);
        dz.assign(out, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            const double* row = W + i * in;
            double s = b[i], ds = 0.0;
            for (std::size_t j = 0; j < in; ++j) {
                s += row[j] * a[j];
                ds += row[j] * da[j];
            }
            z[i] = s;
            dz[i] = ds;
        }
        if (l + 1 < n_layers) {
            for (std::size_t i = 0; i < out; ++i) {
                dz[i] *= activate_derivative(arch.activation, z[i]);
                z[i] = activate(arch.activation, z[i]);
            }
        }
        a.swap(z);
        da.swap(dz);
        off += out * in + out;
    }
    Array value(arch.output_dim), tangent(arch.output_dim);
    value.data = a;
    tangent.data = da;
    return {value, tangent};
}

}  // namespace flowlab
