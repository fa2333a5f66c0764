#pragma once

#include <cstddef>
#include <vector>

#include "flowlab/array.hpp"
#include "flowlab/rng.hpp"

namespace flowlab {

enum class Activation { tanh, silu };

// Small time-conditioned MLP. Each conditioning time is expanded into a
// sinusoidal embedding of fixed width and appended to the state input.
struct MlpArch {
    std::size_t input_dim = 1;
    std::size_t time_inputs = 1;  // 1 for single-time heads, 2 for two-time heads
    std::vector<std::size_t> hidden_widths{128, 128, 128};
    std::size_t output_dim = 1;
    Activation activation = Activation::silu;

    static constexpr std::size_t kTimeEmbedWidth = 16;  // 8 frequencies x (sin, cos)

    std::size_t net_input_dim() const { return input_dim + kTimeEmbedWidth * time_inputs; }
    std::vector<std::size_t> layer_dims() const;  // [net_input, hidden..., output]
    std::size_t param_count() const;
    void validate() const;

    bool operator==(const MlpArch& o) const {
        return input_dim == o.input_dim && time_inputs == o.time_inputs &&
               hidden_widths == o.hidden_widths && output_dim == o.output_dim &&
               activation == o.activation;
    }
};

struct NetParams {
    MlpArch arch;
    Array values;  // layer-major: W0 (row-major out x in), b0, W1, b1, ...

    void validate() const;
};

// sinusoidal features of one scalar time, and their time derivative
void time_embedding(double t, double* out);
void time_embedding_derivative(double t, double* dout);

// Zero last layer (raw net outputs 0 at init), scaled-uniform elsewhere.
NetParams init_params(const MlpArch& arch, RngState& rng);

Array mlp_forward(const NetParams& params, const Array& x, const std::vector<double>& times);

struct MlpVjpResult {
    Array wrt_params;
    Array wrt_x;
    std::vector<double> wrt_times;
};

// Reverse pass: cotangent^T * d(output)/d(params, x, times).
MlpVjpResult mlp_vjp(const NetParams& params, const Array& x, const std::vector<double>& times,
                     const Array& cotangent);

// Forward-mode directional derivative w.r.t. (x, times); params held fixed.
// Returns (value, tangent); linear in the tangent inputs.
std::pair<Array, Array> mlp_jvp(const NetParams& params, const Array& x,
                                const std::vector<double>& times, const Array& tangent_x,
                                const std::vector<double>& tangent_times);

}  // namespace flowlab
