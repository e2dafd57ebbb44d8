#pragma once

#include <cstdint>
#include <vector>

#include "popmon/nn/tensor.hpp"
#include "popmon/rng.hpp"

namespace popmon::nn {

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform(Parameter& p, std::size_t fan_in, StreamRng& rng);

/// y = x W + b for row-vector inputs.
struct Dense {
    Parameter weight;
    Parameter bias;

    Dense() = default;
    Dense(std::string name, std::size_t in, std::size_t out);
    void init(StreamRng& rng);
    Var forward(Tape& t, Var x);
    std::vector<Parameter*> parameters();
};

/// Gated recurrent unit, row-vector convention: each row of x is one
/// sequence, so a batch of rows shares the parameters.
///   z = sigmoid(x W_z + h U_z + b_z)
///   r = sigmoid(x W_r + h U_r + b_r)
///   c = tanh(x W_c + (r . h) U_h + b_c)
///   h' = z . c + (1 - z) . h
struct GruCell {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    Parameter w_z, u_z, b_z;
    Parameter w_r, u_r, b_r;
    Parameter w_c, u_h, b_c;

    GruCell() = default;
    GruCell(std::string name, std::size_t input, std::size_t hidden);
    void init(StreamRng& rng);
    Var step(Tape& t, Var x, Var h_prev);
    /// Runs the cell over a sequence from h = 0 and returns the last state.
    Var run(Tape& t, const std::vector<Var>& inputs);
    std::vector<Parameter*> parameters();
};

/// D^-1/2 (A + I) D^-1/2 with D the row sums of A + I. Any nonzero entry of
/// A counts as an edge in both directions.
Matrix propagation_matrix(const std::vector<std::vector<int>>& adjacency);

/// H' = relu(P H W) with a precomputed propagation matrix P.
struct GcnLayer {
    Parameter weight;

    GcnLayer() = default;
    GcnLayer(std::string name, std::size_t in, std::size_t out);
    void init(StreamRng& rng);
    Var forward(Tape& t, Var propagation, Var h);
    std::vector<Parameter*> parameters();
};

/// Q = Z W_Q, K = Z W_K, V = Z W_V and Z* = V softmax(K^T Q / sqrt(d)),
/// with the values on the left of the row-softmaxed d x d score matrix.
struct SelfAttention {
    std::size_t model_size = 0;
    std::size_t key_size = 0;
    Parameter w_q, w_k, w_v;

    SelfAttention() = default;
    SelfAttention(std::string name, std::size_t model, std::size_t key);
    void init(StreamRng& rng);
    Var forward(Tape& t, Var z);
    std::vector<Parameter*> parameters();
};

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig config = {});

    /// Applies one update from the accumulated gradients.
    void step();
    void zero_grad();
    std::uint64_t steps() const noexcept { return steps_; }
    const AdamConfig& config() const noexcept { return config_; }

private:
    std::vector<Parameter*> params_;
    AdamConfig config_;
    std::vector<Matrix> m_, v_;
    std::uint64_t steps_ = 0;
};

}  // namespace popmon::nn
