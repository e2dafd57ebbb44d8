#include <cmath>

#include "popmon/nn/layers.hpp"

namespace popmon::nn {

void init_uniform(Parameter& p, std::size_t fan_in, StreamRng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (double& x : p.value.data) x = rng.uniform(-bound, bound);
    p.zero_grad();
}

Dense::Dense(std::string name, std::size_t in, std::size_t out)
    : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

void Dense::init(StreamRng& rng) {
    init_uniform(weight, weight.value.rows, rng);
    init_uniform(bias, weight.value.rows, rng);
}

Var Dense::forward(Tape& t, Var x) { return add_row_bias(matmul(x, t.param(weight)), t.param(bias)); }

std::vector<Parameter*> Dense::parameters() { return {&weight, &bias}; }

GruCell::GruCell(std::string name, std::size_t input, std::size_t hidden)
    : input_size(input),
      hidden_size(hidden),
      w_z(name + ".w_z", input, hidden),
      u_z(name + ".u_z", hidden, hidden),
      b_z(name + ".b_z", 1, hidden),
      w_r(name + ".w_r", input, hidden),
      u_r(name + ".u_r", hidden, hidden),
      b_r(name + ".b_r", 1, hidden),
      w_c(name + ".w_c", input, hidden),
      u_h(name + ".u_h", hidden, hidden),
      b_c(name + ".b_c", 1, hidden) {}

void GruCell::init(StreamRng& rng) {
    for (Parameter* p : parameters()) init_uniform(*p, hidden_size, rng);
}

Var GruCell::step(Tape& t, Var x, Var h_prev) {
    if (x.cols() != input_size || h_prev.cols() != hidden_size || x.rows() != h_prev.rows()) {
        throw ShapeError("gru step with x " + x.value().shape_string() + " and h " + h_prev.value().shape_string());
    }
    auto gate = [&](Parameter& w, Parameter& u, Parameter& b, Var h) {
        return add_row_bias(add(matmul(x, t.param(w)), matmul(h, t.param(u))), t.param(b));
    };
    Var z = sigmoid(gate(w_z, u_z, b_z, h_prev));
    Var r = sigmoid(gate(w_r, u_r, b_r, h_prev));
    Var c = tanh(gate(w_c, u_h, b_c, hadamard(r, h_prev)));
    Var keep = add_scalar(scale(z, -1.0), 1.0);
    return add(hadamard(z, c), hadamard(keep, h_prev));
}

Var GruCell::run(Tape& t, const std::vector<Var>& inputs) {
    if (inputs.empty()) throw ShapeError("gru over an empty sequence");
    Var h = t.constant(Matrix(inputs.front().rows(), hidden_size));
    for (const Var& x : inputs) h = step(t, x, h);
    return h;
}

std::vector<Parameter*> GruCell::parameters() { return {&w_z, &u_z, &b_z, &w_r, &u_r, &b_r, &w_c, &u_h, &b_c}; }

Matrix propagation_matrix(const std::vector<std::vector<int>>& adjacency) {
    const std::size_t n = adjacency.size();
    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (adjacency[i].size() != n) throw ShapeError("adjacency matrix is not square");
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && (adjacency[i][j] != 0 || adjacency[j][i] != 0)) a(i, j) = 1.0;
        }
    }
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i) {
        double degree = 0.0;
        for (std::size_t j = 0; j < n; ++j) degree += a(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(degree);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
    }
    return a;
}

GcnLayer::GcnLayer(std::string name, std::size_t in, std::size_t out) : weight(name + ".weight", in, out) {}

void GcnLayer::init(StreamRng& rng) { init_uniform(weight, weight.value.rows, rng); }

Var GcnLayer::forward(Tape& t, Var propagation, Var h) {
    if (propagation.rows() != h.rows()) throw ShapeError("gcn propagation does not match node count");
    return relu(matmul(matmul(propagation, h), t.param(weight)));
}

std::vector<Parameter*> GcnLayer::parameters() { return {&weight}; }

SelfAttention::SelfAttention(std::string name, std::size_t model, std::size_t key)
    : model_size(model),
      key_size(key),
      w_q(name + ".w_q", model, key),
      w_k(name + ".w_k", model, key),
      w_v(name + ".w_v", model, key) {}

void SelfAttention::init(StreamRng& rng) {
    for (Parameter* p : parameters()) init_uniform(*p, model_size, rng);
}

Var SelfAttention::forward(Tape& t, Var z) {
    if (z.cols() != model_size) throw ShapeError("attention input width " + z.value().shape_string());
    Var q = matmul(z, t.param(w_q));
    Var k = matmul(z, t.param(w_k));
    Var v = matmul(z, t.param(w_v));
    Var scores = scale(matmul(transpose(k), q), 1.0 / std::sqrt(static_cast<double>(key_size)));
    return matmul(v, row_softmax(scores));
}

std::vector<Parameter*> SelfAttention::parameters() { return {&w_q, &w_k, &w_v}; }

}  // namespace popmon::nn
