#include <cmath>

#include "popmon/nn/tensor.hpp"

namespace popmon::nn {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows = rows.size();
    m.cols = rows.size() == 0 ? 0 : rows.begin()->size();
    for (const auto& r : rows) {
        if (r.size() != m.cols) throw ShapeError("ragged matrix literal");
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

std::string Matrix::shape_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul " + a.shape_string() + " by " + b.shape_string());
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double* o = &out.data[i * b.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double x = a.data[i * a.cols + k];
            if (x == 0.0) continue;
            const double* br = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) o[j] += x * br[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    }
    return out;
}

void Parameter::zero_grad() { grad = Matrix(value.rows, value.cols); }

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
    const Matrix& v = value();
    if (v.rows != 1 || v.cols != 1) throw ShapeError("not a scalar: " + v.shape_string());
    return v.data[0];
}

Var Tape::constant(Matrix value) { return record(std::move(value), nullptr, "constant"); }

Var Tape::param(Parameter& p) {
    Var v = record(p.value, nullptr, "param");
    nodes_[v.id()].param = &p;
    return v;
}

Var Tape::record(Matrix value, BackwardFn backward, const char* op) {
    for (double x : value.data) {
        if (!std::isfinite(x)) throw NonFiniteError(std::string("non-finite value produced by ") + op);
    }
    nodes_.push_back(Node{std::move(value), Matrix{}, std::move(backward), nullptr});
    return Var(this, nodes_.size() - 1);
}

Matrix& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size() || n.grad.rows != n.value.rows) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) throw std::invalid_argument("loss belongs to another tape");
    const Matrix& lv = nodes_[loss.id()].value;
    if (lv.rows != 1 || lv.cols != 1) throw ShapeError("backward needs a scalar loss, got " + lv.shape_string());
    for (Node& n : nodes_) n.grad = Matrix(n.value.rows, n.value.cols);
    nodes_[loss.id()].grad.data[0] = 1.0;
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.backward) n.backward(*this, i);
        if (n.param != nullptr) {
            Parameter& p = *n.param;
            if (!p.grad.same_shape(p.value)) p.zero_grad();
            for (std::size_t k = 0; k < p.grad.size(); ++k) p.grad.data[k] += nodes_[i].grad.data[k];
        }
    }
}

}  // namespace popmon::nn
