#pragma once

// Dense 2-D matrices and a tape for reverse-mode differentiation.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace popmon::nn {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const noexcept { return data.size(); }
    bool same_shape(const Matrix& o) const noexcept { return rows == o.rows && cols == o.cols; }
    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

/// Learnable tensor with its accumulated gradient.
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
    void zero_grad();
};

class Tape;

/// Handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    const Matrix& value() const;
    const Matrix& grad() const;
    std::size_t rows() const { return value().rows; }
    std::size_t cols() const { return value().cols; }
    double scalar() const;
    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Records operations in execution order; backward walks them in reverse.
/// A tape belongs to one thread.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Var constant(Matrix value);
    /// Leaf bound to a parameter; backward adds into parameter.grad.
    Var param(Parameter& p);

    /// Appends a node; checks the value for NaN/Inf.
    Var record(Matrix value, BackwardFn backward, const char* op);

    /// Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }
    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
    /// Gradient buffer of a node, allocated on first use.
    Matrix& grad_buffer(std::size_t id);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        Parameter* param = nullptr;
    };
    std::vector<Node> nodes_;
};

// Differentiable operations. Operands must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// Adds a 1 x cols bias to every row of a.
Var add_row_bias(Var a, Var bias);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var transpose(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var row_softmax(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Sum of all entries, 1x1.
Var sum(Var a);
/// Sum of squared entries, 1x1.
Var sum_squares(Var a);

}  // namespace popmon::nn
