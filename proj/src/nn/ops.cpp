#include <algorithm>
#include <cmath>

#include "popmon/nn/tensor.hpp"

namespace popmon::nn {
namespace {

Tape& same_tape(Var a, Var b) {
    if (a.tape() == nullptr || a.tape() != b.tape()) throw std::invalid_argument("operands on different tapes");
    return *a.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + " " + a.shape_string() + " vs " + b.shape_string());
}

// g_dst += g_src elementwise
void accumulate(Matrix& dst, const Matrix& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

template <class F, class D>
Var unary(Var a, const char* op, F f, D dfdx_from_y) {
    Tape& t = *a.tape();
    Matrix y = a.value();
    for (double& x : y.data) x = f(x);
    const std::size_t ia = a.id();
    return t.record(
        std::move(y),
        [ia, dfdx_from_y](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            const Matrix& yv = tp.value(self);
            const Matrix& xv = tp.value(ia);
            Matrix& ga = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * dfdx_from_y(xv.data[i], yv.data[i]);
        },
        op);
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = same_tape(a, b);
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(
        matmul(a.value(), b.value()),
        [ia, ib](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            accumulate(tp.grad_buffer(ia), matmul(g, transpose(tp.value(ib))));
            accumulate(tp.grad_buffer(ib), matmul(transpose(tp.value(ia)), g));
        },
        "matmul");
}

Var add(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Matrix y = a.value();
    accumulate(y, b.value());
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(
        std::move(y),
        [ia, ib](Tape& tp, std::size_t self) {
            accumulate(tp.grad_buffer(ia), tp.grad(self));
            accumulate(tp.grad_buffer(ib), tp.grad(self));
        },
        "add");
}

Var sub(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), "sub");
    Matrix y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] -= b.value().data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(
        std::move(y),
        [ia, ib](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            accumulate(tp.grad_buffer(ia), g);
            Matrix& gb = tp.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        },
        "sub");
}

Var hadamard(Var a, Var b) {
    Tape& t = same_tape(a, b);
    require_same_shape(a.value(), b.value(), "hadamard");
    Matrix y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= b.value().data[i];
    const std::size_t ia = a.id(), ib = b.id();
    return t.record(
        std::move(y),
        [ia, ib](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            const Matrix& av = tp.value(ia);
            const Matrix& bv = tp.value(ib);
            Matrix& ga = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
            Matrix& gb = tp.grad_buffer(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
        },
        "hadamard");
}

Var add_row_bias(Var a, Var bias) {
    Tape& t = same_tape(a, bias);
    const Matrix& b = bias.value();
    if (b.rows != 1 || b.cols != a.cols()) {
        throw ShapeError("row bias " + b.shape_string() + " for " + a.value().shape_string());
    }
    Matrix y = a.value();
    for (std::size_t r = 0; r < y.rows; ++r) {
        for (std::size_t c = 0; c < y.cols; ++c) y(r, c) += b.data[c];
    }
    const std::size_t ia = a.id(), ib = bias.id();
    return t.record(
        std::move(y),
        [ia, ib](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            accumulate(tp.grad_buffer(ia), g);
            Matrix& gb = tp.grad_buffer(ib);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) gb.data[c] += g(r, c);
            }
        },
        "add_row_bias");
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    Tape& t = *parts.front().tape();
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    std::vector<std::size_t> ids, offsets;
    for (const Var& p : parts) {
        if (p.tape() != &t) throw std::invalid_argument("operands on different tapes");
        if (p.rows() != rows) throw ShapeError("concat_cols row mismatch");
        ids.push_back(p.id());
        offsets.push_back(cols);
        cols += p.cols();
    }
    Matrix y(rows, cols);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Matrix& v = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(&v.data[r * v.cols], v.cols, &y.data[r * cols + offsets[k]]);
        }
    }
    return t.record(
        std::move(y),
        [ids, offsets](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                Matrix& gp = tp.grad_buffer(ids[k]);
                for (std::size_t r = 0; r < gp.rows; ++r) {
                    for (std::size_t c = 0; c < gp.cols; ++c) gp(r, c) += g(r, offsets[k] + c);
                }
            }
        },
        "concat_cols");
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat of nothing");
    Tape& t = *parts.front().tape();
    const std::size_t cols = parts.front().cols();
    std::vector<std::size_t> ids, offsets;
    Matrix y;
    y.cols = cols;
    for (const Var& p : parts) {
        if (p.tape() != &t) throw std::invalid_argument("operands on different tapes");
        if (p.cols() != cols) throw ShapeError("concat_rows column mismatch");
        ids.push_back(p.id());
        offsets.push_back(y.rows);
        y.rows += p.rows();
        y.data.insert(y.data.end(), p.value().data.begin(), p.value().data.end());
    }
    return t.record(
        std::move(y),
        [ids, offsets, cols](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            for (std::size_t k = 0; k < ids.size(); ++k) {
                Matrix& gp = tp.grad_buffer(ids[k]);
                const double* src = &g.data[offsets[k] * cols];
                for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += src[i];
            }
        },
        "concat_rows");
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
    const Matrix& v = a.value();
    if (begin + count > v.rows) throw ShapeError("slice_rows out of range");
    Matrix y(count, v.cols);
    std::copy_n(&v.data[begin * v.cols], count * v.cols, y.data.begin());
    const std::size_t ia = a.id();
    return a.tape()->record(
        std::move(y),
        [ia, begin](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            Matrix& ga = tp.grad_buffer(ia);
            double* dst = &ga.data[begin * ga.cols];
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g.data[i];
        },
        "slice_rows");
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const Matrix& v = a.value();
    if (begin + count > v.cols) throw ShapeError("slice_cols out of range");
    Matrix y(v.rows, count);
    for (std::size_t r = 0; r < v.rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) y(r, c) = v(r, begin + c);
    }
    const std::size_t ia = a.id();
    return a.tape()->record(
        std::move(y),
        [ia, begin](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            Matrix& ga = tp.grad_buffer(ia);
            for (std::size_t r = 0; r < g.rows; ++r) {
                for (std::size_t c = 0; c < g.cols; ++c) ga(r, begin + c) += g(r, c);
            }
        },
        "slice_cols");
}

Var transpose(Var a) {
    const std::size_t ia = a.id();
    return a.tape()->record(
        transpose(a.value()),
        [ia](Tape& tp, std::size_t self) { accumulate(tp.grad_buffer(ia), transpose(tp.grad(self))); },
        "transpose");
}

Var sigmoid(Var a) {
    return unary(
        a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
    return unary(
        a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var scale(Var a, double s) {
    return unary(
        a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
    return unary(
        a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var row_softmax(Var a) {
    Matrix y = a.value();
    for (std::size_t r = 0; r < y.rows; ++r) {
        double* row = &y.data[r * y.cols];
        const double m = *std::max_element(row, row + y.cols);
        double total = 0.0;
        for (std::size_t c = 0; c < y.cols; ++c) total += (row[c] = std::exp(row[c] - m));
        for (std::size_t c = 0; c < y.cols; ++c) row[c] /= total;
    }
    const std::size_t ia = a.id();
    return a.tape()->record(
        std::move(y),
        [ia](Tape& tp, std::size_t self) {
            const Matrix& g = tp.grad(self);
            const Matrix& s = tp.value(self);
            Matrix& ga = tp.grad_buffer(ia);
            for (std::size_t r = 0; r < s.rows; ++r) {
                double dot = 0.0;
                for (std::size_t c = 0; c < s.cols; ++c) dot += g(r, c) * s(r, c);
                for (std::size_t c = 0; c < s.cols; ++c) ga(r, c) += s(r, c) * (g(r, c) - dot);
            }
        },
        "row_softmax");
}

Var sum(Var a) {
    double total = 0.0;
    for (double x : a.value().data) total += x;
    const std::size_t ia = a.id();
    return a.tape()->record(
        Matrix(1, 1, total),
        [ia](Tape& tp, std::size_t self) {
            const double g = tp.grad(self).data[0];
            for (double& x : tp.grad_buffer(ia).data) x += g;
        },
        "sum");
}

Var sum_squares(Var a) {
    double total = 0.0;
    for (double x : a.value().data) total += x * x;
    const std::size_t ia = a.id();
    return a.tape()->record(
        Matrix(1, 1, total),
        [ia](Tape& tp, std::size_t self) {
            const double g = tp.grad(self).data[0];
            const Matrix& av = tp.value(ia);
            Matrix& ga = tp.grad_buffer(ia);
            for (std::size_t i = 0; i < av.size(); ++i) ga.data[i] += 2.0 * g * av.data[i];
        },
        "sum_squares");
}

}  // namespace popmon::nn
