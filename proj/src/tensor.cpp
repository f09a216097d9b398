#include "idmne/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace idmne {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shp) {
    std::size_t n = 1;
    for (std::size_t d : shp) n *= d;
    return n;
}

Tape* common_tape(const Tensor& a, const Tensor& b) {
    if (a.tape && b.tape && a.tape != b.tape) {
        throw std::logic_error("operands belong to two different tapes");
    }
    return a.tape ? a.tape : b.tape;
}

Tensor bind(Tensor out, Tape* tape, int node) {
    out.tape = tape;
    out.node = node;
    return out;
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite input value");
        }
    }
}

// Treats rank-1 tensors as a single row for the row-wise ops.
std::pair<std::size_t, std::size_t> row_view(const Tensor& t, const char* op) {
    if (t.rank() == 1) return {1, t.shape[0]};
    if (t.rank() == 2) return {t.shape[0], t.shape[1]};
    throw DimensionError(std::string(op) + ": expected rank 1 or 2, got shape " + shape_str(t.shape));
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shp, std::vector<double> values)
    : shape(std::move(shp)), data(std::move(values)) {
    if (data.size() != shape_product(shape)) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shp) {
    std::size_t n = shape_product(shp);
    return Tensor(std::move(shp), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DimensionError("from_rows: no rows");
    std::size_t c = rows[0].size();
    std::vector<double> flat;
    flat.reserve(rows.size() * c);
    for (const auto& r : rows) {
        if (r.size() != c) throw DimensionError("from_rows: ragged rows");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), c}, std::move(flat));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows(): tensor is not rank 2, shape " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols(): tensor is not rank 2, shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

double Tensor::value() const {
    if (size() != 1) throw DimensionError("value(): tensor is not scalar, shape " + shape_str(shape));
    return data[0];
}

Tensor Tape::leaf(const Tensor& value) {
    Tensor out = value;
    out.tape = this;
    out.node = record(out.size(), nullptr);
    return out;
}

int Tape::record(std::size_t out_size, PullFn pull) {
    nodes_.push_back(Node{out_size, std::move(pull)});
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int id, std::size_t size) {
    if (grads_[static_cast<std::size_t>(id)].empty()) {
        grads_[static_cast<std::size_t>(id)].assign(size, 0.0);
    }
    return grads_[static_cast<std::size_t>(id)];
}

void Tape::backward(const Tensor& out) {
    if (out.tape != this || out.node < 0) {
        throw std::logic_error("backward: output is not on this tape");
    }
    if (out.size() != 1) {
        throw DimensionError("backward: output must be scalar, shape " + shape_str(out.shape));
    }
    grads_.assign(nodes_.size(), {});
    grads_[static_cast<std::size_t>(out.node)] = {1.0};
    for (int i = out.node; i >= 0; --i) {
        auto& g = grads_[static_cast<std::size_t>(i)];
        if (g.empty()) continue;  // node did not contribute to out
        if (nodes_[static_cast<std::size_t>(i)].pull) {
            nodes_[static_cast<std::size_t>(i)].pull(g, *this);
        }
    }
}

std::vector<double> Tape::grad(const Tensor& t) const {
    if (t.tape != this || t.node < 0) {
        throw std::logic_error("grad: tensor is not on this tape");
    }
    const auto& g = grads_[static_cast<std::size_t>(t.node)];
    if (g.empty()) return std::vector<double>(t.size(), 0.0);
    return g;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape) + " and " +
                             shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                out.data[i * n + j] += av * b.data[p * n + j];
            }
        }
    }
    Tape* tp = common_tape(a, b);
    if (!tp) return out;
    int na = a.node, nb = b.node;
    std::vector<double> ad = a.data, bd = b.data;
    int id = tp->record(out.size(), [na, nb, ad, bd, m, k, n](const std::vector<double>& g, Tape& t) {
        if (na >= 0) {
            auto& ga = t.grad_buffer(na, m * k);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    if (gv == 0.0) continue;
                    for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gv * bd[p * n + j];
                }
        }
        if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, k * n);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = ad[i * k + p];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * g[i * n + j];
                }
        }
    });
    return bind(std::move(out), tp, id);
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape));
    const std::size_t m = a.shape[0], n = a.shape[1];
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = a.data[i * n + j];
    if (!a.tape) return out;
    int na = a.node;
    int id = a.tape->record(out.size(), [na, m, n](const std::vector<double>& g, Tape& t) {
        auto& ga = t.grad_buffer(na, m * n);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
    return bind(std::move(out), a.tape, id);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw DimensionError("add: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    Tensor out = a;
    out.tape = nullptr;
    out.node = -1;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    Tape* tp = common_tape(a, b);
    if (!tp) return out;
    int na = a.node, nb = b.node;
    std::size_t n = out.size();
    int id = tp->record(n, [na, nb, n](const std::vector<double>& g, Tape& t) {
        if (na >= 0) {
            auto& ga = t.grad_buffer(na, n);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
        }
        if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, n);
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
        }
    });
    return bind(std::move(out), tp, id);
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
    if (m.rank() != 2 || bias.rank() != 1 || bias.shape[0] != m.shape[1]) {
        throw DimensionError("add_bias: shapes " + shape_str(m.shape) + " and " + shape_str(bias.shape));
    }
    const std::size_t r = m.shape[0], c = m.shape[1];
    Tensor out = m;
    out.tape = nullptr;
    out.node = -1;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += bias.data[j];
    Tape* tp = common_tape(m, bias);
    if (!tp) return out;
    int nm = m.node, nb = bias.node;
    int id = tp->record(out.size(), [nm, nb, r, c](const std::vector<double>& g, Tape& t) {
        if (nm >= 0) {
            auto& gm = t.grad_buffer(nm, r * c);
            for (std::size_t i = 0; i < r * c; ++i) gm[i] += g[i];
        }
        if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, c);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
    });
    return bind(std::move(out), tp, id);
}

namespace {

// Shared skeleton for elementwise unary ops: out[i] = f(x[i]),
// d/dx[i] = df(x[i]) with df captured as per-element factors.
Tensor unary_op(const Tensor& a, std::vector<double> out_data, std::vector<double> dfactors) {
    Tensor out(a.shape, std::move(out_data));
    if (!a.tape) return out;
    int na = a.node;
    std::size_t n = out.size();
    int id = a.tape->record(n, [na, n, df = std::move(dfactors)](const std::vector<double>& g, Tape& t) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na, n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * df[i];
    });
    return bind(std::move(out), a.tape, id);
}

}  // namespace

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data[i] + c;
    return unary_op(a, std::move(out), std::vector<double>(a.size(), 1.0));
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a.data[i] * c;
    return unary_op(a, std::move(out), std::vector<double>(a.size(), c));
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size()), df(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = a.data[i] > 0.0 ? a.data[i] : 0.0;
        df[i] = a.data[i] > 0.0 ? 1.0 : 0.0;
    }
    return unary_op(a, std::move(out), std::move(df));
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.size()), df(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a.data[i] > 0.0)) {
            throw NumericError("log: non-positive input " + std::to_string(a.data[i]));
        }
        out[i] = std::log(a.data[i]);
        df[i] = 1.0 / a.data[i];
    }
    return unary_op(a, std::move(out), std::move(df));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    std::vector<double> out(a.size()), df(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double v = a.data[i];
        out[i] = std::min(std::max(v, lo), hi);
        df[i] = (v >= lo && v <= hi) ? 1.0 : 0.0;
    }
    return unary_op(a, std::move(out), std::move(df));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw DimensionError("mul: shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
    std::size_t n = a.size();
    Tensor out(a.shape, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) out.data[i] = a.data[i] * b.data[i];
    Tape* tp = common_tape(a, b);
    if (!tp) return out;
    int na = a.node, nb = b.node;
    std::vector<double> ad = a.data, bd = b.data;
    int id = tp->record(n, [na, nb, n, ad, bd](const std::vector<double>& g, Tape& t) {
        if (na >= 0) {
            auto& ga = t.grad_buffer(na, n);
            for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bd[i];
        }
        if (nb >= 0) {
            auto& gb = t.grad_buffer(nb, n);
            for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * ad[i];
        }
    });
    return bind(std::move(out), tp, id);
}

Tensor softmax(const Tensor& a) {
    check_finite(a, "softmax");
    auto [r, c] = row_view(a, "softmax");
    if (c == 0) throw DimensionError("softmax: empty input");
    Tensor out(a.shape, std::vector<double>(a.size()));
    for (std::size_t i = 0; i < r; ++i) {
        const double* x = &a.data[i * c];
        double* y = &out.data[i * c];
        double m = x[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            y[j] = std::exp(x[j] - m);
            s += y[j];
        }
        for (std::size_t j = 0; j < c; ++j) y[j] /= s;
    }
    if (!a.tape) return out;
    int na = a.node;
    std::vector<double> yv = out.data;
    std::size_t rr = r, cc = c;
    int id = a.tape->record(out.size(), [na, yv, rr, cc](const std::vector<double>& g, Tape& t) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na, rr * cc);
        for (std::size_t i = 0; i < rr; ++i) {
            const double* y = &yv[i * cc];
            const double* gr = &g[i * cc];
            double dot = 0.0;
            for (std::size_t j = 0; j < cc; ++j) dot += gr[j] * y[j];
            for (std::size_t j = 0; j < cc; ++j) ga[i * cc + j] += y[j] * (gr[j] - dot);
        }
    });
    return bind(std::move(out), a.tape, id);
}

Tensor l2_normalize(const Tensor& a) {
    auto [r, c] = row_view(a, "l2_normalize");
    Tensor out(a.shape, std::vector<double>(a.size()));
    std::vector<double> norms(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += a.data[i * c + j] * a.data[i * c + j];
        const double n = std::sqrt(s);
        if (!(n > kNormEpsilon)) {
            throw NumericError("l2_normalize: degenerate input, norm " + std::to_string(n) +
                               " at row " + std::to_string(i));
        }
        norms[i] = n;
        for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] = a.data[i * c + j] / n;
    }
    if (!a.tape) return out;
    int na = a.node;
    std::vector<double> yv = out.data;
    std::size_t rr = r, cc = c;
    int id = a.tape->record(out.size(),
                            [na, yv, norms, rr, cc](const std::vector<double>& g, Tape& t) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na, rr * cc);
        for (std::size_t i = 0; i < rr; ++i) {
            const double* y = &yv[i * cc];
            const double* gr = &g[i * cc];
            double dot = 0.0;
            for (std::size_t j = 0; j < cc; ++j) dot += gr[j] * y[j];
            for (std::size_t j = 0; j < cc; ++j) ga[i * cc + j] += (gr[j] - y[j] * dot) / norms[i];
        }
    });
    return bind(std::move(out), a.tape, id);
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data) s += v;
    Tensor out = Tensor::scalar(s);
    if (!a.tape) return out;
    int na = a.node;
    std::size_t n = a.size();
    int id = a.tape->record(1, [na, n](const std::vector<double>& g, Tape& t) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na, n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    });
    return bind(std::move(out), a.tape, id);
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    double s = 0.0;
    for (double v : a.data) s += v;
    Tensor out = Tensor::scalar(s / static_cast<double>(a.size()));
    if (!a.tape) return out;
    int na = a.node;
    std::size_t n = a.size();
    int id = a.tape->record(1, [na, n](const std::vector<double>& g, Tape& t) {
        if (na < 0) return;
        auto& ga = t.grad_buffer(na, n);
        const double gv = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) ga[i] += gv;
    });
    return bind(std::move(out), a.tape, id);
}

}  // namespace idmne
