#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "idmne/errors.hpp"

namespace idmne {

class Tape;

// Dense double-precision tensor. Rank 0 (scalar), 1 and 2 are the only ranks
// the model needs. A tensor is either a plain value (tape == nullptr) or a
// node on exactly one tape; the tape must outlive every tensor bound to it.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shp, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shp);
    static Tensor scalar(double v);
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double value() const;  // scalar tensors only

    bool on_tape() const { return tape != nullptr; }
};

// Append-only record of the operations of one forward pass (define-by-run,
// rebuilt per training step). backward() replays the record in exact reverse
// execution order; gradients reaching a node twice accumulate by summation.
// Single-threaded per tape.
class Tape {
public:
    using PullFn = std::function<void(const std::vector<double>& upstream, Tape& tape)>;

    // Registers a copy of `value` as a differentiable leaf.
    Tensor leaf(const Tensor& value);

    // Used by op implementations: append a node, return its id.
    int record(std::size_t out_size, PullFn pull);

    // Seeds d(out)/d(out) = 1 and propagates to all reachable nodes.
    // `out` must be a scalar on this tape.
    void backward(const Tensor& out);

    // Gradient of the last backward() w.r.t. `t` (zeros if unreached).
    std::vector<double> grad(const Tensor& t) const;

    // Accumulation buffer for node `id`, zero-initialized on first access.
    std::vector<double>& grad_buffer(int id, std::size_t size);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::size_t size = 0;
        PullFn pull;  // empty for leaves
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Operator set. Each op computes the same values with or without a tape
// (bit-identical); when any operand is on a tape the result is recorded
// there. Mixing operands from two different tapes is an error.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& m, const Tensor& bias);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor softmax(const Tensor& a);       // 1-D, or row-wise on 2-D
Tensor l2_normalize(const Tensor& a);  // 1-D, or row-wise on 2-D
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Norm floor below which l2_normalize reports a degenerate input.
inline constexpr double kNormEpsilon = 1e-12;

}  // namespace idmne
