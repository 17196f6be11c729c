#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "gnnsl/errors.hpp"

namespace gnnsl::num {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

/// Dense row-major tensor handle. Copies share the underlying node, so a
/// Tensor behaves like a reference to one value in the computation graph.
/// Scalars have rank 0 (empty shape, one element).
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data,
           bool requires_grad = false);

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor vector(std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t numel() const;
    std::size_t rank() const { return shape().size(); }
    const std::vector<double>& value() const;
    std::vector<double>& mutable_value();
    bool requires_grad() const;
    /// Gradient accumulator, sized on first access.
    std::vector<double>& grad() const;
    void zero_grad();
    /// Value of a one-element tensor.
    double item() const;

    NodePtr node() const { return node_; }
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

private:
    NodePtr node_;
};

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backward;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

/// Thread-local record of executed primitives, in execution order.
class Tape {
public:
    static bool recording();
    static void record(NodePtr n);
    static std::size_t size();
    static void clear();
    /// Reverse sweep from a scalar loss; populates grads of requires_grad
    /// leaves and clears the tape.
    static void backward(const Tensor& loss);
};

/// Disables tape recording in the enclosing scope.
struct NoGrad {
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;

private:
    bool prev_;
};

// Primitives. Shape mismatches throw DimensionError naming the op.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor smul(const Tensor& a, const Tensor& s);  // a * scalar tensor s
Tensor concat(const std::vector<Tensor>& parts);  // 1-D
Tensor slice(const Tensor& a, std::size_t offset, std::size_t len);  // flat, contiguous
Tensor row(const Tensor& a, std::size_t i);  // row of a rank-2 tensor
Tensor pick(const Tensor& a, std::size_t i);  // element as scalar
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);
Tensor relu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor softmax(const Tensor& a);  // 1-D
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

void backward(const Tensor& loss);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    bool pass = false;
};

/// Central finite differences against the tape gradient, coordinate by
/// coordinate. |a-n| below 1e-6 counts as exact to keep zero-gradient
/// coordinates out of the relative-error denominator.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol);

}  // namespace gnnsl::num
