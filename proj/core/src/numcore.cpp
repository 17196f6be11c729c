#include "gnnsl/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gnnsl::num {

namespace {

thread_local std::vector<NodePtr> g_tape;
thread_local bool g_recording = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

[[noreturn]] void dim_error(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
}

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> value,
                   std::vector<NodePtr> parents,
                   std::function<void(TensorNode&)> backward) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    if (rg && Tape::recording()) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(backward);
        Tape::record(n);
    }
    return Tensor(n);
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("Tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
    }
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor({}, {v}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
    std::size_t n = data.size();
    return Tensor({n}, std::move(data), requires_grad);
}

const std::vector<std::size_t>& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->numel(); }
const std::vector<double>& Tensor::value() const { return node_->value; }
std::vector<double>& Tensor::mutable_value() { return node_->value; }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) {
        throw DimensionError("item: tensor has " + std::to_string(numel()) + " elements");
    }
    return node_->value[0];
}

bool Tape::recording() { return g_recording; }
void Tape::record(NodePtr n) { g_tape.push_back(std::move(n)); }
std::size_t Tape::size() { return g_tape.size(); }
void Tape::clear() { g_tape.clear(); }

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ArgumentError("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = g_tape.rbegin(); it != g_tape.rend(); ++it) {
        TensorNode& n = **it;
        if (!n.backward) continue;
        if (n.grad.empty()) continue;  // not reachable from the loss
        for (const auto& p : n.parents) {
            if (p->requires_grad) p->ensure_grad();
        }
        n.backward(n);
    }
    // Detach interior nodes so the graph can be freed.
    for (auto& n : g_tape) {
        n->backward = nullptr;
        n->parents.clear();
    }
    g_tape.clear();
}

void backward(const Tensor& loss) { Tape::backward(loss); }

NoGrad::NoGrad() : prev_(g_recording) { g_recording = false; }
NoGrad::~NoGrad() { g_recording = prev_; }

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    // Rank-1 operands are treated as 1xK (left) and Kx1 (right).
    if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0) dim_error("matmul", a, b);
    std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
    std::size_t k = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
    std::size_t k2 = b.rank() == 2 ? b.shape()[0] : b.shape()[0];
    std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
    if (k != k2) dim_error("matmul", a, b);

    std::vector<double> out(m * n, 0.0);
    const auto& av = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            double av_il = av[i * k + l];
            if (av_il == 0.0) continue;
            const double* brow = bv.data() + l * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av_il * brow[j];
        }
    }
    std::vector<std::size_t> shape;
    if (a.rank() == 2 && b.rank() == 2) shape = {m, n};
    else if (a.rank() == 1 && b.rank() == 2) shape = {n};
    else if (a.rank() == 2 && b.rank() == 1) shape = {m};
    // rank1 x rank1 -> scalar, shape stays empty

    auto an = a.node();
    auto bn = b.node();
    return make_result(std::move(shape), std::move(out), {an, bn},
                       [an, bn, m, k, n](TensorNode& node) {
                           const auto& g = node.grad;
                           if (an->requires_grad) {
                               // dA = dC * B^T
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t l = 0; l < k; ++l) {
                                       double acc = 0.0;
                                       for (std::size_t j = 0; j < n; ++j)
                                           acc += g[i * n + j] * bn->value[l * n + j];
                                       an->grad[i * k + l] += acc;
                                   }
                           }
                           if (bn->requires_grad) {
                               // dB = A^T * dC
                               for (std::size_t l = 0; l < k; ++l)
                                   for (std::size_t j = 0; j < n; ++j) {
                                       double acc = 0.0;
                                       for (std::size_t i = 0; i < m; ++i)
                                           acc += an->value[i * k + l] * g[i * n + j];
                                       bn->grad[l * n + j] += acc;
                                   }
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) dim_error("add", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += node.grad[i];
            if (bn->requires_grad) bn->grad[i] += node.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) dim_error("sub", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += node.grad[i];
            if (bn->requires_grad) bn->grad[i] -= node.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) dim_error("mul", a, b);
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    auto an = a.node();
    auto bn = b.node();
    return make_result(a.shape(), std::move(out), {an, bn}, [an, bn](TensorNode& node) {
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += node.grad[i] * bn->value[i];
            if (bn->requires_grad) bn->grad[i] += node.grad[i] * an->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an, c](TensorNode& node) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < node.grad.size(); ++i) an->grad[i] += node.grad[i] * c;
    });
}

Tensor smul(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) dim_error("smul", a, s);
    double c = s.value()[0];
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
    auto an = a.node();
    auto sn = s.node();
    return make_result(a.shape(), std::move(out), {an, sn}, [an, sn](TensorNode& node) {
        double c = sn->value[0];
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (an->requires_grad) an->grad[i] += node.grad[i] * c;
            if (sn->requires_grad) sn->grad[0] += node.grad[i] * an->value[i];
        }
    });
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ArgumentError("concat: no inputs");
    std::vector<double> out;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        if (p.rank() > 1) throw DimensionError("concat: expects rank <= 1 parts");
        out.insert(out.end(), p.value().begin(), p.value().end());
        parents.push_back(p.node());
    }
    std::size_t total = out.size();
    auto ps = parents;  // captured copy
    return make_result({total}, std::move(out), std::move(parents), [ps](TensorNode& node) {
        std::size_t off = 0;
        for (const auto& p : ps) {
            if (p->requires_grad) {
                for (std::size_t i = 0; i < p->numel(); ++i) p->grad[i] += node.grad[off + i];
            }
            off += p->numel();
        }
    });
}

Tensor slice(const Tensor& a, std::size_t offset, std::size_t len) {
    if (offset + len > a.numel()) {
        throw DimensionError("slice: range [" + std::to_string(offset) + "," +
                             std::to_string(offset + len) + ") exceeds " +
                             std::to_string(a.numel()) + " elements");
    }
    std::vector<double> out(a.value().begin() + long(offset),
                            a.value().begin() + long(offset + len));
    auto an = a.node();
    return make_result({len}, std::move(out), {an}, [an, offset](TensorNode& node) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < node.grad.size(); ++i) an->grad[offset + i] += node.grad[i];
    });
}

Tensor row(const Tensor& a, std::size_t i) {
    if (a.rank() != 2) throw DimensionError("row: expects a rank-2 tensor");
    std::size_t cols = a.shape()[1];
    return slice(a, i * cols, cols);
}

Tensor pick(const Tensor& a, std::size_t i) {
    if (i >= a.numel()) {
        throw DimensionError("pick: index " + std::to_string(i) + " out of " +
                             std::to_string(a.numel()));
    }
    std::vector<double> out{a.value()[i]};
    auto an = a.node();
    return make_result({}, std::move(out), {an}, [an, i](TensorNode& node) {
        if (an->requires_grad) an->grad[i] += node.grad[0];
    });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be rank 2");
    std::size_t rows = table.shape()[0];
    std::size_t d = table.shape()[1];
    std::vector<double> out;
    out.reserve(ids.size() * d);
    for (int id : ids) {
        if (id < 0 || std::size_t(id) >= rows) {
            throw DimensionError("embedding_lookup: id " + std::to_string(id) + " out of " +
                                 std::to_string(rows) + " rows");
        }
        const double* src = table.value().data() + std::size_t(id) * d;
        out.insert(out.end(), src, src + d);
    }
    auto tn = table.node();
    auto ids_copy = ids;
    return make_result({ids.size(), d}, std::move(out), {tn},
                       [tn, ids_copy, d](TensorNode& node) {
                           if (!tn->requires_grad) return;
                           for (std::size_t r = 0; r < ids_copy.size(); ++r) {
                               double* dst = tn->grad.data() + std::size_t(ids_copy[r]) * d;
                               const double* src = node.grad.data() + r * d;
                               for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                           }
                       });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.value()[i]);
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& node) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            if (an->value[i] > 0.0) an->grad[i] += node.grad[i];
        }
    });
}

Tensor tanh_t(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& node) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            an->grad[i] += node.grad[i] * (1.0 - node.value[i] * node.value[i]);
        }
    });
}

Tensor log_t(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.value()[i]);
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& node) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            an->grad[i] += node.grad[i] / an->value[i];
        }
    });
}

Tensor softmax(const Tensor& a) {
    if (a.rank() != 1) throw DimensionError("softmax: expects a rank-1 tensor");
    std::vector<double> out(a.numel());
    double mx = *std::max_element(a.value().begin(), a.value().end());
    double z = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(a.value()[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    auto an = a.node();
    return make_result(a.shape(), std::move(out), {an}, [an](TensorNode& node) {
        if (!an->requires_grad) return;
        double dot = 0.0;
        for (std::size_t i = 0; i < node.grad.size(); ++i) dot += node.grad[i] * node.value[i];
        for (std::size_t i = 0; i < node.grad.size(); ++i) {
            an->grad[i] += node.value[i] * (node.grad[i] - dot);
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.value().begin(), a.value().end(), 0.0);
    auto an = a.node();
    return make_result({}, {s}, {an}, [an](TensorNode& node) {
        if (!an->requires_grad) return;
        for (auto& g : an->grad) g += node.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ArgumentError("mean: empty tensor");
    double s = std::accumulate(a.value().begin(), a.value().end(), 0.0) / double(a.numel());
    auto an = a.node();
    double inv = 1.0 / double(a.numel());
    return make_result({}, {s}, {an}, [an, inv](TensorNode& node) {
        if (!an->requires_grad) return;
        for (auto& g : an->grad) g += node.grad[0] * inv;
    });
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double step, double tol) {
    if (!(step > 0.0)) throw ArgumentError("grad_check: step must be positive");

    // Analytic gradient.
    Tensor xv(x.shape(), x.value(), true);
    Tensor y = f(xv);
    if (y.numel() != 1) throw ArgumentError("grad_check: f must be scalar-valued");
    Tape::backward(y);
    std::vector<double> analytic = xv.grad();

    GradCheckReport rep;
    NoGrad ng;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        auto probe = [&](double delta) {
            std::vector<double> vals = x.value();
            vals[i] += delta;
            return f(Tensor(x.shape(), std::move(vals))).item();
        };
        double numeric = (probe(step) - probe(-step)) / (2.0 * step);
        double a = analytic[i];
        if (!std::isfinite(a) || !std::isfinite(numeric)) {
            throw NumericError("grad_check: non-finite gradient at coordinate " +
                               std::to_string(i));
        }
        double diff = std::abs(a - numeric);
        double rel = diff < 1e-6 ? 0.0 : diff / std::max(std::abs(a), std::abs(numeric));
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.checked;
    }
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace gnnsl::num
