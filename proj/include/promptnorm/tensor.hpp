#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "promptnorm/errors.hpp"

namespace promptnorm {

enum class NormKind { one, two, inf };

inline const char* to_string(NormKind p) {
    switch (p) {
        case NormKind::one: return "one";
        case NormKind::two: return "two";
        case NormKind::inf: return "inf";
    }
    return "?";
}

class Tape;

/// Dense row-major tensor of 64-bit floats. Values are immutable once
/// constructed; non-finite entries are rejected at construction. A tensor
/// optionally carries a handle onto the tape that recorded it.
class Tensor {
  public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate();
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (const std::size_t e : shape) {
            n *= e;
        }
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    const std::vector<double>& data() const { return data_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    double at(std::size_t flat_index) const { return data_.at(flat_index); }

    double scalar_value() const {
        if (size() != 1) {
            throw ContractError("scalar_value: tensor has " + std::to_string(size()) +
                                " elements");
        }
        return data_[0];
    }

    bool tracked() const { return tape_ != nullptr; }
    int node() const { return node_; }
    Tape* tape() const { return tape_; }

  private:
    friend class Tape;

    void validate() const {
        if (shape_.empty()) {
            throw ShapeError("tensor shape must have at least one extent");
        }
        std::size_t n = 1;
        for (const std::size_t e : shape_) {
            if (e == 0) {
                throw ShapeError("tensor extents must be positive");
            }
            n *= e;
        }
        if (n != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(n));
        }
        for (const double v : data_) {
            if (!std::isfinite(v)) {
                throw ValueError("tensor entries must be finite");
            }
        }
    }

    std::vector<std::size_t> shape_{};
    std::vector<double> data_{};
    Tape* tape_ = nullptr;
    int node_ = -1;
};

/// Per-node gradient buffers used during a reverse sweep. Buffers are
/// zero-initialized on first touch so unreached leaves read back as zero.
class GradAccum {
  public:
    explicit GradAccum(std::size_t node_count, const std::vector<std::size_t>& sizes)
        : bufs_(node_count), sizes_(sizes) {}

    std::vector<double>& grad(int node) {
        auto& buf = bufs_.at(static_cast<std::size_t>(node));
        if (buf.empty()) {
            buf.assign(sizes_[static_cast<std::size_t>(node)], 0.0);
        }
        return buf;
    }

    bool touched(int node) const {
        return !bufs_.at(static_cast<std::size_t>(node)).empty();
    }

  private:
    std::vector<std::vector<double>> bufs_;
    const std::vector<std::size_t>& sizes_;
};

/// Gradients of one backward sweep, keyed by leaf node.
class Gradients {
  public:
    const Tensor& at(const Tensor& leaf) const {
        if (!leaf.tracked()) {
            throw ContractError("gradient requested for an untracked tensor");
        }
        const auto it = by_node_.find(leaf.node());
        if (it == by_node_.end()) {
            throw ContractError("tensor is not a registered leaf of this tape");
        }
        return it->second;
    }

    bool contains(const Tensor& leaf) const {
        return leaf.tracked() && by_node_.count(leaf.node()) > 0;
    }

    std::size_t size() const { return by_node_.size(); }

  private:
    friend Gradients backward(const Tape& tape, const Tensor& root);
    std::map<int, Tensor> by_node_;
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so
/// parents always precede children; a backward sweep visits them in
/// reverse. One tape serves one training step and is not thread-safe.
class Tape {
  public:
    using BackFn = std::function<void(const std::vector<double>& grad_out, GradAccum& acc)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a value as a differentiable leaf.
    Tensor leaf(const Tensor& value) {
        Tensor out = emit(value.shape(), value.data(), nullptr);
        leaves_.push_back(out.node());
        return out;
    }

    Tensor leaf(std::vector<std::size_t> shape, std::vector<double> data) {
        return leaf(Tensor(std::move(shape), std::move(data)));
    }

    /// Records an op result together with its backward closure.
    Tensor emit(std::vector<std::size_t> shape, std::vector<double> data, BackFn back) {
        Tensor out(std::move(shape), std::move(data));
        Node node;
        node.size = out.size();
        node.shape = out.shape();
        node.back = std::move(back);
        nodes_.push_back(std::move(node));
        out.tape_ = this;
        out.node_ = static_cast<int>(nodes_.size()) - 1;
        return out;
    }

    void reset() {
        nodes_.clear();
        leaves_.clear();
    }

    std::size_t size() const { return nodes_.size(); }
    const std::vector<int>& leaf_nodes() const { return leaves_; }

  private:
    struct Node {
        std::size_t size = 0;
        std::vector<std::size_t> shape;
        BackFn back;
    };

    friend Gradients backward(const Tape& tape, const Tensor& root);

    std::vector<Node> nodes_;
    std::vector<int> leaves_;
};

/// Reverse sweep from a scalar root. Returns one gradient tensor per
/// registered leaf; leaves the root never reached get zeros. The sweep
/// does not mutate the tape, so repeated calls replay identically.
inline Gradients backward(const Tape& tape, const Tensor& root) {
    if (!root.tracked() || root.tape() != &tape) {
        throw ContractError("backward root is not recorded on this tape");
    }
    if (root.size() != 1) {
        throw ContractError("backward root must be scalar");
    }

    std::vector<std::size_t> sizes(tape.nodes_.size());
    for (std::size_t i = 0; i < tape.nodes_.size(); ++i) {
        sizes[i] = tape.nodes_[i].size;
    }
    GradAccum acc(tape.nodes_.size(), sizes);
    acc.grad(root.node())[0] = 1.0;

    for (int id = root.node(); id >= 0; --id) {
        if (!acc.touched(id)) {
            continue;
        }
        const auto& node = tape.nodes_[static_cast<std::size_t>(id)];
        if (node.back) {
            node.back(acc.grad(id), acc);
        }
    }

    Gradients grads;
    for (const int leaf : tape.leaf_nodes()) {
        const auto& node = tape.nodes_[static_cast<std::size_t>(leaf)];
        std::vector<double> g = acc.touched(leaf) ? acc.grad(leaf)
                                                  : std::vector<double>(node.size, 0.0);
        grads.by_node_.emplace(leaf, Tensor(node.shape, std::move(g)));
    }
    return grads;
}

namespace detail {

inline Tape* merge_tape(const Tensor& a, const Tensor& b) {
    if (a.tracked() && b.tracked() && a.tape() != b.tape()) {
        throw ContractError("operands were recorded on different tapes");
    }
    return a.tracked() ? a.tape() : b.tape();
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": operand shapes differ");
    }
}

inline double pnorm_value(const std::vector<double>& v, NormKind p) {
    switch (p) {
        case NormKind::one: {
            double s = 0.0;
            for (const double x : v) {
                s += std::abs(x);
            }
            return s;
        }
        case NormKind::two: {
            double s = 0.0;
            for (const double x : v) {
                s += x * x;
            }
            return std::sqrt(s);
        }
        case NormKind::inf: {
            double m = 0.0;
            for (const double x : v) {
                m = std::max(m, std::abs(x));
            }
            return m;
        }
    }
    throw ContractError("unknown norm kind");
}

}  // namespace detail

// ---------------------------------------------------------------------
// Primitive operations. Each computes its value eagerly and, when an
// input is tracked, records a closure that pushes the output gradient
// back onto the tracked parents.
// ---------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.at(i) + b.at(i);
    }
    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    return tape->emit(a.shape(), std::move(out), [pa, pb](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i];
            }
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.at(i) - b.at(i);
    }
    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    return tape->emit(a.shape(), std::move(out), [pa, pb](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] -= g[i];
            }
        }
    });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.at(i) * b.at(i);
    }
    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    const std::vector<double> av = a.data();
    const std::vector<double> bv = b.data();
    return tape->emit(a.shape(), std::move(out),
                      [pa, pb, av, bv](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * bv[i];
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] += g[i] * av[i];
            }
        }
    });
}

/// Elementwise quotient.
inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.at(i) / b.at(i);
    }
    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    const std::vector<double> av = a.data();
    const std::vector<double> bv = b.data();
    return tape->emit(a.shape(), std::move(out),
                      [pa, pb, av, bv](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] / bv[i];
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
            }
        }
    });
}

/// Multiplication by a scalar constant (the constant is not differentiated).
inline Tensor scale(const Tensor& a, double s) {
    if (!std::isfinite(s)) {
        throw ValueError("scale factor must be finite");
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.at(i) * s;
    }
    if (!a.tracked()) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.node();
    return a.tape()->emit(a.shape(), std::move(out),
                          [pa, s](const std::vector<double>& g, GradAccum& acc) {
        auto& ga = acc.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * s;
        }
    });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

/// Matrix product. Accepts [m x k] x [k x n] -> [m x n] and the
/// matrix-vector case [m x k] x [k] -> [m].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2) {
        throw ShapeError("matmul: left operand must be rank 2");
    }
    const bool vec = b.rank() == 1;
    if (!vec && b.rank() != 2) {
        throw ShapeError("matmul: right operand must be rank 1 or 2");
    }
    const std::size_t m = a.shape()[0];
    const std::size_t k = a.shape()[1];
    const std::size_t bk = b.shape()[0];
    const std::size_t n = vec ? 1 : b.shape()[1];
    if (k != bk) {
        throw ShapeError("matmul: inner extents disagree (" + std::to_string(k) + " vs " +
                         std::to_string(bk) + ")");
    }

    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a.at(i * k + kk);
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += av * b.at(kk * n + j);
            }
        }
    }
    const std::vector<std::size_t> out_shape = vec ? std::vector<std::size_t>{m}
                                                   : std::vector<std::size_t>{m, n};

    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor(out_shape, std::move(out));
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    const std::vector<double> av = a.data();
    const std::vector<double> bv = b.data();
    return tape->emit(out_shape, std::move(out),
                      [pa, pb, av, bv, m, k, n](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        s += g[i * n + j] * bv[kk * n + j];
                    }
                    ga[i * k + kk] += s;
                }
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t kk = 0; kk < k; ++kk) {
                for (std::size_t j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        s += av[i * k + kk] * g[i * n + j];
                    }
                    gb[kk * n + j] += s;
                }
            }
        }
    });
}

inline Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::tanh(a.at(i));
    }
    if (!a.tracked()) {
        return Tensor(a.shape(), std::move(out));
    }
    const int pa = a.node();
    const std::vector<double> y = out;
    return a.tape()->emit(a.shape(), std::move(out),
                          [pa, y](const std::vector<double>& g, GradAccum& acc) {
        auto& ga = acc.grad(pa);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
    });
}

/// Sum of all entries -> scalar.
inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a.at(i);
    }
    if (!a.tracked()) {
        return Tensor::scalar(s);
    }
    const int pa = a.node();
    const std::size_t n = a.size();
    return a.tape()->emit({1}, {s}, [pa, n](const std::vector<double>& g, GradAccum& acc) {
        auto& ga = acc.grad(pa);
        for (std::size_t i = 0; i < n; ++i) {
            ga[i] += g[0];
        }
    });
}

/// Inner product of two equal-length rank-1 tensors -> scalar.
inline Tensor dot(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) {
        throw ShapeError("dot: operands must be rank 1");
    }
    detail::check_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a.at(i) * b.at(i);
    }
    Tape* tape = detail::merge_tape(a, b);
    if (tape == nullptr) {
        return Tensor::scalar(s);
    }
    const int pa = a.tracked() ? a.node() : -1;
    const int pb = b.tracked() ? b.node() : -1;
    const std::vector<double> av = a.data();
    const std::vector<double> bv = b.data();
    return tape->emit({1}, {s}, [pa, pb, av, bv](const std::vector<double>& g, GradAccum& acc) {
        if (pa >= 0) {
            auto& ga = acc.grad(pa);
            for (std::size_t i = 0; i < av.size(); ++i) {
                ga[i] += g[0] * bv[i];
            }
        }
        if (pb >= 0) {
            auto& gb = acc.grad(pb);
            for (std::size_t i = 0; i < bv.size(); ++i) {
                gb[i] += g[0] * av[i];
            }
        }
    });
}

/// Selects entry i of a rank-1 tensor -> scalar.
inline Tensor pick(const Tensor& v, std::size_t i) {
    if (v.rank() != 1) {
        throw ShapeError("pick: operand must be rank 1");
    }
    if (i >= v.size()) {
        throw ContractError("pick: index " + std::to_string(i) + " out of range");
    }
    if (!v.tracked()) {
        return Tensor::scalar(v.at(i));
    }
    const int pv = v.node();
    return v.tape()->emit({1}, {v.at(i)}, [pv, i](const std::vector<double>& g, GradAccum& acc) {
        acc.grad(pv)[i] += g[0];
    });
}

/// Stacks scalar tensors into a rank-1 tensor.
inline Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw ShapeError("stack: needs at least one part");
    }
    std::vector<double> out;
    out.reserve(parts.size());
    Tape* tape = nullptr;
    std::vector<int> parents;
    parents.reserve(parts.size());
    for (const Tensor& p : parts) {
        if (p.size() != 1) {
            throw ShapeError("stack: every part must be scalar");
        }
        out.push_back(p.at(0));
        if (p.tracked()) {
            if (tape != nullptr && p.tape() != tape) {
                throw ContractError("stack parts were recorded on different tapes");
            }
            tape = p.tape();
            parents.push_back(p.node());
        } else {
            parents.push_back(-1);
        }
    }
    if (tape == nullptr) {
        return Tensor({parts.size()}, std::move(out));
    }
    return tape->emit({parts.size()}, std::move(out),
                      [parents](const std::vector<double>& g, GradAccum& acc) {
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (parents[i] >= 0) {
                acc.grad(parents[i])[0] += g[i];
            }
        }
    });
}

/// p-norm of a rank-1 tensor -> scalar.
///
/// Subgradient conventions at the kinks: the L2 gradient at the origin is
/// zero, the L1 gradient uses sign(0) = 0, and the Linf gradient splits
/// equally among tied maximal coordinates.
inline Tensor vector_pnorm(const Tensor& v, NormKind p) {
    if (v.rank() != 1) {
        throw ShapeError("vector_pnorm: operand must be rank 1");
    }
    const double value = detail::pnorm_value(v.data(), p);
    if (!v.tracked()) {
        return Tensor::scalar(value);
    }
    const int pv = v.node();
    const std::vector<double> data = v.data();
    return v.tape()->emit({1}, {value},
                          [pv, data, p, value](const std::vector<double>& g, GradAccum& acc) {
        auto& gv = acc.grad(pv);
        switch (p) {
            case NormKind::one:
                for (std::size_t i = 0; i < data.size(); ++i) {
                    const double s = data[i] > 0.0 ? 1.0 : (data[i] < 0.0 ? -1.0 : 0.0);
                    gv[i] += g[0] * s;
                }
                break;
            case NormKind::two:
                if (value > 0.0) {
                    for (std::size_t i = 0; i < data.size(); ++i) {
                        gv[i] += g[0] * data[i] / value;
                    }
                }
                break;
            case NormKind::inf: {
                if (value > 0.0) {
                    std::size_t ties = 0;
                    for (const double x : data) {
                        if (std::abs(x) == value) {
                            ++ties;
                        }
                    }
                    for (std::size_t i = 0; i < data.size(); ++i) {
                        if (std::abs(data[i]) == value) {
                            const double s = data[i] > 0.0 ? 1.0 : -1.0;
                            gv[i] += g[0] * s / static_cast<double>(ties);
                        }
                    }
                }
                break;
            }
        }
    });
}

/// Cosine similarity of two nonzero rank-1 tensors, composed from
/// differentiable primitives.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) {
        throw ShapeError("cosine_similarity: operands must be rank 1");
    }
    detail::check_same_shape(a, b, "cosine_similarity");
    if (detail::pnorm_value(a.data(), NormKind::two) == 0.0 ||
        detail::pnorm_value(b.data(), NormKind::two) == 0.0) {
        throw DegenerateInputError("cosine_similarity: zero-norm input");
    }
    return div(dot(a, b), mul(vector_pnorm(a, NormKind::two), vector_pnorm(b, NormKind::two)));
}

/// Numerically stable softmax over a rank-1 tensor.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) {
        throw ShapeError("softmax: operand must be rank 1");
    }
    const auto& x = logits.data();
    const double m = *std::max_element(x.begin(), x.end());
    std::vector<double> out(x.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - m);
        denom += out[i];
    }
    for (double& v : out) {
        v /= denom;
    }
    if (!logits.tracked()) {
        return Tensor(logits.shape(), std::move(out));
    }
    const int px = logits.node();
    const std::vector<double> y = out;
    return logits.tape()->emit(logits.shape(), std::move(out),
                               [px, y](const std::vector<double>& g, GradAccum& acc) {
        double gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            gy += g[i] * y[i];
        }
        auto& gx = acc.grad(px);
        for (std::size_t i = 0; i < y.size(); ++i) {
            gx[i] += y[i] * (g[i] - gy);
        }
    });
}

/// Fused log-softmax; avoids the cancellation of log(softmax(x)).
inline Tensor log_softmax(const Tensor& logits) {
    if (logits.rank() != 1) {
        throw ShapeError("log_softmax: operand must be rank 1");
    }
    const auto& x = logits.data();
    const double m = *std::max_element(x.begin(), x.end());
    double denom = 0.0;
    for (const double v : x) {
        denom += std::exp(v - m);
    }
    const double lse = m + std::log(denom);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = x[i] - lse;
    }
    if (!logits.tracked()) {
        return Tensor(logits.shape(), std::move(out));
    }
    const int px = logits.node();
    std::vector<double> soft(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        soft[i] = std::exp(out[i]);
    }
    return logits.tape()->emit(logits.shape(), std::move(out),
                               [px, soft](const std::vector<double>& g, GradAccum& acc) {
        double gsum = 0.0;
        for (const double v : g) {
            gsum += v;
        }
        auto& gx = acc.grad(px);
        for (std::size_t i = 0; i < soft.size(); ++i) {
            gx[i] += g[i] - soft[i] * gsum;
        }
    });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }

}  // namespace promptnorm
