#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "promptnorm/errors.hpp"
#include "promptnorm/rng.hpp"
#include "promptnorm/tensor.hpp"

namespace promptnorm {

/// A learnable soft prompt: L rows of dimension D. Rows are plain values;
/// training code registers them on a tape when gradients are needed.
/// Positions are 1-based everywhere in this interface.
class SoftPrompt {
  public:
    SoftPrompt(std::vector<std::vector<double>> rows, bool trainable = true)
        : rows_(std::move(rows)), trainable_(trainable) {
        if (rows_.empty()) {
            throw ShapeError("soft prompt needs at least one row");
        }
        const std::size_t d = rows_.front().size();
        if (d == 0) {
            throw ShapeError("soft prompt rows must be non-empty");
        }
        for (const auto& row : rows_) {
            if (row.size() != d) {
                throw ShapeError("soft prompt rows must share one dimension");
            }
            for (const double v : row) {
                if (!std::isfinite(v)) {
                    throw ValueError("soft prompt entries must be finite");
                }
            }
        }
    }

    /// Gaussian initialization, std `init_std`, keyed by `rng`.
    static SoftPrompt random(std::size_t length, std::size_t dim, double init_std,
                             SplitRng rng) {
        std::vector<std::vector<double>> rows(length, std::vector<double>(dim));
        for (std::size_t j = 0; j < length; ++j) {
            SplitRng row_rng = rng.fork(j + 1);
            for (double& v : rows[j]) {
                v = row_rng.normal(0.0, init_std);
            }
        }
        return SoftPrompt(std::move(rows));
    }

    std::size_t length() const { return rows_.size(); }
    std::size_t dim() const { return rows_.front().size(); }
    bool trainable() const { return trainable_; }

    const std::vector<double>& row(std::size_t position) const {
        check_position(position);
        return rows_[position - 1];
    }

    void set_row(std::size_t position, std::vector<double> values) {
        check_position(position);
        if (values.size() != dim()) {
            throw ShapeError("row dimension mismatch");
        }
        for (const double v : values) {
            if (!std::isfinite(v)) {
                throw ValueError("soft prompt entries must be finite");
            }
        }
        rows_[position - 1] = std::move(values);
    }

    const std::vector<std::vector<double>>& rows() const { return rows_; }

    bool operator==(const SoftPrompt& other) const {
        return rows_ == other.rows_ && trainable_ == other.trainable_;
    }

    void check_position(std::size_t position) const {
        if (position < 1 || position > rows_.size()) {
            throw PositionError("position " + std::to_string(position) +
                                " outside [1, " + std::to_string(rows_.size()) + "]");
        }
    }

  private:
    std::vector<std::vector<double>> rows_;
    bool trainable_ = true;
};

/// Registers every prompt row as a leaf on `tape`, in position order.
/// Element j-1 of the result tracks row j.
inline std::vector<Tensor> track_rows(Tape& tape, const SoftPrompt& prompt) {
    std::vector<Tensor> rows;
    rows.reserve(prompt.length());
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        rows.push_back(tape.leaf({prompt.dim()}, prompt.row(j)));
    }
    return rows;
}

// ---------------------------------------------------------------------
// Corruption operations. Both are pure: the input prompt is copied and
// only the target row of the copy changes.
// ---------------------------------------------------------------------

struct ReplaceKind {
    double mean = 0.0;
    double stddev = 0.0;
};

struct RescaleKind {
    double factor = 1.0;
};

struct CorruptionSpec {
    std::variant<ReplaceKind, RescaleKind> kind;
    std::size_t position = 1;
};

/// Multiplies row j by s, leaving every other row bitwise untouched.
inline SoftPrompt rescale(const SoftPrompt& prompt, std::size_t j, double s) {
    prompt.check_position(j);
    if (!std::isfinite(s)) {
        throw ValueError("rescale factor must be finite");
    }
    std::vector<std::vector<double>> rows = prompt.rows();
    for (double& v : rows[j - 1]) {
        v *= s;
    }
    return SoftPrompt(std::move(rows), prompt.trainable());
}

/// Replaces row j with an i.i.d. Gaussian draw N(mean, stddev^2) keyed by
/// `rng`; every other row stays bitwise untouched.
inline SoftPrompt replace(const SoftPrompt& prompt, std::size_t j, double mean, double stddev,
                          SplitRng rng) {
    prompt.check_position(j);
    if (stddev < 0.0 || !std::isfinite(stddev) || !std::isfinite(mean)) {
        throw ValueError("replace parameters must be finite with stddev >= 0");
    }
    std::vector<std::vector<double>> rows = prompt.rows();
    for (double& v : rows[j - 1]) {
        v = stddev == 0.0 ? mean : rng.normal(mean, stddev);
    }
    return SoftPrompt(std::move(rows), prompt.trainable());
}

inline SoftPrompt apply_corruption(const SoftPrompt& prompt, const CorruptionSpec& spec,
                                   SplitRng rng) {
    if (const auto* r = std::get_if<ReplaceKind>(&spec.kind)) {
        return replace(prompt, spec.position, r->mean, r->stddev, rng);
    }
    return rescale(prompt, spec.position, std::get<RescaleKind>(spec.kind).factor);
}

/// The original prompt plus N single-position rescaled variants, used for
/// the gradient-free pre-inference pass that elects positions for the
/// adaptive norm penalty.
struct HybridPromptSet {
    SoftPrompt original;
    std::vector<SoftPrompt> variants;
    std::vector<std::size_t> positions;  // 1-based, pairwise distinct
    double factor = 0.5;
};

/// Samples N distinct positions uniformly and rescales each by tau.
/// Variant n differs from the original only in row positions[n].
inline HybridPromptSet build_hybrid_set(const SoftPrompt& prompt, std::size_t n, double tau,
                                        SplitRng rng) {
    if (n < 1 || n > prompt.length()) {
        throw ContractError("hybrid set size must satisfy 1 <= N <= L");
    }
    if (!(tau > 0.0 && tau < 1.0)) {
        throw ValueError("hybrid rescale factor must lie in (0, 1)");
    }
    HybridPromptSet set{prompt, {}, rng.sample_distinct(prompt.length(), n), tau};
    set.variants.reserve(n);
    for (const std::size_t pos : set.positions) {
        set.variants.push_back(rescale(prompt, pos, tau));
    }
    return set;
}

struct PromptNorms {
    std::vector<double> per_position;  // index j-1 holds row j
    double mean = 0.0;
};

/// Per-position p-norms and their mean.
inline PromptNorms prompt_norms(const SoftPrompt& prompt, NormKind p) {
    PromptNorms out;
    out.per_position.reserve(prompt.length());
    double sum = 0.0;
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        const double n = detail::pnorm_value(prompt.row(j), p);
        out.per_position.push_back(n);
        sum += n;
    }
    out.mean = sum / static_cast<double>(prompt.length());
    return out;
}

}  // namespace promptnorm
