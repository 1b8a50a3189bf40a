#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "promptnorm/encoders.hpp"
#include "promptnorm/errors.hpp"
#include "promptnorm/prompt.hpp"
#include "promptnorm/tensor.hpp"

namespace promptnorm {

struct CEConfig {
    double temperature = 0.07;
};

struct PUNConfig {
    double omega = 1.0;
    NormKind norm = NormKind::two;
};

struct PANConfig {
    double omega = 1.0;
    double tau = 0.5;
    std::size_t positions = 1;
    NormKind norm = NormKind::two;
};

/// Logistic attenuation of the penalty weight over training.
struct OmegaSchedule {
    bool enabled = false;
    double k = 0.2;
    std::size_t max_epochs = 0;
};

/// Per-position penalty weights elected by the pre-inference pass. Entry i
/// pairs positions[i] with alphas[i]; every alpha is either 0 or omega.
struct AlphaVector {
    std::vector<std::size_t> positions;  // 1-based
    std::vector<double> alphas;
    std::size_t nonzero_count = 0;
};

/// Argmax predictions for the original prompt (row 0) and each corrupted
/// variant (row n tracks positions[n-1]); labels are 1-based.
struct PredictionMatrix {
    std::vector<std::vector<std::size_t>> rows;
    std::vector<std::size_t> positions;
};

namespace detail {

inline void check_temperature(double lambda) {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw ValueError("temperature must be positive and finite");
    }
}

}  // namespace detail

/// Batch cross-entropy from per-sample class-similarity vectors: the
/// negative log of the softmax probability of each sample's true class,
/// summed over the batch. Temperature divides every similarity first.
inline Tensor ce_loss_from_similarities(std::span<const Tensor> similarities,
                                        std::span<const std::size_t> labels, double lambda) {
    detail::check_temperature(lambda);
    if (similarities.empty() || similarities.size() != labels.size()) {
        throw ShapeError("one similarity vector per label required");
    }
    Tensor loss = Tensor::scalar(0.0);
    for (std::size_t b = 0; b < similarities.size(); ++b) {
        const Tensor& sims = similarities[b];
        if (sims.rank() != 1) {
            throw ShapeError("similarity vectors must be rank 1");
        }
        if (labels[b] < 1 || labels[b] > sims.size()) {
            throw ValueError("label " + std::to_string(labels[b]) + " outside [1, " +
                             std::to_string(sims.size()) + "]");
        }
        const Tensor log_probs = log_softmax(scale(sims, 1.0 / lambda));
        loss = add(loss, neg(pick(log_probs, labels[b] - 1)));
    }
    return loss;
}

/// Cosine-similarity cross-entropy over a batch. Image and text features
/// are encoder outputs; gradients flow only through tracked text features.
inline Tensor ce_loss(std::span<const Tensor> image_features,
                      std::span<const Tensor> text_features,
                      std::span<const std::size_t> labels, const CEConfig& cfg) {
    if (text_features.empty()) {
        throw ShapeError("ce_loss needs at least one class feature");
    }
    std::vector<Tensor> sims;
    sims.reserve(image_features.size());
    for (const Tensor& f : image_features) {
        std::vector<Tensor> per_class;
        per_class.reserve(text_features.size());
        for (const Tensor& g : text_features) {
            per_class.push_back(cosine_similarity(f, g));
        }
        sims.push_back(stack(per_class));
    }
    return ce_loss_from_similarities(sims, labels, cfg.temperature);
}

/// Text features for every class of a task under one prompt (tracked rows
/// give differentiable features).
inline std::vector<Tensor> class_text_features(const FrozenEncoders& enc, const FrozenTask& task,
                                               std::span<const Tensor> prompt_rows) {
    std::vector<Tensor> features;
    features.reserve(task.classes);
    for (std::size_t i = 0; i < task.classes; ++i) {
        features.push_back(encode_text(enc, prompt_rows, task.class_embeddings[i]));
    }
    return features;
}

inline std::vector<Tensor> class_text_features(const FrozenEncoders& enc, const FrozenTask& task,
                                               const SoftPrompt& prompt) {
    std::vector<Tensor> features;
    features.reserve(task.classes);
    for (std::size_t i = 0; i < task.classes; ++i) {
        features.push_back(encode_text(enc, prompt, task.class_embeddings[i]));
    }
    return features;
}

/// Class probabilities for one image feature: softmax over temperature-
/// scaled cosine similarities against every class text feature.
inline Tensor predict_probabilities(const Tensor& image_feature,
                                    std::span<const Tensor> text_features, double lambda) {
    detail::check_temperature(lambda);
    std::vector<Tensor> sims;
    sims.reserve(text_features.size());
    for (const Tensor& g : text_features) {
        sims.push_back(cosine_similarity(image_feature, g));
    }
    return softmax(scale(stack(sims), 1.0 / lambda));
}

/// 1-based argmax label; ties break to the lowest class index.
inline std::size_t argmax_label(const Tensor& probabilities) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probabilities.size(); ++i) {
        if (probabilities.at(i) > probabilities.at(best)) {
            best = i;
        }
    }
    return best + 1;
}

inline std::vector<std::size_t> predict_labels(std::span<const Tensor> image_features,
                                               std::span<const Tensor> text_features,
                                               double lambda) {
    std::vector<std::size_t> labels;
    labels.reserve(image_features.size());
    for (const Tensor& f : image_features) {
        labels.push_back(argmax_label(predict_probabilities(f, text_features, lambda)));
    }
    return labels;
}

/// Gradient-free pre-inference pass: classifies the batch under the
/// original prompt and under each single-position variant. Image features
/// are precomputed encoder outputs. Row 0 of the result is the original.
inline PredictionMatrix predict_with_prompts(const HybridPromptSet& hybrid,
                                             const FrozenEncoders& enc, const FrozenTask& task,
                                             std::span<const Tensor> image_features,
                                             double lambda) {
    if (image_features.empty()) {
        throw ShapeError("pre-inference needs a nonempty batch");
    }
    PredictionMatrix preds;
    preds.positions = hybrid.positions;
    preds.rows.reserve(hybrid.variants.size() + 1);
    const auto classify = [&](const SoftPrompt& prompt) {
        const std::vector<Tensor> text = class_text_features(enc, task, prompt);
        return predict_labels(image_features, text, lambda);
    };
    preds.rows.push_back(classify(hybrid.original));
    for (const SoftPrompt& variant : hybrid.variants) {
        preds.rows.push_back(classify(variant));
    }
    return preds;
}

/// Elects penalty positions from a pre-inference pass: a position earns
/// weight omega exactly when its corrupted variant classifies strictly
/// more of the batch correctly than the original prompt does.
inline AlphaVector pan_alphas(const PredictionMatrix& preds,
                              std::span<const std::size_t> labels, double omega) {
    if (preds.rows.empty() || preds.rows.size() != preds.positions.size() + 1) {
        throw ShapeError("prediction matrix must hold one row per variant plus the original");
    }
    for (const auto& row : preds.rows) {
        if (row.size() != labels.size()) {
            throw ShapeError("prediction rows and labels must agree in length");
        }
    }
    const auto correct = [&labels](const std::vector<std::size_t>& row) {
        std::size_t n = 0;
        for (std::size_t b = 0; b < row.size(); ++b) {
            n += row[b] == labels[b];
        }
        return n;
    };
    const std::size_t base = correct(preds.rows[0]);
    AlphaVector out;
    out.positions = preds.positions;
    out.alphas.reserve(preds.positions.size());
    for (std::size_t n = 0; n < preds.positions.size(); ++n) {
        const double alpha = correct(preds.rows[n + 1]) > base ? omega : 0.0;
        out.alphas.push_back(alpha);
        out.nonzero_count += alpha != 0.0;
    }
    return out;
}

/// Uniform prompt-norm penalty: omega times the mean per-position p-norm.
/// Rows may be tape leaves; omega = 0 yields an untracked exact zero.
inline Tensor pun_loss(std::span<const Tensor> prompt_rows, const PUNConfig& cfg) {
    if (!std::isfinite(cfg.omega) || cfg.omega < 0.0) {
        throw ValueError("penalty weight must be finite and >= 0");
    }
    if (cfg.omega == 0.0) {
        return Tensor::scalar(0.0);
    }
    if (prompt_rows.empty()) {
        throw ShapeError("pun_loss needs at least one row");
    }
    std::vector<Tensor> norms;
    norms.reserve(prompt_rows.size());
    for (const Tensor& row : prompt_rows) {
        norms.push_back(vector_pnorm(row, cfg.norm));
    }
    return scale(sum(stack(norms)), cfg.omega / static_cast<double>(prompt_rows.size()));
}

inline Tensor pun_loss(const SoftPrompt& prompt, const PUNConfig& cfg) {
    std::vector<Tensor> rows;
    rows.reserve(prompt.length());
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        rows.emplace_back(std::vector<std::size_t>{prompt.dim()}, prompt.row(j));
    }
    return pun_loss(rows, cfg);
}

/// Adaptive prompt-norm penalty: mean of alpha-weighted p-norms over the
/// elected positions. Unselected rows never enter the expression, so their
/// gradients are exactly zero. No election (M = 0) yields an exact zero.
inline Tensor pan_loss(std::span<const Tensor> prompt_rows, const AlphaVector& alphas,
                       NormKind p) {
    if (alphas.positions.size() != alphas.alphas.size()) {
        throw ShapeError("alpha vector positions and values must align");
    }
    if (alphas.nonzero_count == 0) {
        return Tensor::scalar(0.0);
    }
    std::vector<Tensor> terms;
    terms.reserve(alphas.nonzero_count);
    for (std::size_t i = 0; i < alphas.positions.size(); ++i) {
        if (alphas.alphas[i] == 0.0) {
            continue;
        }
        const std::size_t pos = alphas.positions[i];
        if (pos < 1 || pos > prompt_rows.size()) {
            throw PositionError("alpha position " + std::to_string(pos) + " outside [1, " +
                                std::to_string(prompt_rows.size()) + "]");
        }
        terms.push_back(scale(vector_pnorm(prompt_rows[pos - 1], p), alphas.alphas[i]));
    }
    return scale(sum(stack(terms)), 1.0 / static_cast<double>(alphas.nonzero_count));
}

inline Tensor pan_loss(const SoftPrompt& prompt, const AlphaVector& alphas, NormKind p) {
    std::vector<Tensor> rows;
    rows.reserve(prompt.length());
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        rows.emplace_back(std::vector<std::size_t>{prompt.dim()}, prompt.row(j));
    }
    return pan_loss(rows, alphas, p);
}

/// Logistic multiplier 1 - 1/(1 + exp(-k (E - maxE/2))): exactly 0.5 at
/// the midpoint and strictly decreasing in the epoch.
inline double omega_at_epoch(std::size_t epoch, const OmegaSchedule& sched) {
    if (!(sched.k > 0.0)) {
        throw ValueError("schedule rate k must be positive");
    }
    if (epoch > sched.max_epochs) {
        throw ContractError("epoch beyond schedule horizon");
    }
    const double e = static_cast<double>(epoch);
    const double mid = 0.5 * static_cast<double>(sched.max_epochs);
    return 1.0 - 1.0 / (1.0 + std::exp(-sched.k * (e - mid)));
}

/// Affine mix CE + beta PUN + (1 - beta) PAN. At either endpoint the
/// dropped term is skipped outright, so its value cannot leak in.
inline Tensor total_loss(const Tensor& ce, const Tensor& pun, const Tensor& pan, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ValueError("mix weight beta must lie in [0, 1]");
    }
    if (beta == 1.0) {
        return add(ce, pun);
    }
    if (beta == 0.0) {
        return add(ce, pan);
    }
    return add(ce, add(scale(pun, beta), scale(pan, 1.0 - beta)));
}

}  // namespace promptnorm
