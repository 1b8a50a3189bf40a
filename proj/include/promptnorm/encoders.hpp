#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptnorm/errors.hpp"
#include "promptnorm/prompt.hpp"
#include "promptnorm/rng.hpp"
#include "promptnorm/tensor.hpp"

namespace promptnorm {

/// Frozen random stand-ins for a pretrained image/text encoder pair. All
/// weights are a pure function of the seed and never receive gradients.
struct FrozenEncoders {
    Tensor w_img;              // [F x Dx]
    std::vector<Tensor> w_tok; // L_max entries, each [F x D]
    Tensor w_cls;              // [F x D]
    std::uint64_t seed = 0;

    std::size_t feature_dim() const { return w_img.shape()[0]; }
    std::size_t image_dim() const { return w_img.shape()[1]; }
    std::size_t embed_dim() const { return w_cls.shape()[1]; }
    std::size_t max_prompt_len() const { return w_tok.size(); }
};

namespace detail {

inline Tensor uniform_matrix(SplitRng rng, std::size_t rows, std::size_t cols, double bound) {
    std::vector<double> data(rows * cols);
    for (double& v : data) {
        v = rng.uniform(-bound, bound);
    }
    return Tensor({rows, cols}, std::move(data));
}

}  // namespace detail

/// Draws all encoder weights i.i.d. uniform[-1/sqrt(D), 1/sqrt(D)] (the
/// image tower uses 1/sqrt(Dx)), keyed by (seed, role, position).
inline FrozenEncoders build_encoders(std::uint64_t seed, std::size_t l_max, std::size_t d,
                                     std::size_t dx, std::size_t f) {
    if (l_max < 1 || d < 1 || dx < 1 || f < 1) {
        throw ValueError("encoder extents must be >= 1");
    }
    SplitRng root(seed);
    FrozenEncoders enc;
    enc.seed = seed;
    enc.w_img = detail::uniform_matrix(root.fork("img"), f, dx, 1.0 / std::sqrt(double(dx)));
    enc.w_cls = detail::uniform_matrix(root.fork("cls"), f, d, 1.0 / std::sqrt(double(d)));
    SplitRng tok = root.fork("tok");
    enc.w_tok.reserve(l_max);
    for (std::size_t j = 1; j <= l_max; ++j) {
        enc.w_tok.push_back(detail::uniform_matrix(tok.fork(j), f, d, 1.0 / std::sqrt(double(d))));
    }
    return enc;
}

/// tanh(W_img x). Never tracked: gradients stop at the image tower.
inline Tensor encode_image(const FrozenEncoders& enc, const Tensor& x) {
    if (x.rank() != 1 || x.size() != enc.image_dim()) {
        throw ShapeError("encode_image: input must be a Dx-vector");
    }
    return tanh(matmul(enc.w_img, x));
}

/// tanh(sum_j W_tok[j] v_j + W_cls c). Rows may be tape leaves, in which
/// case the feature is differentiable w.r.t. the prompt entries only; the
/// weights and the class embedding stay out of the gradient.
inline Tensor encode_text(const FrozenEncoders& enc, std::span<const Tensor> prompt_rows,
                          const Tensor& class_embedding) {
    if (prompt_rows.empty() || prompt_rows.size() > enc.max_prompt_len()) {
        throw ConfigError("encode_text: prompt length " + std::to_string(prompt_rows.size()) +
                          " outside [1, " + std::to_string(enc.max_prompt_len()) + "]");
    }
    if (class_embedding.rank() != 1 || class_embedding.size() != enc.embed_dim()) {
        throw ShapeError("encode_text: class embedding must be a D-vector");
    }
    Tensor acc = matmul(enc.w_cls, class_embedding);
    for (std::size_t j = 0; j < prompt_rows.size(); ++j) {
        if (prompt_rows[j].rank() != 1 || prompt_rows[j].size() != enc.embed_dim()) {
            throw ShapeError("encode_text: prompt rows must be D-vectors");
        }
        acc = add(acc, matmul(enc.w_tok[j], prompt_rows[j]));
    }
    return tanh(acc);
}

/// Untracked convenience overload for a plain prompt value.
inline Tensor encode_text(const FrozenEncoders& enc, const SoftPrompt& prompt,
                          const Tensor& class_embedding) {
    std::vector<Tensor> rows;
    rows.reserve(prompt.length());
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        rows.emplace_back(std::vector<std::size_t>{prompt.dim()}, prompt.row(j));
    }
    return encode_text(enc, rows, class_embedding);
}

/// A synthetic few-shot classification task: class prototypes on the unit
/// sphere, noisy samples around them, and one embedding vector per class
/// standing in for the tokenized class name.
struct FrozenTask {
    std::size_t classes = 0;
    std::vector<Tensor> class_embeddings;  // C entries, each [D]
    std::vector<Tensor> prototypes;        // C entries, each [Dx]
    std::vector<Tensor> train_images;      // shots * C entries, each [Dx]
    std::vector<std::size_t> train_labels; // 1-based
    std::vector<Tensor> test_images;
    std::vector<std::size_t> test_labels;  // 1-based
    double data_noise = 0.0;
    std::uint64_t seed = 0;
};

inline FrozenTask generate_task(std::uint64_t seed, std::size_t c, std::size_t d,
                                std::size_t dx, std::size_t shots, std::size_t test_per_class,
                                double data_noise) {
    if (c < 2) {
        throw ValueError("task needs at least two classes");
    }
    if (shots < 1 || test_per_class < 1) {
        throw ValueError("task needs at least one train and one test sample per class");
    }
    if (data_noise < 0.0 || !std::isfinite(data_noise)) {
        throw ValueError("data noise must be finite and >= 0");
    }
    SplitRng root(seed);
    FrozenTask task;
    task.classes = c;
    task.data_noise = data_noise;
    task.seed = seed;

    SplitRng proto_rng = root.fork("proto");
    for (std::size_t i = 1; i <= c; ++i) {
        SplitRng r = proto_rng.fork(i);
        std::vector<double> p(dx);
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& v : p) {
                v = r.normal();
                norm2 += v * v;
            }
        } while (norm2 == 0.0);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& v : p) {
            v *= inv;
        }
        task.prototypes.emplace_back(std::vector<std::size_t>{dx}, std::move(p));
    }

    SplitRng emb_rng = root.fork("classemb");
    const double bound = 1.0 / std::sqrt(double(d));
    for (std::size_t i = 1; i <= c; ++i) {
        SplitRng r = emb_rng.fork(i);
        std::vector<double> e(d);
        for (double& v : e) {
            v = r.uniform(-bound, bound);
        }
        task.class_embeddings.emplace_back(std::vector<std::size_t>{d}, std::move(e));
    }

    const auto draw_split = [&](const char* tag, std::size_t per_class,
                                std::vector<Tensor>& images, std::vector<std::size_t>& labels) {
        SplitRng split_rng = root.fork(tag);
        for (std::size_t i = 1; i <= c; ++i) {
            SplitRng class_rng = split_rng.fork(i);
            for (std::size_t s = 1; s <= per_class; ++s) {
                SplitRng r = class_rng.fork(s);
                std::vector<double> x = task.prototypes[i - 1].data();
                for (double& v : x) {
                    v += r.normal(0.0, data_noise);
                }
                images.emplace_back(std::vector<std::size_t>{dx}, std::move(x));
                labels.push_back(i);
            }
        }
    };
    draw_split("train", shots, task.train_images, task.train_labels);
    draw_split("test", test_per_class, task.test_images, task.test_labels);
    return task;
}

}  // namespace promptnorm
