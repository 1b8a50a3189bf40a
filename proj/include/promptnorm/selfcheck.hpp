#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "promptnorm/checkpoint.hpp"
#include "promptnorm/encoders.hpp"
#include "promptnorm/gradcheck.hpp"
#include "promptnorm/harness.hpp"
#include "promptnorm/losses.hpp"
#include "promptnorm/prompt.hpp"
#include "promptnorm/rng.hpp"
#include "promptnorm/tensor.hpp"

namespace promptnorm {

struct CheckResult {
    std::string name;
    bool ok = false;
    std::string detail;  // empty on success
};

namespace detail {

// A failing check returns a human-readable reason; success returns nullopt.
using CheckFn = std::function<std::optional<std::string>()>;

inline std::optional<std::string> expect(bool cond, const std::string& why) {
    if (cond) return std::nullopt;
    return why;
}

inline Tensor random_tensor(SplitRng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        v.push_back(rng.uniform(lo, hi));
    }
    return Tensor({n}, std::move(v));
}

inline std::optional<std::string> check_rng() {
    SplitRng a(7);
    SplitRng b(7);
    for (int i = 0; i < 64; ++i) {
        if (a.next_u64() != b.next_u64()) return "same-seed streams diverged";
    }
    SplitRng root(7);
    const double via_one = root.fork("x").uniform();
    const double via_two = SplitRng(7).fork("x").uniform();
    if (via_one != via_two) return "tag fork is order-dependent";
    if (SplitRng(7).fork(1).next_u64() == SplitRng(7).fork(2).next_u64()) {
        return "sibling forks collide";
    }
    return std::nullopt;
}

inline std::optional<std::string> check_tape_replay() {
    Tape tape;
    Tensor x = tape.leaf(Tensor({3}, {0.3, -0.7, 1.1}));
    Tensor loss = sum(tanh(mul(x, x)));
    const Gradients g1 = backward(tape, loss);
    const Gradients g2 = backward(tape, loss);
    const Tensor& a = g1.at(x);
    const Tensor& b = g2.at(x);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.data()[i] != b.data()[i]) return "backward replay is not bitwise stable";
    }
    return std::nullopt;
}

inline std::optional<std::string> check_fd_composite() {
    SplitRng rng(11);
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor value = random_tensor(rng, 5, -0.5, 0.5);
        const GradCheckResult r = finite_difference_check(
            [](Tape& tape, const Tensor& leaf) {
                Tensor w = Tensor({4, 5}, {0.1, -0.2, 0.3,  0.05, -0.4, 0.2,  0.1, -0.3,
                                           0.4, 0.15, -0.1, 0.25, 0.3,  -0.2, 0.1, 0.05,
                                           0.2, -0.3, 0.15, 0.1});
                return sum(tanh(matmul(w, leaf)));
            },
            value);
        worst = std::max(worst, r.max_rel_err);
    }
    return expect(worst <= 1e-6, "max rel err " + std::to_string(worst));
}

inline std::optional<std::string> check_ce_uniform() {
    Tape tape;
    std::vector<Tensor> sims;
    std::vector<std::size_t> labels;
    const std::size_t batch = 6;
    const std::size_t classes = 5;
    for (std::size_t b = 0; b < batch; ++b) {
        sims.push_back(tape.leaf(Tensor({classes}, std::vector<double>(classes, 0.42))));
        labels.push_back(1 + b % classes);
    }
    const double got = ce_loss_from_similarities(sims, labels, 0.07).scalar_value();
    const double want = double(batch) * std::log(double(classes));
    return expect(std::fabs(got - want) <= 1e-12,
                  "uniform similarities gave " + std::to_string(got));
}

inline std::optional<std::string> check_softmax_rows() {
    SplitRng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        Tensor z = tape.leaf(random_tensor(rng, 7, -4.0, 4.0));
        const Tensor p = softmax(z);
        double total = 0.0;
        for (const double v : p.data()) {
            if (v < 0.0) return "softmax produced a negative probability";
            total += v;
        }
        if (std::fabs(total - 1.0) > 1e-12) return "softmax row sum " + std::to_string(total);
    }
    return std::nullopt;
}

inline std::optional<std::string> check_fd_ce_through_encoders() {
    const std::size_t c = 3, l = 4, d = 6, dx = 5, f = 8;
    const FrozenEncoders enc = build_encoders(5, l, d, dx, f);
    const FrozenTask task = generate_task(5, c, d, dx, 2, 1, 0.3);
    SplitRng rng(9);
    const SoftPrompt base = SoftPrompt::random(l, d, 0.2, rng.fork("p"));
    std::vector<Tensor> images;
    for (std::size_t i = 0; i < task.train_images.size(); ++i) {
        images.push_back(encode_image(enc, task.train_images[i]));
    }
    double worst = 0.0;
    for (std::size_t j = 1; j <= l; ++j) {
        const std::size_t row_count = l;
        const GradCheckResult r = finite_difference_check(
            [&, j](Tape& tape, const Tensor& leaf) {
                std::vector<Tensor> rows;
                for (std::size_t k = 1; k <= row_count; ++k) {
                    rows.push_back(k == j ? leaf : Tensor({d}, base.row(k)));
                }
                const std::vector<Tensor> text = class_text_features(enc, task, rows);
                std::vector<Tensor> sims;
                for (const Tensor& img : images) {
                    std::vector<Tensor> s;
                    for (const Tensor& t : text) {
                        s.push_back(cosine_similarity(img, t));
                    }
                    sims.push_back(stack(s));
                }
                return ce_loss_from_similarities(sims, task.train_labels, 0.07);
            },
            Tensor({d}, base.row(j)));
        worst = std::max(worst, r.max_rel_err);
    }
    return expect(worst <= 1e-6, "max rel err " + std::to_string(worst));
}

inline std::optional<std::string> check_pun_closed_form() {
    const std::size_t l = 5;
    SplitRng rng(13);
    SoftPrompt prompt = SoftPrompt::random(l, 2, 0.5, rng);
    prompt.set_row(2, {3.0, 4.0});
    PUNConfig cfg;
    cfg.omega = 2.0;
    Tape tape;
    const std::vector<Tensor> rows = track_rows(tape, prompt);
    const Tensor loss = pun_loss(rows, cfg);
    const Gradients grads = backward(tape, loss);
    const Tensor& g = grads.at(rows[1]);
    const double want0 = (cfg.omega / double(l)) * 0.6;
    const double want1 = (cfg.omega / double(l)) * 0.8;
    if (std::fabs(g.data()[0] - want0) > 1e-9 || std::fabs(g.data()[1] - want1) > 1e-9) {
        return "gradient (" + std::to_string(g.data()[0]) + ", " + std::to_string(g.data()[1]) +
               ") != (omega/L)(0.6, 0.8)";
    }
    return std::nullopt;
}

inline std::optional<std::string> check_fd_pun() {
    SplitRng rng(17);
    for (const NormKind p : {NormKind::one, NormKind::two, NormKind::inf}) {
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            // Entries bounded away from kinks of l1/linf.
            std::vector<double> v;
            for (int i = 0; i < 4; ++i) {
                const double mag = rng.uniform(0.05, 1.5);
                v.push_back(rng.below(2) == 0 ? mag : -mag);
            }
            if (p == NormKind::inf) {
                v[0] = 2.0;  // unique maximizer
            }
            PUNConfig cfg;
            cfg.omega = 3.0;
            cfg.norm = p;
            const GradCheckResult r = finite_difference_check(
                [&](Tape&, const Tensor& leaf) {
                    const std::vector<Tensor> rows{leaf};
                    return pun_loss(rows, cfg);
                },
                Tensor({4}, v));
            worst = std::max(worst, r.max_rel_err);
        }
        if (worst > 1e-6) {
            return std::string("p=") + to_string(p) + " max rel err " + std::to_string(worst);
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_pan_alphas() {
    SplitRng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(4);
        const std::size_t batch = 1 + rng.below(6);
        PredictionMatrix preds;
        preds.positions.clear();
        for (std::size_t i = 0; i <= n; ++i) {
            std::vector<std::size_t> row;
            for (std::size_t b = 0; b < batch; ++b) {
                row.push_back(1 + rng.below(3));
            }
            preds.rows.push_back(row);
        }
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < batch; ++b) {
            labels.push_back(1 + rng.below(3));
        }
        for (std::size_t i = 1; i <= n; ++i) {
            preds.positions.push_back(i);
        }
        const double omega = 1.5;
        const AlphaVector alphas = pan_alphas(preds, labels, omega);
        std::size_t base_correct = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            if (preds.rows[0][b] == labels[b]) ++base_correct;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            std::size_t correct = 0;
            for (std::size_t b = 0; b < batch; ++b) {
                if (preds.rows[i][b] == labels[b]) ++correct;
            }
            const double want = correct > base_correct ? omega : 0.0;
            if (alphas.alphas[i - 1] != want) {
                return "alpha mismatch at variant " + std::to_string(i);
            }
        }
    }
    return std::nullopt;
}

inline std::optional<std::string> check_fd_pan() {
    SplitRng rng(29);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor value = random_tensor(rng, 4, 0.2, 1.0);
        AlphaVector alphas;
        alphas.positions = {2};
        alphas.alphas = {1.5};
        alphas.nonzero_count = 1;
        const GradCheckResult r = finite_difference_check(
            [&](Tape&, const Tensor& leaf) {
                const std::vector<Tensor> rows{Tensor({4}, {0.5, 0.5, 0.5, 0.5}), leaf,
                                               Tensor({4}, {0.1, 0.2, 0.3, 0.4})};
                return pan_loss(rows, alphas, NormKind::two);
            },
            value);
        worst = std::max(worst, r.max_rel_err);
    }
    return expect(worst <= 1e-6, "max rel err " + std::to_string(worst));
}

inline std::optional<std::string> check_corruption_identities() {
    SplitRng rng(31);
    const SoftPrompt prompt = SoftPrompt::random(4, 6, 0.3, rng.fork("p"));
    const SoftPrompt same = rescale(prompt, 2, 1.0);
    if (!(same == prompt)) return "rescale by 1 is not the identity";
    const SoftPrompt doubled = rescale(prompt, 2, 2.0);
    for (std::size_t i = 0; i < 6; ++i) {
        if (doubled.row(2)[i] != 2.0 * prompt.row(2)[i]) return "rescale is not homogeneous";
    }
    for (std::size_t j = 1; j <= 4; ++j) {
        if (j == 2) continue;
        if (!(doubled.row(j) == prompt.row(j))) return "rescale touched a non-target row";
    }
    const SoftPrompt zeroed = replace(prompt, 3, 0.0, 0.0, rng.fork("r"));
    for (const double v : zeroed.row(3)) {
        if (v != 0.0) return "replace with sigma 0 did not pin the row to the mean";
    }
    return std::nullopt;
}

inline std::optional<std::string> check_schedule() {
    OmegaSchedule sched;
    sched.enabled = true;
    sched.max_epochs = 60;
    const double mid = omega_at_epoch(30, sched);
    if (mid != 0.5) return "midpoint multiplier " + std::to_string(mid) + " != 0.5";
    double prev = omega_at_epoch(0, sched);
    for (std::size_t e = 1; e <= 60; ++e) {
        const double cur = omega_at_epoch(e, sched);
        if (!(cur < prev)) return "multiplier is not strictly decreasing";
        prev = cur;
    }
    return std::nullopt;
}

inline std::optional<std::string> check_total_endpoints() {
    Tape tape;
    Tensor ce = tape.leaf(Tensor::scalar(2.0));
    Tensor pun = tape.leaf(Tensor::scalar(0.5));
    Tensor pan = tape.leaf(Tensor::scalar(0.25));
    const double at_one = total_loss(ce, pun, pan, 1.0).scalar_value();
    const double pure_sum = 2.0 + 0.5;
    if (at_one != pure_sum) return "beta=1 did not skip the adaptive penalty bitwise";
    const double at_zero = total_loss(ce, pun, pan, 0.0).scalar_value();
    if (at_zero != 2.0 + 0.25) return "beta=0 did not skip the uniform penalty bitwise";
    return std::nullopt;
}

inline std::optional<std::string> check_checkpoint_roundtrip() {
    namespace fs = std::filesystem;
    SplitRng rng(37);
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < 3; ++j) {
        std::vector<double> row;
        for (int i = 0; i < 4; ++i) {
            row.push_back(rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-30.0, 30.0)));
        }
        rows.push_back(row);
    }
    const SoftPrompt prompt{rows};
    TrainConfig cfg;
    cfg.model.prompt_len = 3;
    cfg.model.embed_dim = 4;
    const Checkpoint ck = make_checkpoint(prompt, cfg, 5);
    const fs::path path = fs::temp_directory_path() / "promptnorm_selfcheck_ckpt.json";
    save_checkpoint(ck, path.string());
    const Checkpoint back = load_checkpoint(path.string());
    fs::remove(path);
    if (!(to_prompt(back) == prompt)) return "round trip changed prompt floats";
    return std::nullopt;
}

inline std::optional<std::string> check_training_determinism() {
    TrainConfig cfg;
    cfg.model.classes = 3;
    cfg.model.prompt_len = 4;
    cfg.model.embed_dim = 6;
    cfg.model.image_dim = 5;
    cfg.model.feature_dim = 8;
    cfg.model.shots = 4;
    cfg.model.test_per_class = 4;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    const TrainResult a = train(cfg);
    const TrainResult b = train(cfg);
    if (!(a.prompt == b.prompt)) return "repeated run produced a different prompt";
    if (norm_telemetry(a.report.trace) != norm_telemetry(b.report.trace)) {
        return "repeated run produced a different trace";
    }
    return std::nullopt;
}

}  // namespace detail

inline std::vector<CheckResult> run_selfchecks() {
    const std::vector<std::pair<std::string, detail::CheckFn>> checks = {
        {"rng streams are seeded and fork-independent", detail::check_rng},
        {"tape replay is bitwise stable", detail::check_tape_replay},
        {"composite gradients match finite differences", detail::check_fd_composite},
        {"cross-entropy at uniform similarities equals B ln C", detail::check_ce_uniform},
        {"softmax rows are nonnegative and sum to one", detail::check_softmax_rows},
        {"cross-entropy through encoders matches finite differences",
         detail::check_fd_ce_through_encoders},
        {"uniform norm penalty has the closed-form gradient", detail::check_pun_closed_form},
        {"uniform norm penalty matches finite differences for p in {1,2,inf}",
         detail::check_fd_pun},
        {"adaptive penalty weights follow the strict-exceed election rule",
         detail::check_pan_alphas},
        {"adaptive norm penalty matches finite differences", detail::check_fd_pan},
        {"corruption operations satisfy their identities", detail::check_corruption_identities},
        {"penalty weight schedule halves at the midpoint and decreases", detail::check_schedule},
        {"total loss endpoints skip the inactive penalty bitwise", detail::check_total_endpoints},
        {"checkpoint round trip preserves floats bitwise", detail::check_checkpoint_roundtrip},
        {"repeated training runs are byte-identical", detail::check_training_determinism},
    };
    std::vector<CheckResult> results;
    results.reserve(checks.size());
    for (const auto& [name, fn] : checks) {
        CheckResult r;
        r.name = name;
        try {
            const std::optional<std::string> problem = fn();
            r.ok = !problem.has_value();
            if (problem) r.detail = *problem;
        } catch (const std::exception& e) {
            r.ok = false;
            r.detail = std::string("exception: ") + e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

/// Prints one line per invariant; returns the number of failures.
inline std::size_t print_selfchecks(std::ostream& out) {
    const std::vector<CheckResult> results = run_selfchecks();
    std::size_t failures = 0;
    for (const CheckResult& r : results) {
        if (r.ok) {
            out << "pass: " << r.name << "\n";
        } else {
            out << "FAIL: " << r.name << " (" << r.detail << ")\n";
            ++failures;
        }
    }
    out << (results.size() - failures) << "/" << results.size() << " invariants hold\n";
    return failures;
}

}  // namespace promptnorm
