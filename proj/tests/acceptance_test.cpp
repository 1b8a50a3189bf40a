#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptnorm/checkpoint.hpp"
#include "promptnorm/cli.hpp"
#include "promptnorm/encoders.hpp"
#include "promptnorm/gradcheck.hpp"
#include "promptnorm/harness.hpp"
#include "promptnorm/losses.hpp"
#include "promptnorm/prompt.hpp"
#include "promptnorm/reports.hpp"
#include "promptnorm/rng.hpp"
#include "promptnorm/tensor.hpp"

namespace pn = promptnorm;
namespace fs = std::filesystem;

namespace {

// Pinned acceptance tolerances.
constexpr double kFdTol = 1e-6;          // gradient vs central finite differences
constexpr double kClosedFormTol = 1e-9;  // closed-form penalty gradient, elementwise
constexpr double kExactTol = 1e-12;      // identities that must hold to rounding
constexpr double kChanceMultiple = 2.0;  // accuracy floor, in multiples of 1/C
constexpr int kFdTrials = 100;

// Prints one PASS/FAIL line per criterion when the test body finishes.
struct Criterion {
    int number;
    const char* summary;
    Criterion(int number, const char* summary) : number(number), summary(summary) {}
    ~Criterion() {
        const bool failed = ::testing::Test::HasFailure();
        std::printf("[ACCEPTANCE] criterion %2d %s: %s\n", number, failed ? "FAIL" : "PASS",
                    summary);
        std::fflush(stdout);
    }
};

// Small instance shared by the gradient suites.
struct TinyInstance {
    pn::FrozenEncoders enc;
    pn::FrozenTask task;
    std::vector<pn::Tensor> image_features;
    static constexpr std::size_t kClasses = 3;
    static constexpr std::size_t kLen = 4;
    static constexpr std::size_t kDim = 6;

    TinyInstance()
        : enc(pn::build_encoders(5, kLen, kDim, 5, 8)),
          task(pn::generate_task(5, kClasses, kDim, 5, 2, 2, 0.3)) {
        for (const pn::Tensor& x : task.train_images) {
            image_features.push_back(pn::encode_image(enc, x));
        }
    }
};

const TinyInstance& tiny() {
    static TinyInstance instance;
    return instance;
}

pn::Tensor random_row(pn::SplitRng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v;
    v.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        v.push_back(rng.uniform(lo, hi));
    }
    return pn::Tensor({n}, std::move(v));
}

std::vector<std::vector<double>> random_rows(pn::SplitRng& rng, std::size_t l, std::size_t d,
                                             double lo, double hi) {
    std::vector<std::vector<double>> rows;
    for (std::size_t j = 0; j < l; ++j) {
        std::vector<double> row;
        for (std::size_t i = 0; i < d; ++i) {
            row.push_back(rng.uniform(lo, hi));
        }
        rows.push_back(row);
    }
    return rows;
}

// Default-scale runs are expensive; train each (mode, seed) once and reuse.
const pn::TrainResult& default_run(pn::LossMode mode, std::uint64_t seed) {
    static std::map<std::pair<int, std::uint64_t>, pn::TrainResult> cache;
    const auto key = std::make_pair(static_cast<int>(mode), seed);
    auto it = cache.find(key);
    if (it == cache.end()) {
        pn::TrainConfig cfg;  // calibrated defaults: C=8, shots=8, 200 epochs
        cfg.mode = mode;
        cfg.pun.omega = 10.0;
        cfg.run_seed = seed;
        it = cache.emplace(key, pn::train(cfg)).first;
    }
    return it->second;
}

double oracle_mean(const std::vector<double>& v) {
    double sum = 0.0;
    for (const double x : v) {
        sum += x;
    }
    return sum / static_cast<double>(v.size());
}

// Independent replay path for sweep cells: encode text features, then score
// with hand-rolled cosine/argmax loops instead of the harness helpers.
double oracle_accuracy(const pn::FrozenEncoders& enc, const pn::FrozenTask& task,
                       const pn::SoftPrompt& prompt,
                       const std::vector<pn::Tensor>& image_features, double lambda) {
    (void)lambda;  // softmax and a positive divisor preserve the argmax
    std::vector<std::vector<double>> text;
    for (std::size_t i = 0; i < task.classes; ++i) {
        const pn::Tensor t = pn::encode_text(enc, prompt, task.class_embeddings[i]);
        text.emplace_back(t.data().begin(), t.data().end());
    }
    std::vector<double> text_norms;
    for (const auto& t : text) {
        double ss = 0.0;
        for (const double v : t) {
            ss += v * v;
        }
        text_norms.push_back(std::sqrt(ss));
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < image_features.size(); ++i) {
        const auto& f = image_features[i].data();
        double fss = 0.0;
        for (const double v : f) {
            fss += v * v;
        }
        const double fnorm = std::sqrt(fss);
        std::size_t best = 0;
        double best_sim = 0.0;
        for (std::size_t c = 0; c < task.classes; ++c) {
            double dot = 0.0;
            for (std::size_t k = 0; k < f.size(); ++k) {
                dot += f[k] * text[c][k];
            }
            const double sim = dot / (fnorm * text_norms[c]);
            if (c == 0 || sim > best_sim) {
                best_sim = sim;
                best = c;
            }
        }
        if (best + 1 == task.test_labels[i]) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(image_features.size());
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    EXPECT_TRUE(in.good()) << p;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string json_without_wall_clock(const fs::path& p) {
    nlohmann::json j = nlohmann::json::parse(read_file(p));
    j.erase("wall_clock_seconds");
    return j.dump();
}

int run_cli(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = pn::cli_main(args, out, err);
    EXPECT_EQ(code, 0) << err.str();
    return code;
}

}  // namespace

TEST(Acceptance, Criterion1GradientSuite) {
    const Criterion guard(1, "analytic gradients match finite differences (<= 1e-6, 100 trials "
                             "per loss)");
    const TinyInstance& t = tiny();
    pn::SplitRng rng(101);

    // ce_loss through the text encoder, leaf = one prompt row.
    for (int trial = 0; trial < kFdTrials; ++trial) {
        const std::size_t j = 1 + trial % t.kLen;
        const std::vector<std::vector<double>> rows =
            random_rows(rng, t.kLen, t.kDim, -0.8, 0.8);
        const pn::GradCheckResult r = pn::finite_difference_check(
            [&](pn::Tape&, const pn::Tensor& leaf) {
                std::vector<pn::Tensor> prompt_rows;
                for (std::size_t k = 1; k <= t.kLen; ++k) {
                    prompt_rows.push_back(k == j ? leaf
                                                 : pn::Tensor({t.kDim}, rows[k - 1]));
                }
                const std::vector<pn::Tensor> text =
                    pn::class_text_features(t.enc, t.task, prompt_rows);
                pn::CEConfig cfg;
                return pn::ce_loss(t.image_features, text, t.task.train_labels, cfg);
            },
            pn::Tensor({t.kDim}, rows[j - 1]));
        ASSERT_LE(r.max_rel_err, kFdTol) << "ce trial " << trial;
    }

    // pun_loss for each p; leaf entries stay away from the l1/linf kinks.
    for (const pn::NormKind p : {pn::NormKind::one, pn::NormKind::two, pn::NormKind::inf}) {
        for (int trial = 0; trial < kFdTrials; ++trial) {
            std::vector<double> leaf_vals;
            for (std::size_t i = 0; i < t.kDim; ++i) {
                const double mag = rng.uniform(0.05, 1.5);
                leaf_vals.push_back(rng.below(2) == 0 ? mag : -mag);
            }
            if (p == pn::NormKind::inf) {
                leaf_vals[0] = rng.below(2) == 0 ? 2.0 : -2.0;  // unique maximizer
            }
            const std::vector<std::vector<double>> rows =
                random_rows(rng, t.kLen, t.kDim, -1.0, 1.0);
            pn::PUNConfig cfg;
            cfg.omega = rng.uniform(0.5, 3.0);
            cfg.norm = p;
            const std::size_t j = 1 + trial % t.kLen;
            const pn::GradCheckResult r = pn::finite_difference_check(
                [&](pn::Tape&, const pn::Tensor& leaf) {
                    std::vector<pn::Tensor> prompt_rows;
                    for (std::size_t k = 1; k <= t.kLen; ++k) {
                        prompt_rows.push_back(k == j ? leaf
                                                     : pn::Tensor({t.kDim}, rows[k - 1]));
                    }
                    return pn::pun_loss(prompt_rows, cfg);
                },
                pn::Tensor({t.kDim}, leaf_vals));
            ASSERT_LE(r.max_rel_err, kFdTol)
                << "pun p=" << pn::to_string(p) << " trial " << trial;
        }
    }

    // pan_loss on an elected row.
    for (int trial = 0; trial < kFdTrials; ++trial) {
        const std::size_t j = 1 + trial % t.kLen;
        pn::AlphaVector alphas;
        alphas.positions = {j};
        alphas.alphas = {rng.uniform(0.5, 2.0)};
        alphas.nonzero_count = 1;
        if (trial % 3 == 0 && j < t.kLen) {  // sometimes elect a second row
            alphas.positions.push_back(j + 1);
            alphas.alphas.push_back(rng.uniform(0.5, 2.0));
            alphas.nonzero_count = 2;
        }
        const std::vector<std::vector<double>> rows =
            random_rows(rng, t.kLen, t.kDim, 0.2, 1.2);
        const pn::GradCheckResult r = pn::finite_difference_check(
            [&](pn::Tape&, const pn::Tensor& leaf) {
                std::vector<pn::Tensor> prompt_rows;
                for (std::size_t k = 1; k <= t.kLen; ++k) {
                    prompt_rows.push_back(k == j ? leaf : pn::Tensor({t.kDim}, rows[k - 1]));
                }
                return pn::pan_loss(prompt_rows, alphas, pn::NormKind::two);
            },
            pn::Tensor({t.kDim}, rows[j - 1]));
        ASSERT_LE(r.max_rel_err, kFdTol) << "pan trial " << trial;
    }

    // total_loss blending all three terms through one leaf row.
    for (int trial = 0; trial < kFdTrials; ++trial) {
        const std::size_t j = 1 + trial % t.kLen;
        const std::vector<std::vector<double>> rows =
            random_rows(rng, t.kLen, t.kDim, -0.8, 0.8);
        pn::AlphaVector alphas;
        alphas.positions = {j};
        alphas.alphas = {1.5};
        alphas.nonzero_count = 1;
        pn::PUNConfig pun_cfg;
        pun_cfg.omega = 2.0;
        const pn::GradCheckResult r = pn::finite_difference_check(
            [&](pn::Tape&, const pn::Tensor& leaf) {
                std::vector<pn::Tensor> prompt_rows;
                for (std::size_t k = 1; k <= t.kLen; ++k) {
                    prompt_rows.push_back(k == j ? leaf : pn::Tensor({t.kDim}, rows[k - 1]));
                }
                const std::vector<pn::Tensor> text =
                    pn::class_text_features(t.enc, t.task, prompt_rows);
                pn::CEConfig ce_cfg;
                const pn::Tensor ce =
                    pn::ce_loss(t.image_features, text, t.task.train_labels, ce_cfg);
                const pn::Tensor pun = pn::pun_loss(prompt_rows, pun_cfg);
                const pn::Tensor pan = pn::pan_loss(prompt_rows, alphas, pn::NormKind::two);
                return pn::total_loss(ce, pun, pan, 0.3);
            },
            pn::Tensor({t.kDim}, rows[j - 1]));
        ASSERT_LE(r.max_rel_err, kFdTol) << "total trial " << trial;
    }
}

TEST(Acceptance, Criterion2ClosedFormPenaltyGradient) {
    const Criterion guard(2, "uniform penalty gradient equals (omega/L) v/|v| within 1e-9");
    pn::SplitRng rng(202);
    for (int trial = 0; trial < kFdTrials; ++trial) {
        const std::size_t l = 2 + rng.below(6);
        const std::size_t d = 2 + rng.below(6);
        std::vector<std::vector<double>> rows;
        for (std::size_t j = 0; j < l; ++j) {
            std::vector<double> row;
            for (std::size_t i = 0; i < d; ++i) {
                row.push_back(rng.uniform(-2.0, 2.0));
            }
            rows.push_back(row);
        }
        pn::PUNConfig cfg;
        cfg.omega = rng.uniform(0.1, 20.0);
        pn::Tape tape;
        const pn::SoftPrompt prompt(rows);
        const std::vector<pn::Tensor> tracked = pn::track_rows(tape, prompt);
        const pn::Gradients grads = pn::backward(tape, pn::pun_loss(tracked, cfg));
        for (std::size_t j = 0; j < l; ++j) {
            double norm_sq = 0.0;
            for (const double v : rows[j]) {
                norm_sq += v * v;
            }
            const double norm = std::sqrt(norm_sq);
            if (norm < 1e-3) {
                continue;
            }
            const pn::Tensor& g = grads.at(tracked[j]);
            for (std::size_t i = 0; i < d; ++i) {
                const double want = (cfg.omega / static_cast<double>(l)) * rows[j][i] / norm;
                ASSERT_NEAR(g.data()[i], want, kClosedFormTol)
                    << "trial " << trial << " row " << j << " col " << i;
            }
        }
    }
    // The worked example: gradient of row (3,4) is (omega/L)(0.6, 0.8).
    pn::SoftPrompt prompt(std::vector<std::vector<double>>{{3.0, 4.0}, {0.1, 0.1}});
    pn::PUNConfig cfg;
    cfg.omega = 1.0;
    pn::Tape tape;
    const std::vector<pn::Tensor> tracked = pn::track_rows(tape, prompt);
    const pn::Gradients grads = pn::backward(tape, pn::pun_loss(tracked, cfg));
    EXPECT_NEAR(grads.at(tracked[0]).data()[0], 0.5 * 0.6, kClosedFormTol);
    EXPECT_NEAR(grads.at(tracked[0]).data()[1], 0.5 * 0.8, kClosedFormTol);
}

TEST(Acceptance, Criterion3SelectionOracle) {
    const Criterion guard(3, "adaptive penalty election matches brute-force recount on 1000 "
                             "instances, ties give zero");
    pn::SplitRng rng(303);
    std::size_t ties_seen = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        const std::size_t batch = 1 + rng.below(8);
        const std::size_t classes = 2 + rng.below(3);
        pn::PredictionMatrix preds;
        for (std::size_t i = 0; i <= n; ++i) {
            std::vector<std::size_t> row;
            for (std::size_t b = 0; b < batch; ++b) {
                row.push_back(1 + rng.below(classes));
            }
            preds.rows.push_back(row);
        }
        for (std::size_t i = 1; i <= n; ++i) {
            preds.positions.push_back(i);
        }
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < batch; ++b) {
            labels.push_back(1 + rng.below(classes));
        }
        const double omega = rng.uniform(0.1, 5.0);
        const pn::AlphaVector alphas = pn::pan_alphas(preds, labels, omega);
        ASSERT_EQ(alphas.alphas.size(), n);

        std::size_t base_correct = 0;
        for (std::size_t b = 0; b < batch; ++b) {
            base_correct += preds.rows[0][b] == labels[b] ? 1 : 0;
        }
        std::size_t nonzero = 0;
        for (std::size_t i = 1; i <= n; ++i) {
            std::size_t correct = 0;
            for (std::size_t b = 0; b < batch; ++b) {
                correct += preds.rows[i][b] == labels[b] ? 1 : 0;
            }
            if (correct == base_correct) {
                ++ties_seen;
                ASSERT_EQ(alphas.alphas[i - 1], 0.0) << "tie must elect nothing, trial " << trial;
            }
            const double want = correct > base_correct ? omega : 0.0;
            ASSERT_EQ(alphas.alphas[i - 1], want) << "trial " << trial << " variant " << i;
            if (want != 0.0) {
                ++nonzero;
            }
        }
        ASSERT_EQ(alphas.nonzero_count, nonzero);
    }
    EXPECT_GT(ties_seen, 0u) << "random instances never exercised the tie rule";
}

TEST(Acceptance, Criterion4CorruptionIdentities) {
    const Criterion guard(4, "corruption identities: rescale(1) no-op, norm homogeneity, "
                             "replace(0,0) zero row, other rows bitwise");
    const TinyInstance& t = tiny();
    pn::SplitRng rng(404);
    const pn::SoftPrompt prompt =
        pn::SoftPrompt(random_rows(rng, t.kLen, t.kDim, -1.0, 1.0));
    const std::vector<pn::Tensor> base_text = pn::class_text_features(t.enc, t.task, prompt);

    for (std::size_t j = 1; j <= t.kLen; ++j) {
        // rescale(s=1): prediction probabilities unchanged within 1e-12.
        const pn::SoftPrompt same = pn::rescale(prompt, j, 1.0);
        const std::vector<pn::Tensor> same_text = pn::class_text_features(t.enc, t.task, same);
        for (const pn::Tensor& f : t.image_features) {
            const pn::Tensor pa = pn::predict_probabilities(f, base_text, 0.07);
            const pn::Tensor pb = pn::predict_probabilities(f, same_text, 0.07);
            for (std::size_t c = 0; c < t.kClasses; ++c) {
                ASSERT_NEAR(pa.data()[c], pb.data()[c], kExactTol);
            }
        }

        // Norm homogeneity for several factors.
        for (const double s : {0.001, 0.1, 0.5, 2.0, 7.25}) {
            const pn::SoftPrompt scaled = pn::rescale(prompt, j, s);
            const pn::PromptNorms before = pn::prompt_norms(prompt, pn::NormKind::two);
            const pn::PromptNorms after = pn::prompt_norms(scaled, pn::NormKind::two);
            ASSERT_NEAR(after.per_position[j - 1], s * before.per_position[j - 1],
                        kExactTol * std::max(1.0, s * before.per_position[j - 1]));
            // Non-target rows bitwise unchanged.
            for (std::size_t k = 1; k <= t.kLen; ++k) {
                if (k != j) {
                    ASSERT_TRUE(scaled.row(k) == prompt.row(k));
                }
            }
        }

        // replace(mu=0, sigma=0): the row becomes exactly zero.
        const pn::SoftPrompt zeroed = pn::replace(prompt, j, 0.0, 0.0, rng.fork(j));
        ASSERT_EQ(pn::prompt_norms(zeroed, pn::NormKind::two).per_position[j - 1], 0.0);
        for (std::size_t k = 1; k <= t.kLen; ++k) {
            if (k != j) {
                ASSERT_TRUE(zeroed.row(k) == prompt.row(k));
            }
        }

        // Non-target rows bitwise unchanged under noisy replacement too.
        const pn::SoftPrompt noisy = pn::replace(prompt, j, 0.0, 0.5, rng.fork(100 + j));
        for (std::size_t k = 1; k <= t.kLen; ++k) {
            if (k != j) {
                ASSERT_TRUE(noisy.row(k) == prompt.row(k));
            }
        }
    }
}

TEST(Acceptance, Criterion5LossSanity) {
    const Criterion guard(5, "uniform similarities give B ln C within 1e-12; softmax rows sum "
                             "to one");
    pn::SplitRng rng(505);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t batch = 1 + rng.below(10);
        const std::size_t classes = 2 + rng.below(10);
        const double fill = rng.uniform(-1.0, 1.0);
        pn::Tape tape;
        std::vector<pn::Tensor> sims;
        std::vector<std::size_t> labels;
        for (std::size_t b = 0; b < batch; ++b) {
            sims.push_back(tape.leaf(pn::Tensor({classes}, std::vector<double>(classes, fill))));
            labels.push_back(1 + rng.below(classes));
        }
        const double got = pn::ce_loss_from_similarities(sims, labels, 0.07).scalar_value();
        const double want = static_cast<double>(batch) * std::log(static_cast<double>(classes));
        ASSERT_NEAR(got, want, kExactTol * std::max(1.0, want));
    }
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        pn::Tape tape;
        pn::Tensor z = tape.leaf(random_row(rng, n, -30.0, 30.0));
        const pn::Tensor p = pn::softmax(z);
        double total = 0.0;
        for (const double v : p.data()) {
            ASSERT_GE(v, 0.0);
            total += v;
        }
        ASSERT_NEAR(total, 1.0, kExactTol);
    }
}

TEST(Acceptance, Criterion6PenaltySchedule) {
    const Criterion guard(6, "penalty weight schedule: exact 0.5 at the midpoint, strictly "
                             "decreasing, default rate 0.2");
    const pn::OmegaSchedule defaults;
    EXPECT_EQ(defaults.k, 0.2);
    for (const std::size_t max_epochs : {10u, 60u, 200u}) {
        pn::OmegaSchedule sched;
        sched.enabled = true;
        sched.max_epochs = max_epochs;
        EXPECT_EQ(pn::omega_at_epoch(max_epochs / 2, sched), 0.5);
        double prev = pn::omega_at_epoch(0, sched);
        for (std::size_t e = 1; e <= max_epochs; ++e) {
            const double cur = pn::omega_at_epoch(e, sched);
            ASSERT_LT(cur, prev) << "epoch " << e << " of " << max_epochs;
            prev = cur;
        }
    }
}

TEST(Acceptance, Criterion7AdaptiveTrainingFidelity) {
    const Criterion guard(7, "adaptive mode: one gradient-free pre-inference per batch, fresh "
                             "election, gradients confined to elected rows");
    pn::TrainConfig cfg;
    cfg.model.classes = 3;
    cfg.model.prompt_len = 4;
    cfg.model.embed_dim = 6;
    cfg.model.image_dim = 5;
    cfg.model.feature_dim = 8;
    cfg.model.shots = 4;
    cfg.model.test_per_class = 4;
    cfg.epochs = 10;
    cfg.batch_size = 4;
    cfg.mode = pn::LossMode::with_pan;
    cfg.pan.positions = 2;

    std::size_t batches = 0;
    std::set<std::vector<std::size_t>> position_sets;
    bool saw_election = false;
    pn::train(cfg, [&](const pn::BatchEvent& e) {
        ++batches;
        ASSERT_EQ(e.preinference_passes, 1u);  // exactly one per batch
        ASSERT_EQ(e.alphas.positions.size(), cfg.pan.positions);
        ASSERT_EQ(e.alphas.alphas.size(), cfg.pan.positions);
        std::vector<std::size_t> sorted = e.alphas.positions;
        std::sort(sorted.begin(), sorted.end());
        position_sets.insert(sorted);
        std::vector<bool> elected(cfg.model.prompt_len, false);
        for (std::size_t i = 0; i < e.alphas.positions.size(); ++i) {
            if (e.alphas.alphas[i] != 0.0) {
                elected[e.alphas.positions[i] - 1] = true;
                saw_election = true;
            }
        }
        ASSERT_EQ(e.pan_row_gradients.size(), cfg.model.prompt_len);
        for (std::size_t j = 0; j < cfg.model.prompt_len; ++j) {
            if (elected[j]) {
                continue;
            }
            for (const double g : e.pan_row_gradients[j]) {
                ASSERT_EQ(g, 0.0) << "penalty gradient leaked into unelected row " << (j + 1);
            }
        }
    });
    EXPECT_EQ(batches, 30u);  // 12 train samples, batch 4, 10 epochs
    EXPECT_TRUE(saw_election);
    // The hybrid set is rebuilt per batch, so the sampled positions vary.
    EXPECT_GT(position_sets.size(), 1u);
}

TEST(Acceptance, Criterion8NormPressure) {
    const Criterion guard(8, "uniform penalty (omega=10) ends below the plain run's final norm "
                             "on every seed; both stay above 2x chance");
    const pn::TrainConfig defaults;
    const double floor = kChanceMultiple / static_cast<double>(defaults.model.classes);
    for (const std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const pn::TrainResult& plain = default_run(pn::LossMode::ce_only, seed);
        const pn::TrainResult& penalized = default_run(pn::LossMode::with_pun, seed);
        EXPECT_LT(penalized.report.final_mean_norm, plain.report.final_mean_norm)
            << "seed " << seed;
        EXPECT_GE(plain.report.final_test_accuracy, floor) << "seed " << seed;
        EXPECT_GE(penalized.report.final_test_accuracy, floor) << "seed " << seed;
    }
}

TEST(Acceptance, Criterion9SweepMatchesReplayOracle) {
    const Criterion guard(9, "corruption sweep equals the brute-force replay oracle cell for "
                             "cell; norm flags follow measured deltas");
    const pn::TrainResult& trained = default_run(pn::LossMode::ce_only, 1);
    const pn::TrainConfig defaults;
    const pn::ModelConfig& m = defaults.model;
    const pn::FrozenEncoders enc =
        pn::build_encoders(m.encoder_seed, m.prompt_len, m.embed_dim, m.image_dim, m.feature_dim);
    const pn::FrozenTask task = pn::generate_task(defaults.task_seed, m.classes, m.embed_dim,
                                                  m.image_dim, m.shots, m.test_per_class,
                                                  m.data_noise);
    std::vector<pn::Tensor> test_feats;
    for (const pn::Tensor& x : task.test_images) {
        test_feats.push_back(pn::encode_image(enc, x));
    }
    const std::vector<pn::SweepGrid> grids = pn::default_sweep_grids();
    ASSERT_EQ(grids[0].parameters, (std::vector<double>{0.0, 0.001, 0.01, 0.1, 0.5}));
    ASSERT_EQ(grids[1].parameters, (std::vector<double>{0.001, 0.01, 0.1, 0.5, 2.0}));
    const std::vector<std::uint64_t> seeds{1, 2};
    const pn::FrequencyTable table = pn::corruption_sweep(trained.prompt, enc, task, grids,
                                                          seeds, defaults.temperature);

    // Baseline replay.
    const double oracle_base =
        oracle_accuracy(enc, task, trained.prompt, test_feats, defaults.temperature);
    ASSERT_EQ(table.baseline_accuracy, oracle_base);

    // Every cell replayed from scratch, including the keyed noise draws.
    std::size_t idx = 0;
    for (const pn::SweepGrid& grid : grids) {
        for (std::size_t pi = 0; pi < grid.parameters.size(); ++pi) {
            double norm_before_sum = 0.0;
            double norm_after_sum = 0.0;
            std::size_t exceed_count = 0;
            for (std::size_t j = 1; j <= m.prompt_len; ++j) {
                const pn::SweepCell& cell = table.cells[idx++];
                ASSERT_EQ(cell.arm, grid.arm);
                ASSERT_EQ(cell.parameter, grid.parameters[pi]);
                ASSERT_EQ(cell.position, j);
                std::vector<double> acc;
                std::vector<double> norm_after;
                for (const std::uint64_t seed : seeds) {
                    const pn::SoftPrompt corrupted =
                        grid.arm == pn::CorruptionArm::replace_arm
                            ? pn::replace(trained.prompt, j, 0.0, grid.parameters[pi],
                                          pn::SplitRng(seed)
                                              .fork("sweep-replace")
                                              .fork(pi)
                                              .fork(j))
                            : pn::rescale(trained.prompt, j, grid.parameters[pi]);
                    acc.push_back(oracle_accuracy(enc, task, corrupted, test_feats,
                                                  defaults.temperature));
                    double ss = 0.0;
                    for (const double v : corrupted.row(j)) {
                        ss += v * v;
                    }
                    norm_after.push_back(std::sqrt(ss));
                }
                ASSERT_EQ(cell.accuracy_per_seed, acc) << "cell " << idx - 1;
                ASSERT_EQ(cell.mean_accuracy, oracle_mean(acc));
                ASSERT_EQ(cell.norm_after_per_seed, norm_after);
                ASSERT_EQ(cell.mean_norm_after, oracle_mean(norm_after));
                double ss = 0.0;
                for (const double v : trained.prompt.row(j)) {
                    ss += v * v;
                }
                ASSERT_EQ(cell.norm_before, std::sqrt(ss));
                ASSERT_EQ(cell.delta, cell.mean_accuracy - oracle_base);
                ASSERT_EQ(cell.exceeds, cell.mean_accuracy > oracle_base);
                norm_before_sum += cell.norm_before;
                norm_after_sum += cell.mean_norm_after;
                exceed_count += cell.exceeds ? 1 : 0;
            }
            const pn::ArmParamStat& stat =
                table.stats[&grid == &grids[0] ? pi : grids[0].parameters.size() + pi];
            ASSERT_EQ(stat.arm, grid.arm);
            ASSERT_EQ(stat.parameter, grid.parameters[pi]);
            ASSERT_EQ(stat.exceed_count, exceed_count);
            ASSERT_EQ(stat.norm_decreasing, norm_after_sum < norm_before_sum)
                << "flag must follow the measured norm delta";
        }
    }
    ASSERT_EQ(idx, table.cells.size());

    // Direction expectations: small replacement noise and factors < 1 lower
    // the trained row norms; factor 2 and noise at or above the row-norm
    // scale raise them.
    for (const pn::ArmParamStat& stat : table.stats) {
        if (stat.arm == pn::CorruptionArm::rescale_arm) {
            EXPECT_EQ(stat.norm_decreasing, stat.parameter < 1.0)
                << "rescale factor " << stat.parameter;
        } else if (stat.parameter <= 0.01) {
            EXPECT_TRUE(stat.norm_decreasing) << "replace sigma " << stat.parameter;
        } else if (stat.parameter >= 0.5) {
            EXPECT_FALSE(stat.norm_decreasing) << "replace sigma " << stat.parameter;
        }
    }
}

TEST(Acceptance, Criterion10Determinism) {
    const Criterion guard(10, "train and sweep artifacts are byte-identical across repeats and "
                              "serial vs parallel");
    const fs::path dir = fs::temp_directory_path() / "promptnorm_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path cfg_path = dir / "det.cfg";
    std::ofstream(cfg_path) << R"([model]
classes = 3
prompt_len = 4
embed_dim = 6
image_dim = 5
feature_dim = 8
shots = 4
test_per_class = 4

[train]
seeds = 1, 2
epochs = 6
batch_size = 4
mode = pan

[pan]
omega = 1
positions = 2
)";
    const std::string cfg = cfg_path.string();
    run_cli({"train", "--config", cfg, "--out-dir", (dir / "t1").string()});
    run_cli({"train", "--config", cfg, "--out-dir", (dir / "t2").string()});
    run_cli({"train", "--config", cfg, "--set", "io.parallel=on", "--out-dir",
             (dir / "t3").string()});
    for (const char* seed_dir : {"seed_1", "seed_2"}) {
        const std::string trace = read_file(dir / "t1" / seed_dir / "trace.csv");
        EXPECT_EQ(trace, read_file(dir / "t2" / seed_dir / "trace.csv"));
        EXPECT_EQ(trace, read_file(dir / "t3" / seed_dir / "trace.csv"));
        const std::string prompt = read_file(dir / "t1" / seed_dir / "prompt.json");
        EXPECT_EQ(prompt, read_file(dir / "t2" / seed_dir / "prompt.json"));
        EXPECT_EQ(prompt, read_file(dir / "t3" / seed_dir / "prompt.json"));
        const std::string report = json_without_wall_clock(dir / "t1" / seed_dir / "report.json");
        EXPECT_EQ(report, json_without_wall_clock(dir / "t2" / seed_dir / "report.json"));
        EXPECT_EQ(report, json_without_wall_clock(dir / "t3" / seed_dir / "report.json"));
    }

    const std::string ckpt = (dir / "t1" / "seed_1" / "prompt.json").string();
    run_cli({"sweep", "--config", cfg, "--checkpoint", ckpt, "--out-dir", (dir / "s1").string()});
    run_cli({"sweep", "--config", cfg, "--checkpoint", ckpt, "--out-dir", (dir / "s2").string()});
    run_cli({"sweep", "--config", cfg, "--checkpoint", ckpt, "--set", "io.parallel=on",
             "--out-dir", (dir / "s3").string()});
    const std::string freq = read_file(dir / "s1" / "frequency.csv");
    EXPECT_EQ(freq, read_file(dir / "s2" / "frequency.csv"));
    EXPECT_EQ(freq, read_file(dir / "s3" / "frequency.csv"));
}

TEST(Acceptance, Criterion11RoundTrips) {
    const Criterion guard(11, "checkpoint round trip is bitwise; report.json re-parse equals "
                              "the in-memory report");
    pn::SplitRng rng(1111);
    std::vector<std::vector<double>> rows;
    for (int j = 0; j < 8; ++j) {
        std::vector<double> row;
        for (int i = 0; i < 7; ++i) {
            row.push_back(rng.uniform(-1.0, 1.0) * std::pow(10.0, rng.uniform(-150.0, 150.0)));
        }
        rows.push_back(row);
    }
    rows[0][0] = -0.0;
    const pn::SoftPrompt prompt(rows);
    pn::TrainConfig geom;
    geom.model.prompt_len = 8;
    geom.model.embed_dim = 7;
    const fs::path dir = fs::temp_directory_path() / "promptnorm_acceptance_rt";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string path = (dir / "ck.json").string();
    pn::save_checkpoint(pn::make_checkpoint(prompt, geom, 12), path);
    const pn::Checkpoint back = pn::load_checkpoint(path);
    ASSERT_EQ(back.rows.size(), rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        for (std::size_t i = 0; i < rows[j].size(); ++i) {
            ASSERT_EQ(std::bit_cast<std::uint64_t>(back.rows[j][i]),
                      std::bit_cast<std::uint64_t>(rows[j][i]));
        }
    }

    pn::TrainConfig cfg;
    cfg.model.classes = 3;
    cfg.model.prompt_len = 4;
    cfg.model.embed_dim = 6;
    cfg.model.image_dim = 5;
    cfg.model.feature_dim = 8;
    cfg.model.shots = 4;
    cfg.model.test_per_class = 4;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.mode = pn::LossMode::with_both;
    const pn::TrainResult res = pn::train(cfg);
    const nlohmann::json j = res.report;
    const pn::RunReport back_report = nlohmann::json::parse(j.dump(2)).get<pn::RunReport>();
    EXPECT_TRUE(back_report == res.report);
}
