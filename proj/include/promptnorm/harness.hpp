#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <future>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "promptnorm/encoders.hpp"
#include "promptnorm/errors.hpp"
#include "promptnorm/format.hpp"
#include "promptnorm/losses.hpp"
#include "promptnorm/prompt.hpp"
#include "promptnorm/rng.hpp"
#include "promptnorm/tensor.hpp"

namespace promptnorm {

enum class LossMode { ce_only, with_pun, with_pan, with_both };
enum class OptimizerKind { sgd, momentum };

inline const char* to_string(LossMode m) {
    switch (m) {
        case LossMode::ce_only: return "ce";
        case LossMode::with_pun: return "pun";
        case LossMode::with_pan: return "pan";
        case LossMode::with_both: return "both";
    }
    return "?";
}

inline const char* to_string(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "momentum";
}

/// Extents and seeds of the synthetic encoder/task pair.
struct ModelConfig {
    std::size_t classes = 8;
    std::size_t prompt_len = 16;
    std::size_t embed_dim = 32;
    std::size_t image_dim = 24;
    std::size_t feature_dim = 48;
    std::size_t shots = 8;
    std::size_t test_per_class = 16;
    double data_noise = 0.3;
    std::uint64_t encoder_seed = 11;
};

struct TrainConfig {
    ModelConfig model;
    std::uint64_t task_seed = 1;
    std::uint64_t run_seed = 1;
    std::size_t epochs = 200;
    std::size_t batch_size = 16;
    double learning_rate = 0.05;
    OptimizerKind optimizer = OptimizerKind::sgd;
    double momentum = 0.9;
    LossMode mode = LossMode::ce_only;
    double beta = 0.3;
    double temperature = 0.07;
    double prompt_init_std = 0.02;
    PUNConfig pun;
    PANConfig pan;
    OmegaSchedule schedule;
};

inline void validate(const TrainConfig& cfg) {
    const auto fail = [](const std::string& what) { throw ConfigError(what); };
    const ModelConfig& m = cfg.model;
    if (m.classes < 2) fail("model.classes must be >= 2");
    if (m.prompt_len < 1 || m.embed_dim < 1 || m.image_dim < 1 || m.feature_dim < 1)
        fail("model extents must be >= 1");
    if (m.shots < 1) fail("model.shots must be >= 1");
    if (m.test_per_class < 1) fail("model.test_per_class must be >= 1");
    if (!(m.data_noise >= 0.0) || !std::isfinite(m.data_noise))
        fail("model.data_noise must be finite and >= 0");
    if (cfg.epochs < 1) fail("train.epochs must be >= 1");
    if (cfg.batch_size < 1) fail("train.batch_size must be >= 1");
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate))
        fail("train.learning_rate must be finite and >= 0");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("train.momentum must lie in [0, 1)");
    if (!(cfg.beta >= 0.0 && cfg.beta <= 1.0)) fail("train.beta must lie in [0, 1]");
    if (!(cfg.temperature > 0.0) || !std::isfinite(cfg.temperature))
        fail("train.temperature must be positive");
    if (!(cfg.prompt_init_std >= 0.0) || !std::isfinite(cfg.prompt_init_std))
        fail("train.prompt_init_std must be finite and >= 0");
    if (!(cfg.pun.omega >= 0.0) || !std::isfinite(cfg.pun.omega))
        fail("pun.omega must be finite and >= 0");
    if (!(cfg.pan.omega >= 0.0) || !std::isfinite(cfg.pan.omega))
        fail("pan.omega must be finite and >= 0");
    if (!(cfg.pan.tau > 0.0 && cfg.pan.tau < 1.0)) fail("pan.tau must lie in (0, 1)");
    if (cfg.pan.positions < 1 || cfg.pan.positions > m.prompt_len)
        fail("pan.positions must lie in [1, prompt_len]");
    if (cfg.schedule.enabled && !(cfg.schedule.k > 0.0)) fail("schedule rate k must be positive");
}

/// One epoch of telemetry: loss components summed over the epoch's
/// batches, end-of-epoch test accuracy, and per-position prompt norms.
struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double ce = 0.0;
    double pun = 0.0;
    double pan = 0.0;
    double total = 0.0;
    double test_accuracy = 0.0;
    double mean_norm = 0.0;
    std::vector<double> per_position_norms;
    std::size_t alpha_nonzero = 0;  // elected positions, summed over batches
    double omega_multiplier = 1.0;
};

struct NormTrace {
    std::vector<EpochRecord> epochs;
};

struct RunReport {
    TrainConfig config;
    std::uint64_t seed = 0;
    NormTrace trace;
    double initial_mean_norm = 0.0;
    double final_mean_norm = 0.0;
    double final_test_accuracy = 0.0;
    std::string checkpoint_file;       // filled by the CLI when it writes one
    double wall_clock_seconds = 0.0;   // informational; excluded from byte comparisons
};

/// Per-batch instrumentation passed to an optional observer. The heavier
/// fields are only populated when an observer is installed.
struct BatchEvent {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    std::size_t preinference_passes = 0;
    AlphaVector alphas;
    double ce = 0.0;
    double pun = 0.0;
    double pan = 0.0;
    double total = 0.0;
    double omega_multiplier = 1.0;
    // Gradient of the adaptive-penalty term alone w.r.t. each prompt row,
    // recomputed on a standalone tape; empty unless that penalty is active.
    std::vector<std::vector<double>> pan_row_gradients;
};

using BatchHook = std::function<void(const BatchEvent&)>;

struct TrainResult {
    SoftPrompt prompt;
    RunReport report;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, SplitRng rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.below(i + 1);
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

inline double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

inline double evaluate_accuracy(const FrozenEncoders& enc, const FrozenTask& task,
                                const SoftPrompt& prompt,
                                std::span<const Tensor> image_features,
                                std::span<const std::size_t> labels, double lambda) {
    const std::vector<Tensor> text = class_text_features(enc, task, prompt);
    const std::vector<std::size_t> got = predict_labels(image_features, text, lambda);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < got.size(); ++i) {
        correct += got[i] == labels[i];
    }
    return static_cast<double>(correct) / static_cast<double>(got.size());
}

/// Full training run: one prompt, one seed. Per batch the adaptive mode
/// first runs the gradient-free pre-inference pass (hybrid set, prediction
/// matrix, alpha election), then records one tape for the mixed objective
/// and steps the prompt rows. Everything downstream of (config, seeds) is
/// deterministic.
inline TrainResult train(const TrainConfig& cfg, const BatchHook& hook = {}) {
    validate(cfg);
    const auto t0 = std::chrono::steady_clock::now();
    const ModelConfig& m = cfg.model;
    const FrozenEncoders enc =
        build_encoders(m.encoder_seed, m.prompt_len, m.embed_dim, m.image_dim, m.feature_dim);
    const FrozenTask task = generate_task(cfg.task_seed, m.classes, m.embed_dim, m.image_dim,
                                          m.shots, m.test_per_class, m.data_noise);

    // Image towers are frozen, so features are computed exactly once.
    std::vector<Tensor> train_feats;
    train_feats.reserve(task.train_images.size());
    for (const Tensor& x : task.train_images) {
        train_feats.push_back(encode_image(enc, x));
    }
    std::vector<Tensor> test_feats;
    test_feats.reserve(task.test_images.size());
    for (const Tensor& x : task.test_images) {
        test_feats.push_back(encode_image(enc, x));
    }

    SplitRng run_rng(cfg.run_seed);
    SoftPrompt prompt = SoftPrompt::random(m.prompt_len, m.embed_dim, cfg.prompt_init_std,
                                           run_rng.fork("prompt-init"));

    OmegaSchedule schedule = cfg.schedule;
    if (schedule.max_epochs == 0) {
        schedule.max_epochs = cfg.epochs;
    }

    const bool pun_active = cfg.mode == LossMode::with_pun || cfg.mode == LossMode::with_both;
    const bool pan_active = cfg.mode == LossMode::with_pan || cfg.mode == LossMode::with_both;
    const NormKind trace_norm = pun_active  ? cfg.pun.norm
                                : pan_active ? cfg.pan.norm
                                             : NormKind::two;

    RunReport report;
    report.config = cfg;
    report.seed = cfg.run_seed;
    report.initial_mean_norm = prompt_norms(prompt, trace_norm).mean;

    std::vector<std::vector<double>> velocity(m.prompt_len,
                                              std::vector<double>(m.embed_dim, 0.0));
    const std::size_t n_train = train_feats.size();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double mult = schedule.enabled ? omega_at_epoch(epoch, schedule) : 1.0;
        const std::vector<std::size_t> order =
            detail::shuffled_indices(n_train, run_rng.fork("shuffle").fork(epoch));

        EpochRecord rec;
        rec.epoch = epoch;
        rec.omega_multiplier = mult;

        std::size_t batch_idx = 0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            ++batch_idx;
            const std::size_t end = std::min(start + cfg.batch_size, n_train);
            std::vector<Tensor> batch_feats;
            std::vector<std::size_t> batch_labels;
            batch_feats.reserve(end - start);
            batch_labels.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                batch_feats.push_back(train_feats[order[i]]);
                batch_labels.push_back(task.train_labels[order[i]]);
            }

            BatchEvent event;
            event.epoch = epoch;
            event.batch = batch_idx;
            event.omega_multiplier = mult;

            // Alpha election happens before any tape exists and never
            // persists across batches.
            AlphaVector alphas;
            if (pan_active) {
                const HybridPromptSet hybrid = build_hybrid_set(
                    prompt, cfg.pan.positions, cfg.pan.tau,
                    run_rng.fork("hybrid").fork(epoch).fork(batch_idx));
                const PredictionMatrix preds =
                    predict_with_prompts(hybrid, enc, task, batch_feats, cfg.temperature);
                ++event.preinference_passes;
                alphas = pan_alphas(preds, batch_labels, cfg.pan.omega * mult);
                rec.alpha_nonzero += alphas.nonzero_count;
                event.alphas = alphas;
            }

            try {
                Tape tape;
                const std::vector<Tensor> rows = track_rows(tape, prompt);
                const std::vector<Tensor> text = class_text_features(enc, task, rows);
                const Tensor ce =
                    ce_loss(batch_feats, text, batch_labels, CEConfig{cfg.temperature});
                const Tensor pun =
                    pun_active ? pun_loss(rows, PUNConfig{cfg.pun.omega * mult, cfg.pun.norm})
                               : Tensor::scalar(0.0);
                const Tensor pan =
                    pan_active ? pan_loss(rows, alphas, cfg.pan.norm) : Tensor::scalar(0.0);
                Tensor total = ce;
                switch (cfg.mode) {
                    case LossMode::ce_only: break;
                    case LossMode::with_pun: total = total_loss(ce, pun, pan, 1.0); break;
                    case LossMode::with_pan: total = total_loss(ce, pun, pan, 0.0); break;
                    case LossMode::with_both: total = total_loss(ce, pun, pan, cfg.beta); break;
                }

                event.ce = ce.scalar_value();
                event.pun = pun.scalar_value();
                event.pan = pan.scalar_value();
                event.total = total.scalar_value();
                rec.ce += event.ce;
                rec.pun += event.pun;
                rec.pan += event.pan;
                rec.total += event.total;

                if (hook && pan_active) {
                    // The observer sees the penalty-only gradient at the
                    // pre-update prompt, recorded on its own tape so the
                    // training tape stays untouched.
                    event.pan_row_gradients.assign(m.prompt_len,
                                                   std::vector<double>(m.embed_dim, 0.0));
                    if (alphas.nonzero_count > 0) {
                        Tape side;
                        const std::vector<Tensor> side_rows = track_rows(side, prompt);
                        const Gradients g =
                            backward(side, pan_loss(side_rows, alphas, cfg.pan.norm));
                        for (std::size_t j = 0; j < m.prompt_len; ++j) {
                            event.pan_row_gradients[j] = g.at(side_rows[j]).data();
                        }
                    }
                }

                const Gradients grads = backward(tape, total);
                for (std::size_t j = 1; j <= m.prompt_len; ++j) {
                    const Tensor& g = grads.at(rows[j - 1]);
                    std::vector<double> row = prompt.row(j);
                    auto& vel = velocity[j - 1];
                    for (std::size_t i = 0; i < row.size(); ++i) {
                        if (cfg.optimizer == OptimizerKind::momentum) {
                            vel[i] = cfg.momentum * vel[i] + g.at(i);
                            row[i] -= cfg.learning_rate * vel[i];
                        } else {
                            row[i] -= cfg.learning_rate * g.at(i);
                        }
                    }
                    prompt.set_row(j, std::move(row));
                }
            } catch (const ValueError& e) {
                throw DivergenceError(
                    "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch_idx) + " (seed " + std::to_string(cfg.run_seed) +
                    ", lr " + format_double(cfg.learning_rate) + "): " + e.what());
            }

            if (hook) {
                hook(event);
            }
        }

        rec.test_accuracy = evaluate_accuracy(enc, task, prompt, test_feats, task.test_labels,
                                              cfg.temperature);
        const PromptNorms norms = prompt_norms(prompt, trace_norm);
        rec.mean_norm = norms.mean;
        rec.per_position_norms = norms.per_position;
        report.trace.epochs.push_back(std::move(rec));
    }

    report.final_test_accuracy = report.trace.epochs.back().test_accuracy;
    report.final_mean_norm = report.trace.epochs.back().mean_norm;
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(prompt), std::move(report)};
}

struct SeedRun {
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    std::optional<RunReport> report;
    std::optional<SoftPrompt> prompt;
};

struct MultiSeedReport {
    std::vector<SeedRun> runs;  // ascending seed order
    double mean_final_accuracy = 0.0;
    double std_final_accuracy = 0.0;  // population std over successful runs
    std::size_t failed_count = 0;
};

/// Runs one training per seed (ascending order, duplicates dropped) and
/// aggregates final accuracies. A failing seed is recorded, not fatal.
/// Parallel mode fans seeds out to async workers; the merge order is the
/// sorted seed order either way, so outputs are identical byte for byte.
inline MultiSeedReport multi_seed(const TrainConfig& base, std::vector<std::uint64_t> seeds,
                                  bool parallel = false, const BatchHook& hook = {}) {
    if (seeds.empty()) {
        throw ContractError("multi_seed needs at least one seed");
    }
    if (parallel && hook) {
        throw ContractError("batch observers require serial execution");
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

    const auto run_one = [&base, &hook](std::uint64_t seed) {
        SeedRun r;
        r.seed = seed;
        try {
            TrainConfig cfg = base;
            cfg.run_seed = seed;
            TrainResult res = train(cfg, hook);
            r.report = std::move(res.report);
            r.prompt = std::move(res.prompt);
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
        }
        return r;
    };

    MultiSeedReport out;
    out.runs.reserve(seeds.size());
    if (parallel) {
        std::vector<std::future<SeedRun>> futures;
        futures.reserve(seeds.size());
        for (const std::uint64_t s : seeds) {
            futures.push_back(std::async(std::launch::async, run_one, s));
        }
        for (auto& f : futures) {
            out.runs.push_back(f.get());
        }
    } else {
        for (const std::uint64_t s : seeds) {
            out.runs.push_back(run_one(s));
        }
    }

    std::vector<double> accs;
    for (const SeedRun& r : out.runs) {
        if (r.failed) {
            ++out.failed_count;
        } else {
            accs.push_back(r.report->final_test_accuracy);
        }
    }
    if (!accs.empty()) {
        out.mean_final_accuracy = detail::mean_of(accs);
        double var = 0.0;
        for (const double a : accs) {
            var += (a - out.mean_final_accuracy) * (a - out.mean_final_accuracy);
        }
        out.std_final_accuracy = std::sqrt(var / static_cast<double>(accs.size()));
    }
    return out;
}

// ---------------------------------------------------------------------
// Corruption sweep and frequency counting.
// ---------------------------------------------------------------------

enum class CorruptionArm { replace_arm, rescale_arm };

inline const char* to_string(CorruptionArm a) {
    return a == CorruptionArm::replace_arm ? "replace" : "rescale";
}

struct SweepGrid {
    CorruptionArm arm = CorruptionArm::replace_arm;
    std::vector<double> parameters;
};

/// The two corruption grids used throughout: Gaussian replacement noise
/// levels and rescaling factors (the last factor is norm-increasing).
inline std::vector<SweepGrid> default_sweep_grids() {
    return {{CorruptionArm::replace_arm, {0.0, 0.001, 0.01, 0.1, 0.5}},
            {CorruptionArm::rescale_arm, {0.001, 0.01, 0.1, 0.5, 2.0}}};
}

/// One (arm, parameter, position) measurement, seed-resolved.
struct SweepCell {
    CorruptionArm arm = CorruptionArm::replace_arm;
    double parameter = 0.0;
    std::size_t position = 0;  // 1-based
    std::vector<double> accuracy_per_seed;
    std::vector<double> norm_after_per_seed;
    double mean_accuracy = 0.0;
    double mean_norm_after = 0.0;
    double norm_before = 0.0;
    double delta = 0.0;  // mean_accuracy - baseline
    bool exceeds = false;
};

/// Per (arm, parameter) rollup: how many positions beat the baseline, and
/// whether the parameter lowered row norms (measured, never assumed).
struct ArmParamStat {
    CorruptionArm arm = CorruptionArm::replace_arm;
    double parameter = 0.0;
    std::size_t exceed_count = 0;
    bool norm_decreasing = false;
};

struct FrequencyTable {
    std::vector<std::uint64_t> seeds;  // ascending
    std::vector<double> baseline_per_seed;
    double baseline_accuracy = 0.0;    // seed mean
    std::size_t prompt_length = 0;
    std::vector<SweepCell> cells;      // grid order, then parameter, then position
    std::vector<ArmParamStat> stats;
};

/// Corrupts the prompt one position at a time across both grids and scores
/// every variant on the full test split. Replacement noise is keyed by
/// (seed, parameter index, position) so serial and parallel execution see
/// the same draws; all accuracies are averaged over seeds before the
/// strict exceedance comparison against the uncorrupted baseline.
inline FrequencyTable corruption_sweep(const SoftPrompt& prompt, const FrozenEncoders& enc,
                                       const FrozenTask& task, std::span<const SweepGrid> grids,
                                       std::vector<std::uint64_t> seeds, double lambda,
                                       bool parallel = false) {
    if (seeds.empty()) {
        throw ContractError("corruption sweep needs at least one seed");
    }
    for (const SweepGrid& g : grids) {
        if (g.parameters.empty()) {
            throw ConfigError("sweep grid has no parameters");
        }
    }
    std::sort(seeds.begin(), seeds.end());
    seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

    std::vector<Tensor> test_feats;
    test_feats.reserve(task.test_images.size());
    for (const Tensor& x : task.test_images) {
        test_feats.push_back(encode_image(enc, x));
    }

    FrequencyTable table;
    table.seeds = seeds;
    table.prompt_length = prompt.length();
    // One baseline per (seed, prompt), reused by every cell of the sweep.
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        table.baseline_per_seed.push_back(
            evaluate_accuracy(enc, task, prompt, test_feats, task.test_labels, lambda));
    }
    table.baseline_accuracy = detail::mean_of(table.baseline_per_seed);

    const PromptNorms base_norms = prompt_norms(prompt, NormKind::two);

    const auto eval_cell = [&](CorruptionArm arm, std::size_t param_index, double parameter,
                               std::size_t position) {
        SweepCell cell;
        cell.arm = arm;
        cell.parameter = parameter;
        cell.position = position;
        cell.norm_before = base_norms.per_position[position - 1];
        for (const std::uint64_t seed : seeds) {
            SoftPrompt corrupted =
                arm == CorruptionArm::replace_arm
                    ? replace(prompt, position, 0.0, parameter,
                              SplitRng(seed).fork("sweep-replace").fork(param_index).fork(position))
                    : rescale(prompt, position, parameter);
            cell.accuracy_per_seed.push_back(evaluate_accuracy(enc, task, corrupted, test_feats,
                                                               task.test_labels, lambda));
            cell.norm_after_per_seed.push_back(
                detail::pnorm_value(corrupted.row(position), NormKind::two));
        }
        cell.mean_accuracy = detail::mean_of(cell.accuracy_per_seed);
        cell.mean_norm_after = detail::mean_of(cell.norm_after_per_seed);
        cell.delta = cell.mean_accuracy - table.baseline_accuracy;
        cell.exceeds = cell.mean_accuracy > table.baseline_accuracy;
        return cell;
    };

    for (const SweepGrid& grid : grids) {
        for (std::size_t pi = 0; pi < grid.parameters.size(); ++pi) {
            const double parameter = grid.parameters[pi];
            std::vector<SweepCell> row_cells;
            if (parallel) {
                std::vector<std::future<SweepCell>> futures;
                futures.reserve(prompt.length());
                for (std::size_t j = 1; j <= prompt.length(); ++j) {
                    futures.push_back(std::async(std::launch::async, eval_cell, grid.arm, pi,
                                                 parameter, j));
                }
                for (auto& f : futures) {
                    row_cells.push_back(f.get());
                }
            } else {
                for (std::size_t j = 1; j <= prompt.length(); ++j) {
                    row_cells.push_back(eval_cell(grid.arm, pi, parameter, j));
                }
            }
            ArmParamStat stat;
            stat.arm = grid.arm;
            stat.parameter = parameter;
            double norm_before_sum = 0.0;
            double norm_after_sum = 0.0;
            for (SweepCell& cell : row_cells) {
                stat.exceed_count += cell.exceeds;
                norm_before_sum += cell.norm_before;
                norm_after_sum += cell.mean_norm_after;
                table.cells.push_back(std::move(cell));
            }
            stat.norm_decreasing = norm_after_sum < norm_before_sum;
            table.stats.push_back(stat);
        }
    }
    return table;
}

struct LowNormSummary {
    std::size_t low_norm_total = 0;   // exceedances under norm-reducing parameters
    std::size_t high_norm_total = 0;  // exceedances under norm-increasing parameters
};

/// Sums exceedance counts over the measured norm-reducing parameters; the
/// norm-increasing side is reported separately and never mixed in.
inline LowNormSummary count_low_norm_occurrences(const FrequencyTable& table) {
    LowNormSummary summary;
    for (const ArmParamStat& stat : table.stats) {
        if (stat.norm_decreasing) {
            summary.low_norm_total += stat.exceed_count;
        } else {
            summary.high_norm_total += stat.exceed_count;
        }
    }
    return summary;
}

/// Plot-ready CSV: epoch, test accuracy, mean norm, then one column per
/// position. First element is the header row.
inline std::vector<std::string> norm_telemetry(const NormTrace& trace) {
    if (trace.epochs.empty()) {
        throw ContractError("norm telemetry needs at least one epoch");
    }
    const std::size_t l = trace.epochs.front().per_position_norms.size();
    std::string header = "epoch,test_accuracy,mean_norm";
    for (std::size_t j = 1; j <= l; ++j) {
        header += ",norm_" + std::to_string(j);
    }
    std::vector<std::string> rows{std::move(header)};
    for (const EpochRecord& rec : trace.epochs) {
        if (rec.per_position_norms.size() != l) {
            throw ContractError("inconsistent per-position norm count in trace");
        }
        std::string row = std::to_string(rec.epoch);
        row += ',' + format_double(rec.test_accuracy);
        row += ',' + format_double(rec.mean_norm);
        for (const double n : rec.per_position_norms) {
            row += ',' + format_double(n);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace promptnorm
