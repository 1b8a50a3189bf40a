#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptnorm/checkpoint.hpp"
#include "promptnorm/config.hpp"
#include "promptnorm/errors.hpp"
#include "promptnorm/format.hpp"
#include "promptnorm/harness.hpp"
#include "promptnorm/reports.hpp"
#include "promptnorm/selfcheck.hpp"

namespace promptnorm {

namespace cli {

inline void print_sweep_summary(const FrequencyTable& table, std::ostream& out) {
    out << "baseline accuracy " << format_double(table.baseline_accuracy) << "\n";
    for (const ArmParamStat& s : table.stats) {
        out << to_string(s.arm) << " " << format_double(s.parameter) << ": exceedances "
            << s.exceed_count << "/" << table.prompt_length
            << (s.norm_decreasing ? " (norm-decreasing)" : " (norm-increasing)") << "\n";
    }
    const LowNormSummary summary = count_low_norm_occurrences(table);
    out << "low-norm exceedances " << summary.low_norm_total << ", high-norm exceedances "
        << summary.high_norm_total << "\n";
}

inline int run_train(const ConfigDocument& doc, std::ostream& out) {
    const MultiSeedReport rep = multi_seed(doc.train, doc.seeds, doc.io.parallel);
    namespace fs = std::filesystem;
    for (const SeedRun& run : rep.runs) {
        if (run.failed) {
            out << "seed " << run.seed << ": FAILED (" << run.error << ")\n";
            continue;
        }
        const fs::path dir = fs::path(doc.io.out_dir) / ("seed_" + std::to_string(run.seed));
        RunReport report = *run.report;
        report.checkpoint_file = "prompt.json";
        emit_reports(report, dir.string());
        save_checkpoint(make_checkpoint(*run.prompt, report.config, report.config.epochs),
                        (dir / "prompt.json").string());
        out << "seed " << run.seed << ": accuracy " << format_double(report.final_test_accuracy)
            << ", mean norm " << format_double(report.initial_mean_norm) << " -> "
            << format_double(report.final_mean_norm) << "\n";
    }
    if (rep.runs.size() > rep.failed_count) {
        out << "mean accuracy " << format_double(rep.mean_final_accuracy) << " (std "
            << format_double(rep.std_final_accuracy) << ") over "
            << (rep.runs.size() - rep.failed_count) << " seed(s), artifacts under "
            << doc.io.out_dir << "\n";
    }
    return rep.failed_count == 0 ? 0 : 3;
}

inline int run_sweep(const ConfigDocument& doc, const std::string& checkpoint_path,
                     std::ostream& out) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const ModelConfig& m = doc.train.model;
    if (ck.embed_dim != m.embed_dim || ck.prompt_len != m.prompt_len) {
        throw ConfigError("checkpoint geometry (L=" + std::to_string(ck.prompt_len) +
                          ", D=" + std::to_string(ck.embed_dim) +
                          ") does not match the configured model (L=" +
                          std::to_string(m.prompt_len) + ", D=" + std::to_string(m.embed_dim) +
                          ")");
    }
    // The checkpoint's stored seeds pin the exact frozen encoders and task
    // the prompt was trained against.
    const FrozenEncoders enc =
        build_encoders(ck.encoder_seed, m.prompt_len, m.embed_dim, m.image_dim, m.feature_dim);
    const FrozenTask task = generate_task(ck.task_seed, m.classes, m.embed_dim, m.image_dim,
                                          m.shots, m.test_per_class, m.data_noise);
    const std::vector<SweepGrid> grids{
        {CorruptionArm::replace_arm, doc.sweep.replace_sigmas},
        {CorruptionArm::rescale_arm, doc.sweep.rescale_factors},
    };
    const FrequencyTable table = corruption_sweep(to_prompt(ck), enc, task, grids, doc.seeds,
                                                  doc.train.temperature, doc.io.parallel);
    emit_frequency(table, doc.io.out_dir);
    out << "sweep of " << checkpoint_path << " (task seed " << ck.task_seed << ", encoder seed "
        << ck.encoder_seed << ")\n";
    print_sweep_summary(table, out);
    out << "frequency table written to " << doc.io.out_dir << "/frequency.csv\n";
    return 0;
}

inline int run_report(const std::string& in_dir, std::ostream& out) {
    namespace fs = std::filesystem;
    bool found = false;
    const fs::path report_path = fs::path(in_dir) / "report.json";
    if (fs::exists(report_path)) {
        found = true;
        const RunReport r = load_report(report_path.string());
        out << "run: seed " << r.seed << ", mode " << to_string(r.config.mode) << ", "
            << r.config.epochs << " epochs\n";
        out << "final accuracy " << format_double(r.final_test_accuracy) << "\n";
        out << "prompt mean norm " << format_double(r.initial_mean_norm) << " -> "
            << format_double(r.final_mean_norm) << "\n";
        if (!r.trace.epochs.empty()) {
            const EpochRecord& last = r.trace.epochs.back();
            out << "final losses: ce " << format_double(last.ce) << ", pun "
                << format_double(last.pun) << ", pan " << format_double(last.pan) << ", total "
                << format_double(last.total) << "\n";
        }
    }
    const fs::path freq_path = fs::path(in_dir) / "frequency.csv";
    if (fs::exists(freq_path)) {
        found = true;
        const FrequencyTable table =
            parse_frequency_csv(detail::read_text(freq_path, "frequency table"));
        out << "corruption sweep over " << table.cells.size() << " cells\n";
        print_sweep_summary(table, out);
    }
    if (!found) {
        throw IoError("no report.json or frequency.csv under '" + in_dir + "'");
    }
    return 0;
}

}  // namespace cli

inline int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"soft-prompt tuner with norm penalties, corruption sweeps, and norm telemetry"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    std::string out_dir;
    app.add_option("--config", config_path, "sectioned key=value config file")
        ->option_text("FILE");
    app.add_option("--set", overrides, "override one config key (section.key=value); repeatable")
        ->expected(1)
        ->option_text("KEY=VAL");
    CLI::Option* seed_opt =
        app.add_option("--seed", seed, "replace the configured seed list with this one seed");
    CLI::Option* out_dir_opt = app.add_option("--out-dir", out_dir, "output directory");

    CLI::App* train_cmd = app.add_subcommand("train", "train a soft prompt and emit artifacts");
    train_cmd->fallthrough();
    CLI::App* sweep_cmd =
        app.add_subcommand("sweep", "run a corruption sweep over a saved checkpoint");
    sweep_cmd->fallthrough();
    std::string checkpoint_path;
    sweep_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint written by train")
        ->required()
        ->option_text("FILE");
    CLI::App* report_cmd =
        app.add_subcommand("report", "summarize emitted artifacts and low-norm counts");
    report_cmd->fallthrough();
    std::string in_dir;
    report_cmd->add_option("--in", in_dir, "directory holding report.json or frequency.csv")
        ->option_text("DIR");
    CLI::App* selfcheck_cmd =
        app.add_subcommand("selfcheck", "verify gradients and invariants, one line each");
    selfcheck_cmd->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (selfcheck_cmd->parsed()) {
            const std::size_t failures = print_selfchecks(out);
            return failures == 0 ? 0 : 3;
        }

        ConfigDocument doc =
            config_path.empty() ? ConfigDocument{} : load_config_file(config_path);
        for (const std::string& assignment : overrides) {
            apply_override(doc, assignment);
        }
        if (seed_opt->count() > 0) {
            doc.seeds = {seed};
        }
        if (out_dir_opt->count() > 0) {
            doc.io.out_dir = out_dir;
        }
        validate(doc);

        if (train_cmd->parsed()) {
            return cli::run_train(doc, out);
        }
        if (sweep_cmd->parsed()) {
            return cli::run_sweep(doc, checkpoint_path, out);
        }
        if (report_cmd->parsed()) {
            return cli::run_report(in_dir.empty() ? doc.io.out_dir : in_dir, out);
        }
        err << "usage error: no subcommand\n";
        return 1;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("promptnorm");
    for (const std::string& a : args) {
        argv.push_back(a.c_str());
    }
    return cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace promptnorm
