#pragma once

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptnorm/checkpoint.hpp"
#include "promptnorm/errors.hpp"
#include "promptnorm/format.hpp"
#include "promptnorm/harness.hpp"

namespace promptnorm {

// --- JSON bindings -------------------------------------------------------
// Enums travel as the same strings the CLI and config files use.

inline void to_json(nlohmann::json& j, const PUNConfig& c) {
    j = {{"omega", c.omega}, {"norm", to_string(c.norm)}};
}

inline void from_json(const nlohmann::json& j, PUNConfig& c) {
    j.at("omega").get_to(c.omega);
    const std::string n = j.at("norm").get<std::string>();
    c.norm = n == "one" ? NormKind::one : n == "two" ? NormKind::two : NormKind::inf;
}

inline void to_json(nlohmann::json& j, const PANConfig& c) {
    j = {{"omega", c.omega},
         {"tau", c.tau},
         {"positions", c.positions},
         {"norm", to_string(c.norm)}};
}

inline void from_json(const nlohmann::json& j, PANConfig& c) {
    j.at("omega").get_to(c.omega);
    j.at("tau").get_to(c.tau);
    j.at("positions").get_to(c.positions);
    const std::string n = j.at("norm").get<std::string>();
    c.norm = n == "one" ? NormKind::one : n == "two" ? NormKind::two : NormKind::inf;
}

inline void to_json(nlohmann::json& j, const OmegaSchedule& s) {
    j = {{"enabled", s.enabled}, {"k", s.k}, {"max_epochs", s.max_epochs}};
}

inline void from_json(const nlohmann::json& j, OmegaSchedule& s) {
    j.at("enabled").get_to(s.enabled);
    j.at("k").get_to(s.k);
    j.at("max_epochs").get_to(s.max_epochs);
}

inline void to_json(nlohmann::json& j, const ModelConfig& m) {
    j = {{"classes", m.classes},
         {"prompt_len", m.prompt_len},
         {"embed_dim", m.embed_dim},
         {"image_dim", m.image_dim},
         {"feature_dim", m.feature_dim},
         {"shots", m.shots},
         {"test_per_class", m.test_per_class},
         {"data_noise", m.data_noise},
         {"encoder_seed", m.encoder_seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& m) {
    j.at("classes").get_to(m.classes);
    j.at("prompt_len").get_to(m.prompt_len);
    j.at("embed_dim").get_to(m.embed_dim);
    j.at("image_dim").get_to(m.image_dim);
    j.at("feature_dim").get_to(m.feature_dim);
    j.at("shots").get_to(m.shots);
    j.at("test_per_class").get_to(m.test_per_class);
    j.at("data_noise").get_to(m.data_noise);
    j.at("encoder_seed").get_to(m.encoder_seed);
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"model", c.model},
         {"task_seed", c.task_seed},
         {"run_seed", c.run_seed},
         {"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"optimizer", to_string(c.optimizer)},
         {"momentum", c.momentum},
         {"mode", to_string(c.mode)},
         {"beta", c.beta},
         {"temperature", c.temperature},
         {"prompt_init_std", c.prompt_init_std},
         {"pun", c.pun},
         {"pan", c.pan},
         {"schedule", c.schedule}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("model").get_to(c.model);
    j.at("task_seed").get_to(c.task_seed);
    j.at("run_seed").get_to(c.run_seed);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("learning_rate").get_to(c.learning_rate);
    c.optimizer = j.at("optimizer").get<std::string>() == "momentum" ? OptimizerKind::momentum
                                                                     : OptimizerKind::sgd;
    j.at("momentum").get_to(c.momentum);
    c.mode = detail::mode_from_string(j.at("mode").get<std::string>());
    j.at("beta").get_to(c.beta);
    j.at("temperature").get_to(c.temperature);
    j.at("prompt_init_std").get_to(c.prompt_init_std);
    j.at("pun").get_to(c.pun);
    j.at("pan").get_to(c.pan);
    j.at("schedule").get_to(c.schedule);
}

inline void to_json(nlohmann::json& j, const EpochRecord& r) {
    j = {{"epoch", r.epoch},
         {"ce", r.ce},
         {"pun", r.pun},
         {"pan", r.pan},
         {"total", r.total},
         {"test_accuracy", r.test_accuracy},
         {"mean_norm", r.mean_norm},
         {"per_position_norms", r.per_position_norms},
         {"alpha_nonzero", r.alpha_nonzero},
         {"omega_multiplier", r.omega_multiplier}};
}

inline void from_json(const nlohmann::json& j, EpochRecord& r) {
    j.at("epoch").get_to(r.epoch);
    j.at("ce").get_to(r.ce);
    j.at("pun").get_to(r.pun);
    j.at("pan").get_to(r.pan);
    j.at("total").get_to(r.total);
    j.at("test_accuracy").get_to(r.test_accuracy);
    j.at("mean_norm").get_to(r.mean_norm);
    j.at("per_position_norms").get_to(r.per_position_norms);
    j.at("alpha_nonzero").get_to(r.alpha_nonzero);
    j.at("omega_multiplier").get_to(r.omega_multiplier);
}

inline void to_json(nlohmann::json& j, const NormTrace& t) {
    j = {{"epochs", t.epochs}};
}

inline void from_json(const nlohmann::json& j, NormTrace& t) {
    j.at("epochs").get_to(t.epochs);
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
    j = {{"config", r.config},
         {"seed", r.seed},
         {"trace", r.trace},
         {"initial_mean_norm", r.initial_mean_norm},
         {"final_mean_norm", r.final_mean_norm},
         {"final_test_accuracy", r.final_test_accuracy},
         {"checkpoint_file", r.checkpoint_file},
         {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
    j.at("config").get_to(r.config);
    j.at("seed").get_to(r.seed);
    j.at("trace").get_to(r.trace);
    j.at("initial_mean_norm").get_to(r.initial_mean_norm);
    j.at("final_mean_norm").get_to(r.final_mean_norm);
    j.at("final_test_accuracy").get_to(r.final_test_accuracy);
    j.at("checkpoint_file").get_to(r.checkpoint_file);
    j.at("wall_clock_seconds").get_to(r.wall_clock_seconds);
}

// --- Equality (used by round-trip tests and determinism checks) ----------

inline bool operator==(const PUNConfig& a, const PUNConfig& b) {
    return a.omega == b.omega && a.norm == b.norm;
}

inline bool operator==(const PANConfig& a, const PANConfig& b) {
    return a.omega == b.omega && a.tau == b.tau && a.positions == b.positions && a.norm == b.norm;
}

inline bool operator==(const OmegaSchedule& a, const OmegaSchedule& b) {
    return a.enabled == b.enabled && a.k == b.k && a.max_epochs == b.max_epochs;
}

inline bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.classes == b.classes && a.prompt_len == b.prompt_len && a.embed_dim == b.embed_dim &&
           a.image_dim == b.image_dim && a.feature_dim == b.feature_dim && a.shots == b.shots &&
           a.test_per_class == b.test_per_class && a.data_noise == b.data_noise &&
           a.encoder_seed == b.encoder_seed;
}

inline bool operator==(const TrainConfig& a, const TrainConfig& b) {
    return a.model == b.model && a.task_seed == b.task_seed && a.run_seed == b.run_seed &&
           a.epochs == b.epochs && a.batch_size == b.batch_size &&
           a.learning_rate == b.learning_rate && a.optimizer == b.optimizer &&
           a.momentum == b.momentum && a.mode == b.mode && a.beta == b.beta &&
           a.temperature == b.temperature && a.prompt_init_std == b.prompt_init_std &&
           a.pun == b.pun && a.pan == b.pan && a.schedule == b.schedule;
}

inline bool operator==(const EpochRecord& a, const EpochRecord& b) {
    return a.epoch == b.epoch && a.ce == b.ce && a.pun == b.pun && a.pan == b.pan &&
           a.total == b.total && a.test_accuracy == b.test_accuracy &&
           a.mean_norm == b.mean_norm && a.per_position_norms == b.per_position_norms &&
           a.alpha_nonzero == b.alpha_nonzero && a.omega_multiplier == b.omega_multiplier;
}

inline bool operator==(const NormTrace& a, const NormTrace& b) {
    return a.epochs == b.epochs;
}

inline bool operator==(const RunReport& a, const RunReport& b) {
    return a.config == b.config && a.seed == b.seed && a.trace == b.trace &&
           a.initial_mean_norm == b.initial_mean_norm && a.final_mean_norm == b.final_mean_norm &&
           a.final_test_accuracy == b.final_test_accuracy &&
           a.checkpoint_file == b.checkpoint_file &&
           a.wall_clock_seconds == b.wall_clock_seconds;
}

// --- CSV emission ---------------------------------------------------------

inline std::string trace_csv(const NormTrace& trace) {
    std::string out;
    for (const std::string& row : norm_telemetry(trace)) {
        out += row;
        out += '\n';
    }
    return out;
}

inline constexpr const char* kFrequencyCsvHeader =
    "arm,parameter,position,accuracy_base,accuracy_corrupted,delta,norm_before,norm_after,"
    "exceeds";

inline std::string frequency_csv(const FrequencyTable& table) {
    std::string out = kFrequencyCsvHeader;
    out += '\n';
    for (const SweepCell& cell : table.cells) {
        out += to_string(cell.arm);
        out += ',';
        out += format_double(cell.parameter);
        out += ',';
        out += std::to_string(cell.position);
        out += ',';
        out += format_double(table.baseline_accuracy);
        out += ',';
        out += format_double(cell.mean_accuracy);
        out += ',';
        out += format_double(cell.delta);
        out += ',';
        out += format_double(cell.norm_before);
        out += ',';
        out += format_double(cell.mean_norm_after);
        out += ',';
        out += cell.exceeds ? '1' : '0';
        out += '\n';
    }
    return out;
}

/// Rebuilds the parts of a FrequencyTable that frequency.csv carries: cells
/// with per-seed detail collapsed to means, plus per-arm/parameter stats.
inline FrequencyTable parse_frequency_csv(const std::string& text) {
    FrequencyTable table;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("frequency csv is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kFrequencyCsvHeader) {
        throw IoError("frequency csv has unexpected header '" + line + "'");
    }
    bool have_baseline = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 9) {
            throw IoError("frequency csv row has " + std::to_string(fields.size()) +
                          " fields, expected 9: '" + line + "'");
        }
        SweepCell cell;
        if (fields[0] == "replace") {
            cell.arm = CorruptionArm::replace_arm;
        } else if (fields[0] == "rescale") {
            cell.arm = CorruptionArm::rescale_arm;
        } else {
            throw IoError("frequency csv has unknown arm '" + fields[0] + "'");
        }
        try {
            cell.parameter = std::stod(fields[1]);
            cell.position = static_cast<std::size_t>(std::stoull(fields[2]));
            const double base = std::stod(fields[3]);
            cell.mean_accuracy = std::stod(fields[4]);
            cell.delta = std::stod(fields[5]);
            cell.norm_before = std::stod(fields[6]);
            cell.mean_norm_after = std::stod(fields[7]);
            cell.exceeds = fields[8] == "1";
            if (!have_baseline) {
                table.baseline_accuracy = base;
                have_baseline = true;
            } else if (table.baseline_accuracy != base) {
                throw IoError("frequency csv baseline differs between rows");
            }
        } catch (const IoError&) {
            throw;
        } catch (const std::exception&) {
            throw IoError("frequency csv has a malformed numeric field: '" + line + "'");
        }
        table.cells.push_back(cell);
        table.prompt_length = std::max(table.prompt_length, cell.position);
    }
    // Rebuild per-arm/parameter stats in first-appearance order.
    for (const SweepCell& cell : table.cells) {
        ArmParamStat* stat = nullptr;
        for (ArmParamStat& s : table.stats) {
            if (s.arm == cell.arm && s.parameter == cell.parameter) {
                stat = &s;
                break;
            }
        }
        if (stat == nullptr) {
            table.stats.push_back({cell.arm, cell.parameter, 0, true});
            stat = &table.stats.back();
        }
        if (cell.exceeds) ++stat->exceed_count;
    }
    for (ArmParamStat& s : table.stats) {
        double before = 0.0;
        double after = 0.0;
        for (const SweepCell& cell : table.cells) {
            if (cell.arm == s.arm && cell.parameter == s.parameter) {
                before += cell.norm_before;
                after += cell.mean_norm_after;
            }
        }
        s.norm_decreasing = after < before;
    }
    return table;
}

// --- File emission ---------------------------------------------------------

/// Writes trace.csv and report.json for a run; when a sweep table is given,
/// also writes frequency.csv (header-only for an empty sweep).
inline void emit_reports(const RunReport& run, const std::string& out_dir,
                         const FrequencyTable* table = nullptr) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
    detail::write_text_atomic(fs::path(out_dir) / "trace.csv", trace_csv(run.trace));
    nlohmann::json j = run;
    detail::write_text_atomic(fs::path(out_dir) / "report.json", j.dump(2) + "\n");
    if (table != nullptr) {
        detail::write_text_atomic(fs::path(out_dir) / "frequency.csv", frequency_csv(*table));
    }
}

inline void emit_frequency(const FrequencyTable& table, const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
    detail::write_text_atomic(fs::path(out_dir) / "frequency.csv", frequency_csv(table));
}

inline RunReport load_report(const std::string& path) {
    const std::string text = detail::read_text(path, "report");
    try {
        return nlohmann::json::parse(text).get<RunReport>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse report '" + path + "': " + e.what());
    }
}

}  // namespace promptnorm
