#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "promptnorm/errors.hpp"
#include "promptnorm/harness.hpp"

namespace promptnorm {

struct SweepConfig {
    std::vector<double> replace_sigmas{0.0, 0.001, 0.01, 0.1, 0.5};
    std::vector<double> rescale_factors{0.001, 0.01, 0.1, 0.5, 2.0};
};

struct IoConfig {
    std::string out_dir = "out";
    bool parallel = false;
};

/// Everything a CLI invocation needs: training recipe, the seed list to fan
/// out over, sweep grids, and output options.
struct ConfigDocument {
    TrainConfig train;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    SweepConfig sweep;
    IoConfig io;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

struct KeyContext {
    const std::string& file;
    std::size_t line;
    const std::string& section;
    const std::string& key;

    [[noreturn]] void fail(const std::string& reason) const {
        throw ConfigError(file + ":" + std::to_string(line) + ": [" + section + "] " + key +
                          ": " + reason);
    }
};

inline double parse_double_value(const KeyContext& ctx, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) ctx.fail("trailing characters after number '" + value + "'");
        return v;
    } catch (const std::exception&) {
        ctx.fail("expected a number, got '" + value + "'");
    }
}

inline std::uint64_t parse_u64_value(const KeyContext& ctx, const std::string& value) {
    std::uint64_t v = 0;
    const char* first = value.data();
    const char* last = first + value.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        ctx.fail("expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

inline std::size_t parse_size_value(const KeyContext& ctx, const std::string& value) {
    return static_cast<std::size_t>(parse_u64_value(ctx, value));
}

inline bool parse_bool_value(const KeyContext& ctx, const std::string& value) {
    if (value == "on" || value == "true" || value == "1") return true;
    if (value == "off" || value == "false" || value == "0") return false;
    ctx.fail("expected on/off, got '" + value + "'");
}

inline NormKind parse_norm_value(const KeyContext& ctx, const std::string& value) {
    if (value == "one" || value == "1") return NormKind::one;
    if (value == "two" || value == "2") return NormKind::two;
    if (value == "inf") return NormKind::inf;
    ctx.fail("expected one/two/inf, got '" + value + "'");
}

inline LossMode parse_mode_value(const KeyContext& ctx, const std::string& value) {
    if (value == "ce") return LossMode::ce_only;
    if (value == "pun") return LossMode::with_pun;
    if (value == "pan") return LossMode::with_pan;
    if (value == "both") return LossMode::with_both;
    ctx.fail("expected ce/pun/pan/both, got '" + value + "'");
}

inline OptimizerKind parse_optimizer_value(const KeyContext& ctx, const std::string& value) {
    if (value == "sgd") return OptimizerKind::sgd;
    if (value == "momentum") return OptimizerKind::momentum;
    ctx.fail("expected sgd/momentum, got '" + value + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list_value(const KeyContext& ctx, const std::string& value, Parse parse) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        if (t.empty()) ctx.fail("empty element in list '" + value + "'");
        out.push_back(parse(ctx, t));
    }
    if (out.empty()) ctx.fail("list must not be empty");
    return out;
}

inline void set_key(ConfigDocument& doc, const KeyContext& ctx, const std::string& value) {
    const std::string& s = ctx.section;
    const std::string& k = ctx.key;
    TrainConfig& t = doc.train;
    if (s == "model") {
        ModelConfig& m = t.model;
        if (k == "classes") m.classes = parse_size_value(ctx, value);
        else if (k == "prompt_len") m.prompt_len = parse_size_value(ctx, value);
        else if (k == "embed_dim") m.embed_dim = parse_size_value(ctx, value);
        else if (k == "image_dim") m.image_dim = parse_size_value(ctx, value);
        else if (k == "feature_dim") m.feature_dim = parse_size_value(ctx, value);
        else if (k == "shots") m.shots = parse_size_value(ctx, value);
        else if (k == "test_per_class") m.test_per_class = parse_size_value(ctx, value);
        else if (k == "data_noise") m.data_noise = parse_double_value(ctx, value);
        else if (k == "encoder_seed") m.encoder_seed = parse_u64_value(ctx, value);
        else ctx.fail("unknown key");
    } else if (s == "train") {
        if (k == "task_seed") t.task_seed = parse_u64_value(ctx, value);
        else if (k == "seeds")
            doc.seeds = parse_list_value<std::uint64_t>(ctx, value, parse_u64_value);
        else if (k == "epochs") t.epochs = parse_size_value(ctx, value);
        else if (k == "batch_size") t.batch_size = parse_size_value(ctx, value);
        else if (k == "learning_rate") t.learning_rate = parse_double_value(ctx, value);
        else if (k == "optimizer") t.optimizer = parse_optimizer_value(ctx, value);
        else if (k == "momentum") t.momentum = parse_double_value(ctx, value);
        else if (k == "mode") t.mode = parse_mode_value(ctx, value);
        else if (k == "beta") t.beta = parse_double_value(ctx, value);
        else if (k == "temperature") t.temperature = parse_double_value(ctx, value);
        else if (k == "prompt_init_std") t.prompt_init_std = parse_double_value(ctx, value);
        else if (k == "omega_schedule") t.schedule.enabled = parse_bool_value(ctx, value);
        else if (k == "omega_schedule_k") t.schedule.k = parse_double_value(ctx, value);
        else ctx.fail("unknown key");
    } else if (s == "pun") {
        if (k == "omega") t.pun.omega = parse_double_value(ctx, value);
        else if (k == "norm") t.pun.norm = parse_norm_value(ctx, value);
        else ctx.fail("unknown key");
    } else if (s == "pan") {
        if (k == "omega") t.pan.omega = parse_double_value(ctx, value);
        else if (k == "tau") t.pan.tau = parse_double_value(ctx, value);
        else if (k == "positions") t.pan.positions = parse_size_value(ctx, value);
        else if (k == "norm") t.pan.norm = parse_norm_value(ctx, value);
        else ctx.fail("unknown key");
    } else if (s == "sweep") {
        if (k == "replace_sigmas")
            doc.sweep.replace_sigmas = parse_list_value<double>(ctx, value, parse_double_value);
        else if (k == "rescale_factors")
            doc.sweep.rescale_factors = parse_list_value<double>(ctx, value, parse_double_value);
        else ctx.fail("unknown key");
    } else if (s == "io") {
        if (k == "out_dir") {
            if (value.empty()) ctx.fail("out_dir must not be empty");
            doc.io.out_dir = value;
        } else if (k == "parallel") {
            doc.io.parallel = parse_bool_value(ctx, value);
        } else ctx.fail("unknown key");
    } else {
        ctx.fail("unknown section");
    }
}

}  // namespace detail

/// Range checks that span the whole document (per-key checks happen in
/// validate(TrainConfig) plus the list checks here).
inline void validate(const ConfigDocument& doc) {
    validate(doc.train);
    if (doc.seeds.empty()) throw ConfigError("train.seeds must not be empty");
    for (const double s : doc.sweep.replace_sigmas) {
        if (!(s >= 0.0) || !std::isfinite(s))
            throw ConfigError("sweep.replace_sigmas entries must be finite and >= 0");
    }
    for (const double f : doc.sweep.rescale_factors) {
        if (!(f > 0.0) || !std::isfinite(f))
            throw ConfigError("sweep.rescale_factors entries must be finite and > 0");
    }
}

/// Parses sectioned key=value text. `#` and `;` start comments; blank lines
/// are skipped; keys must appear under a known section header.
inline ConfigDocument parse_config(const std::string& text, const std::string& file = "<string>") {
    ConfigDocument doc;
    std::string section;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::size_t hash = raw.find_first_of("#;");
        std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError(file + ":" + std::to_string(line_no) +
                                  ": malformed section header '" + line + "'");
            }
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(file + ":" + std::to_string(line_no) +
                              ": expected key = value, got '" + line + "'");
        }
        const std::string key = detail::trim(std::string_view(line).substr(0, eq));
        const std::string value = detail::trim(std::string_view(line).substr(eq + 1));
        if (section.empty()) {
            throw ConfigError(file + ":" + std::to_string(line_no) + ": key '" + key +
                              "' appears before any [section] header");
        }
        if (key.empty()) {
            throw ConfigError(file + ":" + std::to_string(line_no) + ": empty key");
        }
        detail::KeyContext ctx{file, line_no, section, key};
        detail::set_key(doc, ctx, value);
    }
    validate(doc);
    return doc;
}

inline ConfigDocument load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

/// Applies a single `section.key=value` override (the CLI --set flag).
/// Validation is deferred to the caller so several overrides can stack.
inline void apply_override(ConfigDocument& doc, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string path = detail::trim(std::string_view(assignment).substr(0, eq));
    const std::string value = detail::trim(std::string_view(assignment).substr(eq + 1));
    const std::size_t dot = path.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size()) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string section = path.substr(0, dot);
    const std::string key = path.substr(dot + 1);
    const std::string origin = "<override>";
    detail::KeyContext ctx{origin, 0, section, key};
    detail::set_key(doc, ctx, value);
}

}  // namespace promptnorm
