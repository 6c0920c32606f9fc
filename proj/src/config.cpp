#include "liquid/config.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <limits>

#include "liquid/cell_io.hpp"
#include "liquid/errors.hpp"

namespace liquid {

namespace {

constexpr SchemaEntry kSchema[] = {
    {"format_version", "integer", true, "must be 1"},
    {"kind", "string", true, "cell kind: LSTM GRU MGU CTRNN LTC LC_NA LC_SA LRC_NA LRC_SA"},
    {"m", "unsigned", false, "hidden neurons (19)"},
    {"n", "unsigned", false, "conv feature size (64)"},
    {"dt", "number", false, "cell time step (1.0)"},
    {"epochs", "unsigned", false, "training epochs (100)"},
    {"batch_size", "unsigned", false, "sequences per mini-batch (32)"},
    {"sequence_length", "unsigned", false, "window length in steps (32)"},
    {"stride", "unsigned", false, "window stride in steps (16)"},
    {"learning_rate", "number", false, "AdamW step size (5e-4)"},
    {"weight_decay", "number", false, "decoupled weight decay (1e-6)"},
    {"adam_beta1", "number", false, "(0.9)"},
    {"adam_beta2", "number", false, "(0.999)"},
    {"adam_eps", "number", false, "(1e-8)"},
    {"grad_clip", "number", false, "global-norm clip, <= 0 disables (10)"},
    {"seed", "unsigned", false, "master seed (0)"},
    {"threads", "unsigned", false, "worker threads (1)"},
    {"frozen_prefixes", "string[]", false, "parameter-name prefixes excluded from updates"},
    {"road_length", "number", false, "metres per road (1000)"},
    {"kappa_max", "number", false, "curvature bound in 1/m (0.05)"},
    {"smoothness", "number", false, "minimum bump width in m (120)"},
    {"clip_fraction", "number", false, "curvature clip as a fraction of kappa_max (0.8)"},
    {"train_road_seeds", "unsigned[]", false, "roads for the train/validation/test windows"},
    {"eval_road_seeds", "unsigned[]", false, "held-out roads for closed-loop evaluation"},
    {"seasons", "string[]", false, "subset of summer, winter"},
    {"perturbation", "number", false, "steering perturbation amplitude during collection (0.1)"},
    {"perturbation_time_constant", "number", false, "perturbation correlation time in s (0.5)"},
    {"noise_variances", "number[]", false, "SSIM noise variances (0, 0.1, 0.2)"},
    {"ssim_frames", "unsigned", false, "frames per season for SSIM robustness (1600)"},
    {"saliency_images", "unsigned", false, "saliency maps written per season (8)"},
    {"correlation_reference", "string", false, "prediction or curvature"},
    {"output_dir", "string", false, "root for all artifacts (runs)"},
};

const SchemaEntry* find_entry(std::string_view key) {
    for (const SchemaEntry& e : kSchema) {
        if (e.key == key) {
            return &e;
        }
    }
    return nullptr;
}

bool is_unsigned(const nlohmann::json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
}

bool type_matches(std::string_view type, const nlohmann::json& v) {
    if (type == "integer") {
        return v.is_number_integer();
    }
    if (type == "unsigned") {
        return is_unsigned(v);
    }
    if (type == "number") {
        return v.is_number();
    }
    if (type == "string") {
        return v.is_string();
    }
    if (type.ends_with("[]")) {
        if (!v.is_array()) {
            return false;
        }
        const std::string_view inner = type.substr(0, type.size() - 2);
        for (const auto& x : v) {
            if (!type_matches(inner, x)) {
                return false;
            }
        }
        return true;
    }
    return false;
}

template <class T>
void read(const nlohmann::json& doc, std::string_view key, T& out) {
    const auto it = doc.find(std::string(key));
    if (it != doc.end()) {
        out = it->get<T>();
    }
}

void require(bool ok, std::string_view key, const std::string& message) {
    if (!ok) {
        throw ConfigError("key '" + std::string(key) + "': " + message);
    }
}

} // namespace

std::span<const SchemaEntry> config_schema() { return kSchema; }

std::string schema_description() {
    std::string out;
    for (const SchemaEntry& e : kSchema) {
        out += std::string(e.key) + " (" + std::string(e.type) + (e.required ? ", required" : "") +
               "): " + std::string(e.description) + "\n";
    }
    return out;
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    for (const auto& [key, value] : doc.items()) {
        const SchemaEntry* entry = find_entry(key);
        if (entry == nullptr) {
            throw ConfigError("unknown key '" + key + "'");
        }
        if (!type_matches(entry->type, value)) {
            throw ConfigError("key '" + key + "': expected " + std::string(entry->type));
        }
    }
    for (const SchemaEntry& e : kSchema) {
        if (e.required && !doc.contains(std::string(e.key))) {
            throw ConfigError("missing required key '" + std::string(e.key) + "'");
        }
    }
    require(doc.at("format_version").get<int>() == kConfigFormatVersion, "format_version",
            "unsupported version " + doc.at("format_version").dump());

    ExperimentConfig c;
    try {
        c.kind = parse_cell_kind(doc.at("kind").get<std::string>());
    } catch (const Error& e) {
        throw ConfigError(std::string("key 'kind': ") + e.what());
    }
    read(doc, "m", c.m);
    read(doc, "n", c.n);
    read(doc, "dt", c.dt);
    TrainingConfig& t = c.training;
    read(doc, "epochs", t.epochs);
    read(doc, "batch_size", t.batch_size);
    read(doc, "sequence_length", t.sequence_length);
    read(doc, "stride", c.stride);
    read(doc, "learning_rate", t.learning_rate);
    read(doc, "weight_decay", t.weight_decay);
    read(doc, "adam_beta1", t.adam_beta1);
    read(doc, "adam_beta2", t.adam_beta2);
    read(doc, "adam_eps", t.adam_eps);
    read(doc, "grad_clip", t.grad_clip);
    read(doc, "seed", t.seed);
    read(doc, "threads", t.threads);
    read(doc, "frozen_prefixes", t.frozen_prefixes);
    read(doc, "road_length", c.road.length);
    read(doc, "kappa_max", c.road.kappa_max);
    read(doc, "smoothness", c.road.smoothness);
    read(doc, "clip_fraction", c.road.clip_fraction);
    read(doc, "train_road_seeds", c.train_road_seeds);
    read(doc, "eval_road_seeds", c.eval_road_seeds);
    if (doc.contains("seasons")) {
        c.seasons.clear();
        for (const auto& s : doc.at("seasons")) {
            try {
                c.seasons.push_back(parse_season(s.get<std::string>()));
            } catch (const Error& e) {
                throw ConfigError(std::string("key 'seasons': ") + e.what());
            }
        }
    }
    read(doc, "perturbation", c.perturbation);
    read(doc, "perturbation_time_constant", c.perturbation_time_constant);
    read(doc, "noise_variances", c.noise_variances);
    read(doc, "ssim_frames", c.ssim_frames);
    read(doc, "saliency_images", c.saliency_images);
    if (doc.contains("correlation_reference")) {
        try {
            c.correlation_reference =
                parse_correlation_reference(doc.at("correlation_reference").get<std::string>());
        } catch (const Error& e) {
            throw ConfigError(std::string("key 'correlation_reference': ") + e.what());
        }
    }
    read(doc, "output_dir", c.output_dir);

    require(c.m > 0, "m", "must be positive");
    require(c.n > 0, "n", "must be positive");
    require(std::isfinite(c.dt) && c.dt > 0.0, "dt", "must be positive");
    require(c.stride > 0, "stride", "must be positive");
    require(c.road.length >= 10.0, "road_length", "must be at least 10 m");
    require(c.road.kappa_max > 0.0, "kappa_max", "must be positive");
    require(c.road.smoothness > 0.0, "smoothness", "must be positive");
    require(c.road.clip_fraction > 0.0 && c.road.clip_fraction <= 1.0, "clip_fraction",
            "must be in (0, 1]");
    require(!c.train_road_seeds.empty(), "train_road_seeds", "must not be empty");
    require(!c.seasons.empty(), "seasons", "must not be empty");
    require(c.perturbation >= 0.0, "perturbation", "must be non-negative");
    require(c.perturbation_time_constant > 0.0, "perturbation_time_constant", "must be positive");
    for (double v : c.noise_variances) {
        require(v >= 0.0, "noise_variances", "variances must be non-negative");
    }
    try {
        t.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    const TrainingConfig& t = c.training;
    nlohmann::json seasons = nlohmann::json::array();
    for (Season s : c.seasons) {
        seasons.push_back(std::string(to_string(s)));
    }
    nlohmann::json doc = {
        {"format_version", kConfigFormatVersion},
        {"kind", std::string(to_string(c.kind))},
        {"m", c.m},
        {"n", c.n},
        {"dt", c.dt},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"sequence_length", t.sequence_length},
        {"stride", c.stride},
        {"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"adam_beta1", t.adam_beta1},
        {"adam_beta2", t.adam_beta2},
        {"adam_eps", t.adam_eps},
        {"grad_clip", t.grad_clip},
        {"seed", t.seed},
        {"threads", t.threads},
        {"frozen_prefixes", t.frozen_prefixes},
        {"road_length", c.road.length},
        {"kappa_max", c.road.kappa_max},
        {"clip_fraction", c.road.clip_fraction},
        {"train_road_seeds", c.train_road_seeds},
        {"eval_road_seeds", c.eval_road_seeds},
        {"seasons", seasons},
        {"perturbation", c.perturbation},
        {"perturbation_time_constant", c.perturbation_time_constant},
        {"noise_variances", c.noise_variances},
        {"ssim_frames", c.ssim_frames},
        {"saliency_images", c.saliency_images},
        {"correlation_reference", std::string(to_string(c.correlation_reference))},
        {"output_dir", c.output_dir},
    };
    // JSON has no infinity; a straight-road config simply omits smoothness
    // and is read back with the finite default, so keep it only if finite.
    if (std::isfinite(c.road.smoothness)) {
        doc["smoothness"] = c.road.smoothness;
    }
    return doc;
}

void apply_override(nlohmann::json& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) + "' is not KEY=VALUE");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    if (find_entry(key) == nullptr) {
        throw ConfigError("unknown key '" + key + "'");
    }
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    doc[key] = std::move(value);
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    for (const std::string& o : overrides) {
        apply_override(doc, o);
    }
    return config_from_json(doc);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string config_hash(const ExperimentConfig& config) {
    return sha256_hex(config_to_json(config).dump());
}

} // namespace liquid
