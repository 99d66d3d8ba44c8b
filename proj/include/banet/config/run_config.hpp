#pragma once

// Versioned run configuration: one JSON file drives every pipeline command.
// Flags override file values, file values override defaults. Cross-field
// constraints (patch vs 2^(N-1)) are validated at load.

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "banet/infer/sliding_window.hpp"
#include "banet/loss/loss.hpp"
#include "banet/model/config.hpp"
#include "banet/preprocess/augment.hpp"
#include "banet/preprocess/preprocess.hpp"
#include "banet/train/trainer.hpp"

namespace banet {

constexpr int kRunConfigSchemaVersion = 1;

struct WindowConfig {
    double step_fraction = 0.5;
    BlendMode blend = BlendMode::kGaussian;
    double sigma_scale = 0.125;
};

struct RunConfig {
    int schema_version = kRunConfigSchemaVersion;
    std::string dataset_dir;
    std::string run_dir = "runs/default";
    PreprocessConfig preprocess;
    AugmentSpec augment;
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    WindowConfig window;

    void validate() const {
        if (schema_version != kRunConfigSchemaVersion)
            throw Error("unrecognized config schema_version " +
                        std::to_string(schema_version));
        preprocess.validate();
        augment.validate();
        model.validate();
        loss.validate();
        train.validate();
        model.check_patch(preprocess.patch_shape);
        if (!loss.ds_weights.empty() &&
            static_cast<int>(loss.ds_weights.size()) != model.num_stages - 1)
            throw Error("ds_weights length must be N-1");
        if (window.step_fraction <= 0 || window.step_fraction > 1)
            throw Error("window step_fraction must be in (0,1]");
    }
};

// --------------------------------------------------------------------------
// JSON round-trips

inline void to_json(nlohmann::json& j, const Spacing& s) {
    j = {s.dz, s.dy, s.dx};
}
inline void from_json(const nlohmann::json& j, Spacing& s) {
    s = Spacing{j.at(0).get<double>(), j.at(1).get<double>(),
                j.at(2).get<double>()};
}
inline void to_json(nlohmann::json& j, const Shape3& s) {
    j = {s.d, s.h, s.w};
}
inline void from_json(const nlohmann::json& j, Shape3& s) {
    s = Shape3{j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>(),
               j.at(2).get<std::int64_t>()};
}

inline void to_json(nlohmann::json& j, const PreprocessConfig& c) {
    j = nlohmann::json{{"target_spacing", c.target_spacing},
                       {"clip_lo", c.clip_lo},
                       {"clip_hi", c.clip_hi},
                       {"patch_shape", c.patch_shape},
                       {"fg_prob", c.fg_prob}};
    if (c.norm_mean) j["norm_mean"] = *c.norm_mean;
    if (c.norm_std) j["norm_std"] = *c.norm_std;
}
inline void from_json(const nlohmann::json& j, PreprocessConfig& c) {
    c.target_spacing = j.value("target_spacing", c.target_spacing);
    c.clip_lo = j.value("clip_lo", c.clip_lo);
    c.clip_hi = j.value("clip_hi", c.clip_hi);
    c.patch_shape = j.value("patch_shape", c.patch_shape);
    c.fg_prob = j.value("fg_prob", c.fg_prob);
    if (j.contains("norm_mean")) c.norm_mean = j.at("norm_mean").get<double>();
    if (j.contains("norm_std")) c.norm_std = j.at("norm_std").get<double>();
}

inline void to_json(nlohmann::json& j, const AugmentSpec& a) {
    j = nlohmann::json{{"enable_crop", a.enable_crop},
                       {"crop_shape", a.crop_shape},
                       {"enable_rotation", a.enable_rotation},
                       {"max_rotation_deg", a.max_rotation_deg},
                       {"enable_scaling", a.enable_scaling},
                       {"scale_lo", a.scale_lo},
                       {"scale_hi", a.scale_hi},
                       {"enable_flips", a.enable_flips},
                       {"flip_axes", a.flip_axes},
                       {"enable_noise", a.enable_noise},
                       {"noise_sigma_lo", a.noise_sigma_lo},
                       {"noise_sigma_hi", a.noise_sigma_hi},
                       {"enable_elastic", a.enable_elastic},
                       {"elastic_alpha", a.elastic_alpha},
                       {"elastic_grid_spacing", a.elastic_grid_spacing},
                       {"seed", a.seed}};
}
inline void from_json(const nlohmann::json& j, AugmentSpec& a) {
    a.enable_crop = j.value("enable_crop", a.enable_crop);
    a.crop_shape = j.value("crop_shape", a.crop_shape);
    a.enable_rotation = j.value("enable_rotation", a.enable_rotation);
    a.max_rotation_deg = j.value("max_rotation_deg", a.max_rotation_deg);
    a.enable_scaling = j.value("enable_scaling", a.enable_scaling);
    a.scale_lo = j.value("scale_lo", a.scale_lo);
    a.scale_hi = j.value("scale_hi", a.scale_hi);
    a.enable_flips = j.value("enable_flips", a.enable_flips);
    a.flip_axes = j.value("flip_axes", a.flip_axes);
    a.enable_noise = j.value("enable_noise", a.enable_noise);
    a.noise_sigma_lo = j.value("noise_sigma_lo", a.noise_sigma_lo);
    a.noise_sigma_hi = j.value("noise_sigma_hi", a.noise_sigma_hi);
    a.enable_elastic = j.value("enable_elastic", a.enable_elastic);
    a.elastic_alpha = j.value("elastic_alpha", a.elastic_alpha);
    a.elastic_grid_spacing =
        j.value("elastic_grid_spacing", a.elastic_grid_spacing);
    a.seed = j.value("seed", a.seed);
}

inline void to_json(nlohmann::json& j, const LossConfig& c) {
    j = nlohmann::json{
        {"epsilon", c.epsilon},
        {"ce_reduction",
         c.ce_reduction == CeReduction::kSum ? "sum" : "voxel-mean"},
        {"dice_class_set",
         c.dice_class_set == DiceClassSet::kAll ? "all" : "foreground-only"}};
    if (!c.ds_weights.empty()) j["ds_weights"] = c.ds_weights;
}
inline void from_json(const nlohmann::json& j, LossConfig& c) {
    c.epsilon = j.value("epsilon", c.epsilon);
    const std::string red = j.value("ce_reduction", "voxel-mean");
    if (red == "sum")
        c.ce_reduction = CeReduction::kSum;
    else if (red == "voxel-mean")
        c.ce_reduction = CeReduction::kVoxelMean;
    else
        throw Error("unknown ce_reduction '" + red + "'");
    const std::string set = j.value("dice_class_set", "foreground-only");
    if (set == "all")
        c.dice_class_set = DiceClassSet::kAll;
    else if (set == "foreground-only")
        c.dice_class_set = DiceClassSet::kForegroundOnly;
    else
        throw Error("unknown dice_class_set '" + set + "'");
    if (j.contains("ds_weights"))
        c.ds_weights = j.at("ds_weights").get<std::vector<double>>();
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"lr0", c.lr0},
                       {"max_epochs", c.max_epochs},
                       {"iterations_per_epoch", c.iterations_per_epoch},
                       {"batch_size", c.batch_size},
                       {"momentum", c.momentum},
                       {"weight_decay", c.weight_decay},
                       {"seed", c.seed},
                       {"fold_index", c.fold_index},
                       {"num_folds", c.num_folds},
                       {"augment_enabled", c.augment_enabled},
                       {"validate_each_epoch", c.validate_each_epoch}};
}
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c.lr0 = j.value("lr0", c.lr0);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.iterations_per_epoch =
        j.value("iterations_per_epoch", c.iterations_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.seed = j.value("seed", c.seed);
    c.fold_index = j.value("fold_index", c.fold_index);
    c.num_folds = j.value("num_folds", c.num_folds);
    c.augment_enabled = j.value("augment_enabled", c.augment_enabled);
    c.validate_each_epoch =
        j.value("validate_each_epoch", c.validate_each_epoch);
}

inline void to_json(nlohmann::json& j, const WindowConfig& c) {
    j = nlohmann::json{
        {"step_fraction", c.step_fraction},
        {"blend", c.blend == BlendMode::kUniform ? "uniform" : "gaussian"},
        {"sigma_scale", c.sigma_scale}};
}
inline void from_json(const nlohmann::json& j, WindowConfig& c) {
    c.step_fraction = j.value("step_fraction", c.step_fraction);
    const std::string b = j.value("blend", "gaussian");
    if (b == "uniform")
        c.blend = BlendMode::kUniform;
    else if (b == "gaussian")
        c.blend = BlendMode::kGaussian;
    else
        throw Error("unknown blend mode '" + b + "'");
    c.sigma_scale = j.value("sigma_scale", c.sigma_scale);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"schema_version", c.schema_version},
                       {"dataset_dir", c.dataset_dir},
                       {"run_dir", c.run_dir},
                       {"preprocess", c.preprocess},
                       {"augment", c.augment},
                       {"model", c.model},
                       {"loss", c.loss},
                       {"train", c.train},
                       {"window", c.window}};
}
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    c.schema_version = j.value("schema_version", kRunConfigSchemaVersion);
    c.dataset_dir = j.value("dataset_dir", c.dataset_dir);
    c.run_dir = j.value("run_dir", c.run_dir);
    if (j.contains("preprocess")) j.at("preprocess").get_to(c.preprocess);
    if (j.contains("augment")) j.at("augment").get_to(c.augment);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("loss")) j.at("loss").get_to(c.loss);
    if (j.contains("train")) j.at("train").get_to(c.train);
    if (j.contains("window")) j.at("window").get_to(c.window);
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("config file not found: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error("malformed config " + path + ": " + e.what());
    }
    RunConfig cfg = j.get<RunConfig>();
    cfg.validate();
    return cfg;
}

inline void save_run_config(const RunConfig& cfg, const std::string& path) {
    nlohmann::json j = cfg;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot write config: " + path);
    f << j.dump(2) << "\n";
}

/// Fingerprint of the preprocessing-relevant fields (cache key).
inline std::uint64_t preprocess_config_hash(const PreprocessConfig& c) {
    nlohmann::json j = c;
    j["schema"] = kRunConfigSchemaVersion;
    return fnv1a64(j.dump());
}

}  // namespace banet
