#pragma once

// Pipeline subcommand implementations shared by the CLI binary and the test
// suites. Dataset layout: <dataset_dir>/images/<id>.<ext> and
// labels/<id>.<ext>, with <ext> one of .raw (+ .json sidecar), .nii, .nii.gz.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "banet/config/run_config.hpp"
#include "banet/core/labels.hpp"
#include "banet/core/volume_io.hpp"
#include "banet/infer/postprocess.hpp"
#include "banet/infer/sliding_window.hpp"
#include "banet/metrics/metrics.hpp"
#include "banet/model/checkpoint.hpp"
#include "banet/phantom/phantom.hpp"
#include "banet/train/trainer.hpp"

namespace banet {

namespace fs = std::filesystem;

namespace detail {

inline std::string case_id_of(const fs::path& p) {
    std::string name = p.filename().string();
    for (const char* ext : {".nii.gz", ".nii", ".raw"}) {
        if (ends_with(name, ext))
            return name.substr(0, name.size() - std::string(ext).size());
    }
    return "";
}

inline std::map<std::string, std::string> scan_cases(const std::string& dir) {
    std::map<std::string, std::string> cases;
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto id = case_id_of(e.path());
        if (!id.empty()) cases[id] = e.path().string();
    }
    return cases;
}

inline std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

}  // namespace detail

/// Cache root: $BANET_CACHE_ROOT if set, else <run_dir>/cache.
inline std::string cache_root(const RunConfig& cfg) {
    if (const char* env = std::getenv("BANET_CACHE_ROOT"); env && *env)
        return env;
    return (fs::path(cfg.run_dir) / "cache").string();
}

inline std::string preprocess_cache_dir(const RunConfig& cfg) {
    return (fs::path(cache_root(cfg)) /
            ("pp_" + detail::hash_hex(preprocess_config_hash(cfg.preprocess))))
        .string();
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
    std::string out_dir;
    int count = 8;
    std::uint64_t seed = 0;
    PhantomSpec spec;
};

/// Writes a synthetic cohort in the standard dataset layout (raw format).
inline std::string cmd_phantom(const PhantomArgs& args) {
    auto cohort = generate_cohort(args.count, args.spec, args.seed);
    fs::create_directories(fs::path(args.out_dir) / "images");
    fs::create_directories(fs::path(args.out_dir) / "labels");
    for (const auto& c : cohort) {
        save_volume(c.image,
                    (fs::path(args.out_dir) / "images" / (c.id + ".raw")).string());
        save_labels(c.labels,
                    (fs::path(args.out_dir) / "labels" / (c.id + ".raw")).string());
    }
    return args.out_dir;
}

// ---------------------------------------------------------------------------

struct PreprocessResult {
    std::string cache_dir;
    bool cache_hit = false;
    int cases_done = 0;
    std::vector<std::string> failed_cases;
};

/// Resample + clip/normalize every case into the cache. Idempotent: an
/// existing cache with the same config hash is left untouched. Unreadable
/// cases are reported and skipped.
inline PreprocessResult cmd_preprocess(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.dataset_dir.empty()) throw Error("dataset_dir not set");
    const std::string cache = preprocess_cache_dir(cfg);
    const std::string meta_path = (fs::path(cache) / "meta.json").string();
    PreprocessResult result;
    result.cache_dir = cache;
    if (fs::exists(meta_path)) {
        std::ifstream f(meta_path);
        nlohmann::json meta;
        f >> meta;
        if (meta.value("hash", std::string()) ==
            detail::hash_hex(preprocess_config_hash(cfg.preprocess))) {
            result.cache_hit = true;
            result.cases_done = meta.value("num_cases", 0);
            return result;
        }
    }

    auto images = detail::scan_cases(
        (fs::path(cfg.dataset_dir) / "images").string());
    auto labels = detail::scan_cases(
        (fs::path(cfg.dataset_dir) / "labels").string());
    if (images.empty()) throw Error("no cases under " + cfg.dataset_dir);

    struct Loaded {
        std::string id;
        Volume img;
        LabelVolume lab;
    };
    std::vector<Loaded> cases;
    for (const auto& [id, img_path] : images) {
        auto lit = labels.find(id);
        if (lit == labels.end()) {
            result.failed_cases.push_back(id + " (missing labels)");
            continue;
        }
        try {
            Volume img = load_volume(img_path);
            LabelVolume lab =
                load_labels(lit->second, cfg.model.num_classes);
            if (!(img.shape == lab.shape))
                throw Error("image/label shape mismatch");
            img = resample(img, cfg.preprocess.target_spacing);
            lab = resample(lab, cfg.preprocess.target_spacing);
            // resampled grids can disagree by a rounding voxel; crop labels
            if (!(img.shape == lab.shape))
                lab = resample_labels_to(lab, img.shape, img.spacing);
            cases.push_back(Loaded{id, std::move(img), std::move(lab)});
        } catch (const std::exception& e) {
            result.failed_cases.push_back(id + " (" + e.what() + ")");
        }
    }
    if (cases.empty())
        throw Error("every case failed preprocessing under " + cfg.dataset_dir);

    // Dataset-level normalization statistics over clipped foreground voxels,
    // unless the config pins them.
    PreprocessConfig pp = cfg.preprocess;
    if (!pp.norm_mean || !pp.norm_std) {
        double sum = 0, sum2 = 0;
        std::int64_t n = 0;
        for (const auto& c : cases)
            for (std::size_t i = 0; i < c.img.data.size(); ++i) {
                if (c.lab.data[i] == 0) continue;
                const double v = std::clamp(double(c.img.data[i]), pp.clip_lo,
                                            pp.clip_hi);
                sum += v;
                sum2 += v * v;
                ++n;
            }
        if (n == 0) {
            // no foreground anywhere: fall back to global statistics
            for (const auto& c : cases)
                for (float f : c.img.data) {
                    const double v =
                        std::clamp(double(f), pp.clip_lo, pp.clip_hi);
                    sum += v;
                    sum2 += v * v;
                    ++n;
                }
        }
        const double mean = sum / double(n);
        const double var = std::max(1e-12, sum2 / double(n) - mean * mean);
        pp.norm_mean = mean;
        pp.norm_std = std::sqrt(var);
    }

    fs::create_directories(fs::path(cache) / "cases");
    nlohmann::json case_list = nlohmann::json::array();
    for (auto& c : cases) {
        Volume norm = normalize_intensity(c.img, pp);
        save_labels(c.lab, (fs::path(cache) / "cases" / (c.id + "_lab.raw")).string());
        save_volume(norm, (fs::path(cache) / "cases" / (c.id + "_img.raw")).string());
        case_list.push_back(c.id);
        ++result.cases_done;
    }
    nlohmann::json meta{
        {"hash", detail::hash_hex(preprocess_config_hash(cfg.preprocess))},
        {"norm_mean", *pp.norm_mean},
        {"norm_std", *pp.norm_std},
        {"num_cases", result.cases_done},
        {"cases", case_list},
        {"failed", result.failed_cases}};
    std::ofstream(meta_path) << meta.dump(2) << "\n";
    return result;
}

/// Loads every cached case (run cmd_preprocess first).
inline std::pair<std::vector<TrainCase>, PreprocessConfig> load_cache(
    const RunConfig& cfg) {
    const std::string cache = preprocess_cache_dir(cfg);
    const std::string meta_path = (fs::path(cache) / "meta.json").string();
    if (!fs::exists(meta_path))
        throw Error("preprocess cache missing (" + cache +
                    "); run `banet preprocess` first");
    std::ifstream f(meta_path);
    nlohmann::json meta;
    f >> meta;
    PreprocessConfig pp = cfg.preprocess;
    pp.norm_mean = meta.at("norm_mean").get<double>();
    pp.norm_std = meta.at("norm_std").get<double>();
    std::vector<TrainCase> cases;
    for (const auto& idj : meta.at("cases")) {
        const std::string id = idj.get<std::string>();
        TrainCase tc;
        tc.id = id;
        tc.image =
            load_volume((fs::path(cache) / "cases" / (id + "_img.raw")).string());
        tc.labels = load_labels(
            (fs::path(cache) / "cases" / (id + "_lab.raw")).string());
        cases.push_back(std::move(tc));
    }
    return {std::move(cases), pp};
}

// ---------------------------------------------------------------------------

struct TrainResult {
    FitResult fit;
    std::string run_dir;
};

inline TrainResult cmd_train(RunConfig cfg, bool resume = false) {
    cfg.validate();
    auto [cases, pp] = load_cache(cfg);
    fs::create_directories(cfg.run_dir);
    save_run_config(cfg, (fs::path(cfg.run_dir) / "config.json").string());

    // Persist the fold assignment for downstream evaluation.
    if (static_cast<int>(cases.size()) >= cfg.train.num_folds &&
        cfg.train.num_folds > 1) {
        std::vector<std::string> ids;
        for (const auto& c : cases) ids.push_back(c.id);
        auto split = make_folds(ids, cfg.train.num_folds, cfg.train.seed);
        nlohmann::json j;
        for (const auto& [id, fold] : split.assignment) j[id] = fold;
        std::ofstream((fs::path(cfg.run_dir) / "fold_split.json").string())
            << j.dump(2) << "\n";
    }

    Trainer<float> trainer(std::move(cases), cfg.train, cfg.model, cfg.loss, pp,
                           cfg.augment, cfg.run_dir);
    TrainResult out;
    out.fit = trainer.fit(resume);
    out.run_dir = cfg.run_dir;

    // Stamp the preprocess settings into the checkpoints so inference is
    // self-contained.
    for (const std::string& ck :
         {out.fit.last_checkpoint, out.fit.best_checkpoint}) {
        if (ck.empty() || !fs::exists(ck)) continue;
        auto [net, meta] = load_checkpoint<float>(ck);
        nlohmann::json extra = meta.extra;
        extra["preprocess"] = pp;
        extra["window"] = cfg.window;
        save_checkpoint(ck, net, meta.epoch, meta.opt_state, extra);
    }
    return out;
}

// ---------------------------------------------------------------------------

struct InferArgs {
    std::string checkpoint;
    std::string input_dir;   // directory of image volumes
    std::string output_dir;
    bool postprocess = true;
    bool save_probabilities = false;
    std::optional<WindowConfig> window;       // defaults from checkpoint
    std::optional<std::uint64_t> config_hash; // verify against checkpoint
};

inline std::vector<std::string> cmd_infer(const InferArgs& args) {
    if (!fs::exists(args.checkpoint))
        throw Error("checkpoint not found: " + args.checkpoint);
    auto [net, meta] = load_checkpoint<float>(args.checkpoint);
    if (args.config_hash && *args.config_hash != model_config_hash(meta.model))
        throw Error("checkpoint/config hash mismatch: refusing to run");

    PreprocessConfig pp;
    if (meta.extra.contains("preprocess"))
        meta.extra.at("preprocess").get_to(pp);
    WindowConfig wc;
    if (args.window)
        wc = *args.window;
    else if (meta.extra.contains("window"))
        meta.extra.at("window").get_to(wc);

    auto images = detail::scan_cases(args.input_dir);
    if (images.empty()) throw Error("no input volumes in " + args.input_dir);
    fs::create_directories(args.output_dir);

    std::vector<std::string> outputs;
    for (const auto& [id, path] : images) {
        Volume orig = load_volume(path);
        const Shape3 orig_shape = orig.shape;
        const Spacing orig_spacing = orig.spacing;
        Volume work = resample(orig, pp.target_spacing);
        work = normalize_intensity(work, pp);
        auto plan = make_window_plan(work.shape, pp.patch_shape,
                                     wc.step_fraction, wc.blend, wc.sigma_scale);
        ProbabilityVolume probs = sliding_window_predict(net, work, plan);
        probs = resample_probability_to(probs, orig_shape, orig_spacing);
        LabelVolume pred = argmax_labels(probs);
        pred.num_classes = net.config().num_classes;
        if (args.postprocess) pred = postprocess_components(pred);
        const std::string out_path =
            (fs::path(args.output_dir) / (id + ".raw")).string();
        save_labels(pred, out_path);
        if (args.save_probabilities)
            save_probability(
                probs, (fs::path(args.output_dir) / (id + "_prob.raw")).string());
        outputs.push_back(out_path);
    }
    return outputs;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
    std::string pred_dir;
    std::string gt_dir;
    bool mm_units = false;  // false: voxel units (unit spacing)
    std::string out_dir;
    std::string fold_split_path;  // optional JSON {case: fold}
    int num_classes = 5;
};

struct EvaluateResult {
    std::string per_case_csv;
    std::string aggregate_json;
    double average_dsc = 0;
    double average_hd = 0;
    int num_cases = 0;
};

inline EvaluateResult cmd_evaluate(const EvaluateArgs& args) {
    auto preds = detail::scan_cases(args.pred_dir);
    auto gts = detail::scan_cases(args.gt_dir);
    // prediction outputs may carry companion _prob files; drop them
    for (auto it = preds.begin(); it != preds.end();)
        it = detail::ends_with(it->first, "_prob") ? preds.erase(it) : ++it;
    std::vector<std::string> unmatched;
    for (const auto& [id, p] : preds)
        if (!gts.count(id)) unmatched.push_back("pred-only: " + id);
    for (const auto& [id, p] : gts)
        if (!preds.count(id)) unmatched.push_back("gt-only: " + id);
    if (!unmatched.empty()) {
        std::string msg = "unmatched case ids:";
        for (const auto& u : unmatched) msg += " " + u;
        throw Error(msg);
    }
    if (preds.empty()) throw Error("no cases to evaluate");

    fs::create_directories(args.out_dir);
    const std::string csv_path =
        (fs::path(args.out_dir) / "per_case.csv").string();
    const std::string json_path =
        (fs::path(args.out_dir) / "aggregate.json").string();

    std::map<std::string, int> fold_of;
    if (!args.fold_split_path.empty()) {
        std::ifstream f(args.fold_split_path);
        if (!f) throw Error("fold split file not found: " + args.fold_split_path);
        nlohmann::json j;
        f >> j;
        for (auto it = j.begin(); it != j.end(); ++it)
            fold_of[it.key()] = it.value().get<int>();
    }

    std::ofstream csv(csv_path, std::ios::trunc);
    csv << "case";
    for (int c = 1; c < args.num_classes; ++c)
        csv << ',' << kipa_class_name(c) << "_dsc" << ','
            << kipa_class_name(c) << "_hd";
    csv << ",avg_dsc,avg_hd\n";

    struct Agg {
        std::vector<double> dsc_sum, hd_sum;
        std::vector<int> hd_count;
        int cases = 0;
    };
    auto make_agg = [&]() {
        Agg a;
        a.dsc_sum.assign(static_cast<std::size_t>(args.num_classes - 1), 0.0);
        a.hd_sum.assign(static_cast<std::size_t>(args.num_classes - 1), 0.0);
        a.hd_count.assign(static_cast<std::size_t>(args.num_classes - 1), 0);
        return a;
    };
    Agg total = make_agg();
    std::map<int, Agg> per_fold;

    for (const auto& [id, pred_path] : preds) {
        LabelVolume pred = load_labels(pred_path, args.num_classes);
        LabelVolume gt = load_labels(gts.at(id), args.num_classes);
        const Spacing sp = args.mm_units ? gt.spacing : Spacing{1, 1, 1};
        CaseMetrics cm = evaluate_case(pred, gt, sp);
        csv << id << std::setprecision(9);
        for (const auto& m : cm.classes) {
            csv << ',' << m.dsc << ',';
            if (m.hd_valid)
                csv << m.hd;
            else
                csv << "inf";
        }
        csv << ',' << cm.mean_dsc << ',' << cm.mean_hd << '\n';
        auto add = [&](Agg& a) {
            ++a.cases;
            for (std::size_t k = 0; k < cm.classes.size(); ++k) {
                a.dsc_sum[k] += cm.classes[k].dsc;
                if (cm.classes[k].hd_valid) {
                    a.hd_sum[k] += cm.classes[k].hd;
                    ++a.hd_count[k];
                }
            }
        };
        add(total);
        if (auto it = fold_of.find(id); it != fold_of.end())
            add(per_fold.try_emplace(it->second, make_agg()).first->second);
    }

    auto agg_json = [&](const Agg& a) {
        nlohmann::json per_class;
        double dsum = 0, hsum = 0;
        int hclasses = 0;
        for (int c = 1; c < args.num_classes; ++c) {
            const auto k = static_cast<std::size_t>(c - 1);
            const double d = a.cases ? a.dsc_sum[k] / a.cases : 0.0;
            const double h = a.hd_count[k] ? a.hd_sum[k] / a.hd_count[k] : 0.0;
            per_class[kipa_class_name(c)] = {
                {"dsc", d},
                {"hd", h},
                {"hd_excluded", a.cases - a.hd_count[k]}};
            dsum += d;
            if (a.hd_count[k]) {
                hsum += h;
                ++hclasses;
            }
        }
        const double avg_d = dsum / double(args.num_classes - 1);
        const double avg_h = hclasses ? hsum / hclasses : 0.0;
        return std::tuple<nlohmann::json, double, double>(
            nlohmann::json{{"classes", per_class},
                           {"average", {{"dsc", avg_d}, {"hd", avg_h}}},
                           {"num_cases", a.cases}},
            avg_d, avg_h);
    };

    auto [agg, avg_d, avg_h] = agg_json(total);
    agg["units"] = args.mm_units ? "mm" : "voxel";
    if (!per_fold.empty()) {
        nlohmann::json folds;
        double fd = 0, fh = 0;
        for (const auto& [fold, a] : per_fold) {
            auto [fj, d, h] = agg_json(a);
            folds[std::to_string(fold)] = fj;
            fd += d;
            fh += h;
        }
        agg["folds"] = folds;
        agg["fold_mean"] = {{"dsc", fd / double(per_fold.size())},
                            {"hd", fh / double(per_fold.size())}};
    }
    std::ofstream(json_path) << agg.dump(2) << "\n";

    EvaluateResult res;
    res.per_case_csv = csv_path;
    res.aggregate_json = json_path;
    res.average_dsc = avg_d;
    res.average_hd = avg_h;
    res.num_cases = total.cases;
    return res;
}

// ---------------------------------------------------------------------------

struct EnsembleArgs {
    std::string dir_a;
    std::string dir_b;
    std::string output_dir;
    bool postprocess = true;
    int num_classes = 5;
};

/// Voxelwise average of two models' probability outputs, then argmax and
/// postprocessing. Inputs are the _prob files written by cmd_infer.
inline std::vector<std::string> cmd_ensemble(const EnsembleArgs& args) {
    auto scan_probs = [](const std::string& dir) {
        std::map<std::string, std::string> out;
        for (auto& [id, path] : detail::scan_cases(dir)) {
            if (detail::ends_with(id, "_prob"))
                out[id.substr(0, id.size() - 5)] = path;
        }
        return out;
    };
    auto pa = scan_probs(args.dir_a);
    auto pb = scan_probs(args.dir_b);
    if (pa.empty()) throw Error("no probability files in " + args.dir_a);
    std::vector<std::string> outputs;
    fs::create_directories(args.output_dir);
    for (const auto& [id, path_a] : pa) {
        auto it = pb.find(id);
        if (it == pb.end())
            throw Error("missing probability file for case " + id + " in " +
                        args.dir_b);
        ProbabilityVolume a = load_probability(path_a);
        ProbabilityVolume b = load_probability(it->second);
        ProbabilityVolume mean = ensemble_average(a, b);
        LabelVolume pred = argmax_labels(mean);
        pred.num_classes = args.num_classes;
        if (args.postprocess) pred = postprocess_components(pred);
        const std::string out_path =
            (fs::path(args.output_dir) / (id + ".raw")).string();
        save_labels(pred, out_path);
        outputs.push_back(out_path);
    }
    return outputs;
}

}  // namespace banet
