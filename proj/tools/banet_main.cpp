// banet: command-line front end for the segmentation pipeline.
//
//   banet phantom    --out DIR [--count N] [--seed S] [--size N]
//   banet preprocess --config FILE [--dataset DIR]
//   banet train      --config FILE [--fold K] [--seed S] [--resume]
//   banet infer      --checkpoint FILE --input DIR --output DIR
//                    [--no-postproc] [--save-probs] [--config FILE] ...
//   banet evaluate   --pred DIR --gt DIR --out DIR [--units voxel|mm]
//                    [--fold-split FILE] [--classes N]
//   banet ensemble   --a DIR --b DIR --output DIR [--no-postproc]
//
// Exit code 0 on success; on failure a machine-readable JSON error object is
// printed to stderr and the exit code is nonzero.

#include <CLI11.hpp>

#include <iostream>

#include "banet/banet.hpp"

using namespace banet;

int main(int argc, char** argv) {
    CLI::App app{"BA-Net kidney-structure segmentation pipeline"};
    app.require_subcommand(1);

    // phantom
    auto* cmd_ph = app.add_subcommand("phantom", "generate a synthetic cohort");
    PhantomArgs ph;
    std::int64_t ph_size = 64;
    double ph_noise = 10.0;
    cmd_ph->add_option("--out", ph.out_dir, "output dataset directory")
        ->required();
    cmd_ph->add_option("--count", ph.count, "number of cases");
    cmd_ph->add_option("--seed", ph.seed, "cohort seed");
    cmd_ph->add_option("--size", ph_size, "cubic volume edge length");
    cmd_ph->add_option("--noise-sigma", ph_noise, "intensity noise sigma");

    // preprocess
    auto* cmd_pp = app.add_subcommand("preprocess", "build preprocessed cache");
    std::string pp_config, pp_dataset;
    cmd_pp->add_option("--config", pp_config, "run config JSON")->required();
    cmd_pp->add_option("--dataset", pp_dataset, "override dataset_dir");

    // train
    auto* cmd_tr = app.add_subcommand("train", "train one fold");
    std::string tr_config;
    int tr_fold = -1;
    std::int64_t tr_seed = -1;
    bool tr_resume = false;
    cmd_tr->add_option("--config", tr_config, "run config JSON")->required();
    cmd_tr->add_option("--fold", tr_fold, "fold index override");
    cmd_tr->add_option("--seed", tr_seed, "seed override");
    cmd_tr->add_flag("--resume", tr_resume, "resume from last checkpoint");

    // infer
    auto* cmd_in = app.add_subcommand("infer", "predict a directory of volumes");
    InferArgs in;
    std::string in_config;
    bool in_no_postproc = false;
    cmd_in->add_option("--checkpoint", in.checkpoint, "checkpoint file")
        ->required();
    cmd_in->add_option("--input", in.input_dir, "input image directory")
        ->required();
    cmd_in->add_option("--output", in.output_dir, "prediction directory")
        ->required();
    cmd_in->add_flag("--no-postproc", in_no_postproc,
                     "skip connected-component postprocessing");
    cmd_in->add_flag("--save-probs", in.save_probabilities,
                     "also write probability volumes");
    cmd_in->add_option("--config", in_config,
                       "run config (verified against the checkpoint)");

    // evaluate
    auto* cmd_ev = app.add_subcommand("evaluate", "DSC/HD evaluation");
    EvaluateArgs ev;
    std::string ev_units = "voxel";
    cmd_ev->add_option("--pred", ev.pred_dir, "prediction directory")
        ->required();
    cmd_ev->add_option("--gt", ev.gt_dir, "ground-truth directory")->required();
    cmd_ev->add_option("--out", ev.out_dir, "report directory")->required();
    cmd_ev->add_option("--units", ev_units, "HD units: voxel or mm")
        ->check(CLI::IsMember({"voxel", "mm"}));
    cmd_ev->add_option("--fold-split", ev.fold_split_path,
                       "fold assignment JSON for per-fold aggregation");
    cmd_ev->add_option("--classes", ev.num_classes, "number of classes");

    // ensemble
    auto* cmd_en = app.add_subcommand("ensemble", "two-model average");
    EnsembleArgs en;
    bool en_no_postproc = false;
    cmd_en->add_option("--a", en.dir_a, "first probability directory")
        ->required();
    cmd_en->add_option("--b", en.dir_b, "second probability directory")
        ->required();
    cmd_en->add_option("--output", en.output_dir, "prediction directory")
        ->required();
    cmd_en->add_flag("--no-postproc", en_no_postproc,
                     "skip connected-component postprocessing");
    cmd_en->add_option("--classes", en.num_classes, "number of classes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_ph->parsed()) {
            ph.spec.shape = Shape3{ph_size, ph_size, ph_size};
            ph.spec.noise_sigma = ph_noise;
            cmd_phantom(ph);
            std::cout << "wrote " << ph.count << " cases to " << ph.out_dir
                      << "\n";
        } else if (cmd_pp->parsed()) {
            RunConfig cfg = load_run_config(pp_config);
            if (!pp_dataset.empty()) cfg.dataset_dir = pp_dataset;
            auto res = cmd_preprocess(cfg);
            std::cout << (res.cache_hit ? "cache hit: " : "preprocessed: ")
                      << res.cache_dir << " (" << res.cases_done << " cases)\n";
            for (const auto& fail : res.failed_cases)
                std::cerr << "skipped case " << fail << "\n";
        } else if (cmd_tr->parsed()) {
            RunConfig cfg = load_run_config(tr_config);
            if (tr_fold >= 0) cfg.train.fold_index = tr_fold;
            if (tr_seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(tr_seed);
            auto res = cmd_train(cfg, tr_resume);
            std::cout << "checkpoint: " << res.fit.best_checkpoint
                      << " (best val DSC " << res.fit.best_val_dsc << ")\n";
        } else if (cmd_in->parsed()) {
            in.postprocess = !in_no_postproc;
            if (!in_config.empty()) {
                RunConfig cfg = load_run_config(in_config);
                in.config_hash = model_config_hash(cfg.model);
                in.window = cfg.window;
            }
            auto outs = cmd_infer(in);
            std::cout << "wrote " << outs.size() << " predictions to "
                      << in.output_dir << "\n";
        } else if (cmd_ev->parsed()) {
            ev.mm_units = ev_units == "mm";
            auto res = cmd_evaluate(ev);
            std::cout << "evaluated " << res.num_cases
                      << " cases: average DSC " << res.average_dsc
                      << ", average HD " << res.average_hd << " ("
                      << ev_units << ")\n"
                      << "reports: " << res.per_case_csv << ", "
                      << res.aggregate_json << "\n";
        } else if (cmd_en->parsed()) {
            en.postprocess = !en_no_postproc;
            auto outs = cmd_ensemble(en);
            std::cout << "wrote " << outs.size() << " ensembled predictions to "
                      << en.output_dir << "\n";
        }
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", {{"message", e.what()}}}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
