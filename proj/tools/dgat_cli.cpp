#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dgat/config.hpp"
#include "dgat/data_model.hpp"
#include "dgat/dfc.hpp"
#include "dgat/evaluation.hpp"
#include "dgat/gradcheck.hpp"
#include "dgat/interpret.hpp"
#include "dgat/model.hpp"
#include "dgat/train.hpp"

namespace fs = std::filesystem;
using namespace dgat;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string name;
    std::string out_base = "runs";
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON config file (flat dotted keys)");
    cmd->add_option("--set", opts.overrides, "override config fields, key=value (repeatable)");
    cmd->add_option("--name", opts.name, "run directory name (default: timestamp)");
    cmd->add_option("--out", opts.out_base, "base directory for run outputs");
}

RunConfig resolve_config(const CommonOpts& opts) {
    RunConfig cfg = opts.config_path.empty() ? RunConfig() : RunConfig::from_file(opts.config_path);
    for (const auto& kv : opts.overrides) cfg.apply_override(kv);
    return cfg;
}

std::string make_run_dir(const CommonOpts& opts) {
    std::string name = opts.name;
    if (name.empty()) {
        auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", std::localtime(&now));
        name = buf;
    }
    fs::path dir = fs::path(opts.out_base) / name;
    fs::create_directories(dir);
    return dir.string();
}

std::vector<std::string> load_roi_names(const std::string& path) {
    std::vector<std::string> names;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ROI names file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        names.push_back(comma == std::string::npos ? line : line.substr(comma + 1));
    }
    return names;
}

CvResult run_evaluation(const RunConfig& cfg, const Dataset& ds, bool static_fc_mode,
                        const std::vector<std::uint64_t>* seeds_override,
                        const FoldPlan* shared_plan) {
    CvConfig ccfg = cfg.cv_config();
    ccfg.use_static_fc = static_fc_mode;
    if (seeds_override) ccfg.seeds = *seeds_override;
    return run_cv(ds, cfg.window_config(), cfg.graph_config(), cfg.model_config(),
                  cfg.train_config(), ccfg, shared_plan);
}

void write_evaluation_outputs(const CvResult& result, const Dataset& ds, const std::string& dir) {
    write_summary_json(result, (fs::path(dir) / "summary.json").string());
    write_predictions_csv(result, ds, (fs::path(dir) / "predictions.csv").string());
    fs::create_directories(fs::path(dir) / "curves");
    fs::create_directories(fs::path(dir) / "attention");
    std::vector<AttentionAggregate> fold_aggs;
    for (const auto& fold : result.folds) {
        for (std::size_t s = 0; s < fold.curves.size(); ++s) {
            char fname[64];
            std::snprintf(fname, sizeof(fname), "fold%zu_seed%zu.csv", fold.fold, s);
            write_curve_csv(fold.curves[s], (fs::path(dir) / "curves" / fname).string());
        }
        char aname[64];
        std::snprintf(aname, sizeof(aname), "fold%zu.json", fold.fold);
        save_aggregate_json(fold.attention, (fs::path(dir) / "attention" / aname).string());
        fold_aggs.push_back(fold.attention);
    }
    save_aggregate_json(merge_aggregates(fold_aggs),
                        (fs::path(dir) / "attention" / "global.json").string());
}

void write_ablation_csv(const std::vector<std::pair<std::string, CvSummary>>& rows,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write ablation table: " + path);
    out << "variant,balacc_mean,balacc_sd,precision_mean,precision_sd,recall_mean,recall_sd,"
           "f1_mean,f1_sd,auc_mean,auc_sd\n";
    char buf[256];
    for (const auto& [name, s] : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      name.c_str(), s.mean.balanced_accuracy, s.sd.balanced_accuracy,
                      s.mean.precision, s.sd.precision, s.mean.recall, s.sd.recall, s.mean.f1,
                      s.sd.f1, s.mean.auc, s.sd.auc);
        out << buf;
    }
}

void export_explain(const AttentionAggregate& agg, std::size_t layer, std::size_t top_k,
                    const std::string& dir, const std::vector<std::string>* roi_names) {
    if (layer >= agg.heatmap_by_layer.size())
        throw std::runtime_error("heatmap layer out of range for this run");
    const Tensor& heatmap = agg.heatmap_by_layer[layer];
    write_heatmap_csv(heatmap, (fs::path(dir) / "heatmap.csv").string());
    write_roi_importance_csv(agg.roi_importance, (fs::path(dir) / "roi_importance.csv").string(),
                             roi_names);
    write_roi_importance_csv(agg.alpha_mass_importance,
                             (fs::path(dir) / "roi_importance_alpha_mass.csv").string(),
                             roi_names);
    write_temporal_profile_csv(agg.subject_ids, agg.temporal_profiles,
                               (fs::path(dir) / "temporal_profile.csv").string());
    write_top_connections_csv(heatmap, top_k, (fs::path(dir) / "top_connections.csv").string(),
                              roi_names);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"D-GATNet: dynamic functional-connectivity graph attention pipeline"};
    app.require_subcommand(1);

    CommonOpts gen_opts, ext_opts, train_opts, eval_opts, abl_opts, exp_opts, gc_opts;
    std::string gen_out_dir = "synthetic_data";
    std::string data_dir, labels_path;
    bool eval_static = false;
    std::string explain_run, roi_names_path;
    int explain_fold = -1;

    auto* gen = app.add_subcommand("generate", "generate a synthetic labeled dataset");
    add_common(gen, gen_opts);
    gen->add_option("--out-dir", gen_out_dir, "directory for generated CSVs")->required();

    auto* ext = app.add_subcommand("extract", "extract dynamic graph sequences to JSON");
    add_common(ext, ext_opts);
    ext->add_option("--data", data_dir, "directory of per-subject CSVs")->required();
    ext->add_option("--labels", labels_path, "labels.csv path")->required();

    auto* tr = app.add_subcommand("train", "train a single model on a stratified split");
    add_common(tr, train_opts);
    tr->add_option("--data", data_dir, "directory of per-subject CSVs")->required();
    tr->add_option("--labels", labels_path, "labels.csv path")->required();

    auto* ev = app.add_subcommand("evaluate", "stratified k-fold CV with seed ensembling");
    add_common(ev, eval_opts);
    ev->add_option("--data", data_dir, "directory of per-subject CSVs")->required();
    ev->add_option("--labels", labels_path, "labels.csv path")->required();
    ev->add_flag("--static-fc", eval_static, "use static FC instead of dFC");

    auto* ab = app.add_subcommand("ablate", "full vs static-FC vs single-seed on a shared plan");
    add_common(ab, abl_opts);
    ab->add_option("--data", data_dir, "directory of per-subject CSVs")->required();
    ab->add_option("--labels", labels_path, "labels.csv path")->required();

    auto* ex = app.add_subcommand("explain", "export attention interpretability CSVs from a run");
    add_common(ex, exp_opts);
    ex->add_option("--run", explain_run, "evaluate run directory")->required();
    ex->add_option("--fold", explain_fold, "restrict to one fold (default: global)");
    ex->add_option("--roi-names", roi_names_path, "optional index,name CSV for ROI labels");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every primitive");
    add_common(gc, gc_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            RunConfig cfg = resolve_config(gen_opts);
            SyntheticSpec spec = cfg.synthetic_spec();
            Dataset ds = generate_synthetic(spec);
            write_dataset(ds, gen_out_dir);
            write_spec_json(spec, (fs::path(gen_out_dir) / "spec.json").string());
            std::cout << "wrote " << ds.subjects.size() << " subjects to " << gen_out_dir << "\n";
        } else if (*ext) {
            RunConfig cfg = resolve_config(ext_opts);
            std::string dir = make_run_dir(ext_opts);
            cfg.write_echo((fs::path(dir) / "config.json").string());
            Dataset ds = load_dataset(data_dir, labels_path);
            for (const auto& s : ds.subjects) {
                auto seq = extract_sequence(s, cfg.window_config(), cfg.graph_config());
                write_sequence_json(seq, (fs::path(dir) / (s.id + ".json")).string());
            }
            std::cout << "wrote " << ds.subjects.size() << " sequence files to " << dir << "\n";
        } else if (*tr) {
            RunConfig cfg = resolve_config(train_opts);
            std::string dir = make_run_dir(train_opts);
            cfg.write_echo((fs::path(dir) / "config.json").string());
            Dataset ds = load_dataset(data_dir, labels_path);
            std::vector<int> labels;
            for (const auto& s : ds.subjects) labels.push_back(s.label);
            std::vector<std::size_t> pool(ds.subjects.size());
            for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
            auto [train_idx, val_idx] = inner_split(pool, labels,
                                                    cfg.get_number("train.val_fraction"),
                                                    cfg.get_size("cv.plan_seed"));
            std::vector<DynamicGraphSequence> seqs;
            for (const auto& s : ds.subjects)
                seqs.push_back(extract_sequence(s, cfg.window_config(), cfg.graph_config()));
            std::vector<const DynamicGraphSequence*> train_seqs, val_seqs;
            for (auto i : train_idx) train_seqs.push_back(&seqs[i]);
            for (auto i : val_idx) val_seqs.push_back(&seqs[i]);
            ModelConfig mcfg = cfg.model_config();
            mcfg.n_rois = ds.n_rois;
            TrainConfig tcfg = cfg.train_config();
            tcfg.rng_seed = cfg.cv_config().seeds.empty() ? 0 : cfg.cv_config().seeds[0];
            Model model(mcfg, tcfg.rng_seed);
            TrainedModel trained = train_model(model, train_seqs, val_seqs, tcfg);
            model.params().save_json((fs::path(dir) / "checkpoint.json").string());
            write_curve_csv(trained.curve, (fs::path(dir) / "curve.csv").string());
            std::cout << "best epoch " << trained.best_epoch << " val balacc "
                      << trained.best_val_balacc << "; outputs in " << dir << "\n";
        } else if (*ev) {
            RunConfig cfg = resolve_config(eval_opts);
            std::string dir = make_run_dir(eval_opts);
            cfg.write_echo((fs::path(dir) / "config.json").string());
            Dataset ds = load_dataset(data_dir, labels_path);
            CvResult result = run_evaluation(cfg, ds, eval_static, nullptr, nullptr);
            write_evaluation_outputs(result, ds, dir);
            std::printf("balanced accuracy %.4f +/- %.4f, AUC %.4f; outputs in %s\n",
                        result.summary.mean.balanced_accuracy,
                        result.summary.sd.balanced_accuracy, result.summary.mean.auc,
                        dir.c_str());
        } else if (*ab) {
            RunConfig cfg = resolve_config(abl_opts);
            std::string dir = make_run_dir(abl_opts);
            cfg.write_echo((fs::path(dir) / "config.json").string());
            Dataset ds = load_dataset(data_dir, labels_path);
            std::vector<int> labels;
            for (const auto& s : ds.subjects) labels.push_back(s.label);
            CvConfig ccfg = cfg.cv_config();
            FoldPlan plan = make_folds(labels, ccfg.k, ccfg.plan_seed);
            std::vector<std::uint64_t> first_seed{ccfg.seeds.at(0)};

            CvResult full = run_evaluation(cfg, ds, false, nullptr, &plan);
            CvResult stat = run_evaluation(cfg, ds, true, nullptr, &plan);
            CvResult solo = run_evaluation(cfg, ds, false, &first_seed, &plan);

            write_summary_json(full, (fs::path(dir) / "summary_full.json").string());
            write_summary_json(stat, (fs::path(dir) / "summary_static_fc.json").string());
            write_summary_json(solo, (fs::path(dir) / "summary_no_ensemble.json").string());
            write_ablation_csv({{"static_fc", stat.summary},
                                {"no_ensemble", solo.summary},
                                {"full", full.summary}},
                               (fs::path(dir) / "ablation.csv").string());
            std::printf("full %.4f | static_fc %.4f | no_ensemble %.4f (balanced accuracy)\n",
                        full.summary.mean.balanced_accuracy,
                        stat.summary.mean.balanced_accuracy,
                        solo.summary.mean.balanced_accuracy);
            std::cout << "outputs in " << dir << "\n";
        } else if (*ex) {
            RunConfig cfg = resolve_config(exp_opts);
            std::string dir = make_run_dir(exp_opts);
            cfg.write_echo((fs::path(dir) / "config.json").string());
            fs::path src = fs::path(explain_run) / "attention" /
                           (explain_fold < 0 ? std::string("global.json")
                                             : "fold" + std::to_string(explain_fold) + ".json");
            AttentionAggregate agg = load_aggregate_json(src.string());
            std::vector<std::string> names;
            if (!roi_names_path.empty()) names = load_roi_names(roi_names_path);
            export_explain(agg, cfg.heatmap_layer(), cfg.top_k(), dir,
                           names.empty() ? nullptr : &names);
            std::cout << "interpretability exports in " << dir << "\n";
        } else if (*gc) {
            auto results = run_gradcheck_suite(12345, 25);
            bool ok = true;
            for (const auto& r : results) {
                std::printf("%-24s max rel err %.3e %s\n", r.name.c_str(), r.max_rel_err,
                            r.max_rel_err <= 1e-4 ? "ok" : "FAIL");
                if (r.max_rel_err > 1e-4) ok = false;
            }
            return ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
