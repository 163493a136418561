#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <iostream>

#include "maskdepth/ablation.hpp"
#include "maskdepth/attacks.hpp"
#include "maskdepth/corruptions.hpp"
#include "maskdepth/evaluate.hpp"
#include "maskdepth/plot.hpp"
#include "maskdepth/scene.hpp"
#include "maskdepth/trainer.hpp"

namespace fs = std::filesystem;
using namespace maskdepth;

namespace {

TrainConfig make_config(const std::string& config_path, const std::vector<std::string>& sets) {
    TrainConfig cfg = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
    for (const auto& assignment : sets) apply_override(cfg, assignment);
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

std::string frame_name(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
    return buf;
}

// Copies manifest and depth maps; frames are transformed per index.
void write_perturbed_dataset(const Dataset& src, const std::string& src_dir,
                             const std::string& out_dir,
                             const std::function<Image(const Image&, int64_t)>& transform,
                             const std::string& provenance) {
    fs::create_directories(fs::path(out_dir) / "frames");
    fs::create_directories(fs::path(out_dir) / "depth");
    fs::copy_file(fs::path(src_dir) / "manifest.txt", fs::path(out_dir) / "manifest.txt",
                  fs::copy_options::overwrite_existing);
    for (const auto& entry : fs::directory_iterator(fs::path(src_dir) / "depth")) {
        fs::copy_file(entry.path(), fs::path(out_dir) / "depth" / entry.path().filename(),
                      fs::copy_options::overwrite_existing);
    }
    for (int64_t i = 0; i < src.n_frames(); ++i) {
        write_ppm((fs::path(out_dir) / "frames" / (frame_name(i) + ".ppm")).string(),
                  transform(src.frame(i), i));
    }
    write_text((fs::path(out_dir) / "provenance.txt").string(), provenance);
}

std::string record_summary(const RunRecord& record) {
    std::ostringstream os;
    os.precision(10);
    os << "initial_loss=" << record.initial_loss << "\n";
    for (size_t e = 0; e < record.epoch_losses.size(); ++e) {
        os << "epoch " << e << " loss=" << record.epoch_losses[e]
           << " photometric=" << record.epoch_photometric[e]
           << " smoothness=" << record.epoch_smoothness[e] << " lr=" << record.epoch_lr[e]
           << "\n";
    }
    os << "final_loss=" << record.final_loss << "\n";
    os << "total_steps=" << record.total_steps << "\n";
    if (!record.checkpoint_digest.empty()) {
        os << "checkpoint_digest=" << record.checkpoint_digest << "\n";
    }
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"masked self-supervised monocular depth estimation lab"};
    app.require_subcommand(1);

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "render a synthetic dataset");
    std::string gen_out;
    int gen_triplets = 400;
    uint64_t gen_seed = 0;
    int gen_size = 64;
    int gen_episode_triplets = 10;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--triplets", gen_triplets, "number of training triplets");
    gen->add_option("--seed", gen_seed, "scene seed");
    gen->add_option("--size", gen_size, "square frame edge in pixels");
    gen->add_option("--episode-triplets", gen_episode_triplets, "triplets per episode");

    // ---- train -------------------------------------------------------------
    auto* tr = app.add_subcommand("train", "train depth and ego-motion networks");
    std::string tr_config, tr_data, tr_ckpt, tr_record;
    std::vector<std::string> tr_sets;
    uint64_t tr_seed = UINT64_MAX;
    tr->add_option("--config", tr_config, "config file (key=value with [sections])");
    tr->add_option("--set", tr_sets, "override, e.g. train.lr=1e-4")->take_all();
    tr->add_option("--data", tr_data, "dataset directory");
    tr->add_option("--checkpoint", tr_ckpt, "checkpoint output path");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--record", tr_record, "run record output path");

    // ---- eval --------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_ckpt, ev_data, ev_suite = "clean", ev_out = "eval.csv", ev_run = "run";
    int64_t ev_max = -1;
    uint64_t ev_seed = 0;
    bool ev_oracle = false;
    ev->add_option("--checkpoint", ev_ckpt, "model checkpoint");
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--suite", ev_suite, "clean|corruption|occlusion|attack");
    ev->add_option("--out", ev_out, "csv output");
    ev->add_option("--run-id", ev_run, "run id column");
    ev->add_option("--max-images", ev_max, "cap evaluated images");
    ev->add_option("--seed", ev_seed, "perturbation seed");
    ev->add_flag("--gt-oracle", ev_oracle, "use the ground-truth oracle instead of a model");

    // ---- corrupt -----------------------------------------------------------
    auto* co = app.add_subcommand("corrupt", "write a corrupted copy of a dataset");
    std::string co_data, co_out, co_kind = "gaussian_noise";
    int co_severity = 3;
    uint64_t co_seed = 0;
    co->add_option("--data", co_data)->required();
    co->add_option("--out", co_out)->required();
    co->add_option("--kind", co_kind, "corruption kind");
    co->add_option("--severity", co_severity, "severity 1..5");
    co->add_option("--seed", co_seed);

    // ---- occlude -----------------------------------------------------------
    auto* oc = app.add_subcommand("occlude", "write an occluded copy of a dataset");
    std::string oc_data, oc_out, oc_strategy = "blockwise";
    double oc_ratio = 0.25;
    int oc_mask_size = 16;
    double oc_aspect = 0.3;
    uint64_t oc_seed = 0;
    oc->add_option("--data", oc_data)->required();
    oc->add_option("--out", oc_out)->required();
    oc->add_option("--strategy", oc_strategy, "blockwise|random");
    oc->add_option("--ratio", oc_ratio);
    oc->add_option("--mask-size", oc_mask_size, "occlusion cell edge in pixels");
    oc->add_option("--aspect", oc_aspect);
    oc->add_option("--seed", oc_seed);

    // ---- attack ------------------------------------------------------------
    auto* at = app.add_subcommand("attack", "write an adversarial copy of a dataset");
    std::string at_data, at_out, at_ckpt, at_mode = "untargeted";
    double at_eps = 8.0;
    at->add_option("--data", at_data)->required();
    at->add_option("--out", at_out)->required();
    at->add_option("--checkpoint", at_ckpt)->required();
    at->add_option("--mode", at_mode, "untargeted|flip_horizontal|flip_vertical");
    at->add_option("--eps", at_eps, "attack strength in 255-scale pixels");

    // ---- ablate ------------------------------------------------------------
    auto* ab = app.add_subcommand("ablate", "run the masking ablation grid");
    std::string ab_config, ab_data, ab_eval, ab_out = "ablation";
    std::vector<std::string> ab_sets;
    std::vector<uint64_t> ab_seeds{0, 1, 2};
    ab->add_option("--config", ab_config);
    ab->add_option("--set", ab_sets)->take_all();
    ab->add_option("--data", ab_data, "training dataset")->required();
    ab->add_option("--eval-data", ab_eval, "evaluation dataset")->required();
    ab->add_option("--out", ab_out, "output directory");
    ab->add_option("--seeds", ab_seeds, "training seeds")->take_all();

    // ---- mask-preview ------------------------------------------------------
    auto* mp = app.add_subcommand("mask-preview", "render a mask grid as PGM");
    std::string mp_out = "mask.pgm", mp_strategy = "blockwise";
    int mp_h = 192, mp_w = 640, mp_size = 16;
    double mp_ratio = 0.25, mp_aspect = 0.3;
    uint64_t mp_seed = 0;
    mp->add_option("--out", mp_out);
    mp->add_option("--strategy", mp_strategy, "blockwise|random");
    mp->add_option("--height", mp_h);
    mp->add_option("--width", mp_w);
    mp->add_option("--size", mp_size, "mask cell edge in pixels");
    mp->add_option("--ratio", mp_ratio);
    mp->add_option("--aspect", mp_aspect);
    mp->add_option("--seed", mp_seed);

    // ---- plot --------------------------------------------------------------
    auto* pl = app.add_subcommand("plot", "chart an evaluation csv as SVG");
    std::string pl_csv, pl_out = "chart.svg", pl_kind = "line", pl_title = "evaluation";
    pl->add_option("--csv", pl_csv)->required();
    pl->add_option("--out", pl_out);
    pl->add_option("--kind", pl_kind, "line|bar");
    pl->add_option("--title", pl_title);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            SceneSpec spec;
            spec.seed = gen_seed;
            spec.width = spec.height = gen_size;
            spec.episode_triplets = gen_episode_triplets;
            make_dataset(spec, gen_triplets, gen_out);
            std::cout << "wrote " << gen_triplets << " triplets to " << gen_out << "\n";
        } else if (*tr) {
            TrainConfig cfg = make_config(tr_config, tr_sets);
            if (!tr_data.empty()) cfg.dataset_dir = tr_data;
            if (!tr_ckpt.empty()) cfg.checkpoint_path = tr_ckpt;
            if (tr_seed != UINT64_MAX) cfg.seed = tr_seed;
            TrainResult result = train(cfg);
            std::cout << record_summary(result.record);
            if (!tr_record.empty()) {
                write_text(tr_record,
                           result.record.config_snapshot + "\n" + record_summary(result.record));
            }
        } else if (*ev) {
            Dataset data = Dataset::load(ev_data);
            EvalOptions opt;
            opt.run_id = ev_run;
            opt.max_images = ev_max;
            opt.seed = ev_seed;
            const EvalSuite suite = suite_from_string(ev_suite);
            std::vector<EvalRow> rows;
            if (ev_oracle) {
                if (suite == EvalSuite::attack) {
                    throw std::runtime_error("the attack suite needs a real checkpoint");
                }
                rows = evaluate_suite(suite, data, gt_oracle_predictor(data), opt);
            } else {
                if (ev_ckpt.empty()) throw std::runtime_error("--checkpoint or --gt-oracle required");
                auto [depth_net, ego_net] = load_checkpoint(ev_ckpt);
                rows = evaluate_suite(suite, data, network_predictor(depth_net), opt, &depth_net,
                                      &ego_net);
            }
            write_csv(ev_out, rows);
            std::cout << "suite=" << ev_suite << " rows=" << rows.size()
                      << " mean_rmse=" << mean_rmse(rows, "", "", "complete") << " -> " << ev_out
                      << "\n";
        } else if (*co) {
            Dataset data = Dataset::load(co_data);
            const CorruptionKind kind = corruption_from_string(co_kind);
            std::ostringstream prov;
            prov << "perturbation=corrupt\nkind=" << co_kind << "\nseverity=" << co_severity
                 << "\nseed=" << co_seed << "\n";
            write_perturbed_dataset(
                data, co_data, co_out,
                [&](const Image& img, int64_t i) {
                    return corrupt(img, {kind, co_severity,
                                         derive_seed(co_seed, static_cast<uint64_t>(i), 0)});
                },
                prov.str());
            std::cout << "wrote corrupted dataset to " << co_out << "\n";
        } else if (*oc) {
            Dataset data = Dataset::load(oc_data);
            const MaskStrategy strategy = mask_strategy_from_string(oc_strategy);
            std::ostringstream prov;
            prov << "perturbation=occlude\nstrategy=" << oc_strategy << "\nratio=" << oc_ratio
                 << "\nmask_size=" << oc_mask_size << "\nseed=" << oc_seed << "\n";
            write_perturbed_dataset(
                data, oc_data, oc_out,
                [&](const Image& img, int64_t i) {
                    MaskConfig mc{oc_mask_size, oc_ratio, oc_aspect,
                                  derive_seed(oc_seed, static_cast<uint64_t>(i), 0)};
                    return occlude(img, strategy, mc).image;
                },
                prov.str());
            std::cout << "wrote occluded dataset to " << oc_out << "\n";
        } else if (*at) {
            Dataset data = Dataset::load(at_data);
            auto [depth_net, ego_net] = load_checkpoint(at_ckpt);
            const AttackMode mode = attack_mode_from_string(at_mode);
            LossWeights weights;
            // adversarial versions exist for triplet centers; other frames copy over
            std::map<int64_t, Image> adversarial;
            for (int64_t i = 0; i < data.n_triplets(); ++i) {
                const Triplet t = data.triplet(i);
                AttackResult r =
                    mode == AttackMode::untargeted
                        ? untargeted_attack(depth_net, ego_net, t, weights, at_eps)
                        : targeted_flip_attack(depth_net, t.target, at_eps, mode);
                adversarial.emplace(data.center_frame(i), std::move(r.adversarial));
            }
            std::ostringstream prov;
            prov << "perturbation=attack\nmode=" << at_mode << "\neps=" << at_eps
                 << "\niterations=" << attack_iterations(at_eps) << "\n";
            write_perturbed_dataset(
                data, at_data, at_out,
                [&](const Image& img, int64_t frame) {
                    const auto hit = adversarial.find(frame);
                    return hit == adversarial.end() ? img : hit->second;
                },
                prov.str());
            std::cout << "wrote adversarial dataset to " << at_out << "\n";
        } else if (*ab) {
            TrainConfig base = make_config(ab_config, ab_sets);
            Dataset train_data = Dataset::load(ab_data);
            Dataset eval_data = Dataset::load(ab_eval);
            base.dataset_dir = ab_data;
            const auto arms = default_ablation_arms(base.vit.patch_edge);
            AblationReport report = ablation_grid(base, arms, ab_seeds, train_data, eval_data,
                                                  /*verbose=*/true);
            fs::create_directories(ab_out);
            write_text((fs::path(ab_out) / "table.txt").string(), report.render_table());
            std::ostringstream per_seed;
            per_seed << "arm,seed,clean_rmse\n";
            for (const auto& cell : report.cells) {
                for (size_t s = 0; s < cell.per_seed_clean.size(); ++s) {
                    per_seed << cell.arm << ',' << report.seeds[s] << ','
                             << cell.per_seed_clean[s] << "\n";
                }
            }
            write_text((fs::path(ab_out) / "per_seed.csv").string(), per_seed.str());
            std::cout << report.render_table();
        } else if (*mp) {
            MaskConfig mc{mp_size, mp_ratio, mp_aspect, mp_seed};
            const MaskGrid grid = mask_strategy_from_string(mp_strategy) == MaskStrategy::blockwise
                                      ? blockwise_mask(mc, mp_h, mp_w)
                                      : random_mask(mc, mp_h, mp_w);
            std::vector<uint8_t> px = grid.to_pixel_mask(mp_h, mp_w);
            for (auto& v : px) v = v ? 255 : 0;
            write_pgm(mp_out, px, mp_h, mp_w);
            std::cout << "mask " << grid.gh << "x" << grid.gw << " achieved_ratio="
                      << grid.achieved_ratio << " -> " << mp_out << "\n";
        } else if (*pl) {
            plot_csv(pl_csv, pl_out, pl_kind == "bar" ? ChartKind::bar : ChartKind::line,
                     pl_title);
            std::cout << "wrote " << pl_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
