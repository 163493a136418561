#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "maskdepth/ablation.hpp"
#include "maskdepth/evaluate.hpp"
#include "maskdepth/plot.hpp"
#include "maskdepth/trainer.hpp"

using namespace maskdepth;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir.string();
}

// Small dataset and model so the training-path tests stay fast.
struct TinySetup {
    std::string dir;
    TrainConfig cfg;

    explicit TinySetup(const std::string& name, int triplets = 6, uint64_t scene_seed = 3) {
        dir = fresh_dir(name);
        SceneSpec spec;
        spec.seed = scene_seed;
        spec.width = spec.height = 32;
        make_dataset(spec, triplets, dir);
        cfg.dataset_dir = dir;
        cfg.epochs = 2;
        cfg.batch_size = 2;
        cfg.lr = 1e-3;
        cfg.lr_decay_epoch = 1;
        cfg.vit.image_h = cfg.vit.image_w = 32;
        cfg.vit.width = 32;
        cfg.vit.heads = 2;
        cfg.vit.layers = 2;
        cfg.mask.mask_size = 8;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("config file parsing, overrides and round trip") {
    const std::string text = R"(
# comment
[train]
epochs = 7
lr = 2e-4
seed = 11
[mask]
target = both
ratio = 0.4
[loss]
region = masked_only
combine = mean
[model]
width = 48
)";
    TrainConfig cfg = parse_train_config(text);
    CHECK(cfg.epochs == 7);
    CHECK(cfg.lr == doctest::Approx(2e-4));
    CHECK(cfg.seed == 11);
    CHECK(cfg.mask_target == MaskTarget::both);
    CHECK(cfg.mask.mask_ratio == doctest::Approx(0.4));
    CHECK(cfg.loss_region == LossRegion::masked_only);
    CHECK(cfg.photometric_combine == PhotometricCombine::mean);
    CHECK(cfg.vit.width == 48);

    apply_override(cfg, "train.epochs=3");
    CHECK(cfg.epochs == 3);
    CHECK_THROWS_AS(apply_override(cfg, "train.bogus=1"), std::invalid_argument);
    CHECK_THROWS_AS(apply_override(cfg, "no_dot"), std::invalid_argument);

    TrainConfig round = parse_train_config(serialize(cfg));
    CHECK(serialize(round) == serialize(cfg));

    CHECK_THROWS_AS(parse_train_config("[train\nepochs=1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_train_config("just a line"), std::invalid_argument);
}

TEST_CASE("training is deterministic and obeys the lr schedule") {
    TinySetup setup("maskdepth_train_det");
    setup.cfg.checkpoint_path = setup.dir + "/a.ckpt";
    TrainResult a = train(setup.cfg);
    setup.cfg.checkpoint_path = setup.dir + "/b.ckpt";
    TrainResult b = train(setup.cfg);

    CHECK(a.record.epoch_losses == b.record.epoch_losses);
    CHECK(slurp(setup.dir + "/a.ckpt") == slurp(setup.dir + "/b.ckpt"));
    CHECK(a.record.checkpoint_digest == b.record.checkpoint_digest);
    CHECK(!a.record.checkpoint_digest.empty());

    // decay epoch 1 of 2: epoch 0 at lr, epoch 1 at lr/10 exactly
    REQUIRE(a.record.epoch_lr.size() == 2);
    CHECK(a.record.epoch_lr[0] == setup.cfg.lr);
    CHECK(a.record.epoch_lr[1] == setup.cfg.lr / setup.cfg.lr_decay_factor);
    CHECK(a.record.total_steps == 2 * 3);  // 6 triplets / batch 2, 2 epochs

    // a different seed changes the run
    setup.cfg.seed = 99;
    setup.cfg.checkpoint_path = setup.dir + "/c.ckpt";
    TrainResult c = train(setup.cfg);
    CHECK(slurp(setup.dir + "/a.ckpt") != slurp(setup.dir + "/c.ckpt"));
}

TEST_CASE("one backward pass reaches both networks") {
    TinySetup setup("maskdepth_train_coupling");
    Dataset data = Dataset::load(setup.dir);
    DepthNetwork depth_net(setup.cfg.vit, 1);
    EgoMotionNetwork ego_net(setup.cfg.vit, 2);
    BatchLoss loss =
        batch_training_loss(setup.cfg, data, depth_net, ego_net, {0, 1}, /*step=*/0);
    loss.total.backward();
    auto grad_norm = [](const ParamStore& store, const std::string& name) {
        double acc = 0.0;
        for (double g : store.get(name).grad()) acc += g * g;
        return acc;
    };
    CHECK(grad_norm(depth_net.params(), "patch_w") > 0.0);
    CHECK(grad_norm(ego_net.params(), "patch_w") > 0.0);
    CHECK(grad_norm(depth_net.params(), "mask_token") > 0.0);  // depth_only masking default
}

TEST_CASE("mask_target none reproduces the unmasked baseline") {
    TinySetup setup("maskdepth_train_nomask");
    Dataset data = Dataset::load(setup.dir);
    DepthNetwork depth_net(setup.cfg.vit, 1);
    EgoMotionNetwork ego_net(setup.cfg.vit, 2);

    TrainConfig none = setup.cfg;
    none.mask_target = MaskTarget::none;
    BatchLoss a = batch_training_loss(none, data, depth_net, ego_net, {0, 1}, 0);
    BatchLoss b = batch_training_loss(none, data, depth_net, ego_net, {0, 1}, 0);
    CHECK(a.total.value() == b.total.value());

    TrainConfig masked = setup.cfg;  // depth_only
    BatchLoss c = batch_training_loss(masked, data, depth_net, ego_net, {0, 1}, 0);
    CHECK(c.total.value() != a.total.value());

    TrainConfig bad = setup.cfg;
    bad.mask_target = MaskTarget::none;
    bad.loss_region = LossRegion::masked_only;
    CHECK_THROWS_AS(batch_training_loss(bad, data, depth_net, ego_net, {0}, 0),
                    std::invalid_argument);
}

TEST_CASE("exploding parameters abort with a diagnostic") {
    TinySetup setup("maskdepth_train_nan");
    setup.cfg.weight_decay = 1e300;
    setup.cfg.epochs = 1;
    CHECK_THROWS_WITH_AS(train(setup.cfg), doctest::Contains("training aborted at step"),
                         std::runtime_error);
}

TEST_CASE("gt oracle predictor scores zero rmse on the clean suite") {
    TinySetup setup("maskdepth_eval_oracle");
    Dataset data = Dataset::load(setup.dir);
    EvalOptions opt;
    auto rows = evaluate_suite(EvalSuite::clean, data, gt_oracle_predictor(data), opt);
    CHECK(rows.size() == static_cast<size_t>(data.n_triplets()));
    for (const auto& r : rows) {
        CHECK(r.metrics.rmse < 1e-6);  // pfm stores float32 depth
        CHECK(r.metrics.delta1 == 1.0);
    }
}

TEST_CASE("occlusion suite emits images x strategies x regions rows") {
    TinySetup setup("maskdepth_eval_rows");
    Dataset data = Dataset::load(setup.dir);
    EvalOptions opt;
    opt.occlusion_mask_size = 8;
    auto rows = evaluate_suite(EvalSuite::occlusion, data, gt_oracle_predictor(data), opt);
    CHECK(rows.size() == static_cast<size_t>(data.n_triplets() * 2 * 3));
    int complete = 0, unmasked = 0, masked = 0;
    for (const auto& r : rows) {
        complete += r.region == "complete";
        unmasked += r.region == "unmasked";
        masked += r.region == "masked";
    }
    CHECK(complete == data.n_triplets() * 2);
    CHECK(unmasked == data.n_triplets() * 2);
    CHECK(masked == data.n_triplets() * 2);
}

TEST_CASE("corruption suite row count and csv round trip") {
    TinySetup setup("maskdepth_eval_csv");
    Dataset data = Dataset::load(setup.dir);
    EvalOptions opt;
    opt.max_images = 2;
    opt.severities = {1, 5};
    opt.corruption_kinds = {CorruptionKind::gaussian_noise, CorruptionKind::fog};
    auto rows = evaluate_suite(EvalSuite::corruption, data, gt_oracle_predictor(data), opt);
    CHECK(rows.size() == 2u * 2u * 2u);

    const std::string csv = setup.dir + "/rows.csv";
    write_csv(csv, rows);
    auto back = read_csv(csv);
    REQUIRE(back.size() == rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].suite == rows[i].suite);
        CHECK(back[i].perturbation == rows[i].perturbation);
        CHECK(back[i].metrics.rmse == doctest::Approx(rows[i].metrics.rmse));
    }
    CHECK(mean_rmse(back, "corruption") >= 0.0);
    CHECK_THROWS_AS(mean_rmse(back, "nonexistent"), std::invalid_argument);
}

TEST_CASE("attack suite produces rows per epsilon with a trained-size model") {
    TinySetup setup("maskdepth_eval_attack", 3);
    Dataset data = Dataset::load(setup.dir);
    DepthNetwork depth_net(setup.cfg.vit, 5);
    EgoMotionNetwork ego_net(setup.cfg.vit, 6);
    EvalOptions opt;
    opt.max_images = 2;
    opt.untargeted_eps = {2.0};
    opt.targeted_eps = {1.0};
    auto rows = evaluate_suite(EvalSuite::attack, data, network_predictor(depth_net), opt,
                               &depth_net, &ego_net);
    // per image: 1 untargeted + 2 flip directions
    CHECK(rows.size() == 2u * 3u);
    CHECK_THROWS_AS(
        evaluate_suite(EvalSuite::attack, data, network_predictor(depth_net), opt, nullptr,
                       nullptr),
        std::invalid_argument);
}

TEST_CASE("ego trajectory integration starts at identity") {
    TinySetup setup("maskdepth_eval_traj", 4);
    Dataset data = Dataset::load(setup.dir);
    EgoMotionNetwork ego_net(setup.cfg.vit, 7);
    auto traj = predict_trajectory(ego_net, data, 0, 4);
    CHECK(traj.size() == 4u);
    for (int i = 0; i < 9; ++i) CHECK(traj[0].rot[i] == (i % 4 == 0 ? 1.0 : 0.0));
    for (double v : traj[1].trans) CHECK(std::isfinite(v));
}

TEST_CASE("plot writes an svg chart from evaluation rows") {
    TinySetup setup("maskdepth_plot", 3);
    Dataset data = Dataset::load(setup.dir);
    EvalOptions opt;
    opt.severities = {1, 3, 5};
    opt.corruption_kinds = {CorruptionKind::gaussian_noise, CorruptionKind::contrast};
    auto rows = evaluate_suite(EvalSuite::corruption, data, gt_oracle_predictor(data), opt);
    const std::string csv = setup.dir + "/plot.csv";
    const std::string svg = setup.dir + "/plot.svg";
    write_csv(csv, rows);
    plot_csv(csv, svg, ChartKind::line, "corruption sweep");
    const std::string content = slurp(svg);
    CHECK(content.find("<svg") != std::string::npos);
    CHECK(content.find("gaussian_noise") != std::string::npos);
    CHECK(content.find("polyline") != std::string::npos);

    plot_csv(csv, setup.dir + "/bars.svg", ChartKind::bar, "bars");
    CHECK(slurp(setup.dir + "/bars.svg").find("rect") != std::string::npos);
}

TEST_CASE("single-arm ablation grid equals one train plus evaluate") {
    TinySetup setup("maskdepth_ablate", 4);
    setup.cfg.epochs = 1;
    Dataset data = Dataset::load(setup.dir);

    std::vector<AblationArm> arm{default_ablation_arms(setup.cfg.vit.patch_edge)[0]};
    EvalOptions eval_opt;
    eval_opt.occlusion_mask_size = 8;  // 4x4 occlusion grid on the 32px frames
    AblationReport report = ablation_grid(setup.cfg, arm, {0}, data, data, false, {}, eval_opt);
    REQUIRE(report.cells.size() == 1);
    CHECK(report.cells[0].per_seed_clean.size() == 1);
    CHECK(report.cells[0].runs.size() == 1);
    CHECK(report.cells[0].clean_rmse == doctest::Approx(report.cells[0].per_seed_clean[0]));

    // the same training run, by hand
    TrainConfig cfg = arm[0].configure(setup.cfg);
    cfg.seed = 0;
    cfg.checkpoint_path.clear();
    TrainResult manual = train(cfg, data);
    CHECK(manual.record.epoch_losses == report.cells[0].runs[0].epoch_losses);

    EvalOptions opt;
    opt.seed = 0;
    auto rows = evaluate_suite(EvalSuite::clean, data, network_predictor(manual.depth), opt);
    CHECK(mean_rmse(rows, "clean") == doctest::Approx(report.cells[0].clean_rmse));

    CHECK(default_ablation_arms(8).size() == 7);
    const std::string table = report.render_table();
    CHECK(table.find("ranking") != std::string::npos);
}
