#include "maskdepth/evaluate.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <atomic>
#include <thread>

namespace maskdepth {

DepthPredictor network_predictor(const DepthNetwork& net) {
    return [&net](const Image& img, int64_t) { return predict_depth(net, img); };
}

DepthPredictor gt_oracle_predictor(const Dataset& dataset) {
    return [&dataset](const Image&, int64_t triplet_index) {
        return dataset.depth_of_center(triplet_index);
    };
}

std::vector<double> predict_depth(const DepthNetwork& net, const Image& img) {
    Tensor batch = reshape(to_tensor(img), {1, img.height, img.width, img.channels});
    Tensor depth = net.forward(batch).depth;
    return std::vector<double>(depth.data().begin(), depth.data().end());
}

std::vector<RigidTransform> predict_trajectory(const EgoMotionNetwork& ego, const Dataset& ds,
                                               int64_t frame_begin, int64_t frame_end) {
    if (frame_begin < 0 || frame_end > ds.n_frames() || frame_end - frame_begin < 2) {
        throw std::invalid_argument("predict_trajectory: bad frame range");
    }
    std::vector<RigidTransform> traj{RigidTransform::identity()};
    for (int64_t k = frame_begin; k + 1 < frame_end; ++k) {
        const Image& a = ds.frame(k);
        const Image& b = ds.frame(k + 1);
        Tensor pair = concat({reshape(to_tensor(a), {1, a.height, a.width, 3}),
                              reshape(to_tensor(b), {1, b.height, b.width, 3})},
                             3);
        Tensor out = ego.forward(pair);
        const RigidTransform t_ab = EgoMotionNetwork::pose_from_output(out, 0).to_rigid();
        traj.push_back(traj.back().compose(t_ab.inverse()));
    }
    return traj;
}

std::string to_string(EvalSuite suite) {
    switch (suite) {
        case EvalSuite::clean: return "clean";
        case EvalSuite::corruption: return "corruption";
        case EvalSuite::occlusion: return "occlusion";
        case EvalSuite::attack: return "attack";
    }
    throw std::invalid_argument("unknown suite");
}

EvalSuite suite_from_string(const std::string& name) {
    if (name == "clean") return EvalSuite::clean;
    if (name == "corruption") return EvalSuite::corruption;
    if (name == "occlusion") return EvalSuite::occlusion;
    if (name == "attack") return EvalSuite::attack;
    throw std::invalid_argument("unknown suite: " + name);
}

int worker_threads() {
    if (const char* env = std::getenv("MASKDEPTH_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

namespace {

int64_t evaluated_images(const Dataset& ds, const EvalOptions& opt) {
    const int64_t n = ds.n_triplets();
    return opt.max_images < 0 ? n : std::min<int64_t>(n, opt.max_images);
}

/// Runs fn(i) for i in [0, n), possibly across worker threads.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int threads = worker_threads();
    if (threads <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int64_t> next{0};
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const int64_t i = next.fetch_add(1);
                if (i >= n) break;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

EvalRow make_row(const EvalOptions& opt, EvalSuite suite, const std::string& perturbation,
                 double level, int64_t image, const std::string& region,
                 const DepthMetrics& metrics) {
    return EvalRow{opt.run_id, to_string(suite), perturbation, level, image, region, metrics};
}

}  // namespace

std::vector<EvalRow> evaluate_suite(EvalSuite suite, const Dataset& dataset,
                                    const DepthPredictor& predictor, const EvalOptions& opt,
                                    const DepthNetwork* depth_net,
                                    const EgoMotionNetwork* ego_net) {
    const int64_t n_img = evaluated_images(dataset, opt);
    std::vector<std::vector<EvalRow>> per_image(n_img);

    switch (suite) {
        case EvalSuite::clean: {
            parallel_for(n_img, [&](int64_t i) {
                const Triplet t = dataset.triplet(i);
                const auto pred = predictor(t.target, i);
                per_image[i].push_back(make_row(opt, suite, "clean", 0.0, i, "complete",
                                                depth_metrics(pred, t.gt_depth,
                                                              opt.metric_options)));
            });
            break;
        }
        case EvalSuite::corruption: {
            parallel_for(n_img, [&](int64_t i) {
                const Triplet t = dataset.triplet(i);
                for (CorruptionKind kind : opt.corruption_kinds) {
                    for (int severity : opt.severities) {
                        CorruptionSpec spec{kind, severity,
                                            derive_seed(opt.seed, static_cast<uint64_t>(i),
                                                        static_cast<uint64_t>(kind))};
                        const Image corrupted = corrupt(t.target, spec);
                        const auto pred = predictor(corrupted, i);
                        per_image[i].push_back(
                            make_row(opt, suite, to_string(kind), severity, i, "complete",
                                     depth_metrics(pred, t.gt_depth, opt.metric_options)));
                    }
                }
            });
            break;
        }
        case EvalSuite::occlusion: {
            parallel_for(n_img, [&](int64_t i) {
                const Triplet t = dataset.triplet(i);
                for (MaskStrategy strategy : {MaskStrategy::blockwise, MaskStrategy::random}) {
                    MaskConfig mc;
                    mc.mask_size = opt.occlusion_mask_size;
                    mc.mask_ratio = opt.occlusion_ratio;
                    mc.aspect = opt.occlusion_aspect;
                    mc.seed = derive_seed(opt.seed, static_cast<uint64_t>(i),
                                          strategy == MaskStrategy::blockwise ? 1 : 2);
                    const OcclusionResult occ = occlude(t.target, strategy, mc);
                    const auto pred = predictor(occ.image, i);
                    const auto px = occ.grid.to_pixel_mask(t.target.height, t.target.width);
                    std::vector<uint8_t> unmasked(px.size());
                    for (size_t j = 0; j < px.size(); ++j) unmasked[j] = px[j] ? 0 : 1;
                    const std::string name = to_string(strategy);
                    per_image[i].push_back(
                        make_row(opt, suite, name, opt.occlusion_ratio, i, "complete",
                                 depth_metrics(pred, t.gt_depth, opt.metric_options)));
                    per_image[i].push_back(
                        make_row(opt, suite, name, opt.occlusion_ratio, i, "unmasked",
                                 depth_metrics(pred, t.gt_depth, opt.metric_options, unmasked)));
                    per_image[i].push_back(
                        make_row(opt, suite, name, opt.occlusion_ratio, i, "masked",
                                 depth_metrics(pred, t.gt_depth, opt.metric_options, px)));
                }
            });
            break;
        }
        case EvalSuite::attack: {
            if (!depth_net || !ego_net) {
                throw std::invalid_argument("attack suite needs the model networks");
            }
            parallel_for(n_img, [&](int64_t i) {
                const Triplet t = dataset.triplet(i);
                for (double eps : opt.untargeted_eps) {
                    const AttackResult r =
                        untargeted_attack(*depth_net, *ego_net, t, opt.loss_weights, eps);
                    const auto pred = predictor(r.adversarial, i);
                    per_image[i].push_back(
                        make_row(opt, suite, "untargeted", eps, i, "complete",
                                 depth_metrics(pred, t.gt_depth, opt.metric_options)));
                }
                for (double eps : opt.targeted_eps) {
                    for (AttackMode mode :
                         {AttackMode::flip_horizontal, AttackMode::flip_vertical}) {
                        const AttackResult r =
                            targeted_flip_attack(*depth_net, t.target, eps, mode);
                        const auto pred = predictor(r.adversarial, i);
                        per_image[i].push_back(
                            make_row(opt, suite, to_string(mode), eps, i, "complete",
                                     depth_metrics(pred, t.gt_depth, opt.metric_options)));
                    }
                }
            });
            break;
        }
    }

    std::vector<EvalRow> rows;
    for (auto& chunk : per_image) {
        for (auto& row : chunk) rows.push_back(std::move(row));
    }
    return rows;
}

void write_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open csv for writing: " + path);
    f.precision(17);
    f << "run_id,suite,perturbation,level,image,region,rmse,delta1,delta2,delta3,scale\n";
    for (const auto& r : rows) {
        f << r.run_id << ',' << r.suite << ',' << r.perturbation << ',' << r.level << ','
          << r.image_index << ',' << r.region << ',' << r.metrics.rmse << ','
          << r.metrics.delta1 << ',' << r.metrics.delta2 << ',' << r.metrics.delta3 << ','
          << r.metrics.scale << '\n';
    }
    if (!f) throw std::runtime_error("csv write failed: " + path);
}

std::vector<EvalRow> read_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open csv: " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty csv: " + path);
    std::vector<EvalRow> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string field;
        EvalRow r;
        auto next = [&](std::string& out) {
            if (!std::getline(is, out, ',')) throw std::runtime_error("malformed csv row: " + line);
        };
        next(r.run_id);
        next(r.suite);
        next(r.perturbation);
        next(field);
        r.level = std::stod(field);
        next(field);
        r.image_index = std::stoll(field);
        next(r.region);
        next(field);
        r.metrics.rmse = std::stod(field);
        next(field);
        r.metrics.delta1 = std::stod(field);
        next(field);
        r.metrics.delta2 = std::stod(field);
        next(field);
        r.metrics.delta3 = std::stod(field);
        next(field);
        r.metrics.scale = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

double mean_rmse(const std::vector<EvalRow>& rows, const std::string& suite,
                 const std::string& perturbation, const std::string& region) {
    double acc = 0.0;
    int64_t count = 0;
    for (const auto& r : rows) {
        if (!suite.empty() && r.suite != suite) continue;
        if (!perturbation.empty() && r.perturbation != perturbation) continue;
        if (!region.empty() && r.region != region) continue;
        acc += r.metrics.rmse;
        ++count;
    }
    if (count == 0) throw std::invalid_argument("mean_rmse: no rows match the filter");
    return acc / static_cast<double>(count);
}

}  // namespace maskdepth
