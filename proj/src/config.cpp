#include "maskdepth/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace maskdepth {

std::string to_string(MaskTarget target) {
    switch (target) {
        case MaskTarget::depth_only: return "depth_only";
        case MaskTarget::ego_only: return "ego_only";
        case MaskTarget::both: return "both";
        case MaskTarget::none: return "none";
    }
    throw std::invalid_argument("unknown mask target");
}

MaskTarget mask_target_from_string(const std::string& name) {
    if (name == "depth_only") return MaskTarget::depth_only;
    if (name == "ego_only") return MaskTarget::ego_only;
    if (name == "both") return MaskTarget::both;
    if (name == "none") return MaskTarget::none;
    throw std::invalid_argument("unknown mask target: " + name);
}

std::string to_string(LossRegion region) {
    return region == LossRegion::complete ? "complete" : "masked_only";
}

LossRegion loss_region_from_string(const std::string& name) {
    if (name == "complete") return LossRegion::complete;
    if (name == "masked_only") return LossRegion::masked_only;
    throw std::invalid_argument("unknown loss region: " + name);
}

std::string to_string(PhotometricCombine combine) {
    return combine == PhotometricCombine::min ? "min" : "mean";
}

PhotometricCombine photometric_combine_from_string(const std::string& name) {
    if (name == "min") return PhotometricCombine::min;
    if (name == "mean") return PhotometricCombine::mean;
    throw std::invalid_argument("unknown photometric combine: " + name);
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs/batch_size must be >= 1");
    if (lr <= 0.0 || lr_decay_factor <= 0.0) throw std::invalid_argument("invalid learning rate");
    if (lr_decay_epoch < 0) throw std::invalid_argument("invalid lr decay epoch");
    loss_weights.validate();
    mask.validate();
    vit.validate();
    if (!dataset_dir.empty() && !std::filesystem::exists(dataset_dir)) {
        throw std::invalid_argument("dataset directory does not exist: " + dataset_dir);
    }
}

namespace {

void assign(TrainConfig& cfg, const std::string& section, const std::string& key,
            const std::string& value) {
    const std::string full = section + "." + key;
    auto as_int = [&] { return std::stoi(value); };
    auto as_double = [&] { return std::stod(value); };
    auto as_u64 = [&] { return static_cast<uint64_t>(std::stoull(value)); };

    if (full == "train.epochs") cfg.epochs = as_int();
    else if (full == "train.batch_size") cfg.batch_size = as_int();
    else if (full == "train.lr") cfg.lr = as_double();
    else if (full == "train.lr_decay_factor") cfg.lr_decay_factor = as_double();
    else if (full == "train.lr_decay_epoch") cfg.lr_decay_epoch = as_int();
    else if (full == "train.beta1") cfg.beta1 = as_double();
    else if (full == "train.beta2") cfg.beta2 = as_double();
    else if (full == "train.adam_eps") cfg.adam_eps = as_double();
    else if (full == "train.weight_decay") cfg.weight_decay = as_double();
    else if (full == "train.seed") cfg.seed = as_u64();
    else if (full == "train.dataset") cfg.dataset_dir = value;
    else if (full == "train.checkpoint") cfg.checkpoint_path = value;
    else if (full == "loss.lambda_ssim") cfg.loss_weights.lambda_ssim = as_double();
    else if (full == "loss.lambda_l1") cfg.loss_weights.lambda_l1 = as_double();
    else if (full == "loss.lambda_smooth") cfg.loss_weights.lambda_smooth = as_double();
    else if (full == "loss.region") cfg.loss_region = loss_region_from_string(value);
    else if (full == "loss.combine") cfg.photometric_combine = photometric_combine_from_string(value);
    else if (full == "mask.size") cfg.mask.mask_size = as_int();
    else if (full == "mask.ratio") cfg.mask.mask_ratio = as_double();
    else if (full == "mask.aspect") cfg.mask.aspect = as_double();
    else if (full == "mask.target") cfg.mask_target = mask_target_from_string(value);
    else if (full == "mask.depth_strategy") cfg.depth_mask_strategy = mask_strategy_from_string(value);
    else if (full == "mask.ego_strategy") cfg.ego_mask_strategy = mask_strategy_from_string(value);
    else if (full == "mask.per_position_tokens") cfg.vit.per_position_mask_tokens = value == "1" || value == "true";
    else if (full == "model.patch_edge") cfg.vit.patch_edge = as_int();
    else if (full == "model.width") cfg.vit.width = as_int();
    else if (full == "model.layers") cfg.vit.layers = as_int();
    else if (full == "model.heads") cfg.vit.heads = as_int();
    else if (full == "model.mlp_ratio") cfg.vit.mlp_ratio = as_double();
    else if (full == "model.image_h") cfg.vit.image_h = as_int();
    else if (full == "model.image_w") cfg.vit.image_w = as_int();
    else if (full == "model.d_min") cfg.vit.d_min = as_double();
    else if (full == "model.d_max") cfg.vit.d_max = as_double();
    else if (full == "model.pose_scale") cfg.vit.pose_scale = as_double();
    else if (full == "model.init_std") cfg.vit.init_std = as_double();
    else if (full == "model.pos_embed_std") cfg.vit.pos_embed_std = as_double();
    else if (full == "model.mask_token_std") cfg.vit.mask_token_std = as_double();
    else throw std::invalid_argument("unknown config key: " + full);
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::string section = "train";
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto ltrim = line.find_first_not_of(" \t\r");
        if (ltrim == std::string::npos) continue;
        auto rtrim = line.find_last_not_of(" \t\r");
        line = line.substr(ltrim, rtrim - ltrim + 1);
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::invalid_argument("malformed section header at line " +
                                            std::to_string(line_no));
            }
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("expected key=value at line " + std::to_string(line_no));
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        key.erase(key.find_last_not_of(" \t") + 1);
        value.erase(0, value.find_first_not_of(" \t"));
        assign(cfg, section, key, value);
    }
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_train_config(ss.str());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    }
    assign(cfg, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1),
           assignment.substr(eq + 1));
}

std::string serialize(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "[train]\n"
       << "epochs=" << cfg.epochs << "\nbatch_size=" << cfg.batch_size << "\nlr=" << cfg.lr
       << "\nlr_decay_factor=" << cfg.lr_decay_factor
       << "\nlr_decay_epoch=" << cfg.lr_decay_epoch << "\nbeta1=" << cfg.beta1
       << "\nbeta2=" << cfg.beta2 << "\nadam_eps=" << cfg.adam_eps
       << "\nweight_decay=" << cfg.weight_decay << "\nseed=" << cfg.seed
       << "\ndataset=" << cfg.dataset_dir << "\ncheckpoint=" << cfg.checkpoint_path << "\n";
    os << "[loss]\n"
       << "lambda_ssim=" << cfg.loss_weights.lambda_ssim
       << "\nlambda_l1=" << cfg.loss_weights.lambda_l1
       << "\nlambda_smooth=" << cfg.loss_weights.lambda_smooth
       << "\nregion=" << to_string(cfg.loss_region)
       << "\ncombine=" << to_string(cfg.photometric_combine) << "\n";
    os << "[mask]\n"
       << "size=" << cfg.mask.mask_size << "\nratio=" << cfg.mask.mask_ratio
       << "\naspect=" << cfg.mask.aspect << "\ntarget=" << to_string(cfg.mask_target)
       << "\ndepth_strategy=" << to_string(cfg.depth_mask_strategy)
       << "\nego_strategy=" << to_string(cfg.ego_mask_strategy)
       << "\nper_position_tokens=" << (cfg.vit.per_position_mask_tokens ? 1 : 0) << "\n";
    os << "[model]\n"
       << "patch_edge=" << cfg.vit.patch_edge << "\nwidth=" << cfg.vit.width
       << "\nlayers=" << cfg.vit.layers << "\nheads=" << cfg.vit.heads
       << "\nmlp_ratio=" << cfg.vit.mlp_ratio << "\nimage_h=" << cfg.vit.image_h
       << "\nimage_w=" << cfg.vit.image_w << "\nd_min=" << cfg.vit.d_min
       << "\nd_max=" << cfg.vit.d_max << "\npose_scale=" << cfg.vit.pose_scale
       << "\ninit_std=" << cfg.vit.init_std << "\npos_embed_std=" << cfg.vit.pos_embed_std
       << "\nmask_token_std=" << cfg.vit.mask_token_std
       << "\n";
    return os.str();
}

}  // namespace maskdepth
