#include "maskdepth/networks.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace maskdepth {

void ViTConfig::validate() const {
    if (width % heads != 0) {
        throw std::invalid_argument("vit config: width must be divisible by heads");
    }
    if (image_h % patch_edge != 0 || image_w % patch_edge != 0) {
        throw std::invalid_argument("vit config: image extents must be divisible by patch_edge");
    }
    if (!(d_min > 0.0 && d_min < d_max)) {
        throw std::invalid_argument("vit config: need 0 < d_min < d_max");
    }
    if (layers < 1 || heads < 1 || width < 1) {
        throw std::invalid_argument("vit config: degenerate dimensions");
    }
}

Tensor ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
    if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor t = Tensor::from_data(std::move(shape), std::move(init), true);
    t.grad_buffer();  // allocate up front so leaves always expose a grad
    entries_.emplace_back(name, t);
    return t;
}

Tensor ParamStore::get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw std::out_of_range("no parameter named " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return true;
    }
    return false;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& [n, t] : entries_) out.push_back(t);
    return out;
}

int64_t ParamStore::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
}

namespace {

std::vector<double> trunc_normal(Rng& rng, int64_t n, double std) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.truncated_gaussian(std);
    return v;
}

std::vector<double> zeros(int64_t n) { return std::vector<double>(static_cast<size_t>(n), 0.0); }
std::vector<double> ones(int64_t n) { return std::vector<double>(static_cast<size_t>(n), 1.0); }

void add_encoder_params(ParamStore& store, const std::string& prefix, const ViTConfig& cfg,
                        Rng& rng) {
    const int64_t w = cfg.width;
    const int64_t hidden = cfg.mlp_hidden();
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = prefix + "layer" + std::to_string(l) + ".";
        store.add(p + "ln1_g", {w}, ones(w));
        store.add(p + "ln1_b", {w}, zeros(w));
        store.add(p + "qkv_w", {w, 3 * w}, trunc_normal(rng, w * 3 * w, cfg.init_std));
        store.add(p + "qkv_b", {3 * w}, zeros(3 * w));
        store.add(p + "proj_w", {w, w}, trunc_normal(rng, w * w, cfg.init_std));
        store.add(p + "proj_b", {w}, zeros(w));
        store.add(p + "ln2_g", {w}, ones(w));
        store.add(p + "ln2_b", {w}, zeros(w));
        store.add(p + "fc1_w", {w, hidden}, trunc_normal(rng, w * hidden, cfg.init_std));
        store.add(p + "fc1_b", {hidden}, zeros(hidden));
        store.add(p + "fc2_w", {hidden, w}, trunc_normal(rng, hidden * w, cfg.init_std));
        store.add(p + "fc2_b", {w}, zeros(w));
    }
}

constexpr double kLnEps = 1e-6;

}  // namespace

Tensor patch_embed(const Tensor& images, const Tensor& proj_w, const Tensor& proj_b,
                   const ViTConfig& cfg) {
    const auto& s = images.shape();
    if (s.size() != 4 || s[1] != cfg.image_h || s[2] != cfg.image_w) {
        throw std::invalid_argument("patch_embed expects [B," + std::to_string(cfg.image_h) +
                                    "," + std::to_string(cfg.image_w) + ",C], got " +
                                    shape_str(s));
    }
    const int64_t B = s[0];
    const int64_t C = s[3];
    const int64_t p = cfg.patch_edge;
    const int64_t gh = cfg.grid_h();
    const int64_t gw = cfg.grid_w();
    Tensor grid = reshape(images, {B, gh, p, gw, p, C});
    Tensor patches = reshape(transpose(grid, {0, 1, 3, 2, 4, 5}), {B * gh * gw, p * p * C});
    return add(matmul(patches, proj_w), proj_b);
}

Tensor transformer_encoder(const Tensor& tokens, const ParamStore& params,
                           const std::string& prefix, const ViTConfig& cfg,
                           std::vector<Tensor>* attention_maps) {
    const auto& s = tokens.shape();
    if (s.size() != 3 || s[1] != cfg.n_tokens() || s[2] != cfg.width) {
        throw std::invalid_argument("encoder expects [B," + std::to_string(cfg.n_tokens()) + "," +
                                    std::to_string(cfg.width) + "], got " + shape_str(s));
    }
    const int64_t B = s[0];
    const int64_t N = s[1];
    const int64_t W = s[2];
    const int64_t H = cfg.heads;
    const int64_t D = W / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(D));

    Tensor x = tokens;
    for (int l = 0; l < cfg.layers; ++l) {
        const std::string p = prefix + "layer" + std::to_string(l) + ".";
        Tensor h = layer_norm(x, 2, params.get(p + "ln1_g"), params.get(p + "ln1_b"), kLnEps);
        Tensor qkv = add(matmul(reshape(h, {B * N, W}), params.get(p + "qkv_w")),
                         params.get(p + "qkv_b"));
        Tensor split = transpose(reshape(qkv, {B, N, 3, H, D}), {2, 0, 3, 1, 4});  // [3,B,H,N,D]
        Tensor q = reshape(slice(split, 0, 0, 1), {B * H, N, D});
        Tensor k = reshape(slice(split, 0, 1, 2), {B * H, N, D});
        Tensor v = reshape(slice(split, 0, 2, 3), {B * H, N, D});
        Tensor scores = mul(matmul(q, transpose(k, {0, 2, 1})), Tensor::scalar(scale));
        Tensor attn = softmax(scores, 2);
        if (attention_maps) attention_maps->push_back(attn);
        Tensor ctx = matmul(attn, v);  // [B*H, N, D]
        Tensor merged = reshape(transpose(reshape(ctx, {B, H, N, D}), {0, 2, 1, 3}), {B * N, W});
        Tensor attended = add(matmul(merged, params.get(p + "proj_w")), params.get(p + "proj_b"));
        x = add(x, reshape(attended, {B, N, W}));

        Tensor h2 = layer_norm(x, 2, params.get(p + "ln2_g"), params.get(p + "ln2_b"), kLnEps);
        Tensor m = gelu(add(matmul(reshape(h2, {B * N, W}), params.get(p + "fc1_w")),
                            params.get(p + "fc1_b")));
        Tensor m2 = add(matmul(m, params.get(p + "fc2_w")), params.get(p + "fc2_b"));
        x = add(x, reshape(m2, {B, N, W}));
    }
    return x;
}

// ---------------------------------------------------------------------------
// DepthNetwork

DepthNetwork::DepthNetwork(const ViTConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xdeb7));
    const int64_t w = cfg_.width;
    const int64_t in_dim = static_cast<int64_t>(cfg_.patch_edge) * cfg_.patch_edge * 3;
    const int64_t n = cfg_.n_tokens();
    params_.add("patch_w", {in_dim, w}, trunc_normal(rng, in_dim * w, cfg_.init_std));
    params_.add("patch_b", {w}, zeros(w));
    params_.add("pos_embed", {n, w}, trunc_normal(rng, n * w, cfg_.pos_embed_std));
    mask_token_.init_scale = cfg_.mask_token_std;
    {
        Rng token_rng(derive_seed(seed, 0x7a5c));
        MaskToken t = MaskToken::create(static_cast<int>(w), cfg_.mask_token_std, token_rng,
                                        cfg_.per_position_mask_tokens, n);
        std::vector<double> init(t.embedding.data().begin(), t.embedding.data().end());
        mask_token_.embedding = params_.add("mask_token", t.embedding.shape(), std::move(init));
    }
    add_encoder_params(params_, "enc.", cfg_, rng);
    params_.add("ln_f_g", {w}, ones(w));
    params_.add("ln_f_b", {w}, zeros(w));
    const int64_t out_dim = static_cast<int64_t>(cfg_.patch_edge) * cfg_.patch_edge;
    // zero head: every run starts from a flat mid-range depth field
    params_.add("head_w", {w, out_dim}, zeros(w * out_dim));
    params_.add("head_b", {out_dim}, zeros(out_dim));
}

Tensor DepthNetwork::tokens_entering_encoder(const Tensor& images,
                                             const std::vector<MaskGrid>& masks) const {
    const int64_t B = images.shape()[0];
    const int64_t n = cfg_.n_tokens();
    Tensor tokens = patch_embed(images, params_.get("patch_w"), params_.get("patch_b"), cfg_);
    if (!masks.empty()) {
        if (static_cast<int64_t>(masks.size()) != B) {
            throw std::invalid_argument("one mask grid per batch item required");
        }
        std::vector<uint8_t> rows(static_cast<size_t>(B * n));
        for (int64_t b = 0; b < B; ++b) {
            const MaskGrid& g = masks[b];
            MaskGrid fine = (g.gh == cfg_.grid_h() && g.gw == cfg_.grid_w())
                                ? g
                                : g.repeat_to(cfg_.grid_h(), cfg_.grid_w());
            std::copy(fine.cells.begin(), fine.cells.end(), rows.begin() + b * n);
        }
        tokens = apply_mask_rows(tokens, rows, mask_token_.embedding, n);
    }
    // position embeddings go on after mask substitution
    return add(reshape(tokens, {B, n, cfg_.width}), params_.get("pos_embed"));
}

DepthNetwork::Output DepthNetwork::forward(const Tensor& images,
                                           const std::vector<MaskGrid>& masks) const {
    const int64_t B = images.shape()[0];
    const int64_t n = cfg_.n_tokens();
    const int64_t p = cfg_.patch_edge;
    Tensor x = transformer_encoder(tokens_entering_encoder(images, masks), params_, "enc.", cfg_);
    Tensor h = layer_norm(x, 2, params_.get("ln_f_g"), params_.get("ln_f_b"), kLnEps);
    Tensor logits = add(matmul(reshape(h, {B * n, cfg_.width}), params_.get("head_w")),
                        params_.get("head_b"));
    Tensor disparity_patches = sigmoid(logits);  // [B*n, p*p]
    Tensor grid = reshape(disparity_patches, {B, cfg_.grid_h(), cfg_.grid_w(), p, p});
    Output out;
    out.disparity = reshape(transpose(grid, {0, 1, 3, 2, 4}), {B, cfg_.image_h, cfg_.image_w});
    // bounded inverse-depth interpolation: sigma=0 -> d_min, sigma=1 -> d_max
    Tensor inv_depth = add(div(sub(Tensor::scalar(1.0), out.disparity), Tensor::scalar(cfg_.d_min)),
                           div(out.disparity, Tensor::scalar(cfg_.d_max)));
    out.depth = div(Tensor::scalar(1.0), inv_depth);
    return out;
}

// ---------------------------------------------------------------------------
// EgoMotionNetwork

EgoMotionNetwork::EgoMotionNetwork(const ViTConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xe601));
    const int64_t w = cfg_.width;
    const int64_t in_dim = static_cast<int64_t>(cfg_.patch_edge) * cfg_.patch_edge * 6;
    const int64_t n = cfg_.n_tokens();
    params_.add("patch_w", {in_dim, w}, trunc_normal(rng, in_dim * w, cfg_.init_std));
    params_.add("patch_b", {w}, zeros(w));
    params_.add("pos_embed", {n, w}, trunc_normal(rng, n * w, cfg_.pos_embed_std));
    mask_token_.init_scale = cfg_.mask_token_std;
    {
        Rng token_rng(derive_seed(seed, 0x7a5d));
        MaskToken t = MaskToken::create(static_cast<int>(w), cfg_.mask_token_std, token_rng,
                                        cfg_.per_position_mask_tokens, n);
        std::vector<double> init(t.embedding.data().begin(), t.embedding.data().end());
        mask_token_.embedding = params_.add("mask_token", t.embedding.shape(), std::move(init));
    }
    add_encoder_params(params_, "enc.", cfg_, rng);
    params_.add("ln_f_g", {w}, ones(w));
    params_.add("ln_f_b", {w}, zeros(w));
    // zero head: training starts from identity poses
    params_.add("head_w", {w, 6}, zeros(w * 6));
    params_.add("head_b", {6}, zeros(6));
}

Tensor EgoMotionNetwork::forward(const Tensor& pairs, const std::vector<MaskGrid>& masks) const {
    const auto& s = pairs.shape();
    if (s.size() != 4 || s[3] != 6) {
        throw std::invalid_argument("ego network expects [B,H,W,6] pairs, got " + shape_str(s));
    }
    const int64_t B = s[0];
    const int64_t n = cfg_.n_tokens();
    Tensor tokens = patch_embed(pairs, params_.get("patch_w"), params_.get("patch_b"), cfg_);
    if (!masks.empty()) {
        if (static_cast<int64_t>(masks.size()) != B) {
            throw std::invalid_argument("one mask grid per batch item required");
        }
        std::vector<uint8_t> rows(static_cast<size_t>(B * n));
        for (int64_t b = 0; b < B; ++b) {
            const MaskGrid& g = masks[b];
            MaskGrid fine = (g.gh == cfg_.grid_h() && g.gw == cfg_.grid_w())
                                ? g
                                : g.repeat_to(cfg_.grid_h(), cfg_.grid_w());
            std::copy(fine.cells.begin(), fine.cells.end(), rows.begin() + b * n);
        }
        tokens = apply_mask_rows(tokens, rows, mask_token_.embedding, n);
    }
    Tensor x = add(reshape(tokens, {B, n, cfg_.width}), params_.get("pos_embed"));
    x = transformer_encoder(x, params_, "enc.", cfg_);
    Tensor h = layer_norm(x, 2, params_.get("ln_f_g"), params_.get("ln_f_b"), kLnEps);
    Tensor pooled = mean(h, {1});  // [B, width]
    Tensor out = add(matmul(pooled, params_.get("head_w")), params_.get("head_b"));
    return mul(out, Tensor::scalar(cfg_.pose_scale));
}

Pose EgoMotionNetwork::pose_from_output(const Tensor& output, int64_t item) {
    if (output.shape().size() != 2 || output.shape()[1] != 6) {
        throw std::invalid_argument("pose output must be [B,6]");
    }
    Tensor row = reshape(slice(output, 0, item, item + 1), {6});
    return Pose(slice(row, 0, 0, 3), slice(row, 0, 3, 6));
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

template <class T>
void write_raw(std::ostream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_store(std::ostream& f, const std::string& prefix, const ParamStore& store) {
    for (const auto& [name, t] : store.entries()) {
        const std::string full = prefix + name;
        write_raw<uint32_t>(f, static_cast<uint32_t>(full.size()));
        f.write(full.data(), static_cast<std::streamsize>(full.size()));
        const auto& shape = t.shape();
        write_raw<uint32_t>(f, static_cast<uint32_t>(shape.size()));
        for (int64_t e : shape) write_raw<uint64_t>(f, static_cast<uint64_t>(e));
        f.write(reinterpret_cast<const char*>(t.data().data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
}

std::string config_block(const ViTConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "patch_edge=" << cfg.patch_edge << "\nwidth=" << cfg.width
       << "\nlayers=" << cfg.layers << "\nheads=" << cfg.heads
       << "\nmlp_ratio=" << cfg.mlp_ratio << "\nimage_h=" << cfg.image_h
       << "\nimage_w=" << cfg.image_w << "\nd_min=" << cfg.d_min << "\nd_max=" << cfg.d_max
       << "\npose_scale=" << cfg.pose_scale << "\ninit_std=" << cfg.init_std
       << "\npos_embed_std=" << cfg.pos_embed_std
       << "\nmask_token_std=" << cfg.mask_token_std
       << "\nper_position_mask_tokens=" << (cfg.per_position_mask_tokens ? 1 : 0) << "\n";
    return os.str();
}

ViTConfig parse_config_block(const std::string& text) {
    ViTConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "patch_edge") cfg.patch_edge = std::stoi(value);
        else if (key == "width") cfg.width = std::stoi(value);
        else if (key == "layers") cfg.layers = std::stoi(value);
        else if (key == "heads") cfg.heads = std::stoi(value);
        else if (key == "mlp_ratio") cfg.mlp_ratio = std::stod(value);
        else if (key == "image_h") cfg.image_h = std::stoi(value);
        else if (key == "image_w") cfg.image_w = std::stoi(value);
        else if (key == "d_min") cfg.d_min = std::stod(value);
        else if (key == "d_max") cfg.d_max = std::stod(value);
        else if (key == "pose_scale") cfg.pose_scale = std::stod(value);
        else if (key == "init_std") cfg.init_std = std::stod(value);
        else if (key == "pos_embed_std") cfg.pos_embed_std = std::stod(value);
        else if (key == "mask_token_std") cfg.mask_token_std = std::stod(value);
        else if (key == "per_position_mask_tokens") cfg.per_position_mask_tokens = value == "1";
    }
    return cfg;
}

constexpr char kMagic[4] = {'M', 'I', 'M', 'D'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const DepthNetwork& depth,
                     const EgoMotionNetwork& ego) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, 4);
    write_raw<uint32_t>(f, kVersion);
    const std::string cfg = config_block(depth.config());
    write_raw<uint32_t>(f, static_cast<uint32_t>(cfg.size()));
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    const uint32_t count = static_cast<uint32_t>(depth.params().entries().size() +
                                                 ego.params().entries().size());
    write_raw<uint32_t>(f, count);
    write_store(f, "depth.", depth.params());
    write_store(f, "ego.", ego.params());
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

std::pair<DepthNetwork, EgoMotionNetwork> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("not a model checkpoint: " + path);
    }
    const uint32_t version = read_raw<uint32_t>(f);
    if (version != kVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const uint32_t cfg_len = read_raw<uint32_t>(f);
    std::string cfg_text(cfg_len, '\0');
    f.read(cfg_text.data(), cfg_len);
    const ViTConfig cfg = parse_config_block(cfg_text);

    DepthNetwork depth(cfg, 0);
    EgoMotionNetwork ego(cfg, 0);
    const uint32_t count = read_raw<uint32_t>(f);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_raw<uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const uint32_t rank = read_raw<uint32_t>(f);
        Shape shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int64_t>(read_raw<uint64_t>(f));
            numel *= shape[d];
        }
        Tensor target;
        if (name.rfind("depth.", 0) == 0) {
            target = depth.params().get(name.substr(6));
        } else if (name.rfind("ego.", 0) == 0) {
            target = ego.params().get(name.substr(4));
        } else {
            throw std::runtime_error("unknown parameter record: " + name);
        }
        if (target.shape() != shape) {
            throw std::runtime_error("checkpoint shape mismatch for " + name + ": " +
                                     shape_str(shape) + " vs " + shape_str(target.shape()));
        }
        f.read(reinterpret_cast<char*>(target.raw_data().data()),
               static_cast<std::streamsize>(numel * sizeof(double)));
        if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    }
    return {std::move(depth), std::move(ego)};
}

std::string file_digest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for digest: " + path);
    uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
        const std::streamsize got = f.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
        if (!f) break;
    }
    std::ostringstream os;
    os << std::hex << hash;
    return os.str();
}

}  // namespace maskdepth
