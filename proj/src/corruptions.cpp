#include "maskdepth/corruptions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "maskdepth/rng.hpp"

namespace maskdepth {

const std::vector<CorruptionKind>& all_corruption_kinds() {
    static const std::vector<CorruptionKind> kinds{
        CorruptionKind::gaussian_noise, CorruptionKind::shot_noise,
        CorruptionKind::impulse_noise,  CorruptionKind::defocus_blur,
        CorruptionKind::motion_blur,    CorruptionKind::zoom_blur,
        CorruptionKind::fog,            CorruptionKind::brightness,
        CorruptionKind::contrast,       CorruptionKind::pixelate,
    };
    return kinds;
}

std::string to_string(CorruptionKind kind) {
    switch (kind) {
        case CorruptionKind::gaussian_noise: return "gaussian_noise";
        case CorruptionKind::shot_noise: return "shot_noise";
        case CorruptionKind::impulse_noise: return "impulse_noise";
        case CorruptionKind::defocus_blur: return "defocus_blur";
        case CorruptionKind::motion_blur: return "motion_blur";
        case CorruptionKind::zoom_blur: return "zoom_blur";
        case CorruptionKind::fog: return "fog";
        case CorruptionKind::brightness: return "brightness";
        case CorruptionKind::contrast: return "contrast";
        case CorruptionKind::pixelate: return "pixelate";
    }
    throw std::invalid_argument("unknown corruption kind");
}

CorruptionKind corruption_from_string(const std::string& name) {
    for (CorruptionKind kind : all_corruption_kinds()) {
        if (to_string(kind) == name) return kind;
    }
    throw std::invalid_argument("unsupported corruption kind: " + name);
}

namespace {

// Severity tables, index 0 = severity 1. The paper inherits these shapes
// from a standard corruption benchmark; magnitudes here are tuned for
// desk-scale 64x64 frames.
constexpr double kGaussianSigma[5] = {0.04, 0.06, 0.09, 0.13, 0.18};
constexpr double kShotLambda[5] = {500, 250, 125, 60, 25};
constexpr double kImpulseFraction[5] = {0.02, 0.04, 0.07, 0.11, 0.17};
constexpr double kDefocusRadius[5] = {1, 2, 3, 4, 6};
constexpr double kMotionLength[5] = {3, 5, 7, 9, 13};
constexpr double kZoomLayers[5] = {3, 5, 7, 9, 12};
constexpr double kFogBlend[5] = {0.15, 0.25, 0.35, 0.45, 0.60};
constexpr double kBrightnessDelta[5] = {0.10, 0.18, 0.26, 0.34, 0.42};
constexpr double kContrastScale[5] = {0.75, 0.60, 0.45, 0.30, 0.20};
constexpr double kPixelateBlock[5] = {2, 4, 8, 16, 32};

double clip01(double v) { return std::min(1.0, std::max(0.0, v)); }

// border-clamped bilinear read
double sample(const Image& img, double y, double x, int c) {
    const double yc = std::min(std::max(y, 0.0), static_cast<double>(img.height - 1));
    const double xc = std::min(std::max(x, 0.0), static_cast<double>(img.width - 1));
    const int y0 = static_cast<int>(std::floor(yc));
    const int x0 = static_cast<int>(std::floor(xc));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const double wy = yc - y0;
    const double wx = xc - x0;
    return (1 - wy) * ((1 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c)) +
           wy * ((1 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c));
}

Image gaussian_noise(const Image& img, double sigma, Rng& rng) {
    Image out = img;
    for (auto& v : out.data) v = clip01(v + rng.gaussian(0.0, sigma));
    return out;
}

Image shot_noise(const Image& img, double lambda, Rng& rng) {
    Image out = img;
    for (auto& v : out.data) {
        v = clip01(static_cast<double>(rng.poisson(v * lambda)) / lambda);
    }
    return out;
}

Image impulse_noise(const Image& img, double fraction, Rng& rng) {
    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (rng.uniform() >= fraction) continue;
            const double value = rng.uniform() < 0.5 ? 0.0 : 1.0;
            for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = value;
        }
    }
    return out;
}

Image disk_blur(const Image& img, int radius) {
    std::vector<std::pair<int, int>> offsets;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            if (dy * dy + dx * dx <= radius * radius) offsets.emplace_back(dy, dx);
        }
    }
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (const auto& [dy, dx] : offsets) {
                    const int yy = std::clamp(y + dy, 0, img.height - 1);
                    const int xx = std::clamp(x + dx, 0, img.width - 1);
                    acc += img.at(yy, xx, c);
                }
                out.at(y, x, c) = clip01(acc / offsets.size());
            }
        }
    }
    return out;
}

Image motion_blur(const Image& img, int length, Rng& rng) {
    const double angle = rng.uniform(0.0, M_PI);
    const double dy = std::sin(angle);
    const double dx = std::cos(angle);
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int s = 0; s < length; ++s) {
                    const double t = s - (length - 1) / 2.0;
                    acc += sample(img, y + t * dy, x + t * dx, c);
                }
                out.at(y, x, c) = clip01(acc / length);
            }
        }
    }
    return out;
}

Image zoom_blur(const Image& img, int layers) {
    const double cy = (img.height - 1) / 2.0;
    const double cx = (img.width - 1) / 2.0;
    Image out(img.height, img.width, img.channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int s = 0; s < layers; ++s) {
                    const double zoom = 1.0 + 0.02 * s;
                    acc += sample(img, cy + (y - cy) / zoom, cx + (x - cx) / zoom, c);
                }
                out.at(y, x, c) = clip01(acc / layers);
            }
        }
    }
    return out;
}

Image fog(const Image& img, double blend) {
    Image out = img;
    for (int y = 0; y < img.height; ++y) {
        const double w = blend * (0.6 + 0.4 * (1.0 - static_cast<double>(y) / (img.height - 1)));
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < img.channels; ++c) {
                out.at(y, x, c) = clip01(img.at(y, x, c) * (1.0 - w) + w);
            }
        }
    }
    return out;
}

Image brightness(const Image& img, double delta) {
    Image out = img;
    for (auto& v : out.data) v = clip01(v + delta);
    return out;
}

Image contrast(const Image& img, double scale) {
    Image out = img;
    for (int c = 0; c < img.channels; ++c) {
        double mean = 0.0;
        for (size_t px = 0; px < img.pixel_count(); ++px) mean += img.data[px * img.channels + c];
        mean /= static_cast<double>(img.pixel_count());
        for (size_t px = 0; px < img.pixel_count(); ++px) {
            double& v = out.data[px * img.channels + c];
            v = clip01((v - mean) * scale + mean);
        }
    }
    return out;
}

// Pairwise sum so that averaging an already-constant block reproduces the
// value exactly (power-of-two block areas).
double pairwise_sum(std::vector<double>& buf, size_t lo, size_t hi) {
    if (hi - lo == 1) return buf[lo];
    const size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(buf, lo, mid) + pairwise_sum(buf, mid, hi);
}

Image pixelate(const Image& img, int block) {
    block = std::min(block, std::min(img.height, img.width));
    Image out = img;
    std::vector<double> buf;
    for (int y0 = 0; y0 < img.height; y0 += block) {
        for (int x0 = 0; x0 < img.width; x0 += block) {
            const int y1 = std::min(y0 + block, img.height);
            const int x1 = std::min(x0 + block, img.width);
            for (int c = 0; c < img.channels; ++c) {
                buf.clear();
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) buf.push_back(img.at(y, x, c));
                }
                const double mean = pairwise_sum(buf, 0, buf.size()) / buf.size();
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) out.at(y, x, c) = mean;
                }
            }
        }
    }
    return out;
}

}  // namespace

double severity_parameter(CorruptionKind kind, int severity) {
    if (severity < 1 || severity > 5) {
        throw std::invalid_argument("severity must be in 1..5, got " + std::to_string(severity));
    }
    const int i = severity - 1;
    switch (kind) {
        case CorruptionKind::gaussian_noise: return kGaussianSigma[i];
        case CorruptionKind::shot_noise: return kShotLambda[i];
        case CorruptionKind::impulse_noise: return kImpulseFraction[i];
        case CorruptionKind::defocus_blur: return kDefocusRadius[i];
        case CorruptionKind::motion_blur: return kMotionLength[i];
        case CorruptionKind::zoom_blur: return kZoomLayers[i];
        case CorruptionKind::fog: return kFogBlend[i];
        case CorruptionKind::brightness: return kBrightnessDelta[i];
        case CorruptionKind::contrast: return kContrastScale[i];
        case CorruptionKind::pixelate: return kPixelateBlock[i];
    }
    throw std::invalid_argument("unknown corruption kind");
}

Image corrupt(const Image& img, const CorruptionSpec& spec) {
    const double p = severity_parameter(spec.kind, spec.severity);
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(spec.kind), spec.severity));
    switch (spec.kind) {
        case CorruptionKind::gaussian_noise: return gaussian_noise(img, p, rng);
        case CorruptionKind::shot_noise: return shot_noise(img, p, rng);
        case CorruptionKind::impulse_noise: return impulse_noise(img, p, rng);
        case CorruptionKind::defocus_blur: return disk_blur(img, static_cast<int>(p));
        case CorruptionKind::motion_blur: return motion_blur(img, static_cast<int>(p), rng);
        case CorruptionKind::zoom_blur: return zoom_blur(img, static_cast<int>(p));
        case CorruptionKind::fog: return fog(img, p);
        case CorruptionKind::brightness: return brightness(img, p);
        case CorruptionKind::contrast: return contrast(img, p);
        case CorruptionKind::pixelate: return pixelate(img, static_cast<int>(p));
    }
    throw std::invalid_argument("unknown corruption kind");
}

OcclusionResult occlude(const Image& img, MaskStrategy strategy, const MaskConfig& cfg) {
    OcclusionResult out;
    out.grid = strategy == MaskStrategy::blockwise ? blockwise_mask(cfg, img.height, img.width)
                                                   : random_mask(cfg, img.height, img.width);
    out.image = img;
    std::vector<double> mean(img.channels, 0.0);
    std::vector<double> buf(img.pixel_count());
    for (int c = 0; c < img.channels; ++c) {
        for (size_t px = 0; px < img.pixel_count(); ++px) buf[px] = img.data[px * img.channels + c];
        mean[c] = pairwise_sum(buf, 0, buf.size()) / static_cast<double>(img.pixel_count());
    }
    const std::vector<uint8_t> px_mask = out.grid.to_pixel_mask(img.height, img.width);
    for (size_t px = 0; px < img.pixel_count(); ++px) {
        if (!px_mask[px]) continue;
        for (int c = 0; c < img.channels; ++c) out.image.data[px * img.channels + c] = mean[c];
    }
    return out;
}

}  // namespace maskdepth
