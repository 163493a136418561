#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskdepth/tensor.hpp"

namespace maskdepth {

/// Plain HxWxC double image in [0,1]; the non-differentiable counterpart of
/// an image tensor, used by rendering, file I/O and corruption generators.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 3;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c = 3, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(height) * width; }
};

Tensor to_tensor(const Image& img, bool requires_grad = false);
Image to_image(const Tensor& t);

/// Binary PPM (P6, maxval 255). Quantizes with round(v*255).
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// Grayscale PFM ("Pf"), float32 payload, negative scale marks little-endian.
void write_pfm(const std::string& path, const std::vector<double>& values, int height,
               int width);
std::vector<double> read_pfm(const std::string& path, int& height, int& width);

/// Binary PGM (P5), for mask previews.
void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int height,
               int width);

}  // namespace maskdepth
