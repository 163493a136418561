#include "maskdepth/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace maskdepth {

namespace {

[[noreturn]] void io_fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

static_assert(std::endian::native == std::endian::little,
              "file formats are written in the native little-endian layout");

}  // namespace

Tensor to_tensor(const Image& img, bool requires_grad) {
    return Tensor::from_data({img.height, img.width, img.channels}, img.data, requires_grad);
}

Image to_image(const Tensor& t) {
    const auto& s = t.shape();
    if (s.size() != 3) {
        throw std::invalid_argument("to_image expects [H,W,C], got " + shape_str(s));
    }
    Image img(static_cast<int>(s[0]), static_cast<int>(s[1]), static_cast<int>(s[2]));
    std::copy(t.data().begin(), t.data().end(), img.data.begin());
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 3) throw std::invalid_argument("write_ppm expects 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open for writing", path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, img.data[i]));
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) io_fail("write failed", path);
}

namespace {

int read_pnm_int(std::istream& f) {
    int c = f.get();
    while (c == '#' || std::isspace(c)) {
        if (c == '#') {
            while (c != '\n' && c != EOF) c = f.get();
        }
        c = f.get();
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(c)) {
        value = value * 10 + (c - '0');
        any = true;
        c = f.get();
    }
    if (!any) throw std::runtime_error("malformed PNM header");
    return value;
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open", path);
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (m0 != 'P' || m1 != '6') io_fail("not a binary PPM", path);
    const int w = read_pnm_int(f);
    const int h = read_pnm_int(f);
    const int maxval = read_pnm_int(f);
    if (maxval != 255) io_fail("unsupported PPM maxval", path);
    Image img(h, w, 3);
    std::vector<unsigned char> bytes(img.data.size());
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) io_fail("truncated PPM", path);
    for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
    return img;
}

void write_pfm(const std::string& path, const std::vector<double>& values, int height,
               int width) {
    if (static_cast<size_t>(height) * width != values.size()) {
        throw std::invalid_argument("write_pfm size mismatch");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open for writing", path);
    f << "Pf\n" << width << " " << height << "\n-1.0\n";
    // PFM row order is bottom-up
    std::vector<float> row(static_cast<size_t>(width));
    for (int y = height - 1; y >= 0; --y) {
        for (int x = 0; x < width; ++x) {
            row[x] = static_cast<float>(values[static_cast<size_t>(y) * width + x]);
        }
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) io_fail("write failed", path);
}

std::vector<double> read_pfm(const std::string& path, int& height, int& width) {
    std::ifstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open", path);
    std::string magic;
    f >> magic;
    if (magic != "Pf") io_fail("not a grayscale PFM", path);
    double scale = 0.0;
    f >> width >> height >> scale;
    if (scale >= 0.0) io_fail("big-endian PFM unsupported", path);
    f.get();  // single whitespace after the header
    std::vector<double> values(static_cast<size_t>(height) * width);
    std::vector<float> row(static_cast<size_t>(width));
    for (int y = height - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!f) io_fail("truncated PFM", path);
        for (int x = 0; x < width; ++x) values[static_cast<size_t>(y) * width + x] = row[x];
    }
    return values;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& values, int height,
               int width) {
    if (static_cast<size_t>(height) * width != values.size()) {
        throw std::invalid_argument("write_pgm size mismatch");
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) io_fail("cannot open for writing", path);
    f << "P5\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size()));
    if (!f) io_fail("write failed", path);
}

}  // namespace maskdepth
