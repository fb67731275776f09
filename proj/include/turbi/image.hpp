#pragma once

#include <stdexcept>
#include <vector>

namespace turbi {

// Row-major scalar grid. Intensity images live in [0,1]; operations that
// clamp say so in their contract. Derivative-like outputs (laplacian,
// sparse components) are signed and unclamped.
struct ImageGrid {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageGrid() = default;
    ImageGrid(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("ImageGrid: non-positive size");
    }

    double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool same_size(const ImageGrid& o) const { return width == o.width && height == o.height; }
};

// Per-pixel displacement field (dx, dy), in pixels, on the same raster as
// the image it deforms.
struct VectorField {
    int width = 0;
    int height = 0;
    std::vector<double> dx;
    std::vector<double> dy;

    VectorField() = default;
    VectorField(int w, int h)
        : width(w), height(h),
          dx(static_cast<std::size_t>(w) * h, 0.0),
          dy(static_cast<std::size_t>(w) * h, 0.0) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("VectorField: non-positive size");
    }

    std::size_t size() const { return dx.size(); }
    bool same_size(const VectorField& o) const { return width == o.width && height == o.height; }
    bool same_size(const ImageGrid& o) const { return width == o.width && height == o.height; }
};

struct QualityReport {
    double psnr = 0.0;
    double ssim = 0.0;
};

// Bilinear sample with coordinates clamped to the image rectangle.
double sample_bilinear(const ImageGrid& img, double x, double y);

// output(p) = image(p + field(p)), bilinear, coordinates clamped to the
// border. Output is clamped to [0,1]. A zero field reproduces the input
// bit for bit.
ImageGrid warp(const ImageGrid& image, const VectorField& field);

// 5-point Laplacian with replicate padding. Signed output, not clamped.
// Requires width, height >= 3.
ImageGrid laplacian(const ImageGrid& image);

// 10*log10(1 / MSE) for images in [0,1], capped at 99 dB (the cap is also
// what identical images report).
double psnr(const ImageGrid& a, const ImageGrid& b);

// Mean SSIM over fully contained 8x8 sliding windows, C1 = 0.01^2,
// C2 = 0.03^2. Requires both sides >= 8.
double ssim(const ImageGrid& a, const ImageGrid& b);

QualityReport compare(const ImageGrid& a, const ImageGrid& b);

// Separable Gaussian blur with replicate borders; kernel radius ceil(3*sigma).
// sigma <= 0 returns the input unchanged.
ImageGrid gaussian_blur(const ImageGrid& image, double sigma);

double clamp01(double v);

// Central-difference partial derivatives with replicate borders.
ImageGrid derivative_x(const ImageGrid& image);
ImageGrid derivative_y(const ImageGrid& image);

// Mean over a (2r+1)^2 window intersected with the image (per-pixel count
// normalization at the borders).
ImageGrid box_mean(const ImageGrid& image, int radius);

// Bilinear resize; displacement values are not rescaled (callers that
// resize flow fields scale them by the size ratio themselves).
ImageGrid resize_bilinear(const ImageGrid& image, int new_w, int new_h);

double mean_magnitude(const VectorField& f);

} // namespace turbi
