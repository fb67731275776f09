#include "turbi/image.hpp"

#include <algorithm>
#include <cmath>

namespace turbi {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

static void require_same(const ImageGrid& a, const ImageGrid& b, const char* who) {
    if (!a.same_size(b)) throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

double sample_bilinear(const ImageGrid& img, double x, double y) {
    const double xmax = img.width - 1.0;
    const double ymax = img.height - 1.0;
    if (x < 0.0) x = 0.0;
    if (x > xmax) x = xmax;
    if (y < 0.0) y = 0.0;
    if (y > ymax) y = ymax;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    if (x0 > img.width - 2) x0 = img.width - 2;
    if (y0 > img.height - 2) y0 = img.height - 2;
    if (x0 < 0) x0 = 0; // width == 1
    if (y0 < 0) y0 = 0;
    int x1 = std::min(x0 + 1, img.width - 1);
    int y1 = std::min(y0 + 1, img.height - 1);
    double fx = x - x0;
    double fy = y - y0;
    double v00 = img.at(x0, y0), v10 = img.at(x1, y0);
    double v01 = img.at(x0, y1), v11 = img.at(x1, y1);
    return v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) +
           v01 * (1.0 - fx) * fy + v11 * fx * fy;
}

ImageGrid warp(const ImageGrid& image, const VectorField& field) {
    if (!field.same_size(image)) throw std::invalid_argument("warp: dimension mismatch");
    ImageGrid out(image.width, image.height);
    std::size_t i = 0;
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x, ++i) {
            double v = sample_bilinear(image, x + field.dx[i], y + field.dy[i]);
            out.data[i] = clamp01(v);
        }
    }
    return out;
}

ImageGrid laplacian(const ImageGrid& image) {
    if (image.width < 3 || image.height < 3)
        throw std::invalid_argument("laplacian: needs width and height >= 3");
    ImageGrid out(image.width, image.height);
    const int w = image.width, h = image.height;
    for (int y = 0; y < h; ++y) {
        int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x) {
            int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            out.at(x, y) = image.at(xl, y) + image.at(xr, y) + image.at(x, yu) +
                           image.at(x, yd) - 4.0 * image.at(x, y);
        }
    }
    return out;
}

double psnr(const ImageGrid& a, const ImageGrid& b) {
    require_same(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a.data[i] - b.data[i];
        se += d * d;
    }
    double mse = se / static_cast<double>(a.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const ImageGrid& a, const ImageGrid& b) {
    require_same(a, b, "ssim");
    if (a.width < 8 || a.height < 8) throw std::invalid_argument("ssim: needs both sides >= 8");
    constexpr int W = 8;
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    const double n = W * W;
    double total = 0.0;
    std::size_t windows = 0;
    for (int y0 = 0; y0 + W <= a.height; ++y0) {
        for (int x0 = 0; x0 + W <= a.width; ++x0) {
            double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
            for (int y = y0; y < y0 + W; ++y) {
                for (int x = x0; x < x0 + W; ++x) {
                    double va = a.at(x, y), vb = b.at(x, y);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            double ma = sa / n, mb = sb / n;
            double va = saa / n - ma * ma;
            double vb = sbb / n - mb * mb;
            double cov = sab / n - ma * mb;
            double s = ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) /
                       ((ma * ma + mb * mb + C1) * (va + vb + C2));
            total += s;
            ++windows;
        }
    }
    return total / static_cast<double>(windows);
}

QualityReport compare(const ImageGrid& a, const ImageGrid& b) {
    return QualityReport{psnr(a, b), ssim(a, b)};
}

ImageGrid gaussian_blur(const ImageGrid& image, double sigma) {
    if (sigma <= 0.0) return image;
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;

    const int w = image.width, h = image.height;
    ImageGrid tmp(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xx = std::clamp(x + i, 0, w - 1);
                acc += k[i + radius] * image.at(xx, y);
            }
            tmp.at(x, y) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yy = std::clamp(y + i, 0, h - 1);
                acc += k[i + radius] * tmp.at(x, yy);
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

ImageGrid derivative_x(const ImageGrid& image) {
    ImageGrid out(image.width, image.height);
    const int w = image.width, h = image.height;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            out.at(x, y) = 0.5 * (image.at(xr, y) - image.at(xl, y));
        }
    return out;
}

ImageGrid derivative_y(const ImageGrid& image) {
    ImageGrid out(image.width, image.height);
    const int w = image.width, h = image.height;
    for (int y = 0; y < h; ++y) {
        int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
        for (int x = 0; x < w; ++x)
            out.at(x, y) = 0.5 * (image.at(x, yd) - image.at(x, yu));
    }
    return out;
}

ImageGrid box_mean(const ImageGrid& image, int radius) {
    if (radius < 0) throw std::invalid_argument("box_mean: negative radius");
    const int w = image.width, h = image.height;
    // Running-sum along x, then along y, tracking window extents so border
    // windows divide by their true pixel count.
    ImageGrid sx(w, h), cx(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int lo = std::max(0, x - radius), hi = std::min(w - 1, x + radius);
            double s = 0.0;
            for (int i = lo; i <= hi; ++i) s += image.at(i, y);
            sx.at(x, y) = s;
            cx.at(x, y) = hi - lo + 1;
        }
    }
    ImageGrid out(w, h);
    for (int y = 0; y < h; ++y) {
        int lo = std::max(0, y - radius), hi = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            double s = 0.0, c = 0.0;
            for (int j = lo; j <= hi; ++j) {
                s += sx.at(x, j);
                c += cx.at(x, j);
            }
            out.at(x, y) = s / c;
        }
    }
    return out;
}

ImageGrid resize_bilinear(const ImageGrid& image, int new_w, int new_h) {
    if (new_w <= 0 || new_h <= 0) throw std::invalid_argument("resize_bilinear: bad size");
    ImageGrid out(new_w, new_h);
    double sx = static_cast<double>(image.width) / new_w;
    double sy = static_cast<double>(image.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        double yy = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < new_w; ++x) {
            double xx = (x + 0.5) * sx - 0.5;
            out.at(x, y) = sample_bilinear(image, xx, yy);
        }
    }
    return out;
}

double mean_magnitude(const VectorField& f) {
    if (f.size() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        s += std::hypot(f.dx[i], f.dy[i]);
    return s / static_cast<double>(f.size());
}

} // namespace turbi
