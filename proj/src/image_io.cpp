#include "turbi/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace turbi {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

} // namespace

ImageGrid read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) fail("cannot open PNG", path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_read_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("PNG decode error", path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int depth = png_get_bit_depth(png, info);
    int color = png_get_color_type(png, info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png); // stream is big-endian; read as host LE
    png_read_update_info(png, info);

    depth = png_get_bit_depth(png, info);
    color = png_get_color_type(png, info);
    int channels = png_get_channels(png, info);
    double maxval = depth == 16 ? 65535.0 : 255.0;

    std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<std::uint8_t> raster(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raster.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    ImageGrid img(static_cast<int>(w), static_cast<int>(h));
    for (png_uint_32 y = 0; y < h; ++y) {
        for (png_uint_32 x = 0; x < w; ++x) {
            double value;
            if (depth == 16) {
                const std::uint16_t* p =
                    reinterpret_cast<const std::uint16_t*>(raster.data() + y * rowbytes) + x * channels;
                value = channels >= 3 ? 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
                                      : static_cast<double>(p[0]);
            } else {
                const std::uint8_t* p = raster.data() + y * rowbytes + x * channels;
                value = channels >= 3 ? 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
                                      : static_cast<double>(p[0]);
            }
            img.at(static_cast<int>(x), static_cast<int>(y)) = value / maxval;
        }
    }
    return img;
}

static void write_png_impl(const std::string& path, const ImageGrid& img, int depth) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) fail("cannot create PNG", path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail("png_create_write_struct failed", path);
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("png_create_info_struct failed", path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("PNG encode error", path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, img.width, img.height, depth, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const double maxval = depth == 16 ? 65535.0 : 255.0;
    if (depth == 16) {
        std::vector<std::uint16_t> row(img.width);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                double v = clamp01(img.at(x, y)) * maxval;
                std::uint16_t q = static_cast<std::uint16_t>(std::lround(v));
                row[x] = static_cast<std::uint16_t>((q >> 8) | (q << 8)); // big-endian stream
            }
            png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
        }
    } else {
        std::vector<std::uint8_t> row(img.width);
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x)
                row[x] = static_cast<std::uint8_t>(std::lround(clamp01(img.at(x, y)) * maxval));
            png_write_row(png, row.data());
        }
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png8(const std::string& path, const ImageGrid& img) { write_png_impl(path, img, 8); }
void write_png16(const std::string& path, const ImageGrid& img) { write_png_impl(path, img, 16); }

ImageGrid read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open PGM", path);
    std::string magic;
    in >> magic;
    if (magic != "P5") fail("not a P5 PGM", path);
    auto next_int = [&in, &path]() {
        // Skip whitespace and '#' comment lines between header tokens.
        int c;
        while ((c = in.get()) != EOF) {
            if (c == '#') {
                while ((c = in.get()) != EOF && c != '\n') {}
            } else if (!std::isspace(c)) {
                in.unget();
                break;
            }
        }
        long v = -1;
        in >> v;
        if (v < 0) fail("bad PGM header", path);
        return v;
    };
    long w = next_int(), h = next_int(), maxval = next_int();
    in.get(); // single whitespace after maxval
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) fail("bad PGM header", path);

    ImageGrid img(static_cast<int>(w), static_cast<int>(h));
    if (maxval < 256) {
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) fail("truncated PGM", path);
        for (std::size_t i = 0; i < buf.size(); ++i)
            img.data[i] = buf[i] / static_cast<double>(maxval);
    } else {
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!in) fail("truncated PGM", path);
        for (std::size_t i = 0; i < img.size(); ++i) {
            unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];
            img.data[i] = v / static_cast<double>(maxval);
        }
    }
    return img;
}

void write_pgm(const std::string& path, const ImageGrid& img, int maxval) {
    if (maxval != 255 && maxval != 65535) throw std::invalid_argument("write_pgm: maxval must be 255 or 65535");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot create PGM", path);
    out << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
    if (maxval == 255) {
        for (double v : img.data)
            out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0))));
    } else {
        for (double v : img.data) {
            unsigned q = static_cast<unsigned>(std::lround(clamp01(v) * 65535.0));
            out.put(static_cast<char>((q >> 8) & 0xff));
            out.put(static_cast<char>(q & 0xff));
        }
    }
    if (!out) fail("PGM write error", path);
}

void write_flo(const std::string& path, const VectorField& field) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot create flow file", path);
    out.write("FLO1", 4);
    std::int32_t w = field.width, h = field.height;
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    for (std::size_t i = 0; i < field.size(); ++i) {
        float fx = static_cast<float>(field.dx[i]);
        float fy = static_cast<float>(field.dy[i]);
        out.write(reinterpret_cast<const char*>(&fx), 4);
        out.write(reinterpret_cast<const char*>(&fy), 4);
    }
    if (!out) fail("flow write error", path);
}

VectorField read_flo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open flow file", path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FLO1", 4) != 0) fail("bad flow magic", path);
    std::int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || w <= 0 || h <= 0) fail("bad flow header", path);
    VectorField field(w, h);
    for (std::size_t i = 0; i < field.size(); ++i) {
        float fx, fy;
        in.read(reinterpret_cast<char*>(&fx), 4);
        in.read(reinterpret_cast<char*>(&fy), 4);
        if (!in) fail("truncated flow file", path);
        field.dx[i] = fx;
        field.dy[i] = fy;
    }
    return field;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot create file", path);
    out << content;
    if (!out) fail("write error", path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << row[i];
        out << "\n";
    }
    write_text_file(path, out.str());
}

std::string frame_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04d.png", index);
    return buf;
}

std::vector<ImageGrid> read_frame_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) fail("not a directory", dir);
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        auto name = e.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && e.path().extension() == ".png")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail("no frame_*.png files in", dir);
    std::vector<ImageGrid> frames;
    frames.reserve(files.size());
    for (const auto& p : files) frames.push_back(read_png(p.string()));
    return frames;
}

void write_frame_dir(const std::string& dir, const std::vector<ImageGrid>& frames) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i)
        write_png16(dir + "/" + frame_name(static_cast<int>(i) + 1), frames[i]);
}

} // namespace turbi
