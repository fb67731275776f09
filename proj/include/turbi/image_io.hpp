#pragma once

#include <string>
#include <vector>

#include "turbi/image.hpp"

namespace turbi {

// Grayscale PNG. 8- and 16-bit files load to [0,1] (value / maxval); color
// inputs are collapsed with Rec.601 luma. Writing quantizes with rounding.
ImageGrid read_png(const std::string& path);
void write_png8(const std::string& path, const ImageGrid& img);
void write_png16(const std::string& path, const ImageGrid& img);

// Binary PGM (P5), maxval 255 or 65535 (16-bit samples big-endian, as the
// format requires).
ImageGrid read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ImageGrid& img, int maxval = 65535);

// Flow dump: ASCII magic "FLO1", int32 width, int32 height, then
// width*height interleaved little-endian float32 (dx, dy) pairs.
void write_flo(const std::string& path, const VectorField& field);
VectorField read_flo(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Writes header + rows, comma-joined, one record per line.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// Numbered frame files under dir: frame_0001.png, frame_0002.png, ...
std::vector<ImageGrid> read_frame_dir(const std::string& dir);
void write_frame_dir(const std::string& dir, const std::vector<ImageGrid>& frames);
std::string frame_name(int index);

} // namespace turbi
