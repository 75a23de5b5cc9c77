#include "sfe/image_io.hpp"

#include <fstream>
#include <string>

#include <torch/torch.h>

#include "sfe/errors.hpp"

namespace sfe::image_io {

namespace {

struct Header {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
  Header h;
  auto next = [&]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw InvalidInput("truncated image header in " + path.string());
  };
  h.magic = next();
  try {
    h.width = std::stoi(next());
    h.height = std::stoi(next());
    h.maxval = std::stoi(next());
  } catch (const std::logic_error&) {
    throw InvalidInput("malformed image header in " + path.string());
  }
  in.get();  // single whitespace before the raster
  if (h.width <= 0 || h.height <= 0 || h.maxval != 255) {
    throw InvalidInput("only 8-bit PPM/PGM images are supported: " + path.string());
  }
  return h;
}

torch::Tensor read_raster(const std::filesystem::path& path, int* channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot read image " + path.string());
  const auto h = read_header(in, path);
  if (h.magic == "P6") {
    *channels = 3;
  } else if (h.magic == "P5") {
    *channels = 1;
  } else {
    throw InvalidInput("not a binary PPM/PGM file: " + path.string());
  }
  auto t = torch::empty({h.height, h.width, *channels}, torch::kUInt8);
  in.read(reinterpret_cast<char*>(t.data_ptr<std::uint8_t>()), t.numel());
  if (in.gcount() != t.numel()) throw InvalidInput("truncated image raster in " + path.string());
  return t.permute({2, 0, 1}).contiguous();
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw InvalidInput("write_ppm expects [3, H, W]");
  auto bytes = ((image.detach().to(torch::kFloat32).clamp(-1, 1) + 1) * 127.5)
                   .round()
                   .to(torch::kUInt8)
                   .permute({1, 2, 0})
                   .contiguous();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << "P6\n" << image.size(2) << " " << image.size(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data_ptr<std::uint8_t>()), bytes.numel());
}

torch::Tensor read_ppm(const std::filesystem::path& path) {
  int channels = 0;
  auto t = read_raster(path, &channels);
  if (channels != 3) throw InvalidInput("expected a colour PPM image: " + path.string());
  return t.to(torch::kFloat32) / 127.5 - 1.0;
}

torch::Tensor read_mask(const std::filesystem::path& path) {
  int channels = 0;
  auto t = read_raster(path, &channels).to(torch::kFloat32).mean(0);
  return t >= 128.0;
}

torch::Tensor tile_grid(const std::vector<torch::Tensor>& rows) {
  if (rows.empty()) throw InvalidInput("grid needs at least one row");
  const auto cols = rows.front().size(0);
  const auto r = rows.front().size(2);
  const int gap = 2;
  const auto height = static_cast<long>(rows.size()) * (r + gap) + gap;
  const auto width = cols * (r + gap) + gap;
  auto grid = torch::ones({3, height, width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size(0) != cols || rows[i].size(2) != r) throw InvalidInput("grid rows must have equal shapes");
    for (long j = 0; j < cols; ++j) {
      const long y = gap + static_cast<long>(i) * (r + gap);
      const long x = gap + j * (r + gap);
      grid.slice(1, y, y + r).slice(2, x, x + r).copy_(rows[i][j].detach().to(torch::kFloat32));
    }
  }
  return grid;
}

}  // namespace sfe::image_io
