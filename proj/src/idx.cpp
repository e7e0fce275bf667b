#include "miladv/idx.hpp"

#include <fstream>
#include <iterator>
#include <string>

#include "miladv/errors.hpp"

namespace miladv {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t offset, const std::string& what) {
  throw FormatError(path.string() + " @ offset " + std::to_string(offset) + ": " + what);
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::filesystem::path& path) {
  if (offset + 4 > buf.size()) fail(path, offset, "truncated header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

IdxImages load_idx_images(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path) {
  const auto img = slurp(images_path);
  const auto lab = slurp(labels_path);

  if (read_be32(img, 0, images_path) != kImageMagic)
    fail(images_path, 0, "expected image magic 0x00000803");
  if (read_be32(lab, 0, labels_path) != kLabelMagic)
    fail(labels_path, 0, "expected label magic 0x00000801");

  const std::size_t n = read_be32(img, 4, images_path);
  const std::size_t rows = read_be32(img, 8, images_path);
  const std::size_t cols = read_be32(img, 12, images_path);
  const std::size_t n_labels = read_be32(lab, 4, labels_path);
  if (n != n_labels)
    fail(labels_path, 4,
         "count mismatch: " + std::to_string(n_labels) + " labels for " + std::to_string(n) +
             " images in " + images_path.string());

  const std::size_t pixels = rows * cols;
  constexpr std::size_t kImageHeader = 16;
  constexpr std::size_t kLabelHeader = 8;
  if (img.size() < kImageHeader + n * pixels)
    fail(images_path, img.size(),
         "truncated: expected " + std::to_string(kImageHeader + n * pixels) + " bytes");
  if (lab.size() < kLabelHeader + n)
    fail(labels_path, lab.size(), "truncated: expected " + std::to_string(kLabelHeader + n) + " bytes");

  IdxImages out;
  out.rows = rows;
  out.cols = cols;
  out.images.reserve(n);
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector v(static_cast<Eigen::Index>(pixels));
    const unsigned char* src = img.data() + kImageHeader + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p) v[static_cast<Eigen::Index>(p)] = src[p] / 255.0;
    out.images.push_back(std::move(v));
    out.labels.push_back(lab[kLabelHeader + i]);
  }
  return out;
}

}  // namespace miladv
