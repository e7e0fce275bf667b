#pragma once

#include <filesystem>
#include <vector>

#include "miladv/bag.hpp"

namespace miladv {

struct IdxImages {
  std::vector<Vector> images;  // flattened row-major, scaled to [0, 1]
  std::vector<int> labels;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Reads an IDX image file (magic 0x00000803) and its label file
/// (magic 0x00000801). Throws FormatError naming the file and byte offset.
IdxImages load_idx_images(const std::filesystem::path& images_path,
                          const std::filesystem::path& labels_path);

}  // namespace miladv
