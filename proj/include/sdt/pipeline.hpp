#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sdt/errors.hpp"
#include "sdt/image.hpp"
#include "sdt/model.hpp"
#include "sdt/patch.hpp"
#include "sdt/png_io.hpp"
#include "sdt/resample.hpp"

namespace sdt {

// Super-resolves one image. The network runs on the luma channel; for color
// inputs the chroma planes are upsampled bicubically and recombined. The
// output matches the input colorspace (Luma stays Luma, Rgb comes back as
// Rgb) with every sample clamped to [0, 1].
template <typename Scalar>
Image<Scalar> infer_image(const ModelWeights<Scalar>& w,
                          const ModelConfig& cfg, const Image<Scalar>& input) {
  const auto run_luma = [&](const Image<Scalar>& luma) {
    Tensor<Scalar> y = forward(w, cfg, tensor_from_luma(luma));
    return luma_from_tensor(y);  // clamps at the image boundary
  };

  if (input.colorspace == Colorspace::Luma) return run_luma(input);

  const Image<Scalar> ycc = input.colorspace == Colorspace::Rgb
                                ? color_convert(input, Colorspace::YCbCr)
                                : input;
  Image<Scalar> y_in = make_image<Scalar>(ycc.width, ycc.height,
                                          Colorspace::Luma);
  y_in.data = ycc.data.head(ycc.plane_size());
  const Image<Scalar> y_out = run_luma(y_in);

  Image<Scalar> up = bicubic_resize(ycc, ycc.width * cfg.scale,
                                    ycc.height * cfg.scale);
  up.data.head(up.plane_size()) = y_out.data;
  return input.colorspace == Colorspace::Rgb
             ? color_convert(up, Colorspace::Rgb)
             : up;
}

struct PairPaths {
  std::string stem;
  std::string lr;
  std::string hr;
};

// Finds <stem>_lr.png / <stem>_hr.png pairs in a directory, sorted by stem.
inline std::vector<PairPaths> find_pair_paths(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw IoError("'" + dir + "' is not a directory");
  std::vector<PairPaths> pairs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const std::string suffix = "_lr.png";
    if (name.size() <= suffix.size() ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    PairPaths p;
    p.stem = name.substr(0, name.size() - suffix.size());
    p.lr = entry.path().string();
    const fs::path hr = entry.path().parent_path() / (p.stem + "_hr.png");
    if (!fs::exists(hr))
      throw IoError("missing HR counterpart for '" + p.lr + "'");
    p.hr = hr.string();
    pairs.push_back(std::move(p));
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const PairPaths& a, const PairPaths& b) {
              return a.stem < b.stem;
            });
  return pairs;
}

// Loads every pair in a directory as luma images and samples
// `patches_per_image` aligned patch pairs from each, with a per-image
// deterministic seed stream derived from `seed`.
template <typename Scalar>
std::vector<PatchPair<Scalar>> build_patch_dataset(const std::string& dir,
                                                   int patch,
                                                   int patches_per_image,
                                                   std::uint64_t seed) {
  const std::vector<PairPaths> paths = find_pair_paths(dir);
  if (paths.empty())
    throw IoError("no *_lr.png/*_hr.png pairs found in '" + dir + "'");
  std::vector<PatchPair<Scalar>> dataset;
  dataset.reserve(paths.size() * static_cast<size_t>(patches_per_image));
  for (size_t i = 0; i < paths.size(); ++i) {
    const Image<Scalar> lr = to_luma(load_png<Scalar>(paths[i].lr));
    const Image<Scalar> hr = to_luma(load_png<Scalar>(paths[i].hr));
    auto sampled = sample_patch_pairs(lr, hr, patch, patches_per_image,
                                      derive_seed(seed, 0x9a7c, i));
    for (auto& p : sampled) dataset.push_back(std::move(p));
  }
  return dataset;
}

// Lists the PNG files of a directory, sorted by filename.
inline std::vector<std::string> list_pngs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw IoError("'" + dir + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".png")
      names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace sdt
