#include "voxgan/pipeline.hpp"

#include <algorithm>
#include <filesystem>

namespace voxgan {

namespace fs = std::filesystem;

std::vector<VoxelGrid> load_grids(const RunConfig& config) {
  const std::string& src = config.data;
  const auto n = config.model.resolution;
  if (src.rfind("toy:", 0) == 0) {
    Rng rng(config.data_seed);
    return toy_dataset(parse_toy_kind(src.substr(4)), n, config.data_count, config.data_orientations, rng);
  }
  if (!fs::is_directory(src)) throw DataError("dataset '" + src + "' is neither toy:<kind> nor a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src))
    if (e.is_regular_file() && (e.path().extension() == ".binvox" || e.path().extension() == ".vxg"))
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("dataset directory '" + src + "' holds no .binvox or .vxg files");
  std::vector<VoxelGrid> grids;
  for (const auto& f : files) {
    VoxelGrid g = f.extension() == ".binvox" ? read_binvox(f) : read_vxg(f);
    if (g.extent() != n)
      throw DataError(f.string() + ": extent " + std::to_string(g.extent()) + " does not match res " + std::to_string(n));
    grids.push_back(std::move(g));
  }
  return grids;
}

TrainingSet make_training_set(const RunConfig& config, const std::vector<VoxelGrid>& grids) {
  if (config.train.mode != TrainMode::VaeIWGan) return TrainingSet::unconditional(grids);
  const CompletionTask task = make_completion_task(grids);
  return config.encoder == NetworkBase::ImageEncoder ? TrainingSet::images(task.train) : TrainingSet::shells(task.train);
}

std::vector<VoxelGrid> decode_latents(nn::Network& generator, const Tensor& z) {
  std::vector<VoxelGrid> out;
  const auto L = z.dim(1);
  for (std::int64_t i = 0; i < z.dim(0); ++i) {
    Tensor row({1, L}, z.vec().segment(i * L, L));
    out.push_back(from_signed_tensor(generator.infer(row, nn::Mode::Eval)));
  }
  return out;
}

std::vector<VoxelGrid> generate_samples(nn::Network& generator, std::int64_t latent_dim, std::int64_t count,
                                        std::uint64_t seed) {
  Rng rng(seed);
  return decode_latents(generator, rng.sample_normal({count, latent_dim}));
}

CompletionModel trained_completion_model(TrainState& state, View view) {
  if (state.config.train.mode != TrainMode::VaeIWGan || state.encoder.layers().empty())
    throw ConfigError("completion needs a vae-iwgan checkpoint");
  const bool image = state.config.encoder == NetworkBase::ImageEncoder;
  return [&state, image, view](const VoxelGrid& condition) {
    Tensor in;
    if (image) {
      const Image img = render_silhouette(condition, view);
      in = stack_images(std::span(&img, 1));
    } else {
      in = stack_signed(std::span(&condition, 1));
    }
    const Tensor enc = state.encoder.infer(in, nn::Mode::Eval);
    const auto L = enc.dim(1) / 2;
    Tensor mu({1, L}, enc.vec().head(L));
    return decode_latents(state.generator, mu).front();
  };
}

}  // namespace voxgan
