#pragma once

#include "voxgan/metrics.hpp"
#include "voxgan/trainer.hpp"

#include <vector>

namespace voxgan {

/// Grids named by config.data: "toy:<kind>" generates config.data_count
/// shapes in config.data_orientations turns from config.data_seed; anything
/// else is a directory whose .binvox and .vxg files are read in name order.
std::vector<VoxelGrid> load_grids(const RunConfig& config);

/// Training samples for the configured mode. vae-iwgan pairs each target
/// with its training-view shells (or silhouettes, for the image encoder).
TrainingSet make_training_set(const RunConfig& config, const std::vector<VoxelGrid>& grids);

/// Decodes each row of z ([B, L]) separately in eval mode; occupancy is (v + 1) / 2.
std::vector<VoxelGrid> decode_latents(nn::Network& generator, const Tensor& z);

/// `count` samples from z ~ N(0, I) drawn with the given seed. Sample i only
/// depends on the seed and i.
std::vector<VoxelGrid> generate_samples(nn::Network& generator, std::int64_t latent_dim, std::int64_t count,
                                        std::uint64_t seed);

/// Deterministic completion with a trained vae-iwgan state: the encoder mean
/// is decoded. Conditions are shells, or grids to render from `view` for the
/// image encoder.
CompletionModel trained_completion_model(TrainState& state, View view = View::PosZ);

}  // namespace voxgan
