#pragma once

#include "voxgan/rng.hpp"
#include "voxgan/voxel.hpp"

#include <string>
#include <vector>

namespace voxgan {

enum class ToyKind { Boxes, Spheres, Ells, Mixed };

const char* toy_kind_name(ToyKind k);
ToyKind parse_toy_kind(const std::string& s);

/// `count` procedurally generated solid shapes, each emitted in the first
/// `orientations` quarter turns about the vertical (y) axis. Output is
/// ordered shape-major: grid i * orientations + o is shape i turned o times.
/// Mixed cycles boxes, ells and spheres.
std::vector<VoxelGrid> toy_dataset(ToyKind kind, std::int64_t extent, std::int64_t count, int orientations, Rng& rng);

/// One solid axis-aligned box with corners lo (inclusive) and hi (exclusive).
VoxelGrid make_box(std::int64_t extent, std::array<std::int64_t, 3> lo, std::array<std::int64_t, 3> hi);

/// Paired (condition, target) samples for shape completion.
struct CompletionPair {
  VoxelGrid condition;  // occluded shell, or the grid an image was rendered from
  VoxelGrid target;
  View view = View::PosZ;
};

/// Deterministic completion task: every target scanned from each horizontal
/// view (+x, -x, +z, -z). For target i, the view (i mod 4) is held out for
/// testing; all others form the training set.
struct CompletionTask {
  std::vector<VoxelGrid> targets;
  std::vector<CompletionPair> train;
  std::vector<CompletionPair> test;
};

CompletionTask make_completion_task(const std::vector<VoxelGrid>& targets);

}  // namespace voxgan
