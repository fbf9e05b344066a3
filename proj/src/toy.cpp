#include "voxgan/toy.hpp"

#include <cmath>

namespace voxgan {

const char* toy_kind_name(ToyKind k) {
  switch (k) {
    case ToyKind::Boxes: return "boxes";
    case ToyKind::Spheres: return "spheres";
    case ToyKind::Ells: return "ells";
    case ToyKind::Mixed: return "mixed";
  }
  return "?";
}

ToyKind parse_toy_kind(const std::string& s) {
  for (auto k : {ToyKind::Boxes, ToyKind::Spheres, ToyKind::Ells, ToyKind::Mixed})
    if (s == toy_kind_name(k)) return k;
  throw DataError("unknown toy dataset kind '" + s + "'");
}

VoxelGrid make_box(std::int64_t extent, std::array<std::int64_t, 3> lo, std::array<std::int64_t, 3> hi) {
  VoxelGrid g(extent, true);
  for (int a = 0; a < 3; ++a)
    if (lo[a] < 0 || hi[a] > extent || lo[a] >= hi[a]) throw DataError("make_box: shape larger than grid");
  for (auto x = lo[0]; x < hi[0]; ++x)
    for (auto y = lo[1]; y < hi[1]; ++y)
      for (auto z = lo[2]; z < hi[2]; ++z) g.set(x, y, z, 1.0f);
  return g;
}

namespace {

std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi) {  // inclusive
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

VoxelGrid random_box(std::int64_t n, Rng& rng) {
  const std::int64_t max_side = (3 * n) / 4;
  std::array<std::int64_t, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const auto side = uniform_int(rng, 2, max_side);
    lo[a] = uniform_int(rng, 0, n - side);
    hi[a] = lo[a] + side;
  }
  auto g = make_box(n, lo, hi);
  g.class_tag = "box";
  return g;
}

// An L in the x-y plane: a foot along x and a post along y, extruded in z.
VoxelGrid random_ell(std::int64_t n, Rng& rng) {
  const auto thick = uniform_int(rng, 2, std::max<std::int64_t>(2, n / 4));
  const auto foot = uniform_int(rng, thick + 2, n - 1);
  const auto post = uniform_int(rng, thick + 2, n - 1);
  const auto depth = uniform_int(rng, 2, n / 2);
  const auto x0 = uniform_int(rng, 0, n - foot);
  const auto y0 = uniform_int(rng, 0, n - post);
  const auto z0 = uniform_int(rng, 0, n - depth);
  VoxelGrid g(n, true);
  for (auto z = z0; z < z0 + depth; ++z) {
    for (auto x = x0; x < x0 + foot; ++x)
      for (auto y = y0; y < y0 + thick; ++y) g.set(x, y, z, 1.0f);
    for (auto x = x0; x < x0 + thick; ++x)
      for (auto y = y0; y < y0 + post; ++y) g.set(x, y, z, 1.0f);
  }
  g.class_tag = "ell";
  return g;
}

VoxelGrid random_sphere(std::int64_t n, Rng& rng) {
  const double r = static_cast<double>(n) / 5.0 + rng.uniform() * static_cast<double>(n) * (1.0 / 3.0 - 1.0 / 5.0);
  std::array<double, 3> c{};
  for (auto& ci : c) ci = r + rng.uniform() * (static_cast<double>(n) - 2 * r);
  VoxelGrid g(n, true);
  for (std::int64_t x = 0; x < n; ++x)
    for (std::int64_t y = 0; y < n; ++y)
      for (std::int64_t z = 0; z < n; ++z) {
        const double dx = x + 0.5 - c[0], dy = y + 0.5 - c[1], dz = z + 0.5 - c[2];
        if (dx * dx + dy * dy + dz * dz <= r * r) g.set(x, y, z, 1.0f);
      }
  g.class_tag = "sphere";
  return g;
}

}  // namespace

std::vector<VoxelGrid> toy_dataset(ToyKind kind, std::int64_t extent, std::int64_t count, int orientations, Rng& rng) {
  if (extent < 8) throw DataError("toy_dataset: shape larger than grid (extent must be at least 8)");
  if (orientations < 1 || orientations > 4) throw DataError("toy_dataset: orientations must be in 1..4");
  std::vector<VoxelGrid> out;
  out.reserve(static_cast<std::size_t>(count * orientations));
  for (std::int64_t i = 0; i < count; ++i) {
    ToyKind k = kind;
    if (kind == ToyKind::Mixed) k = std::array{ToyKind::Boxes, ToyKind::Ells, ToyKind::Spheres}[static_cast<std::size_t>(i % 3)];
    VoxelGrid base;
    switch (k) {
      case ToyKind::Boxes: base = random_box(extent, rng); break;
      case ToyKind::Ells: base = random_ell(extent, rng); break;
      case ToyKind::Spheres: base = random_sphere(extent, rng); break;
      case ToyKind::Mixed: break;
    }
    for (int o = 0; o < orientations; ++o) {
      VoxelGrid g = rotate90(base, 1, o);
      g.orientation = o;
      out.push_back(std::move(g));
    }
  }
  return out;
}

CompletionTask make_completion_task(const std::vector<VoxelGrid>& targets) {
  static constexpr std::array kViews{View::PosX, View::NegX, View::PosZ, View::NegZ};
  CompletionTask task;
  task.targets = targets;
  for (std::size_t i = 0; i < targets.size(); ++i)
    for (std::size_t v = 0; v < kViews.size(); ++v) {
      CompletionPair p{occlude_to_grid(depth_scan(targets[i], kViews[v]), targets[i].extent()), targets[i], kViews[v]};
      (v == i % kViews.size() ? task.test : task.train).push_back(std::move(p));
    }
  return task;
}

}  // namespace voxgan
