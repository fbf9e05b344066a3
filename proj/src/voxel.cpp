#include "voxgan/voxel.hpp"

#include "voxgan/container.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace voxgan {

VoxelGrid::VoxelGrid(std::int64_t extent, bool binary) : extent_(extent), binary_(binary) {
  if (extent < 1) throw DataError("voxel grid: extent must be positive");
  data_.assign(static_cast<std::size_t>(extent * extent * extent), 0.0f);
}

void VoxelGrid::set(std::int64_t x, std::int64_t y, std::int64_t z, float v) {
  if (x < 0 || y < 0 || z < 0 || x >= extent_ || y >= extent_ || z >= extent_)
    throw DataError("voxel grid: coordinate out of range");
  if (binary_ && v != 0.0f && v != 1.0f) throw DataError("voxel grid: binary grids hold only 0 or 1");
  data_[static_cast<std::size_t>(index(x, y, z))] = std::clamp(v, 0.0f, 1.0f);
}

std::int64_t VoxelGrid::count() const {
  return std::count_if(data_.begin(), data_.end(), [](float v) { return v > 0.5f; });
}

VoxelGrid VoxelGrid::soft(std::int64_t extent, std::vector<float> values) {
  VoxelGrid g(extent, false);
  if (static_cast<std::int64_t>(values.size()) != g.size()) throw DataError("voxel grid: value count mismatch");
  for (auto& v : values) v = std::clamp(v, 0.0f, 1.0f);
  g.data_ = std::move(values);
  return g;
}

VoxelGrid VoxelGrid::binarized(float threshold) const {
  VoxelGrid g(extent_, true);
  for (std::size_t i = 0; i < data_.size(); ++i) g.data_[i] = data_[i] >= threshold ? 1.0f : 0.0f;
  g.class_tag = class_tag;
  g.orientation = orientation;
  return g;
}

bool VoxelGrid::subset_of(const VoxelGrid& other) const {
  if (other.extent_ != extent_) return false;
  for (std::size_t i = 0; i < data_.size(); ++i)
    if (data_[i] > 0.5f && other.data_[i] <= 0.5f) return false;
  return true;
}

Tensor to_signed_tensor(const VoxelGrid& g) {
  const auto n = g.extent();
  Tensor t({1, n, n, n});
  for (std::int64_t i = 0; i < g.size(); ++i) t[i] = static_cast<Real>(2.0f * g.values()[static_cast<std::size_t>(i)] - 1.0f);
  return t;
}

Tensor stack_signed(std::span<const VoxelGrid> grids) {
  if (grids.empty()) throw DataError("stack_signed: empty batch");
  const auto n = grids.front().extent();
  const auto per = n * n * n;
  Tensor t({static_cast<std::int64_t>(grids.size()), 1, n, n, n});
  for (std::size_t b = 0; b < grids.size(); ++b) {
    if (grids[b].extent() != n) throw DataError("stack_signed: mixed grid extents");
    for (std::int64_t i = 0; i < per; ++i)
      t[static_cast<std::int64_t>(b) * per + i] = static_cast<Real>(2.0f * grids[b].values()[static_cast<std::size_t>(i)] - 1.0f);
  }
  return t;
}

VoxelGrid from_signed_tensor(const Tensor& t, std::int64_t sample) {
  if (t.rank() != 5 || t.dim(1) != 1 || t.dim(2) != t.dim(3) || t.dim(3) != t.dim(4))
    throw DataError("from_signed_tensor: expected [B, 1, N, N, N], got " + to_string(t.shape()));
  const auto n = t.dim(2);
  const auto per = n * n * n;
  std::vector<float> v(static_cast<std::size_t>(per));
  for (std::int64_t i = 0; i < per; ++i) v[static_cast<std::size_t>(i)] = static_cast<float>((t[sample * per + i] + 1) / 2);
  return VoxelGrid::soft(n, std::move(v));
}

// ---------------------------------------------------------------------------
// binvox: ASCII header, then (value, count) byte pairs over the voxels in
// x, z, y nesting order (y fastest).
// ---------------------------------------------------------------------------

VoxelGrid parse_binvox(const std::string& bytes) {
  std::size_t pos = 0;
  auto line = [&]() -> std::string {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw DataError("binvox: unterminated header");
    std::string l = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    if (!l.empty() && l.back() == '\r') l.pop_back();
    return l;
  };
  if (line().rfind("#binvox", 0) != 0) throw DataError("binvox: bad magic (expected '#binvox')");
  std::int64_t d = -1, h = -1, w = -1;
  std::string translate = "0 0 0", scale = "1";
  for (;;) {
    std::string l = line();
    if (l == "data") break;
    std::istringstream is(l);
    std::string key;
    is >> key;
    if (key == "dim") {
      is >> d >> h >> w;
    } else if (key == "translate") {
      translate = l.substr(std::min(l.size(), std::string("translate ").size()));
    } else if (key == "scale") {
      scale = l.substr(std::min(l.size(), std::string("scale ").size()));
    } else {
      throw DataError("binvox: unexpected header line '" + l + "'");
    }
  }
  if (d < 1 || d != h || d != w) throw DataError("binvox: dim mismatch, only cubic grids are supported");
  VoxelGrid g(d, true);
  g.binvox_translate = translate;
  g.binvox_scale = scale;
  const std::int64_t total = d * d * d;
  std::int64_t filled = 0;
  std::vector<float> linear(static_cast<std::size_t>(total));
  while (filled < total) {
    if (pos + 2 > bytes.size()) throw DataError("binvox: truncated run-length data");
    const auto value = static_cast<unsigned char>(bytes[pos]);
    const auto run = static_cast<unsigned char>(bytes[pos + 1]);
    pos += 2;
    if (value > 1) throw DataError("binvox: voxel value must be 0 or 1");
    if (filled + run > total) throw DataError("binvox: RLE overrun");
    std::fill_n(linear.begin() + filled, run, static_cast<float>(value));
    filled += run;
  }
  if (filled != total) throw DataError("binvox: dim mismatch, data holds " + std::to_string(filled) + " voxels");
  if (pos != bytes.size()) throw DataError("binvox: RLE overrun, trailing bytes after data");
  // binvox linear index = x * d^2 + z * d + y
  for (std::int64_t x = 0; x < d; ++x)
    for (std::int64_t z = 0; z < d; ++z)
      for (std::int64_t y = 0; y < d; ++y) g.set(x, y, z, linear[static_cast<std::size_t>((x * d + z) * d + y)]);
  return g;
}

std::string encode_binvox(const VoxelGrid& grid) {
  const auto d = grid.extent();
  std::string out = "#binvox 1\ndim " + std::to_string(d) + " " + std::to_string(d) + " " + std::to_string(d) +
                    "\ntranslate " + grid.binvox_translate + "\nscale " + grid.binvox_scale + "\ndata\n";
  unsigned char current = 0;
  int run = 0;
  auto flush = [&] {
    if (run > 0) {
      out.push_back(static_cast<char>(current));
      out.push_back(static_cast<char>(run));
    }
  };
  for (std::int64_t x = 0; x < d; ++x)
    for (std::int64_t z = 0; z < d; ++z)
      for (std::int64_t y = 0; y < d; ++y) {
        const unsigned char v = grid.occupied(x, y, z) ? 1 : 0;
        if (run > 0 && (v != current || run == 255)) {
          flush();
          run = 0;
        }
        current = v;
        ++run;
      }
  flush();
  return out;
}

VoxelGrid read_binvox(const std::filesystem::path& path) { return parse_binvox(read_all(path)); }

void write_binvox(const VoxelGrid& grid, const std::filesystem::path& path) { write_all(path, encode_binvox(grid)); }

// ---------------------------------------------------------------------------
// Scans
// ---------------------------------------------------------------------------

const char* view_name(View v) {
  switch (v) {
    case View::PosX: return "+x";
    case View::NegX: return "-x";
    case View::PosY: return "+y";
    case View::NegY: return "-y";
    case View::PosZ: return "+z";
    case View::NegZ: return "-z";
  }
  return "?";
}

View parse_view(const std::string& s) {
  for (auto v : {View::PosX, View::NegX, View::PosY, View::NegY, View::PosZ, View::NegZ})
    if (s == view_name(v)) return v;
  throw DataError("unknown view '" + s + "' (expected one of +x -x +y -y +z -z)");
}

int view_axis(View v) { return static_cast<int>(v) / 2; }

namespace {

bool view_positive(View v) { return static_cast<int>(v) % 2 == 0; }

// Grid coordinate of (row, col, step) for a ray along `axis`; rows and
// columns run over the two remaining axes in increasing order.
std::array<std::int64_t, 3> ray_point(int axis, std::int64_t row, std::int64_t col, std::int64_t depth) {
  std::array<std::int64_t, 3> p{};
  p[static_cast<std::size_t>(axis)] = depth;
  int k = 0;
  for (int a = 0; a < 3; ++a)
    if (a != axis) p[static_cast<std::size_t>(a)] = (k++ == 0) ? row : col;
  return p;
}

}  // namespace

std::int64_t DepthMap::hits() const {
  return std::count_if(depth.begin(), depth.end(), [](std::int32_t d) { return d != kNoHit; });
}

DepthMap depth_scan(const VoxelGrid& grid, View view) {
  const auto n = grid.extent();
  const int axis = view_axis(view);
  DepthMap m;
  m.width = n;
  m.height = n;
  m.view = view;
  m.depth.assign(static_cast<std::size_t>(n * n), DepthMap::kNoHit);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = 0; c < n; ++c)
      for (std::int64_t step = 0; step < n; ++step) {
        const auto along = view_positive(view) ? step : n - 1 - step;
        const auto p = ray_point(axis, r, c, along);
        if (grid.occupied(p[0], p[1], p[2])) {
          m.depth[static_cast<std::size_t>(r * n + c)] = static_cast<std::int32_t>(step);
          break;
        }
      }
  return m;
}

VoxelGrid occlude_to_grid(const DepthMap& depth, std::int64_t extent) {
  if (depth.width != extent || depth.height != extent)
    throw DataError("occlude_to_grid: depth map size does not match grid extent");
  VoxelGrid g(extent, true);
  const int axis = view_axis(depth.view);
  for (std::int64_t r = 0; r < extent; ++r)
    for (std::int64_t c = 0; c < extent; ++c) {
      const auto d = depth.at(r, c);
      if (d == DepthMap::kNoHit) continue;
      if (d < 0 || d >= extent)
        throw DataError("occlude_to_grid: depth " + std::to_string(d) + " out of range for extent " +
                        std::to_string(extent));
      const auto along = view_positive(depth.view) ? d : extent - 1 - d;
      const auto p = ray_point(axis, r, c, along);
      g.set(p[0], p[1], p[2], 1.0f);
    }
  return g;
}

Image render_silhouette(const VoxelGrid& grid, View view) {
  const auto m = depth_scan(grid, view);
  const auto n = static_cast<float>(grid.extent());
  Image img{m.width, m.height, std::vector<float>(m.depth.size(), 0.0f)};
  for (std::size_t i = 0; i < m.depth.size(); ++i)
    if (m.depth[i] != DepthMap::kNoHit) img.pixels[i] = 1.0f - static_cast<float>(m.depth[i]) / n;
  return img;
}

Tensor stack_images(std::span<const Image> images) {
  if (images.empty()) throw DataError("stack_images: empty batch");
  const auto h = images.front().height, w = images.front().width;
  Tensor t({static_cast<std::int64_t>(images.size()), 1, h, w});
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].height != h || images[b].width != w) throw DataError("stack_images: mixed image sizes");
    for (std::int64_t i = 0; i < h * w; ++i)
      t[static_cast<std::int64_t>(b) * h * w + i] = static_cast<Real>(images[b].pixels[static_cast<std::size_t>(i)]);
  }
  return t;
}

std::string encode_pgm(const DepthMap& depth, std::int64_t extent) {
  std::string out = "P5\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) + "\n255\n";
  for (auto d : depth.depth) {
    const int v = d == DepthMap::kNoHit ? 0 : 255 - static_cast<int>(std::floor(255.0 * d / static_cast<double>(extent)));
    out.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return out;
}

void write_pgm(const DepthMap& depth, std::int64_t extent, const std::filesystem::path& path) {
  write_all(path, encode_pgm(depth, extent));
}

VoxelGrid rotate90(const VoxelGrid& grid, int axis, int quarter_turns) {
  if (axis < 0 || axis > 2) throw DataError("rotate90: axis must be 0, 1 or 2");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  VoxelGrid out = grid;
  if (turns == 0) return out;
  // the two axes rotated into each other, in cyclic order
  const int p = (axis + 1) % 3, q = (axis + 2) % 3;
  const auto n = grid.extent();
  VoxelGrid cur = grid;
  for (int t = 0; t < turns; ++t) {
    VoxelGrid next(n, grid.binary());
    for (std::int64_t x = 0; x < n; ++x)
      for (std::int64_t y = 0; y < n; ++y)
        for (std::int64_t z = 0; z < n; ++z) {
          const float v = cur(x, y, z);
          if (v == 0.0f) continue;
          std::array<std::int64_t, 3> c{x, y, z};
          std::array<std::int64_t, 3> r = c;
          r[static_cast<std::size_t>(p)] = n - 1 - c[static_cast<std::size_t>(q)];
          r[static_cast<std::size_t>(q)] = c[static_cast<std::size_t>(p)];
          next.set(r[0], r[1], r[2], v);
        }
    cur = std::move(next);
  }
  cur.class_tag = grid.class_tag;
  cur.orientation = grid.orientation;
  cur.binvox_translate = grid.binvox_translate;
  cur.binvox_scale = grid.binvox_scale;
  return cur;
}

// ---------------------------------------------------------------------------

void write_vxg(const VoxelGrid& grid, const std::filesystem::path& path) {
  container::File f;
  std::ostringstream meta;
  meta << "kind = voxel-grid\n"
       << "binary = " << (grid.binary() ? 1 : 0) << "\n"
       << "class = " << grid.class_tag << "\n";
  if (grid.orientation) meta << "orientation = " << *grid.orientation << "\n";
  f.metadata = meta.str();
  const auto n = static_cast<std::uint64_t>(grid.extent());
  f.blocks.push_back(container::Block::from_floats("occupancy", {n, n, n}, grid.values()));
  container::write_file(f, path);
}

VoxelGrid read_vxg(const std::filesystem::path& path) {
  const auto f = container::read_file(path);
  const auto& b = f.block("occupancy");
  if (b.extents.size() != 3 || b.extents[0] != b.extents[1] || b.extents[1] != b.extents[2])
    throw DataError("vxg: occupancy block must be a cube");
  const auto n = static_cast<std::int64_t>(b.extents[0]);
  auto d = b.to_doubles();
  std::vector<float> v(d.begin(), d.end());
  bool binary = f.metadata.find("binary = 1") != std::string::npos;
  VoxelGrid g = VoxelGrid::soft(n, std::move(v));
  if (binary) g = g.binarized();
  std::istringstream is(f.metadata);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("class = ", 0) == 0) g.class_tag = line.substr(8);
    if (line.rfind("orientation = ", 0) == 0) g.orientation = std::stoi(line.substr(14));
  }
  return g;
}

}  // namespace voxgan
