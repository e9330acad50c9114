#include "proxygs/depth_raster.hpp"

#include "proxygs/parallel.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace proxygs {

float narrow_depth_up(double z) {
  float f = static_cast<float>(z);
  if (static_cast<double>(f) < z) f = std::nextafter(f, std::numeric_limits<float>::infinity());
  return f;
}

namespace {

constexpr int kBlock = 8;

struct Edge {
  // Canonically ordered endpoints; E = sign * (dx * (py - ay) - dy * (px - ax)).
  double ax, ay, dx, dy;
  double sign;
  bool owns_tie;
};

struct ScreenTri {
  std::array<Edge, 3> edges;
  double x0, y0, z0;
  double dzdx, dzdy;
  double zmin, zmax;
  int bx0, by0, bx1, by1;  // inclusive pixel bounds
};

bool before(const Vec4& a, const Vec4& b) {
  for (int k = 0; k < 4; ++k) {
    if (a[k] != b[k]) return a[k] < b[k];
  }
  return false;
}

// Intersection with z_clip = 0, computed from canonically ordered endpoints so
// that both triangles sharing the edge get the same vertex.
Vec4 near_intersection(const Vec4& a, const Vec4& b) {
  const Vec4& p = before(a, b) ? a : b;
  const Vec4& q = before(a, b) ? b : a;
  const double t = p.z() / (p.z() - q.z());
  Vec4 r = p + t * (q - p);
  r.z() = 0.0;
  return r;
}

struct SetupContext {
  int width;
  int height;
};

bool setup_triangle(const SetupContext& ctx, const Vec4& c0, const Vec4& c1, const Vec4& c2, ScreenTri& out) {
  // Screen-space projection; every vertex has w > 0 here.
  const Vec4* v[3] = {&c0, &c1, &c2};
  double sx[3], sy[3], sz[3];
  for (int k = 0; k < 3; ++k) {
    const Vec4& c = *v[k];
    sx[k] = 0.5 * ctx.width * (c.x() / c.w() + 1.0);
    sy[k] = 0.5 * ctx.height * (c.y() / c.w() + 1.0);
    sz[k] = c.z() / c.w();
  }
  const double orient = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0]);
  if (!(orient != 0.0) || !std::isfinite(orient)) return false;
  const double flip = orient > 0.0 ? 1.0 : -1.0;

  for (int k = 0; k < 3; ++k) {
    const int a = k;
    const int b = (k + 1) % 3;
    const bool canonical = sx[a] < sx[b] || (sx[a] == sx[b] && sy[a] <= sy[b]);
    const int p = canonical ? a : b;
    const int q = canonical ? b : a;
    Edge& e = out.edges[k];
    e.ax = sx[p];
    e.ay = sy[p];
    e.dx = sx[q] - sx[p];
    e.dy = sy[q] - sy[p];
    e.sign = (canonical ? 1.0 : -1.0) * flip;
    // Effective direction with the interior on the positive side.
    const double ddx = (sx[b] - sx[a]) * flip;
    const double ddy = (sy[b] - sy[a]) * flip;
    e.owns_tie = ddy < 0.0 || (ddy == 0.0 && ddx > 0.0);
  }

  out.x0 = sx[0];
  out.y0 = sy[0];
  out.z0 = sz[0];
  out.dzdx = ((sz[1] - sz[0]) * (sy[2] - sy[0]) - (sz[2] - sz[0]) * (sy[1] - sy[0])) / orient;
  out.dzdy = ((sz[2] - sz[0]) * (sx[1] - sx[0]) - (sz[1] - sz[0]) * (sx[2] - sx[0])) / orient;
  out.zmin = std::min({sz[0], sz[1], sz[2]});
  out.zmax = std::max({sz[0], sz[1], sz[2]});
  if (out.zmin > 1.0) return false;

  const double minx = std::min({sx[0], sx[1], sx[2]});
  const double maxx = std::max({sx[0], sx[1], sx[2]});
  const double miny = std::min({sy[0], sy[1], sy[2]});
  const double maxy = std::max({sy[0], sy[1], sy[2]});
  // Pixel i is sampled at i + 0.5.
  const double bx0 = std::max(std::ceil(minx - 0.5), 0.0);
  const double by0 = std::max(std::ceil(miny - 0.5), 0.0);
  const double bx1 = std::min(std::floor(maxx - 0.5), ctx.width - 1.0);
  const double by1 = std::min(std::floor(maxy - 0.5), ctx.height - 1.0);
  if (!(bx0 <= bx1) || !(by0 <= by1)) return false;
  out.bx0 = static_cast<int>(bx0);
  out.by0 = static_cast<int>(by0);
  out.bx1 = static_cast<int>(bx1);
  out.by1 = static_cast<int>(by1);
  return true;
}

// Clips against z_clip >= 0 and sets up at most two screen triangles.
int setup_clipped(const SetupContext& ctx, const Vec4& a, const Vec4& b, const Vec4& c, ScreenTri out[2]) {
  const Vec4* v[3] = {&a, &b, &c};
  for (int axis = 0; axis < 2; ++axis) {
    if (a[axis] > a.w() && b[axis] > b.w() && c[axis] > c.w()) return 0;
    if (a[axis] < -a.w() && b[axis] < -b.w() && c[axis] < -c.w()) return 0;
  }
  if (a.z() > a.w() && b.z() > b.w() && c.z() > c.w()) return 0;
  const int inside = (a.z() >= 0.0) + (b.z() >= 0.0) + (c.z() >= 0.0);
  if (inside == 0) return 0;
  if (inside == 3) return setup_triangle(ctx, a, b, c, out[0]) ? 1 : 0;

  // Sutherland-Hodgman against one plane: the polygon keeps the winding.
  std::array<Vec4, 4> poly;
  int n = 0;
  for (int k = 0; k < 3; ++k) {
    const Vec4& p = *v[k];
    const Vec4& q = *v[(k + 1) % 3];
    const bool p_in = p.z() >= 0.0;
    const bool q_in = q.z() >= 0.0;
    if (p_in) poly[n++] = p;
    if (p_in != q_in) poly[n++] = near_intersection(p, q);
  }
  int count = 0;
  for (int k = 1; k + 1 < n; ++k) {
    if (setup_triangle(ctx, poly[0], poly[k], poly[k + 1], out[count])) ++count;
  }
  return count;
}

// Positive finite z only.
inline float narrow_up_fast(double z) {
  float f = static_cast<float>(z);
  if (static_cast<double>(f) < z) f = std::bit_cast<float>(std::bit_cast<std::uint32_t>(f) + 1u);
  return f;
}

inline double edge_value(const Edge& e, double row, double px) { return e.sign * (row - e.dy * (px - e.ax)); }

inline bool edge_passes(const Edge& e, double v) { return v > 0.0 || (v == 0.0 && e.owns_tie); }

void raster_tile(const std::vector<const ScreenTri*>& tris, std::span<const std::uint32_t> bin, int tx0, int ty0,
                 int tile, int width, int height, bool early_z, DepthMap& target) {
  const int tw = std::min(tile, width - tx0);
  const int th = std::min(tile, height - ty0);
  std::vector<float> buf(static_cast<std::size_t>(tile) * tile, kBackgroundDepth);
  const int blocks_x = (tw + kBlock - 1) / kBlock;
  const int blocks_y = (th + kBlock - 1) / kBlock;
  // Upper bound on each block's depth; refreshed lazily, which keeps it conservative.
  std::vector<float> block_max(static_cast<std::size_t>(blocks_x) * blocks_y, kBackgroundDepth);
  std::vector<std::uint8_t> block_dirty(block_max.size(), 0);

  for (auto idx : bin) {
    const ScreenTri& t = *tris[idx];
    const int x0 = std::max(t.bx0, tx0) - tx0;
    const int x1 = std::min(t.bx1, tx0 + tw - 1) - tx0;
    const int y0 = std::max(t.by0, ty0) - ty0;
    const int y1 = std::min(t.by1, ty0 + th - 1) - ty0;
    if (x0 > x1 || y0 > y1) continue;
    const float zmin_f = narrow_up_fast(std::max(t.zmin, 0.0));

    for (int by = y0 / kBlock; by <= y1 / kBlock; ++by) {
      for (int bx = x0 / kBlock; bx <= x1 / kBlock; ++bx) {
        const std::size_t bi = static_cast<std::size_t>(by) * blocks_x + bx;
        if (early_z) {
          if (zmin_f >= block_max[bi]) continue;
          if (block_dirty[bi]) {
            float m = 0.0f;
            const int ex = std::min(bx * kBlock + kBlock, tw);
            const int ey = std::min(by * kBlock + kBlock, th);
            for (int ly = by * kBlock; ly < ey; ++ly) {
              const float* line = buf.data() + static_cast<std::size_t>(ly) * tile;
              for (int lx = bx * kBlock; lx < ex; ++lx) m = std::max(m, line[lx]);
            }
            block_max[bi] = m;
            block_dirty[bi] = 0;
            if (zmin_f >= m) continue;
          }
        }
        const int px0 = std::max(x0, bx * kBlock);
        const int px1 = std::min(x1, bx * kBlock + kBlock - 1);
        const int py0 = std::max(y0, by * kBlock);
        const int py1 = std::min(y1, by * kBlock + kBlock - 1);

        // The rounded edge value is monotone in px and in py separately, so
        // its extremes over the sub-block lie at the corner samples.
        const double cx[2] = {tx0 + px0 + 0.5, tx0 + px1 + 0.5};
        const double cy[2] = {ty0 + py0 + 0.5, ty0 + py1 + 0.5};
        bool inside_all = true;
        bool rejected = false;
        for (int k = 0; k < 3 && !rejected; ++k) {
          const Edge& e = t.edges[k];
          double lo = std::numeric_limits<double>::infinity();
          double hi = -lo;
          for (double yy : cy) {
            const double row = e.dx * (yy - e.ay);
            for (double xx : cx) {
              const double v = edge_value(e, row, xx);
              lo = std::min(lo, v);
              hi = std::max(hi, v);
            }
          }
          if (hi < 0.0) rejected = true;
          if (!(lo > 0.0)) inside_all = false;
        }
        if (rejected) continue;

        bool wrote = false;
        for (int ly = py0; ly <= py1; ++ly) {
          const double py = ty0 + ly + 0.5;
          double row[3];
          for (int k = 0; k < 3; ++k) row[k] = t.edges[k].dx * (py - t.edges[k].ay);
          const double zrow = t.z0 + t.dzdy * (py - t.y0);
          float* line = buf.data() + static_cast<std::size_t>(ly) * tile;
          for (int lx = px0; lx <= px1; ++lx) {
            const double px = tx0 + lx + 0.5;
            if (!inside_all) {
              if (!edge_passes(t.edges[0], edge_value(t.edges[0], row[0], px)) ||
                  !edge_passes(t.edges[1], edge_value(t.edges[1], row[1], px)) ||
                  !edge_passes(t.edges[2], edge_value(t.edges[2], row[2], px))) {
                continue;
              }
            }
            double z = zrow + t.dzdx * (px - t.x0);
            z = std::clamp(z, t.zmin, t.zmax);
            if (z > 1.0) continue;
            const float zf = narrow_up_fast(std::max(z, 0.0));
            if (zf < line[lx]) {
              line[lx] = zf;
              wrote = true;
            }
          }
        }
        if (wrote) block_dirty[bi] = 1;
      }
    }
  }

  for (int ly = 0; ly < th; ++ly) {
    std::copy_n(buf.data() + static_cast<std::size_t>(ly) * tile, tw, &target.at(tx0, ty0 + ly));
  }
}

}  // namespace

DepthMap rasterize_faces(const TriangleMesh& mesh, std::span<const std::uint32_t> faces, const Camera& camera,
                         const RasterOptions& options) {
  validate_camera(camera);
  const int threads = resolve_workers(options.workers);
  const int tile = std::max(kBlock, (options.tile_size + kBlock - 1) / kBlock * kBlock);
  const int width = camera.width;
  const int height = camera.height;

  const auto nv = static_cast<std::int64_t>(mesh.vertices.size());
  std::vector<Vec4> clip(mesh.vertices.size());
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t i = 0; i < nv; ++i) {
    const Vec3& p = mesh.vertices[i];
    const Vec4 view = transform_point(camera.view, p.x(), p.y(), p.z(), 1.0);
    clip[i] = transform_point(camera.proj, view.x(), view.y(), view.z(), view.w());
  }

  // Setup in fixed chunks of faces; concatenating the chunks in order keeps
  // the triangle list independent of the worker count.
  constexpr std::int64_t kChunk = 4096;
  const auto nf = static_cast<std::int64_t>(faces.size());
  const std::int64_t chunks = (nf + kChunk - 1) / kChunk;
  std::vector<std::vector<ScreenTri>> parts(static_cast<std::size_t>(chunks));
  const SetupContext ctx{width, height};
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (std::int64_t c = 0; c < chunks; ++c) {
    std::vector<ScreenTri>& part = parts[c];
    ScreenTri out[2];
    for (std::int64_t i = c * kChunk; i < std::min(nf, (c + 1) * kChunk); ++i) {
      const Face& f = mesh.faces[faces[i]];
      const int n = setup_clipped(ctx, clip[f[0]], clip[f[1]], clip[f[2]], out);
      part.insert(part.end(), out, out + n);
    }
  }
  // Triangles stay in their chunk; the flat list indexes them in chunk order.
  std::vector<const ScreenTri*> tris;
  std::size_t total = 0;
  for (const auto& part : parts) total += part.size();
  tris.reserve(total);
  for (const auto& part : parts) {
    for (const ScreenTri& t : part) tris.push_back(&t);
  }

  // Counting sort of (tile, triangle) references; each bin lists triangles in
  // ascending order.
  const int tiles_x = (width + tile - 1) / tile;
  const int tiles_y = (height + tile - 1) / tile;
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * tiles_y;
  std::vector<std::uint32_t> bin_start(tile_count + 1, 0);
  for (const ScreenTri* tp : tris) {
    const ScreenTri& t = *tp;
    for (int ty = t.by0 / tile; ty <= t.by1 / tile; ++ty) {
      for (int tx = t.bx0 / tile; tx <= t.bx1 / tile; ++tx) ++bin_start[static_cast<std::size_t>(ty) * tiles_x + tx + 1];
    }
  }
  std::partial_sum(bin_start.begin(), bin_start.end(), bin_start.begin());
  std::vector<std::uint32_t> bin_items(bin_start.back());
  std::vector<std::uint32_t> cursor(bin_start.begin(), bin_start.end() - 1);
  for (std::uint32_t i = 0; i < tris.size(); ++i) {
    const ScreenTri& t = *tris[i];
    for (int ty = t.by0 / tile; ty <= t.by1 / tile; ++ty) {
      for (int tx = t.bx0 / tile; tx <= t.bx1 / tile; ++tx) bin_items[cursor[static_cast<std::size_t>(ty) * tiles_x + tx]++] = i;
    }
  }

  DepthMap depth(width, height, kBackgroundDepth);
  const auto tiles = static_cast<std::int64_t>(tile_count);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 1)
  for (std::int64_t b = 0; b < tiles; ++b) {
    const int tx = static_cast<int>(b % tiles_x);
    const int ty = static_cast<int>(b / tiles_x);
    const std::span<std::uint32_t> bin(bin_items.data() + bin_start[b], bin_start[b + 1] - bin_start[b]);
    // Near triangles first so that early-z rejects more; the depth test keeps
    // the minimum, so the order does not change the output.
    if (options.early_z) {
      std::sort(bin.begin(), bin.end(), [&](std::uint32_t i, std::uint32_t j) {
        return tris[i]->zmin != tris[j]->zmin ? tris[i]->zmin < tris[j]->zmin : i < j;
      });
    }
    raster_tile(tris, bin, tx * tile, ty * tile, tile, width, height, options.early_z, depth);
  }
  return depth;
}

DepthMap rasterize_depth(const TriangleMesh& mesh, const Camera& camera, const RasterOptions& options) {
  std::vector<std::uint32_t> all(mesh.faces.size());
  std::iota(all.begin(), all.end(), 0u);
  return rasterize_faces(mesh, all, camera, options);
}

DepthMap rasterize_clusters(const TriangleMesh& mesh, const std::vector<Cluster>& clusters, const Camera& camera,
                            std::span<const std::uint8_t> visible, const RasterOptions& options) {
  if (!visible.empty() && visible.size() != clusters.size()) {
    throw std::invalid_argument("rasterize_clusters: mask size does not match cluster count");
  }
  std::vector<std::uint32_t> faces;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (!visible.empty() && !visible[k]) continue;
    faces.insert(faces.end(), clusters[k].triangle_indices.begin(), clusters[k].triangle_indices.end());
  }
  return rasterize_faces(mesh, faces, camera, options);
}

HiZPyramid build_hiz(const DepthMap& depth, int workers) {
  const int threads = resolve_workers(workers);
  HiZPyramid pyramid;
  pyramid.levels.push_back(depth);
  while (pyramid.levels.back().width > 1 || pyramid.levels.back().height > 1) {
    const DepthMap& src = pyramid.levels.back();
    DepthMap dst((src.width + 1) / 2, (src.height + 1) / 2, 0.0f);
    const int full_x = src.width / 2;  // destination texels with two source columns
#pragma omp parallel for num_threads(threads) schedule(static)
    for (int y = 0; y < dst.height; ++y) {
      const float* r0 = src.values.data() + static_cast<std::size_t>(2 * y) * src.width;
      const float* r1 = src.values.data() + static_cast<std::size_t>(std::min(2 * y + 1, src.height - 1)) * src.width;
      float* out = &dst.at(0, y);
      for (int x = 0; x < full_x; ++x) {
        out[x] = std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
      }
      if (full_x < dst.width) out[full_x] = std::max(r0[2 * full_x], r1[2 * full_x]);
    }
    pyramid.levels.push_back(std::move(dst));
  }
  return pyramid;
}

float rect_max(const HiZPyramid& pyramid, const LevelRect& rect) {
  if (rect.level < 0 || rect.level > pyramid.max_level()) throw std::out_of_range("rect_max: level out of range");
  const DepthMap& level = pyramid.levels[rect.level];
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > level.width || rect.y1 > level.height || rect.x0 >= rect.x1 ||
      rect.y0 >= rect.y1) {
    throw std::out_of_range("rect_max: rect outside level bounds");
  }
  float m = 0.0f;
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) m = std::max(m, level.at(x, y));
  }
  return m;
}

}  // namespace proxygs
