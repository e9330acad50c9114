#include "proxygs/simplify.hpp"

#include "proxygs/parallel.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <queue>
#include <set>
#include <stdexcept>

namespace proxygs {

namespace {

Quadric edge_constraint(const TriangleMesh& mesh, const EdgeKey& edge, const std::vector<std::uint32_t>& faces,
                        double weight) {
  const Vec3& x0 = mesh.vertices[edge.first];
  const Vec3 t = (mesh.vertices[edge.second] - x0).normalized();
  Vec3 n = Vec3::Zero();
  for (auto f : faces) n += face_normal(mesh, f);
  Quadric q;
  if (n.norm() == 0.0) return q;
  n.normalize();
  Vec3 m = t.cross(n);
  if (m.norm() == 0.0) return q;
  m.normalize();
  q += Quadric::from_plane({n.x(), n.y(), n.z(), -n.dot(x0)}, weight);
  q += Quadric::from_plane({m.x(), m.y(), m.z(), -m.dot(x0)}, weight);
  return q;
}

}  // namespace

std::vector<Quadric> vertex_quadrics(const TriangleMesh& mesh, double boundary_weight, int workers) {
  const auto nf = static_cast<std::int64_t>(mesh.faces.size());
  const auto nv = static_cast<std::int64_t>(mesh.vertices.size());
  std::vector<Quadric> face_q(mesh.faces.size());
  const int threads = resolve_workers(workers);

#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t f = 0; f < nf; ++f) face_q[f] = Quadric::from_plane(face_plane(mesh, f));

  // Incident faces in ascending order give a fixed summation order per vertex.
  std::vector<std::uint32_t> offsets(nv + 1, 0);
  for (const Face& t : mesh.faces) {
    for (auto v : t) ++offsets[v + 1];
  }
  for (std::int64_t v = 0; v < nv; ++v) offsets[v + 1] += offsets[v];
  std::vector<std::uint32_t> incident(offsets.back());
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
    for (auto v : mesh.faces[f]) incident[cursor[v]++] = f;
  }

  std::vector<Quadric> q(mesh.vertices.size());
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t v = 0; v < nv; ++v) {
    for (auto k = offsets[v]; k < offsets[v + 1]; ++k) q[v] += face_q[incident[k]];
  }

  for (const auto& [edge, faces] : edge_faces(mesh)) {
    const bool boundary = faces.size() == 1;
    const bool feature = !boundary && mesh.feature_edges.count(edge) > 0;
    if (!boundary && !feature) continue;
    const Quadric c = edge_constraint(mesh, edge, faces, boundary_weight);
    q[edge.first] += c;
    q[edge.second] += c;
  }
  return q;
}

CollapseCandidate optimal_collapse(const Quadric& q_i, const Quadric& q_j, const Vec3& x_i, const Vec3& x_j) {
  const Quadric q = q_i + q_j;
  const Mat3 a = q.matrix.topLeftCorner<3, 3>();
  const Vec3 b = q.matrix.topRightCorner<3, 1>();

  CollapseCandidate out;
  const Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s(0) > 0.0 && s(2) > kSingularRatio * s(0)) {
    out.optimal_position = svd.solve(-b);
    out.cost = std::max(0.0, q.error(out.optimal_position));
    return out;
  }
  const Vec3 mid = 0.5 * (x_i + x_j);
  const Vec3 options[3] = {mid, x_i, x_j};
  out.optimal_position = mid;
  out.cost = q.error(mid);
  for (int k = 1; k < 3; ++k) {
    const double e = q.error(options[k]);
    if (e < out.cost) {
      out.cost = e;
      out.optimal_position = options[k];
    }
  }
  out.cost = std::max(0.0, out.cost);
  return out;
}

struct Simplifier::State {
  struct Entry {
    double cost;
    std::uint32_t keep;
    std::uint32_t remove;
    std::uint64_t gen_keep;
    std::uint64_t gen_remove;
    Vec3 position;
  };
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.cost != b.cost) return a.cost > b.cost;
      if (a.keep != b.keep) return a.keep > b.keep;
      return a.remove > b.remove;
    }
  };

  std::vector<Vec3> positions;
  std::vector<Quadric> quadrics;
  std::vector<Face> faces;
  std::vector<bool> face_alive;
  std::vector<bool> vertex_alive;
  std::vector<std::vector<std::uint32_t>> vertex_faces;
  std::vector<std::uint64_t> generation;
  std::vector<bool> boundary;
  std::size_t live_faces = 0;
  std::size_t live_vertices = 0;
  std::priority_queue<Entry, std::vector<Entry>, Later> heap;

  std::vector<std::uint32_t> neighbors(std::uint32_t v) const {
    std::vector<std::uint32_t> out;
    for (auto f : vertex_faces[v]) {
      for (auto u : faces[f]) {
        if (u != v) out.push_back(u);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  static bool has(const Face& f, std::uint32_t v) { return f[0] == v || f[1] == v || f[2] == v; }

  std::vector<std::uint32_t> shared_faces(std::uint32_t i, std::uint32_t j) const {
    std::vector<std::uint32_t> out;
    for (auto f : vertex_faces[i]) {
      if (has(faces[f], j)) out.push_back(f);
    }
    return out;
  }

  Vec3 normal_of(const Face& f, std::uint32_t moved, const Vec3& moved_to, std::uint32_t alias) const {
    Vec3 p[3];
    for (int k = 0; k < 3; ++k) {
      p[k] = (f[k] == moved || f[k] == alias) ? moved_to : positions[f[k]];
    }
    return (p[1] - p[0]).cross(p[2] - p[0]);
  }

  CollapseCandidate candidate(std::uint32_t a, std::uint32_t b) const {
    const std::uint32_t i = std::min(a, b);
    const std::uint32_t j = std::max(a, b);
    CollapseCandidate c = optimal_collapse(quadrics[i], quadrics[j], positions[i], positions[j]);
    c.keep = i;
    c.remove = j;
    c.generation = generation[i] + generation[j];
    return c;
  }

  bool is_valid(std::uint32_t i, std::uint32_t j, const Vec3& x) const {
    const auto shared = shared_faces(i, j);
    if (shared.empty() || shared.size() > 2) return false;
    if (shared.size() == 2 && boundary[i] && boundary[j]) return false;

    // Link condition: the common neighbours are exactly the opposite vertices.
    std::vector<std::uint32_t> opposite;
    for (auto f : shared) {
      for (auto u : faces[f]) {
        if (u != i && u != j) opposite.push_back(u);
      }
    }
    std::sort(opposite.begin(), opposite.end());
    const auto ni = neighbors(i);
    const auto nj = neighbors(j);
    std::vector<std::uint32_t> common;
    std::set_intersection(ni.begin(), ni.end(), nj.begin(), nj.end(), std::back_inserter(common));
    if (common != opposite) return false;

    // Surviving faces must keep their orientation and must not coincide.
    std::set<std::pair<std::uint32_t, std::uint32_t>> around_i;
    for (auto f : vertex_faces[i]) {
      if (has(faces[f], j)) continue;
      const Vec3 before = normal_of(faces[f], i, positions[i], i);
      const Vec3 after = normal_of(faces[f], i, x, i);
      if (after.dot(before) <= 0.0) return false;
      std::array<std::uint32_t, 2> rest{};
      int n = 0;
      for (auto u : faces[f]) {
        if (u != i) rest[n++] = u;
      }
      around_i.insert({std::min(rest[0], rest[1]), std::max(rest[0], rest[1])});
    }
    for (auto f : vertex_faces[j]) {
      if (has(faces[f], i)) continue;
      const Vec3 before = normal_of(faces[f], j, positions[j], j);
      const Vec3 after = normal_of(faces[f], j, x, j);
      if (after.dot(before) <= 0.0) return false;
      std::array<std::uint32_t, 2> rest{};
      int n = 0;
      for (auto u : faces[f]) {
        if (u != j) rest[n++] = u;
      }
      if (around_i.count({std::min(rest[0], rest[1]), std::max(rest[0], rest[1])})) return false;
    }
    return true;
  }

  void push(std::uint32_t a, std::uint32_t b) {
    const CollapseCandidate c = candidate(a, b);
    heap.push({c.cost, c.keep, c.remove, generation[c.keep], generation[c.remove], c.optimal_position});
  }

  void apply(std::uint32_t i, std::uint32_t j, const Vec3& x) {
    for (auto f : shared_faces(i, j)) {
      face_alive[f] = false;
      --live_faces;
      for (auto u : faces[f]) {
        auto& list = vertex_faces[u];
        list.erase(std::remove(list.begin(), list.end(), f), list.end());
      }
    }
    for (auto f : vertex_faces[j]) {
      for (auto& u : faces[f]) {
        if (u == j) u = i;
      }
      vertex_faces[i].push_back(f);
    }
    std::sort(vertex_faces[i].begin(), vertex_faces[i].end());
    vertex_faces[j].clear();
    vertex_alive[j] = false;
    --live_vertices;
    positions[i] = x;
    quadrics[i] = quadrics[i] + quadrics[j];
    boundary[i] = boundary[i] || boundary[j];

    auto affected = neighbors(i);
    affected.push_back(i);
    for (auto v : affected) ++generation[v];
    std::set<EdgeKey> edges;
    for (auto v : affected) {
      for (auto u : neighbors(v)) edges.insert(make_edge(u, v));
    }
    for (const auto& e : edges) push(e.first, e.second);
  }
};

Simplifier::Simplifier(const TriangleMesh& mesh, const SimplifyOptions& options) : state_(std::make_unique<State>()) {
  TriangleMesh annotated = mesh;
  annotate_mesh(annotated, options.feature_angle_deg);
  State& s = *state_;
  s.positions = annotated.vertices;
  s.quadrics = vertex_quadrics(annotated, options.boundary_weight);
  s.faces = annotated.faces;
  s.face_alive.assign(s.faces.size(), true);
  s.vertex_alive.assign(s.positions.size(), true);
  s.vertex_faces.resize(s.positions.size());
  for (std::uint32_t f = 0; f < s.faces.size(); ++f) {
    for (auto v : s.faces[f]) s.vertex_faces[v].push_back(f);
  }
  s.generation.assign(s.positions.size(), 0);
  s.boundary = annotated.boundary_flags;
  s.live_faces = s.faces.size();
  s.live_vertices = s.positions.size();
  for (const auto& [edge, faces] : edge_faces(annotated)) s.push(edge.first, edge.second);
}

Simplifier::~Simplifier() = default;
Simplifier::Simplifier(Simplifier&&) noexcept = default;
Simplifier& Simplifier::operator=(Simplifier&&) noexcept = default;

std::optional<CollapseCandidate> Simplifier::collapse_next() {
  State& s = *state_;
  while (!s.heap.empty()) {
    const State::Entry e = s.heap.top();
    s.heap.pop();
    if (!s.vertex_alive[e.keep] || !s.vertex_alive[e.remove]) continue;
    if (s.generation[e.keep] != e.gen_keep || s.generation[e.remove] != e.gen_remove) continue;
    if (!s.is_valid(e.keep, e.remove, e.position)) continue;
    CollapseCandidate c;
    c.keep = e.keep;
    c.remove = e.remove;
    c.optimal_position = e.position;
    c.cost = e.cost;
    c.generation = e.gen_keep + e.gen_remove;
    s.apply(e.keep, e.remove, e.position);
    return c;
  }
  return std::nullopt;
}

std::vector<CollapseCandidate> Simplifier::valid_candidates() const {
  const State& s = *state_;
  std::set<EdgeKey> edges;
  for (std::uint32_t f = 0; f < s.faces.size(); ++f) {
    if (!s.face_alive[f]) continue;
    const Face& t = s.faces[f];
    for (int k = 0; k < 3; ++k) edges.insert(make_edge(t[k], t[(k + 1) % 3]));
  }
  std::vector<CollapseCandidate> out;
  for (const auto& e : edges) {
    const CollapseCandidate c = s.candidate(e.first, e.second);
    if (s.is_valid(c.keep, c.remove, c.optimal_position)) out.push_back(c);
  }
  return out;
}

std::size_t Simplifier::face_count() const { return state_->live_faces; }
std::size_t Simplifier::vertex_count() const { return state_->live_vertices; }

double Simplifier::total_error() const {
  const State& s = *state_;
  double total = 0.0;
  for (std::size_t v = 0; v < s.positions.size(); ++v) {
    if (s.vertex_alive[v] && !s.vertex_faces[v].empty()) total += s.quadrics[v].error(s.positions[v]);
  }
  return total;
}

TriangleMesh Simplifier::mesh() const {
  const State& s = *state_;
  TriangleMesh out;
  std::vector<std::uint32_t> remap(s.positions.size(), UINT32_MAX);
  for (std::uint32_t f = 0; f < s.faces.size(); ++f) {
    if (!s.face_alive[f]) continue;
    Face t = s.faces[f];
    for (auto& v : t) {
      if (remap[v] == UINT32_MAX) {
        remap[v] = static_cast<std::uint32_t>(out.vertices.size());
        out.vertices.push_back(s.positions[v]);
      }
      v = remap[v];
    }
    out.faces.push_back(t);
  }
  return out;
}

SimplifyResult simplify(const TriangleMesh& mesh, const SimplifyOptions& options) {
  if (options.target_faces < 4) throw std::invalid_argument("simplify: target_faces must be >= 4");
  validate_mesh(mesh);
  Simplifier simplifier(mesh, options);
  SimplifyResult result;
  while (simplifier.face_count() > options.target_faces) {
    if (!simplifier.collapse_next()) {
      result.exhausted = true;
      break;
    }
    ++result.collapses;
  }
  result.mesh = simplifier.mesh();
  return result;
}

}  // namespace proxygs
