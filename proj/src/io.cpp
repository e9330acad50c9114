#include "proxygs/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace proxygs::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

IoError::IoError(const fs::path& path, const std::string& what, std::size_t line)
    : std::runtime_error(path.string() + (line ? ":" + std::to_string(line) : std::string()) + ": " + what) {}

namespace {

std::ifstream open_in(const fs::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw IoError(path, "cannot open for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, bool binary) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  return out;
}

std::vector<char> read_all(const fs::path& path) {
  std::ifstream in = open_in(path, true);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class ByteReader {
 public:
  ByteReader(const fs::path& path, std::vector<char> bytes) : path_(path), bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw IoError(path_, "unexpected end of file at byte " + std::to_string(pos_));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t pos() const { return pos_; }
  const char* data() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError(path_, "unexpected end of file");
    pos_ += n;
  }

 private:
  fs::path path_;
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::string lower_ext(const fs::path& path) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

void check_mesh(const TriangleMesh& mesh, const fs::path& path) {
  const std::string v = mesh_violations(mesh);
  if (!v.empty()) throw IoError(path, "invalid mesh:\n" + v);
}

}  // namespace

// ---------------------------------------------------------------- OBJ

TriangleMesh read_obj(const fs::path& path) {
  std::ifstream in = open_in(path, false);
  TriangleMesh mesh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw IoError(path, "vertex needs three coordinates", lineno);
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::int64_t> idx;
      std::string tok;
      while (ss >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        std::int64_t k;
        try {
          std::size_t used = 0;
          k = std::stoll(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw IoError(path, "bad face index '" + tok + "'", lineno);
        }
        if (k < 0) k += static_cast<std::int64_t>(mesh.vertices.size()) + 1;
        if (k < 1) throw IoError(path, "face index out of range '" + tok + "'", lineno);
        idx.push_back(k - 1);
      }
      if (idx.size() < 3) throw IoError(path, "face needs at least three vertices", lineno);
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
        mesh.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[t]),
                              static_cast<std::uint32_t>(idx[t + 1])});
      }
    }
  }
  check_mesh(mesh, path);
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const fs::path& path) {
  std::ofstream out = open_out(path, false);
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError(path, "write failed");
}

// ---------------------------------------------------------------- PLY

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_type(const std::string& name, const fs::path& path, std::size_t line) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  throw IoError(path, "unknown PLY type '" + name + "'", line);
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

template <typename T>
T byteswap_value(T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  std::reverse(b, b + sizeof(T));
  std::memcpy(&v, b, sizeof(T));
  return v;
}

double read_binary(ByteReader& r, PlyType t, bool swap) {
  auto get = [&](auto tag) {
    auto v = r.get<decltype(tag)>();
    return swap ? byteswap_value(v) : v;
  };
  switch (t) {
    case PlyType::i8: return get(std::int8_t{});
    case PlyType::u8: return get(std::uint8_t{});
    case PlyType::i16: return get(std::int16_t{});
    case PlyType::u16: return get(std::uint16_t{});
    case PlyType::i32: return get(std::int32_t{});
    case PlyType::u32: return get(std::uint32_t{});
    case PlyType::f32: return get(float{});
    case PlyType::f64: return get(double{});
  }
  return 0.0;
}

}  // namespace

TriangleMesh read_ply(const fs::path& path) {
  std::vector<char> bytes = read_all(path);
  std::size_t header_end = 0;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  {
    std::size_t start = 0;
    while (true) {
      const auto nl = std::find(bytes.begin() + start, bytes.end(), '\n');
      if (nl == bytes.end()) throw IoError(path, "PLY header not terminated by end_header");
      std::string line(bytes.begin() + start, nl);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      header.push_back(line);
      start = static_cast<std::size_t>(nl - bytes.begin()) + 1;
      if (line == "end_header") break;
    }
    header_end = start;
  }
  if (header.empty() || header[0] != "ply") throw IoError(path, "missing 'ply' magic", 1);

  std::string format;
  std::vector<PlyElement> elements;
  for (std::size_t i = 1; i < header.size(); ++i) {
    lineno = i + 1;
    std::istringstream ss(header[i]);
    std::string kw;
    ss >> kw;
    if (kw == "format") {
      ss >> format;
    } else if (kw == "element") {
      PlyElement e;
      if (!(ss >> e.name >> e.count)) throw IoError(path, "bad element line", lineno);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw IoError(path, "property before any element", lineno);
      PlyProperty p;
      std::string t;
      ss >> t;
      if (t == "list") {
        std::string ct, it;
        ss >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = ply_type(ct, path, lineno);
        p.type = ply_type(it, path, lineno);
      } else {
        p.type = ply_type(t, path, lineno);
        ss >> p.name;
      }
      elements.back().props.push_back(p);
    } else if (kw != "comment" && kw != "obj_info" && kw != "end_header" && !kw.empty()) {
      throw IoError(path, "unexpected header keyword '" + kw + "'", lineno);
    }
  }
  const bool ascii = format == "ascii";
  const bool big = format == "binary_big_endian";
  if (!ascii && !big && format != "binary_little_endian") throw IoError(path, "unsupported PLY format '" + format + "'");

  TriangleMesh mesh;
  auto store = [&](const PlyElement& e, const std::vector<std::vector<double>>& values, std::size_t row,
                   std::size_t line) {
    if (e.name == "vertex") {
      Vec3 v = Vec3::Zero();
      int found = 0;
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        const std::string& n = e.props[k].name;
        if (n == "x" || n == "y" || n == "z") {
          v[n[0] - 'x'] = values[k][0];
          ++found;
        }
      }
      if (found != 3) throw IoError(path, "vertex element lacks x/y/z", line);
      mesh.vertices.push_back(v);
    } else if (e.name == "face") {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        if (e.props[k].name != "vertex_indices" && e.props[k].name != "vertex_index") continue;
        const auto& idx = values[k];
        if (idx.size() < 3) throw IoError(path, "face " + std::to_string(row) + " has fewer than 3 vertices", line);
        for (double d : idx) {
          if (d < 0) throw IoError(path, "negative vertex index in face " + std::to_string(row), line);
        }
        for (std::size_t t = 1; t + 1 < idx.size(); ++t) {
          mesh.faces.push_back({static_cast<std::uint32_t>(idx[0]), static_cast<std::uint32_t>(idx[t]),
                                static_cast<std::uint32_t>(idx[t + 1])});
        }
      }
    }
  };

  if (ascii) {
    std::string body(bytes.begin() + header_end, bytes.end());
    std::istringstream in(body);
    std::size_t line = header.size();
    std::string text;
    for (const PlyElement& e : elements) {
      for (std::size_t r = 0; r < e.count; ++r) {
        if (!std::getline(in, text)) throw IoError(path, "unexpected end of data in element '" + e.name + "'", line);
        ++line;
        std::istringstream ss(text);
        std::vector<std::vector<double>> values(e.props.size());
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          double n = 1;
          if (e.props[k].is_list && !(ss >> n)) throw IoError(path, "missing list count", line);
          for (std::size_t q = 0; q < static_cast<std::size_t>(n); ++q) {
            double v;
            if (!(ss >> v)) throw IoError(path, "missing value for '" + e.props[k].name + "'", line);
            values[k].push_back(v);
          }
        }
        store(e, values, r, line);
      }
    }
  } else {
    ByteReader r(path, std::vector<char>(bytes.begin() + header_end, bytes.end()));
    for (const PlyElement& e : elements) {
      for (std::size_t row = 0; row < e.count; ++row) {
        std::vector<std::vector<double>> values(e.props.size());
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const PlyProperty& p = e.props[k];
          const std::size_t n = p.is_list ? static_cast<std::size_t>(read_binary(r, p.count_type, big)) : 1;
          for (std::size_t q = 0; q < n; ++q) values[k].push_back(read_binary(r, p.type, big));
        }
        store(e, values, row, 0);
      }
    }
  }
  check_mesh(mesh, path);
  return mesh;
}

void write_ply(const TriangleMesh& mesh, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  out << "ply\nformat binary_little_endian 1.0\n"
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.faces.size() << "\n"
      << "property list uchar uint vertex_indices\nend_header\n";
  for (const Vec3& v : mesh.vertices) {
    put(out, v.x());
    put(out, v.y());
    put(out, v.z());
  }
  for (const Face& f : mesh.faces) {
    put<std::uint8_t>(out, 3);
    for (auto i : f) put<std::uint32_t>(out, i);
  }
  if (!out) throw IoError(path, "write failed");
}

TriangleMesh read_mesh(const fs::path& path) {
  const std::string e = lower_ext(path);
  if (e == ".obj") return read_obj(path);
  if (e == ".ply") return read_ply(path);
  throw IoError(path, "unknown mesh extension '" + e + "' (expected .obj or .ply)");
}

void write_mesh(const TriangleMesh& mesh, const fs::path& path) {
  const std::string e = lower_ext(path);
  if (e == ".obj") return write_obj(mesh, path);
  if (e == ".ply") return write_ply(mesh, path);
  throw IoError(path, "unknown mesh extension '" + e + "' (expected .obj or .ply)");
}

// ---------------------------------------------------------------- cameras

namespace {

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_field(const json& j, const char* key) {
  const json& a = j.at(key);
  Eigen::Matrix<double, R, C> m;
  // Accept both nested rows and a flat row-major list.
  if (a.size() == static_cast<std::size_t>(R) && a[0].is_array()) {
    for (int r = 0; r < R; ++r) {
      if (a[r].size() != static_cast<std::size_t>(C)) throw std::invalid_argument(std::string(key) + ": bad row length");
      for (int c = 0; c < C; ++c) m(r, c) = a[r][c].get<double>();
    }
  } else if (a.size() == static_cast<std::size_t>(R * C)) {
    for (int r = 0; r < R; ++r) {
      for (int c = 0; c < C; ++c) m(r, c) = a[r * C + c].get<double>();
    }
  } else {
    throw std::invalid_argument(std::string(key) + ": expected " + std::to_string(R) + "x" + std::to_string(C) +
                                " values");
  }
  return m;
}

template <typename M>
json matrix_json(const M& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.near = j.at("near").get<double>();
  cam.far = j.at("far").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const bool opengl = j.value("convention", std::string("opencv")) == "opengl";
  if (j.contains("convention") && !opengl && j["convention"] != "opencv") {
    throw std::invalid_argument("convention must be 'opencv' or 'opengl'");
  }

  const bool has_view = j.contains("view_matrix");
  if (has_view) {
    cam.view = matrix_field<4, 4>(j, "view_matrix");
    if (opengl) cam.view = Vec4(1.0, -1.0, -1.0, 1.0).asDiagonal() * cam.view;
    cam.rotation = cam.view.topLeftCorner<3, 3>();
    cam.center = -cam.rotation.transpose() * cam.view.topRightCorner<3, 1>();
  }
  if (j.contains("rotation")) {
    cam.rotation = matrix_field<3, 3>(j, "rotation");
    if (opengl) cam.rotation = Vec3(1.0, -1.0, -1.0).asDiagonal() * cam.rotation;
  }
  if (j.contains("center")) {
    const json& c = j.at("center");
    if (c.size() != 3) throw std::invalid_argument("center: expected 3 values");
    cam.center = Vec3(c[0].get<double>(), c[1].get<double>(), c[2].get<double>());
  }
  if (!has_view) {
    if (!j.contains("rotation") || !j.contains("center")) {
      throw std::invalid_argument("camera needs view_matrix or both rotation and center");
    }
    cam.view = Mat4::Identity();
    cam.view.topLeftCorner<3, 3>() = cam.rotation;
    cam.view.topRightCorner<3, 1>() = -(cam.rotation * cam.center);
  }

  if (j.contains("intrinsics")) {
    cam.intrinsics = matrix_field<3, 3>(j, "intrinsics");
  } else if (j.contains("proj_matrix") && !opengl) {
    // Invert projection_from_intrinsics.
    const Mat4 p = matrix_field<4, 4>(j, "proj_matrix");
    cam.intrinsics = Mat3::Identity();
    cam.intrinsics(0, 0) = p(0, 0) * cam.width / 2.0;
    cam.intrinsics(0, 1) = p(0, 1) * cam.width / 2.0;
    cam.intrinsics(0, 2) = (p(0, 2) + 1.0) * cam.width / 2.0 - 0.5;
    cam.intrinsics(1, 1) = p(1, 1) * cam.height / 2.0;
    cam.intrinsics(1, 2) = (p(1, 2) + 1.0) * cam.height / 2.0 - 0.5;
  } else {
    throw std::invalid_argument("camera needs intrinsics (or an opencv-convention proj_matrix)");
  }
  if (j.contains("proj_matrix") && !opengl) {
    cam.proj = matrix_field<4, 4>(j, "proj_matrix");
  } else {
    cam.proj = projection_from_intrinsics(cam.intrinsics, cam.near, cam.far, cam.width, cam.height);
  }
  return cam;
}

json camera_to_json(const Camera& cam) {
  return json{{"view_matrix", matrix_json(cam.view)},
              {"proj_matrix", matrix_json(cam.proj)},
              {"rotation", matrix_json(cam.rotation)},
              {"center", {cam.center.x(), cam.center.y(), cam.center.z()}},
              {"intrinsics", matrix_json(cam.intrinsics)},
              {"near", cam.near},
              {"far", cam.far},
              {"width", cam.width},
              {"height", cam.height}};
}

std::vector<Camera> read_cameras(const fs::path& path) {
  const json j = read_json(path);
  const json* list = &j;
  json single;
  if (j.is_object() && j.contains("cameras")) {
    list = &j["cameras"];
  } else if (j.is_object()) {
    single = json::array({j});
    list = &single;
  }
  if (!list->is_array()) throw IoError(path, "expected a camera object or array");
  std::vector<Camera> cams;
  std::string problems;
  for (std::size_t i = 0; i < list->size(); ++i) {
    try {
      Camera c = camera_from_json((*list)[i]);
      const std::string v = camera_violations(c);
      if (!v.empty()) {
        problems += "cameras[" + std::to_string(i) + "]: " + v + "\n";
        continue;
      }
      cams.push_back(c);
    } catch (const std::exception& e) {
      problems += "cameras[" + std::to_string(i) + "]: " + e.what() + "\n";
    }
  }
  if (!problems.empty()) {
    problems.pop_back();
    throw IoError(path, "invalid camera data:\n" + problems);
  }
  return cams;
}

void write_cameras(const std::vector<Camera>& cameras, const fs::path& path) {
  json list = json::array();
  for (const Camera& c : cameras) list.push_back(camera_to_json(c));
  write_json(json{{"cameras", list}}, path);
}

// ---------------------------------------------------------------- float maps

void write_pfm(const FloatMap& map, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  out << "Pf\n" << map.width << ' ' << map.height << "\n-1.0\n";
  for (int y = map.height - 1; y >= 0; --y) {
    out.write(reinterpret_cast<const char*>(map.values.data() + static_cast<std::size_t>(y) * map.width),
              static_cast<std::streamsize>(sizeof(float)) * map.width);
  }
  if (!out) throw IoError(path, "write failed");
}

FloatMap read_pfm(const fs::path& path) {
  std::vector<char> bytes = read_all(path);
  // Three whitespace-separated header tokens follow the magic; a single
  // whitespace byte separates the scale from the data.
  std::size_t pos = 0;
  auto token = [&](std::size_t line) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw IoError(path, "truncated PFM header", line);
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };
  const std::string magic = token(1);
  if (magic == "PF") throw IoError(path, "colour PFM not supported (expected grayscale 'Pf')", 1);
  if (magic != "Pf") throw IoError(path, "bad PFM magic '" + magic + "'", 1);
  FloatMap map;
  double scale = 0;
  try {
    map.width = std::stoi(token(2));
    map.height = std::stoi(token(2));
    scale = std::stod(token(3));
  } catch (const std::invalid_argument&) {
    throw IoError(path, "bad PFM header");
  }
  ++pos;
  if (map.width < 1 || map.height < 1) throw IoError(path, "PFM dimensions must be positive", 2);
  const bool big = scale > 0;
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  if (bytes.size() - std::min(pos, bytes.size()) < n * sizeof(float)) throw IoError(path, "PFM data truncated");
  map.values.resize(n);
  for (int row = 0; row < map.height; ++row) {
    const int y = map.height - 1 - row;
    for (int x = 0; x < map.width; ++x) {
      float v;
      std::memcpy(&v, bytes.data() + pos, sizeof v);
      pos += sizeof v;
      map.values[static_cast<std::size_t>(y) * map.width + x] = big ? byteswap_value(v) : v;
    }
  }
  return map;
}

void write_depth_pfm(const DepthMap& depth, const fs::path& path) {
  write_pfm(FloatMap{depth.width, depth.height, depth.values}, path);
}

namespace {

DepthMap checked_depth(FloatMap map, const fs::path& path) {
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    const float v = map.values[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw IoError(path, "depth value " + std::to_string(v) + " at pixel (" + std::to_string(i % map.width) + "," +
                              std::to_string(i / map.width) + ") outside [0,1]");
    }
  }
  DepthMap d;
  d.width = map.width;
  d.height = map.height;
  d.values = std::move(map.values);
  return d;
}

fs::path sidecar(const fs::path& path) { return fs::path(path.string() + ".json"); }

}  // namespace

DepthMap read_depth_pfm(const fs::path& path) { return checked_depth(read_pfm(path), path); }

void write_depth_raw(const DepthMap& depth, double near, double far, const fs::path& path) {
  {
    std::ofstream out = open_out(path, true);
    out.write(reinterpret_cast<const char*>(depth.values.data()),
              static_cast<std::streamsize>(depth.values.size() * sizeof(float)));
    if (!out) throw IoError(path, "write failed");
  }
  write_json(json{{"width", depth.width}, {"height", depth.height}, {"near", near}, {"far", far}}, sidecar(path));
}

DepthMap read_depth_raw(const fs::path& path) {
  const json meta = read_json(sidecar(path));
  FloatMap map;
  try {
    map.width = meta.at("width").get<int>();
    map.height = meta.at("height").get<int>();
  } catch (const json::exception& e) {
    throw IoError(sidecar(path), e.what());
  }
  if (map.width < 1 || map.height < 1) throw IoError(sidecar(path), "width and height must be positive");
  std::vector<char> bytes = read_all(path);
  const std::size_t n = static_cast<std::size_t>(map.width) * map.height;
  if (bytes.size() != n * sizeof(float)) {
    throw IoError(path, "expected " + std::to_string(n * sizeof(float)) + " bytes, found " +
                            std::to_string(bytes.size()));
  }
  map.values.resize(n);
  std::memcpy(map.values.data(), bytes.data(), bytes.size());
  return checked_depth(std::move(map), path);
}

DepthMap read_depth(const fs::path& path) {
  return lower_ext(path) == ".pfm" ? read_depth_pfm(path) : read_depth_raw(path);
}

ErrorImage read_error_image(const fs::path& path) {
  FloatMap map = read_pfm(path);
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    if (!(map.values[i] >= 0.0f) || !std::isfinite(map.values[i])) {
      throw IoError(path, "loss at pixel (" + std::to_string(i % map.width) + "," + std::to_string(i / map.width) +
                              ") is negative or not finite");
    }
  }
  ErrorImage e;
  e.width = map.width;
  e.height = map.height;
  e.values = std::move(map.values);
  return e;
}

// ---------------------------------------------------------------- clusters

void write_clusters(const std::vector<Cluster>& clusters, std::size_t face_count, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  out.write("PGCL", 4);
  put<std::uint32_t>(out, kClusterFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clusters.size()));
  put<std::uint64_t>(out, face_count);
  for (const Cluster& c : clusters) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(c.triangle_indices.size()));
    for (int k = 0; k < 3; ++k) put(out, c.aabb_min[k]);
    for (int k = 0; k < 3; ++k) put(out, c.aabb_max[k]);
    for (auto f : c.triangle_indices) put<std::uint32_t>(out, f);
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<Cluster> read_clusters(const fs::path& path, std::size_t face_count) {
  ByteReader r(path, read_all(path));
  if (r.remaining() < 4 || std::memcmp(r.data(), "PGCL", 4) != 0) throw IoError(path, "bad cluster file magic");
  r.skip(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kClusterFormatVersion) {
    throw IoError(path, "unsupported cluster format version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  const auto faces = r.get<std::uint64_t>();
  if (face_count != 0 && faces != face_count) {
    throw IoError(path, "cluster file was built for " + std::to_string(faces) + " faces, mesh has " +
                            std::to_string(face_count));
  }
  std::vector<Cluster> clusters(count);
  std::vector<std::uint8_t> seen(faces, 0);
  for (Cluster& c : clusters) {
    const auto n = r.get<std::uint32_t>();
    for (int k = 0; k < 3; ++k) c.aabb_min[k] = r.get<double>();
    for (int k = 0; k < 3; ++k) c.aabb_max[k] = r.get<double>();
    c.triangle_indices.resize(n);
    for (auto& f : c.triangle_indices) {
      f = r.get<std::uint32_t>();
      if (f >= faces) throw IoError(path, "face index " + std::to_string(f) + " out of range");
      if (seen[f]++) throw IoError(path, "face " + std::to_string(f) + " appears in more than one cluster");
    }
  }
  if (r.remaining() != 0) throw IoError(path, "trailing bytes after cluster records");
  const auto covered = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), 1));
  if (covered != faces) {
    throw IoError(path, "clusters cover " + std::to_string(covered) + " of " + std::to_string(faces) + " faces");
  }
  return clusters;
}

// ---------------------------------------------------------------- points, masks, json

void write_points(const std::vector<std::array<float, 3>>& points, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  out.write(reinterpret_cast<const char*>(points.data()),
            static_cast<std::streamsize>(points.size() * sizeof(std::array<float, 3>)));
  if (!out) throw IoError(path, "write failed");
}

std::vector<std::array<float, 3>> read_points(const fs::path& path) {
  std::vector<char> bytes = read_all(path);
  if (bytes.size() % 12 != 0) throw IoError(path, "size is not a multiple of 12 bytes");
  std::vector<std::array<float, 3>> pts(bytes.size() / 12);
  std::memcpy(pts.data(), bytes.data(), bytes.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (float v : pts[i]) {
      if (!std::isfinite(v)) throw IoError(path, "point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  return pts;
}

void write_cull_mask(const CullMask& mask, const fs::path& path) {
  std::ofstream out = open_out(path, true);
  out.write(reinterpret_cast<const char*>(mask.verdicts.data()), static_cast<std::streamsize>(mask.verdicts.size()));
  if (!out) throw IoError(path, "write failed");
}

CullMask read_cull_mask(const fs::path& path) {
  std::vector<char> bytes = read_all(path);
  CullMask mask;
  mask.verdicts.reserve(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const auto b = static_cast<std::uint8_t>(bytes[i]);
    if (b > 3) throw IoError(path, "verdict byte " + std::to_string(b) + " at index " + std::to_string(i));
    mask.verdicts.push_back(static_cast<Verdict>(b));
    if (b == 0) ++mask.kept_count;
  }
  return mask;
}

json read_json(const fs::path& path) {
  std::ifstream in = open_in(path, false);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // Convert the byte offset into a line number.
    std::ifstream again = open_in(path, false);
    std::size_t line = 1;
    std::size_t offset = 0;
    char ch;
    while (offset + 1 < e.byte && again.get(ch)) {
      if (ch == '\n') ++line;
      ++offset;
    }
    throw IoError(path, e.what(), line);
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out = open_out(path, false);
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path, "write failed");
}

}  // namespace proxygs::io
