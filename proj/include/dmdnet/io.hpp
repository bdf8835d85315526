#pragma once

// OBJ/OFF mesh files, the binary checkpoint format, dataset manifests and the
// key = value config grammar.

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dmdnet/error.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/network.hpp"
#include "dmdnet/tensor.hpp"

namespace dmdnet::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(std::string(what) + ": bad number '" + std::string(tok) + "'", line);
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t line, const char* what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(std::string(what) + ": bad integer '" + std::string(tok) + "'", line);
  return v;
}

// Shortest decimal that reads back to the same double.
inline void append_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

inline Mesh build_mesh(const std::vector<double>& coords, const std::vector<std::int32_t>& tris) {
  Positions p(static_cast<Eigen::Index>(coords.size() / 3), 3);
  std::memcpy(p.data(), coords.data(), coords.size() * sizeof(double));
  Faces f(static_cast<Eigen::Index>(tris.size() / 3), 3);
  if (!tris.empty()) std::memcpy(f.data(), tris.data(), tris.size() * sizeof(std::int32_t));
  return Mesh(std::move(p), std::move(f));
}

inline void fan(const std::vector<std::int32_t>& poly, std::vector<std::int32_t>& tris) {
  for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
    tris.push_back(poly[0]);
    tris.push_back(poly[i]);
    tris.push_back(poly[i + 1]);
  }
}

}  // namespace detail

// Wavefront OBJ subset: `v` and `f` records. Face entries may carry /vt/vn
// suffixes; negative indices count back from the last vertex. Polygons are
// fan-triangulated from their first corner.
inline Mesh parse_obj(std::string_view text) {
  std::vector<double> coords;
  std::vector<std::int32_t> tris;
  std::vector<std::pair<std::size_t, std::vector<long long>>> raw_faces;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    const auto tok = detail::split_ws(hash == std::string_view::npos ? line : line.substr(0, hash));
    if (tok.empty()) continue;
    if (tok[0] == "v") {
      if (tok.size() < 4) throw ParseError("vertex needs 3 coordinates", line_no);
      for (int a = 1; a <= 3; ++a) coords.push_back(detail::parse_double(tok[static_cast<std::size_t>(a)], line_no, "vertex"));
    } else if (tok[0] == "f") {
      if (tok.size() < 4) throw ParseError("face needs at least 3 vertices", line_no);
      std::vector<long long> idx;
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto slash = tok[i].find('/');
        idx.push_back(detail::parse_int(tok[i].substr(0, slash), line_no, "face"));
      }
      raw_faces.emplace_back(line_no, std::move(idx));
    }
  }
  // Indices are resolved after reading so faces may precede their vertices.
  const auto n = static_cast<long long>(coords.size() / 3);
  for (const auto& [line, idx] : raw_faces) {
    std::vector<std::int32_t> poly;
    for (long long i : idx) {
      const long long v = i > 0 ? i - 1 : n + i;
      if (i == 0 || v < 0 || v >= n)
        throw ParseError("face index " + std::to_string(i) + " out of range (" + std::to_string(n) + " vertices)", line);
      poly.push_back(static_cast<std::int32_t>(v));
    }
    detail::fan(poly, tris);
  }
  if (n == 0) throw ParseError("no vertices", line_no);
  if (tris.empty()) throw ParseError("no faces", line_no);
  try {
    return detail::build_mesh(coords, tris);
  } catch (const MeshError& e) {
    throw ParseError(e.what(), line_no);
  }
}

inline std::string write_obj(const Mesh& mesh) {
  std::string out;
  const auto& p = mesh.positions();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    out += "v";
    for (int a = 0; a < 3; ++a) {
      out += ' ';
      detail::append_double(out, p(i, a));
    }
    out += '\n';
  }
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto f = mesh.face(s);
    out += "f " + std::to_string(f[0] + 1) + ' ' + std::to_string(f[1] + 1) + ' ' + std::to_string(f[2] + 1) + '\n';
  }
  return out;
}

inline Mesh parse_off(std::string_view text) {
  // Tokens with their line numbers, comments stripped.
  std::vector<std::pair<std::string_view, std::size_t>> tok;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    for (auto t : detail::split_ws(hash == std::string_view::npos ? line : line.substr(0, hash)))
      tok.emplace_back(t, line_no);
  }
  std::size_t k = 0;
  auto next = [&](const char* section) {
    if (k >= tok.size()) throw ParseError(std::string("truncated file: missing ") + section, line_no);
    return tok[k++];
  };
  if (tok.empty()) throw ParseError("empty file: missing OFF header", 1);
  // The header keyword may be left out; anything else in its place is rejected.
  if (tok[0].first == "OFF") {
    ++k;
  } else if (!std::isdigit(static_cast<unsigned char>(tok[0].first[0]))) {
    throw ParseError("malformed header '" + std::string(tok[0].first) + "'", tok[0].second);
  }
  auto count = [&](const char* section) {
    const auto [t, l] = next(section);
    const long long v = detail::parse_int(t, l, section);
    if (v < 0) throw ParseError(std::string(section) + " is negative", l);
    return static_cast<std::size_t>(v);
  };
  const std::size_t nv = count("vertex count");
  const std::size_t nf = count("face count");
  count("edge count");

  std::vector<double> coords;
  coords.reserve(nv * 3);
  for (std::size_t i = 0; i < nv * 3; ++i) {
    const auto [t, l] = next("vertex coordinates");
    coords.push_back(detail::parse_double(t, l, "vertex"));
  }
  std::vector<std::int32_t> tris;
  for (std::size_t s = 0; s < nf; ++s) {
    const auto [t, l] = next("face records");
    const long long arity = detail::parse_int(t, l, "face arity");
    if (arity < 3) throw ParseError("face arity " + std::to_string(arity) + " < 3", l);
    std::vector<std::int32_t> poly;
    for (long long c = 0; c < arity; ++c) {
      const auto [ti, li] = next("face indices");
      if (li != l) throw ParseError("face record shorter than its arity", l);
      const long long v = detail::parse_int(ti, li, "face");
      if (v < 0 || v >= static_cast<long long>(nv))
        throw ParseError("face index " + std::to_string(v) + " out of range", li);
      poly.push_back(static_cast<std::int32_t>(v));
    }
    // Trailing colour values on the same line are skipped.
    while (k < tok.size() && tok[k].second == l) ++k;
    detail::fan(poly, tris);
  }
  if (k != tok.size()) throw ParseError("count mismatch: unexpected data after last face", tok[k].second);
  if (nv == 0 || tris.empty()) throw ParseError("mesh has no vertices or faces", line_no);
  try {
    return detail::build_mesh(coords, tris);
  } catch (const MeshError& e) {
    throw ParseError(e.what(), line_no);
  }
}

inline std::string write_off(const Mesh& mesh) {
  std::string out = "OFF\n" + std::to_string(mesh.num_vertices()) + ' ' + std::to_string(mesh.num_faces()) + " " +
                    std::to_string(unique_edges(mesh).size()) + '\n';
  const auto& p = mesh.positions();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (a) out += ' ';
      detail::append_double(out, p(i, a));
    }
    out += '\n';
  }
  for (std::size_t s = 0; s < mesh.num_faces(); ++s) {
    const auto f = mesh.face(s);
    out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' + std::to_string(f[2]) + '\n';
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline Mesh load_mesh(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  const std::string text = read_file(path);
  try {
    if (ext == ".obj") return parse_obj(text);
    if (ext == ".off") return parse_off(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  throw Error("unsupported mesh format '" + ext + "' for '" + path.string() + "'");
}

inline void save_mesh(const std::filesystem::path& path, const Mesh& mesh) {
  const std::string ext = lower_extension(path);
  if (ext == ".obj") return write_file(path, write_obj(mesh));
  if (ext == ".off") return write_file(path, write_off(mesh));
  throw Error("unsupported mesh format '" + ext + "' for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Checkpoints: "DMDN", u16 version, u32 tensor count, then per tensor
// u32 name length, name bytes, u8 rank, u32 dims, f32 data. All little-endian.

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'D', 'N'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <typename U>
void put(std::string& out, U v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char b[sizeof(U)];
  std::memcpy(b, &v, sizeof(U));
  out.append(b, sizeof(U));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError("truncated checkpoint reading " + std::string(what) + " at byte " + std::to_string(pos_));
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string save_checkpoint(const net::NetParams<float>& params) {
  std::string out(kCheckpointMagic, 4);
  detail::put<std::uint16_t>(out, kCheckpointVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) detail::put<float>(out, v);
  }
  return out;
}

inline net::NetParams<float> load_checkpoint(std::string_view bytes) {
  detail::Reader r(bytes);
  if (r.take(4, "magic") != std::string_view(kCheckpointMagic, 4)) throw CheckpointError("bad magic: not a checkpoint");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");
  net::NetParams<float> params;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint32_t>("name length");
    std::string name(r.take(len, "name"));
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank < 1 || rank > 3) throw CheckpointError("tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Shape shape;
    for (int d = 0; d < rank; ++d) shape.push_back(r.get<std::uint32_t>("dims"));
    std::vector<float> data(shape_size(shape));
    const auto raw = r.take(data.size() * sizeof(float), "tensor data");
    if (!data.empty()) std::memcpy(data.data(), raw.data(), raw.size());
    if (!params.emplace(name, Tensor<float>(std::move(shape), std::move(data))).second)
      throw CheckpointError("duplicate tensor '" + name + "'");
  }
  if (!r.done()) throw CheckpointError("trailing bytes after last tensor at byte " + std::to_string(r.pos()));
  return params;
}

inline net::NetParams<float> load_checkpoint(std::string_view bytes, const net::NetConfig& cfg) {
  auto params = load_checkpoint(bytes);
  try {
    net::check_params(params, cfg);
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint does not match network config: ") + e.what());
  }
  return params;
}

// ---------------------------------------------------------------------------
// Manifest: one path per line under [train], [test-intra], [test-inter].
// Relative paths resolve against the manifest's directory.

struct Manifest {
  std::vector<std::filesystem::path> train;
  std::vector<std::filesystem::path> test_intra;
  std::vector<std::filesystem::path> test_inter;

  std::vector<std::filesystem::path> test() const {
    auto all = test_intra;
    all.insert(all.end(), test_inter.begin(), test_inter.end());
    return all;
  }
};

inline Manifest parse_manifest(std::string_view text, const std::filesystem::path& base = {}) {
  Manifest m;
  std::vector<std::filesystem::path>* section = nullptr;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    line = detail::trim(hash == std::string_view::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    if (line == "[train]") {
      section = &m.train;
    } else if (line == "[test-intra]") {
      section = &m.test_intra;
    } else if (line == "[test-inter]") {
      section = &m.test_inter;
    } else if (line.front() == '[') {
      throw ParseError("unknown manifest section " + std::string(line), line_no);
    } else {
      if (!section) throw ParseError("path before any section header", line_no);
      std::filesystem::path p(line);
      if (p.is_relative() && !base.empty()) p = base / p;
      const std::string key = p.lexically_normal().string();
      if (auto it = seen.find(key); it != seen.end())
        throw ParseError("'" + std::string(line) + "' already listed on line " + std::to_string(it->second), line_no);
      seen.emplace(key, line_no);
      section->push_back(std::move(p));
    }
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Flat `key = value` files with `#` comments.

inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    line = detail::trim(hash == std::string_view::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!kv.emplace(key, value).second) throw ParseError("duplicate key '" + key + "'", line_no);
  }
  return kv;
}

}  // namespace dmdnet::io
