#pragma once

// Versioned JSON problem files. Blocks are stored as row-major arrays of
// doubles; parsing validates ids and dimensions and reports the offending
// vertex or arc. Files ending in .gz are compressed and decompressed
// transparently with a fixed gzip header, so identical problems serialize to
// identical bytes.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "treesaddle/system.hpp"
#include "treesaddle/types.hpp"

namespace treesaddle {

inline constexpr int kProblemFormatVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Mat& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index r = 0; r < M.rows(); ++r)
    for (Index c = 0; c < M.cols(); ++c) rows.push_back(M(r, c));
  return rows;
}

inline Mat matrix_from_json(const nlohmann::json& j, Index rows, Index cols,
                            const std::string& label) {
  if (!j.is_array() || static_cast<Index>(j.size()) != rows * cols)
    throw InvalidInputError(label + ": expected " + std::to_string(rows * cols) +
                            " row-major entries, got " + std::to_string(j.size()));
  Mat M(rows, cols);
  Index idx = 0;
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) M(r, c) = j[static_cast<size_t>(idx++)].get<double>();
  return M;
}

inline nlohmann::json vector_to_json(const Vec& v) {
  nlohmann::json out = nlohmann::json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Vec vector_from_json(const nlohmann::json& j, Index n, const std::string& label) {
  if (!j.is_array() || static_cast<Index>(j.size()) != n)
    throw InvalidInputError(label + ": expected " + std::to_string(n) + " entries, got " +
                            std::to_string(j.size()));
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
  return v;
}

inline bool has_gz_suffix(const std::string& path) {
  return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

inline std::string gzip_compress(const std::string& data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("gzip: deflateInit2 failed");
  gz_header header{};  // zeroed mtime/os for reproducible bytes
  header.os = 255;
  deflateSetHeader(&zs, &header);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::vector<char> buffer(1 << 16);
  int ret = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buffer.data());
    zs.avail_out = static_cast<uInt>(buffer.size());
    ret = deflate(&zs, Z_FINISH);
    out.append(buffer.data(), buffer.size() - zs.avail_out);
  } while (ret == Z_OK);
  deflateEnd(&zs);
  if (ret != Z_STREAM_END) throw Error("gzip: compression failed");
  return out;
}

inline std::string gzip_decompress(const std::string& data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw Error("gzip: inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  std::vector<char> buffer(1 << 16);
  int ret = Z_OK;
  do {
    zs.next_out = reinterpret_cast<Bytef*>(buffer.data());
    zs.avail_out = static_cast<uInt>(buffer.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw Error("gzip: corrupt compressed problem file");
    }
    out.append(buffer.data(), buffer.size() - zs.avail_out);
  } while (ret != Z_STREAM_END);
  inflateEnd(&zs);
  return out;
}

}  // namespace detail

inline std::string to_json_string(const TreeCoupledSystem& sys) {
  nlohmann::json doc;
  doc["version"] = kProblemFormatVersion;
  nlohmann::json vertices = nlohmann::json::array();
  for (int i = 1; i <= sys.vertex_count(); ++i) {
    nlohmann::json v;
    v["id"] = i;
    v["n"] = sys.block_size(i);
    v["B"] = detail::matrix_to_json(sys.B(i));
    v["h"] = detail::vector_to_json(sys.h(i));
    vertices.push_back(std::move(v));
  }
  doc["vertices"] = std::move(vertices);
  nlohmann::json arcs = nlohmann::json::array();
  for (int k = 1; k <= sys.arc_count(); ++k) {
    const Arc& a = sys.tree().arc(k);
    nlohmann::json e;
    e["id"] = k;
    e["tail"] = a.tail;
    e["head"] = a.head;
    e["l"] = sys.coupling_size(k);
    e["E_out"] = detail::matrix_to_json(sys.E_out(k));
    e["E_in"] = detail::matrix_to_json(sys.E_in(k));
    e["D"] = detail::matrix_to_json(sys.D(k));
    e["f"] = detail::vector_to_json(sys.f(k));
    arcs.push_back(std::move(e));
  }
  doc["arcs"] = std::move(arcs);
  return doc.dump(1);
}

inline TreeCoupledSystem from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("problem file: ") + e.what());
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer())
    throw InvalidInputError("problem file: missing integer 'version'");
  if (doc["version"].get<int>() != kProblemFormatVersion)
    throw InvalidInputError("problem file: unsupported version " + doc["version"].dump() +
                            ", expected " + std::to_string(kProblemFormatVersion));
  if (!doc.contains("vertices") || !doc["vertices"].is_array() || doc["vertices"].empty())
    throw InvalidInputError("problem file: missing nonempty 'vertices' array");
  if (!doc.contains("arcs") || !doc["arcs"].is_array())
    throw InvalidInputError("problem file: missing 'arcs' array");

  const auto& jv = doc["vertices"];
  const auto& ja = doc["arcs"];
  const int n = static_cast<int>(jv.size());
  const int m = static_cast<int>(ja.size());

  std::vector<VertexBlocks> vertices(static_cast<size_t>(n) + 1);
  std::vector<char> seen_vertex(static_cast<size_t>(n) + 1, 0);
  for (const auto& v : jv) {
    if (!v.contains("id") || !v["id"].is_number_integer())
      throw InvalidInputError("problem file: vertex without integer id");
    const int id = v["id"].get<int>();
    if (id < 1 || id > n)
      throw InvalidInputError("problem file: vertex id " + std::to_string(id) +
                              " out of 1.." + std::to_string(n) + " (ids must be dense)");
    if (seen_vertex[static_cast<size_t>(id)])
      throw InvalidInputError("problem file: duplicate vertex id " + std::to_string(id));
    seen_vertex[static_cast<size_t>(id)] = 1;
    const std::string label = "vertex " + std::to_string(id);
    if (!v.contains("n") || !v["n"].is_number_integer())
      throw InvalidInputError("problem file: " + label + " lacks block size 'n'");
    const Index ni = v["n"].get<Index>();
    if (ni < 1) throw InvalidInputError("problem file: " + label + " has nonpositive size");
    vertices[static_cast<size_t>(id)].B = detail::matrix_from_json(v.at("B"), ni, ni, label + " B");
    vertices[static_cast<size_t>(id)].h = detail::vector_from_json(v.at("h"), ni, label + " h");
  }

  std::vector<ArcBlocks> arcs(static_cast<size_t>(m) + 1);
  std::vector<std::pair<int, int>> arc_list(static_cast<size_t>(m));
  std::vector<char> seen_arc(static_cast<size_t>(m) + 1, 0);
  for (const auto& e : ja) {
    if (!e.contains("id") || !e["id"].is_number_integer())
      throw InvalidInputError("problem file: arc without integer id");
    const int id = e["id"].get<int>();
    if (id < 1 || id > m)
      throw InvalidInputError("problem file: arc id " + std::to_string(id) + " out of 1.." +
                              std::to_string(m) + " (ids must be dense)");
    if (seen_arc[static_cast<size_t>(id)])
      throw InvalidInputError("problem file: duplicate arc id " + std::to_string(id));
    seen_arc[static_cast<size_t>(id)] = 1;
    const std::string label = "arc " + std::to_string(id);
    const int tail = e.at("tail").get<int>();
    const int head = e.at("head").get<int>();
    if (tail < 1 || tail > n || head < 1 || head > n)
      throw InvalidInputError("problem file: " + label + " references unknown vertex");
    const Index l = e.at("l").get<Index>();
    if (l < 1) throw InvalidInputError("problem file: " + label + " has nonpositive width");
    arc_list[static_cast<size_t>(id - 1)] = {tail, head};
    auto& blocks = arcs[static_cast<size_t>(id)];
    blocks.E_out = detail::matrix_from_json(e.at("E_out"), l,
                                            vertices[static_cast<size_t>(tail)].B.rows(),
                                            label + " E_out");
    blocks.E_in = detail::matrix_from_json(e.at("E_in"), l,
                                           vertices[static_cast<size_t>(head)].B.rows(),
                                           label + " E_in");
    blocks.D = detail::matrix_from_json(e.at("D"), l, l, label + " D");
    blocks.f = detail::vector_from_json(e.at("f"), l, label + " f");
  }

  DirectedTree tree = build_tree(arc_list, n);
  return TreeCoupledSystem(std::move(tree), std::move(vertices), std::move(arcs));
}

inline void save_problem(const TreeCoupledSystem& sys, const std::string& path) {
  std::string text = to_json_string(sys);
  if (detail::has_gz_suffix(path)) text = detail::gzip_compress(text);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

inline TreeCoupledSystem load_problem(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  std::string text = buffer.str();
  if (detail::has_gz_suffix(path)) text = detail::gzip_decompress(text);
  return from_json_string(text);
}

}  // namespace treesaddle
