#include "kdiag/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace kdiag::io {
namespace {

// Blobs are written by memcpy of native float arrays; the format is defined
// as little-endian, which is all this artifact targets.
static_assert(std::endian::native == std::endian::little);

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char buf[8] = {0};
  in.read(reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

constexpr char kMagic[9] = "KDIAGCK1";

}  // namespace

void write_pgm(const std::string& path, const MatD& image) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write image: " + path);
  f << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.cols()));
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      double v = std::clamp(image(r, c), 0.0, 1.0);
      row[static_cast<std::size_t>(c)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

MatD read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read image: " + path);
  auto next_token = [&]() -> std::string {
    std::string tok;
    int ch;
    while ((ch = f.get()) != EOF) {
      if (ch == '#') {  // comment runs to end of line
        while ((ch = f.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(ch));
    }
    return tok;
  };
  if (next_token() != "P5") throw InputError("not a binary PGM: " + path);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw InputError("malformed PGM header: " + path);
  }
  if (w < 1 || h < 1 || maxval != 255) throw InputError("unsupported PGM geometry: " + path);
  std::vector<unsigned char> data(static_cast<std::size_t>(w) * h);
  f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (f.gcount() != static_cast<std::streamsize>(data.size()))
    throw InputError("truncated PGM payload: " + path);
  MatD img(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      img(r, c) = data[static_cast<std::size_t>(r) * w + c] / 255.0;
  return img;
}

void write_matrix_text(const std::string& path, const MatD& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write matrix: " + path);
  f.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) f << ' ';
      f << m(r, c);
    }
    f << '\n';
  }
}

MatD read_matrix_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read matrix: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<double> row;
    double v;
    while (ss >> v) row.push_back(v);
    if (!rows.empty() && row.size() != rows.front().size())
      throw InputError("ragged matrix file: " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError("empty matrix file: " + path);
  MatD m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

std::vector<ordered_json> read_jsonl(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read file: " + path);
  std::vector<ordered_json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(ordered_json::parse(line));
    } catch (const std::exception& e) {
      throw InputError(path + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<ordered_json>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write file: " + path);
  for (const auto& r : records) f << r.dump() << '\n';
}

void append_jsonl(const std::string& path, const ordered_json& record) {
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw InputError("cannot append to file: " + path);
  f << record.dump() << '\n';
}

void save_checkpoint(const std::string& path, ordered_json manifest,
                     const std::vector<std::pair<std::string, const MatF*>>& arrays) {
  ordered_json params = ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, mat] : arrays) {
    params.push_back({{"name", name},
                      {"rows", mat->rows()},
                      {"cols", mat->cols()},
                      {"offset", offset}});
    offset += static_cast<std::uint64_t>(mat->size()) * sizeof(float);
  }
  manifest["params"] = std::move(params);
  const std::string mstr = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  write_u64_le(f, mstr.size());
  f.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, mat] : arrays) {
    (void)name;
    // RowMajor storage writes out row-major directly.
    f.write(reinterpret_cast<const char*>(mat->data()),
            static_cast<std::streamsize>(static_cast<std::size_t>(mat->size()) * sizeof(float)));
  }
  if (!f) throw InputError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (f.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0)
    throw InputError("not a checkpoint file: " + path);
  std::uint64_t mlen = read_u64_le(f);
  if (!f) throw InputError("truncated checkpoint header: " + path);
  std::string mstr(mlen, '\0');
  f.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (f.gcount() != static_cast<std::streamsize>(mlen))
    throw InputError("truncated checkpoint manifest: " + path);
  Checkpoint ck;
  try {
    ck.manifest = ordered_json::parse(mstr);
  } catch (const std::exception& e) {
    throw InputError(std::string("bad checkpoint manifest: ") + e.what());
  }
  if (!ck.manifest.contains("params") || !ck.manifest["params"].is_array())
    throw InputError("checkpoint manifest lacks params: " + path);

  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  for (const auto& p : ck.manifest["params"]) {
    std::string name;
    std::uint64_t rows = 0, cols = 0, offset = 0;
    try {
      name = p.at("name").get<std::string>();
      rows = p.at("rows").get<std::uint64_t>();
      cols = p.at("cols").get<std::uint64_t>();
      offset = p.at("offset").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw InputError(std::string("bad checkpoint param entry: ") + e.what());
    }
    const std::uint64_t bytes = rows * cols * sizeof(float);
    if (offset + bytes > blob.size()) throw InputError("checkpoint blob out of range: " + name);
    MatF m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::memcpy(m.data(), blob.data() + offset, bytes);
    if (!ck.arrays.emplace(name, std::move(m)).second)
      throw InputError("duplicate checkpoint array: " + name);
  }
  return ck;
}

}  // namespace kdiag::io
