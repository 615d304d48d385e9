#include "oodmine/embedding_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "oodmine/similarity.hpp"

namespace oodmine {
namespace {

constexpr std::array<char, 4> kMagic{'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

std::uint32_t read_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(unsigned char* p, std::uint32_t v) {
  p[0] = static_cast<unsigned char>(v & 0xff);
  p[1] = static_cast<unsigned char>((v >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((v >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((v >> 24) & 0xff);
}

void check_finite(const RowMatrixXf& data) {
  for (Index i = 0; i < data.rows(); ++i)
    if (!data.row(i).allFinite())
      throw Error(Errc::non_finite, "row " + std::to_string(i) + " contains NaN or Inf");
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(RowMatrixXf data) : data_(std::move(data)) {
  if (data_.cols() < 2)
    throw Error(Errc::invalid_argument, "embeddings need at least 2 dims, got " + std::to_string(data_.cols()));
  check_finite(data_);
  renormalized_ = normalize_rows(data_);
}

EmbeddingMatrix EmbeddingMatrix::empty(Index dims) {
  if (dims < 2) throw Error(Errc::invalid_argument, "embeddings need at least 2 dims");
  return EmbeddingMatrix(RowMatrixXf(0, dims), Trusted{});
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  RowMatrixXf out(static_cast<Index>(indices.size()), dims());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= static_cast<std::size_t>(rows()))
      throw Error(Errc::invalid_argument, "row index " + std::to_string(indices[r]) + " out of range");
    out.row(static_cast<Index>(r)) = data_.row(static_cast<Index>(indices[r]));
  }
  return EmbeddingMatrix(std::move(out), Trusted{});
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());

  std::array<unsigned char, kHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() < 4 || std::memcmp(header.data(), kMagic.data(), kMagic.size()) != 0)
    throw Error(Errc::format, path.string() + ": bad magic, expected EMB1");
  if (static_cast<std::size_t>(in.gcount()) < kHeaderBytes)
    throw Error(Errc::truncated, path.string() + ": header shorter than 16 bytes");

  const std::uint32_t version = read_u32_le(header.data() + 4);
  const std::uint32_t rows = read_u32_le(header.data() + 8);
  const std::uint32_t dims = read_u32_le(header.data() + 12);
  if (version != kVersion)
    throw Error(Errc::format, path.string() + ": unsupported version " + std::to_string(version));
  if (rows == 0 || dims < 2)
    throw Error(Errc::format, path.string() + ": invalid shape " + std::to_string(rows) + "x" + std::to_string(dims));

  const std::size_t count = static_cast<std::size_t>(rows) * dims;
  std::vector<unsigned char> payload(count * sizeof(float));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw Error(Errc::truncated, path.string() + ": expected " + std::to_string(payload.size()) +
                                     " payload bytes, got " + std::to_string(in.gcount()));
  if (in.peek() != std::char_traits<char>::eof())
    throw Error(Errc::format, path.string() + ": trailing bytes after payload");

  RowMatrixXf data(rows, dims);
  float* out = data.data();
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::bit_cast<float>(read_u32_le(payload.data() + 4 * i));
  return EmbeddingMatrix(std::move(data));
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.is_empty()) throw Error(Errc::invalid_argument, "refusing to write an EMB1 file with zero rows");
  const auto rows = static_cast<std::uint32_t>(matrix.rows());
  const auto dims = static_cast<std::uint32_t>(matrix.dims());
  const std::size_t count = static_cast<std::size_t>(rows) * dims;

  std::vector<unsigned char> bytes(kHeaderBytes + count * sizeof(float));
  std::memcpy(bytes.data(), kMagic.data(), kMagic.size());
  write_u32_le(bytes.data() + 4, kVersion);
  write_u32_le(bytes.data() + 8, rows);
  write_u32_le(bytes.data() + 12, dims);
  const float* src = matrix.data().data();
  for (std::size_t i = 0; i < count; ++i)
    write_u32_le(bytes.data() + kHeaderBytes + 4 * i, std::bit_cast<std::uint32_t>(src[i]));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

LabelList load_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  LabelList labels;
  std::string line;
  while (std::getline(in, line)) labels.push_back(line);
  if (labels.empty()) throw Error(Errc::empty_input, path.string() + ": no labels");
  return labels;
}

void save_labels(const LabelList& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  for (const auto& label : labels) {
    if (label.find('\n') != std::string::npos)
      throw Error(Errc::invalid_argument, "label contains a newline: " + label);
    out << label << '\n';
  }
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

Eigen::MatrixXd cosine_sim(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  Eigen::MatrixXd out(a.rows(), b.rows());
  for_each_similarity_tile(a, b, [&](Index q0, Index k0, const Eigen::MatrixXd& tile) {
    out.block(q0, k0, tile.rows(), tile.cols()) = tile;
  });
  return out;
}

}  // namespace oodmine
