// SPDX-License-Identifier: Apache-2.0
// Binary model container. Layout (all integers little-endian):
//   "ACTSEQM1" | u32 version | u32 variant | u64 input_dim | u64 hidden_dim
//   | u64 embed_dim | u64 token_count | u64 layers | u64 vocab_hash
//   | u64 matrix_count | per matrix: u32 name_len, name, u64 rows, u64 cols,
//     rows*cols IEEE-754 doubles
#include <bit>
#include <cstring>
#include <fstream>

#include "core/translate.hpp"

namespace actseq {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

namespace {

constexpr char kMagic[8] = {'A', 'C', 'T', 'S', 'E', 'Q', 'M', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::kParse, "checkpoint truncated");
  return v;
}

}  // namespace

void save_model(const Seq2SeqModel& model, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.variant));
  put<std::uint64_t>(out, model.dims.input_dim);
  put<std::uint64_t>(out, model.dims.hidden_dim);
  put<std::uint64_t>(out, model.dims.embed_dim);
  put<std::uint64_t>(out, model.dims.token_count);
  put<std::uint64_t>(out, model.dims.layers);
  put<std::uint64_t>(out, model.vocab_hash);
  std::uint64_t count = 0;
  Seq2SeqModel::each(model, [&](const std::string&, const Matrix&) { ++count; });
  put<std::uint64_t>(out, count);
  Seq2SeqModel::each(model, [&](const std::string& name, const Matrix& m) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
    out.write(reinterpret_cast<const char*>(m.values().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (!out) fail(ErrorCode::kIo, "failed writing checkpoint");
}

Seq2SeqModel load_model(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kParse, "not an actseq model checkpoint");
  }
  if (get<std::uint32_t>(in) != kVersion) fail(ErrorCode::kParse, "unsupported checkpoint version");
  const auto variant_raw = get<std::uint32_t>(in);
  if (variant_raw > static_cast<std::uint32_t>(Variant::kGruAa)) {
    fail(ErrorCode::kParse, "checkpoint has unknown variant tag");
  }
  ModelDims dims;
  dims.input_dim = get<std::uint64_t>(in);
  dims.hidden_dim = get<std::uint64_t>(in);
  dims.embed_dim = get<std::uint64_t>(in);
  dims.token_count = get<std::uint64_t>(in);
  dims.layers = get<std::uint64_t>(in);
  const auto vocab_hash = get<std::uint64_t>(in);
  Seq2SeqModel model =
      Seq2SeqModel::create(static_cast<Variant>(variant_raw), dims, 0, vocab_hash).zeros_like();
  const auto count = get<std::uint64_t>(in);
  std::uint64_t seen = 0;
  Seq2SeqModel::each(model, [&](const std::string& name, Matrix& m) {
    ++seen;
    if (seen > count) fail(ErrorCode::kParse, "checkpoint is missing matrix " + name);
    const auto len = get<std::uint32_t>(in);
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    if (!in || stored != name) fail(ErrorCode::kParse, "checkpoint matrix order mismatch at " + name);
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (rows != m.rows() || cols != m.cols()) {
      fail(ErrorCode::kParse, "checkpoint matrix " + name + " has unexpected shape");
    }
    in.read(reinterpret_cast<char*>(m.values().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) fail(ErrorCode::kParse, "checkpoint truncated inside " + name);
  });
  if (seen != count) fail(ErrorCode::kParse, "checkpoint has extra matrices");
  return model;
}

void save_model(const Seq2SeqModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write checkpoint " + path.string());
  save_model(model, out);
}

Seq2SeqModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open checkpoint " + path.string());
  return load_model(in);
}

}  // namespace actseq
