#pragma once

// File formats. Binary files are little-endian.
//
//   LGC1  corpus: graph id, node count, records of provenance + float32 positions
//   GLM1  model: config JSON followed by named float32 arrays
//   JSONL corpus: one {engine, params, seed, positions} object per line

#include "layoutgen/layout.hpp"
#include "layoutgen/model.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

namespace layoutgen::io {

// ---- primitive binary encoding ---------------------------------------------

class Writer {
 public:
  explicit Writer(std::string& out) : out_(&out) {}
  void bytes(const void* data, std::size_t n);
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void str(std::string_view s);
  void matrix_f32(const Matrix& m);
  void matrix_f64(const Matrix& m);

 private:
  std::string* out_;
};

// Throws FormatError on reads past the end.
class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void bytes(void* data, std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string str();
  Matrix matrix_f32();
  Matrix matrix_f64();
  void expect_magic(std::string_view magic);
  bool done() const noexcept { return pos_ == in_.size(); }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames, so readers never see a
// partial file.
void write_file(const std::filesystem::path& path, std::string_view data);

// ---- corpus ----------------------------------------------------------------

nlohmann::json layout_to_json(const Layout& l);
Layout layout_from_json(const nlohmann::json& j);

void write_corpus_jsonl(std::ostream& out, const TrainingCorpus& c);
TrainingCorpus read_corpus_jsonl(std::istream& in);

// Positions are stored as float32.
std::string encode_corpus(const TrainingCorpus& c);
TrainingCorpus decode_corpus(std::string_view data);

// Picks the format from the extension: ".jsonl" or anything else as LGC1.
void save_corpus(const TrainingCorpus& c, const std::filesystem::path& path);
// Detects the format from the magic bytes.
TrainingCorpus load_corpus(const std::filesystem::path& path);

// ---- model -----------------------------------------------------------------

void write_model(Writer& w, const ModelParams& p);
ModelParams read_model(Reader& r);
std::string encode_model(const ModelParams& p);
ModelParams decode_model(std::string_view data);
void save_model(const ModelParams& p, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace layoutgen::io
