#include "layoutgen/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace layoutgen::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

constexpr std::string_view kCorpusMagic = "LGC1";
constexpr std::string_view kModelMagic = "GLM1";

}  // namespace

void Writer::bytes(const void* data, std::size_t n) { out_->append(static_cast<const char*>(data), n); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void Writer::matrix_f32(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.cast<float>();
  bytes(f.data(), static_cast<std::size_t>(f.size()) * sizeof(float));
}

void Writer::matrix_f64(const Matrix& m) {
  u32(static_cast<std::uint32_t>(m.rows()));
  u32(static_cast<std::uint32_t>(m.cols()));
  bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

void Reader::bytes(void* data, std::size_t n) {
  if (n > remaining()) {
    throw FormatError("unexpected end of data at byte " + std::to_string(pos_) + " (wanted " + std::to_string(n) +
                      " more)");
  }
  std::memcpy(data, in_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t Reader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}

std::uint64_t Reader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}

double Reader::f64() {
  double v;
  bytes(&v, sizeof v);
  return v;
}

std::string Reader::str() {
  const std::uint32_t n = u32();
  if (n > remaining()) throw FormatError("string length " + std::to_string(n) + " exceeds remaining data");
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

Matrix Reader::matrix_f32() {
  const std::uint32_t r = u32(), c = u32();
  if (static_cast<std::uint64_t>(r) * c * sizeof(float) > remaining()) throw FormatError("matrix exceeds data");
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(r, c);
  bytes(f.data(), static_cast<std::size_t>(f.size()) * sizeof(float));
  return f.cast<double>();
}

Matrix Reader::matrix_f64() {
  const std::uint32_t r = u32(), c = u32();
  if (static_cast<std::uint64_t>(r) * c * sizeof(double) > remaining()) throw FormatError("matrix exceeds data");
  Matrix m(r, c);
  bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return m;
}

void Reader::expect_magic(std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (remaining() < magic.size()) throw FormatError("file too short for magic '" + std::string(magic) + "'");
  bytes(got.data(), got.size());
  if (got != magic) throw FormatError("bad magic: expected '" + std::string(magic) + "', found '" + got + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json layout_to_json(const Layout& l) {
  nlohmann::json pos = nlohmann::json::array();
  for (Eigen::Index i = 0; i < l.positions.rows(); ++i) pos.push_back({l.positions(i, 0), l.positions(i, 1)});
  return {{"engine", engine_name(l.provenance.engine)},
          {"params", params_to_json(l.provenance.params)},
          {"seed", l.provenance.seed},
          {"positions", std::move(pos)}};
}

Layout layout_from_json(const nlohmann::json& j) {
  Layout l;
  l.provenance.engine = engine_from_name(j.at("engine").get<std::string>());
  l.provenance.params = params_from_json(l.provenance.engine, j.at("params"));
  l.provenance.seed = j.at("seed").get<std::uint64_t>();
  const auto& pos = j.at("positions");
  l.positions.resize(static_cast<Eigen::Index>(pos.size()), 2);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    l.positions(static_cast<Eigen::Index>(i), 0) = pos[i].at(0).get<double>();
    l.positions(static_cast<Eigen::Index>(i), 1) = pos[i].at(1).get<double>();
  }
  return l;
}

void write_corpus_jsonl(std::ostream& out, const TrainingCorpus& c) {
  for (const Layout& l : c.records) out << layout_to_json(l).dump() << '\n';
}

TrainingCorpus read_corpus_jsonl(std::istream& in) {
  TrainingCorpus c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      c.records.push_back(layout_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto n = static_cast<std::size_t>(c.records.back().positions.rows());
    if (c.records.size() == 1) c.node_count = n;
    if (n != c.node_count) {
      throw FormatError("corpus line " + std::to_string(line_no) + ": " + std::to_string(n) + " positions, expected " +
                        std::to_string(c.node_count));
    }
  }
  return c;
}

std::string encode_corpus(const TrainingCorpus& c) {
  std::string out;
  Writer w(out);
  w.bytes(kCorpusMagic.data(), kCorpusMagic.size());
  w.str(c.graph_id);
  w.u64(c.node_count);
  w.u64(c.records.size());
  for (const Layout& l : c.records) {
    w.str(engine_name(l.provenance.engine));
    w.str(params_to_json(l.provenance.params).dump());
    w.u64(l.provenance.seed);
    w.matrix_f32(l.positions);
  }
  return out;
}

TrainingCorpus decode_corpus(std::string_view data) {
  Reader r(data);
  r.expect_magic(kCorpusMagic);
  TrainingCorpus c;
  c.graph_id = r.str();
  c.node_count = r.u64();
  const std::uint64_t count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    Layout l;
    l.provenance.engine = engine_from_name(r.str());
    l.provenance.params = params_from_json(l.provenance.engine, nlohmann::json::parse(r.str()));
    l.provenance.seed = r.u64();
    l.positions = r.matrix_f32();
    if (static_cast<std::size_t>(l.positions.rows()) != c.node_count || l.positions.cols() != 2) {
      throw FormatError("corpus record " + std::to_string(i) + " has the wrong shape");
    }
    c.records.push_back(std::move(l));
  }
  if (!r.done()) throw FormatError("trailing bytes after corpus");
  return c;
}

void save_corpus(const TrainingCorpus& c, const std::filesystem::path& path) {
  if (path.extension() == ".jsonl") {
    std::ostringstream ss;
    write_corpus_jsonl(ss, c);
    write_file(path, ss.str());
  } else {
    write_file(path, encode_corpus(c));
  }
}

TrainingCorpus load_corpus(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  if (data.compare(0, kCorpusMagic.size(), kCorpusMagic) == 0) return decode_corpus(data);
  std::istringstream in(data);
  TrainingCorpus c = read_corpus_jsonl(in);
  c.graph_id = path.stem().string();
  return c;
}

void write_model(Writer& w, const ModelParams& p) {
  w.bytes(kModelMagic.data(), kModelMagic.size());
  w.str(config_to_json(p.config).dump());
  const auto arrays = p.arrays();
  w.u32(static_cast<std::uint32_t>(arrays.size()));
  for (const nn::Parameter* a : arrays) {
    w.str(a->name);
    w.matrix_f32(a->value);
  }
}

ModelParams read_model(Reader& r) {
  r.expect_magic(kModelMagic);
  ModelConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(r.str()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  ModelParams p = ModelParams::initialize(config);
  const auto arrays = p.arrays();
  const std::uint32_t count = r.u32();
  if (count != arrays.size()) {
    throw FormatError("model has " + std::to_string(count) + " arrays, config implies " +
                      std::to_string(arrays.size()));
  }
  for (nn::Parameter* a : arrays) {
    const std::string name = r.str();
    if (name != a->name) throw FormatError("model array '" + name + "' where '" + a->name + "' was expected");
    Matrix m = r.matrix_f32();
    if (m.rows() != a->value.rows() || m.cols() != a->value.cols()) {
      throw FormatError("model array '" + name + "' has the wrong shape");
    }
    a->value = std::move(m);
  }
  return p;
}

std::string encode_model(const ModelParams& p) {
  std::string out;
  Writer w(out);
  write_model(w, p);
  return out;
}

ModelParams decode_model(std::string_view data) {
  Reader r(data);
  ModelParams p = read_model(r);
  if (!r.done()) throw FormatError("trailing bytes after model");
  return p;
}

void save_model(const ModelParams& p, const std::filesystem::path& path) { write_file(path, encode_model(p)); }

ModelParams load_model(const std::filesystem::path& path) { return decode_model(read_file(path)); }

}  // namespace layoutgen::io
