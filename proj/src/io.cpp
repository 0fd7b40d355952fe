#include "mhdshred/io.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>
#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

namespace mhdshred::io {

namespace {

using nlohmann::json;

template <class T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  template <class T>
  void put(T v) {
    const T le = to_little(v);
    buf_.append(reinterpret_cast<const char*>(&le), sizeof(T));
  }
  void bytes(std::string_view s) { buf_.append(s); }
  std::string& str() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string_view data, std::string origin) : data_(data), origin_(std::move(origin)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail(ErrorKind::Integrity, origin_ + ": truncated file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string origin_;
};

std::string describe(const std::string& origin) { return origin.empty() ? "<memory>" : origin; }

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    fail(ErrorKind::Io, "SHA-256 computation failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

std::uint32_t crc32(std::string_view bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in slices.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, reinterpret_cast<const Bytef*>(bytes.data() + off), n);
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    fail(ErrorKind::Io, "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_matrix(const Matrix& m, MatrixHeader header) {
  if (header.label.size() > 16) fail(ErrorKind::InvalidArgument, "matrix label longer than 16 bytes");
  header.rows = static_cast<std::uint64_t>(m.rows());
  header.cols = static_cast<std::uint64_t>(m.cols());
  Writer w;
  w.bytes("SHRD1");
  w.bytes(std::string_view("Ld\0", 3));
  std::string label = header.label;
  label.resize(16, '\0');
  w.bytes(label);
  w.put(header.rows);
  w.put(header.cols);
  w.put(header.param_value);
  w.put(header.save_dt);
  w.put(crc32(w.str()));

  Writer payload;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) payload.put(m(i, j));
  w.put(crc32(payload.str()));
  w.bytes(payload.str());
  return std::move(w.str());
}

std::pair<MatrixHeader, Matrix> decode_matrix(std::string_view bytes, const std::string& origin) {
  const std::string where = describe(origin);
  Reader r(bytes, where);
  if (r.bytes(5) != "SHRD1") fail(ErrorKind::Integrity, where + ": bad magic (not a SHRD1 file)");
  const auto tags = r.bytes(3);
  if (tags[0] != 'L') fail(ErrorKind::Integrity, where + ": unsupported endianness tag");
  if (tags[1] != 'd') fail(ErrorKind::Integrity, where + ": unsupported payload type");
  MatrixHeader h;
  const auto label = r.bytes(16);
  h.label = std::string(label.substr(0, label.find('\0')));
  h.rows = r.get<std::uint64_t>();
  h.cols = r.get<std::uint64_t>();
  h.param_value = r.get<double>();
  h.save_dt = r.get<double>();
  const std::size_t header_end = r.pos();
  if (r.get<std::uint32_t>() != crc32(bytes.substr(0, header_end)))
    fail(ErrorKind::Integrity, where + ": header checksum mismatch");
  const auto payload_crc = r.get<std::uint32_t>();
  if (h.cols != 0 && h.rows > r.remaining() / 8 / h.cols)
    fail(ErrorKind::Integrity, where + ": payload shorter than the declared shape");
  const std::uint64_t count = h.rows * h.cols;
  if (r.remaining() != count * 8) fail(ErrorKind::Integrity, where + ": payload length mismatch");
  const auto payload = bytes.substr(r.pos());
  if (crc32(payload) != payload_crc) fail(ErrorKind::Integrity, where + ": payload checksum mismatch");
  Matrix m(static_cast<Eigen::Index>(h.rows), static_cast<Eigen::Index>(h.cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = r.get<double>();
  return {h, m};
}

std::string write_matrix(const fs::path& path, const Matrix& m, const MatrixHeader& header) {
  const std::string bytes = encode_matrix(m, header);
  atomic_write(path, bytes);
  return sha256_hex(bytes);
}

std::pair<MatrixHeader, Matrix> read_matrix(const fs::path& path) {
  return decode_matrix(read_file(path), path.string());
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

Manifest::Section* Manifest::find(const std::string& name) {
  for (auto& [n, s] : sections_)
    if (n == name) return &s;
  return nullptr;
}

const Manifest::Section* Manifest::find(const std::string& name) const {
  for (const auto& [n, s] : sections_)
    if (n == name) return &s;
  return nullptr;
}

void Manifest::set(const std::string& section, const std::string& key, const std::string& value) {
  if (section.empty() || key.empty() || key.find_first_of("=\n[];") != std::string::npos ||
      value.find('\n') != std::string::npos)
    fail(ErrorKind::InvalidArgument, "manifest entry '" + section + "." + key + "' is not representable");
  Section* s = find(section);
  if (!s) {
    sections_.push_back({section, {}});
    s = &sections_.back().second;
  }
  for (auto& [k, v] : *s)
    if (k == key) {
      v = value;
      return;
    }
  s->push_back({key, value});
}

bool Manifest::has(const std::string& section, const std::string& key) const {
  const Section* s = find(section);
  if (!s) return false;
  for (const auto& kv : *s)
    if (kv.first == key) return true;
  return false;
}

const std::string& Manifest::get(const std::string& section, const std::string& key) const {
  if (const Section* s = find(section))
    for (const auto& [k, v] : *s)
      if (k == key) return v;
  fail(ErrorKind::Integrity, "manifest lacks " + section + "." + key);
}

double Manifest::get_double(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(ErrorKind::Integrity, "manifest value " + section + "." + key + " is not a number: " + v);
  return out;
}

long Manifest::get_int(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    fail(ErrorKind::Integrity, "manifest value " + section + "." + key + " is not an integer: " + v);
  return out;
}

const Manifest::Section& Manifest::section(const std::string& name) const {
  if (const Section* s = find(name)) return *s;
  fail(ErrorKind::Integrity, "manifest lacks section [" + name + "]");
}

bool Manifest::has_section(const std::string& name) const { return find(name) != nullptr; }

std::vector<std::string> Manifest::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, sec] : sections_) out.push_back(name);
  return out;
}

void Manifest::add_file(const fs::path& base, const fs::path& file, const std::string& sha256) {
  set("files", fs::relative(file, base).generic_string(), sha256);
}

void Manifest::verify_files(const fs::path& base) const {
  if (!has_section("files")) return;
  for (const auto& [rel, hash] : section("files")) {
    const fs::path p = base / rel;
    if (!fs::exists(p)) fail(ErrorKind::Integrity, "artifact " + p.string() + " is missing");
    const std::string actual = sha256_file(p);
    if (actual != hash)
      fail(ErrorKind::Integrity, "hash mismatch for " + p.string() + ": manifest " + hash + ", file " + actual);
  }
}

std::string Manifest::serialize() const {
  namespace pt = boost::property_tree;
  pt::ptree root;
  for (const auto& [name, entries] : sections_) {
    pt::ptree sec;
    for (const auto& [k, v] : entries) sec.push_back({k, pt::ptree(v)});
    root.push_back({name, sec});
  }
  std::ostringstream out;
  pt::ini_parser::write_ini(out, root);
  return out.str();
}

Manifest Manifest::parse(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree root;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, root);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Config, describe(origin) + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  Manifest m;
  for (const auto& [name, sec] : root) {
    if (sec.empty()) fail(ErrorKind::Config, describe(origin) + ": key '" + name + "' outside a section");
    for (const auto& [k, v] : sec) m.set(name, k, v.data());
  }
  return m;
}

void Manifest::write(const fs::path& path) const { atomic_write(path, serialize()); }

Manifest Manifest::read(const fs::path& path) { return parse(read_file(path), path.string()); }

// ---------------------------------------------------------------- models

namespace {

json arch_json(const shred::ShredArch& a) {
  return {{"inputs", a.inputs}, {"hidden", a.hidden}, {"layers", a.layers},
          {"decoder", a.decoder}, {"outputs", a.outputs}};
}

json train_json(const shred::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"patience", c.patience},
          {"seed", c.seed},                   {"beta1", c.beta1},
          {"beta2", c.beta2},                 {"epsilon", c.epsilon},
          {"dropout", c.dropout}};
}

}  // namespace

std::string encode_model(const shred::ShredModel& model) {
  json meta;
  meta["format"] = "mhdshred-model";
  meta["arch"] = arch_json(model.net.arch());
  meta["parameter_count"] = model.net.parameter_count();
  meta["lag"] = model.lag;
  meta["sensors"] = {{"cells", model.sensors.cells}, {"seed", model.sensors.seed}};
  meta["ranks"] = model.ranks;
  json scaling = json::array();
  for (FieldKind f : kAllFields) {
    const auto& sp = model.scaling[static_cast<int>(f)];
    scaling.push_back({{"field", std::string(field_label(f))}, {"min", sp.field_min}, {"max", sp.field_max}});
  }
  meta["scaling"] = scaling;
  meta["basis_sha256"] = model.basis_hash;
  meta["train"] = train_json(model.train_config);
  json hist = json::array();
  for (const auto& e : model.history.epochs) hist.push_back({e.epoch, e.train_loss, e.val_loss});
  meta["history"] = {{"best_epoch", model.history.best_epoch},
                     {"best_val_loss", model.history.best_val_loss},
                     {"stopped_early", model.history.stopped_early},
                     {"epochs", hist}};
  const std::string text = meta.dump();

  Writer w;
  w.bytes("SHRDM");
  w.put(kModelVersion);
  w.put(std::uint16_t{0});
  w.put(static_cast<std::uint64_t>(text.size()));
  w.bytes(text);
  const Vector& theta = model.net.params();
  w.put(static_cast<std::uint64_t>(theta.size()));
  for (Eigen::Index k = 0; k < theta.size(); ++k) w.put(theta[k]);
  w.put(crc32(w.str()));
  return std::move(w.str());
}

shred::ShredModel decode_model(std::string_view bytes, const std::string& origin) {
  const std::string where = describe(origin);
  if (bytes.size() < 4) fail(ErrorKind::Integrity, where + ": truncated checkpoint");
  {
    Reader tail(bytes.substr(bytes.size() - 4), where);
    if (tail.get<std::uint32_t>() != crc32(bytes.substr(0, bytes.size() - 4)))
      fail(ErrorKind::Integrity, where + ": checkpoint checksum mismatch");
  }
  Reader r(bytes.substr(0, bytes.size() - 4), where);
  if (r.bytes(5) != "SHRDM") fail(ErrorKind::Integrity, where + ": bad magic (not a model checkpoint)");
  const auto version = r.get<std::uint8_t>();
  if (version != kModelVersion)
    fail(ErrorKind::Integrity, where + ": unsupported checkpoint version " + std::to_string(version));
  r.get<std::uint16_t>();
  const auto meta_len = r.get<std::uint64_t>();
  if (meta_len > r.remaining()) fail(ErrorKind::Integrity, where + ": truncated metadata");
  json meta;
  try {
    meta = json::parse(r.bytes(meta_len));
  } catch (const json::exception& e) {
    fail(ErrorKind::Integrity, where + ": unreadable metadata: " + e.what());
  }

  try {
    shred::ShredArch arch;
    const json& a = meta.at("arch");
    arch.inputs = a.at("inputs");
    arch.hidden = a.at("hidden");
    arch.layers = a.at("layers");
    arch.decoder = a.at("decoder").get<std::vector<int>>();
    arch.outputs = a.at("outputs");
    shred::ShredModel model;
    model.net = shred::ShredNet(arch);
    model.lag = meta.at("lag");
    model.sensors.cells = meta.at("sensors").at("cells").get<std::array<int, 3>>();
    model.sensors.seed = meta.at("sensors").at("seed");
    model.ranks = meta.at("ranks").get<std::array<int, 3>>();
    for (const json& s : meta.at("scaling")) {
      auto& sp = model.scaling[static_cast<int>(field_from_label(s.at("field").get<std::string>()))];
      sp.field_min = s.at("min");
      sp.field_max = s.at("max");
    }
    model.basis_hash = meta.at("basis_sha256").get<std::array<std::string, 3>>();
    const json& t = meta.at("train");
    model.train_config.learning_rate = t.at("learning_rate");
    model.train_config.batch_size = t.at("batch_size");
    model.train_config.max_epochs = t.at("max_epochs");
    model.train_config.patience = t.at("patience");
    model.train_config.seed = t.at("seed");
    model.train_config.beta1 = t.at("beta1");
    model.train_config.beta2 = t.at("beta2");
    model.train_config.epsilon = t.at("epsilon");
    model.train_config.dropout = t.at("dropout");
    const json& h = meta.at("history");
    model.history.best_epoch = h.at("best_epoch");
    model.history.best_val_loss = h.at("best_val_loss");
    model.history.stopped_early = h.at("stopped_early");
    for (const json& e : h.at("epochs")) model.history.epochs.push_back({e.at(0), e.at(1), e.at(2)});

    const auto count = r.get<std::uint64_t>();
    if (count != static_cast<std::uint64_t>(model.net.parameter_count()) || r.remaining() != count * 8)
      fail(ErrorKind::Integrity, where + ": parameter block does not match the architecture");
    for (Eigen::Index k = 0; k < model.net.params().size(); ++k) model.net.params()[k] = r.get<double>();
    return model;
  } catch (const json::exception& e) {
    fail(ErrorKind::Integrity, where + ": malformed metadata: " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Integrity) throw;
    fail(ErrorKind::Integrity, where + ": " + e.what());
  }
}

std::string write_model(const fs::path& path, const shred::ShredModel& model) {
  const std::string bytes = encode_model(model);
  atomic_write(path, bytes);
  return sha256_hex(bytes);
}

shred::ShredModel read_model(const fs::path& path) { return decode_model(read_file(path), path.string()); }

// ---------------------------------------------------------------- CSV

Matrix read_csv_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      std::string cell = line.substr(pos, end - pos);
      const auto a = cell.find_first_not_of(" \t");
      const auto b = cell.find_last_not_of(" \t");
      cell = a == std::string::npos ? "" : cell.substr(a, b - a + 1);
      double v = 0.0;
      auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size() || !std::isfinite(v))
        fail(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + ": invalid number '" + cell + "'");
      row.push_back(v);
      pos = end + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorKind::Io, path.string() + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, found " +
                              std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorKind::Io, path.string() + ": no data rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::string csv_matrix(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

std::string csv_columns(const std::vector<std::string>& names, const std::vector<Vector>& columns) {
  if (names.size() != columns.size()) fail(ErrorKind::InvalidArgument, "csv: header/column count mismatch");
  std::string out;
  for (std::size_t c = 0; c < names.size(); ++c) out += (c ? "," : "") + names[c];
  out += '\n';
  const Eigen::Index n = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns)
    if (c.size() != n) fail(ErrorKind::InvalidArgument, "csv: columns differ in length");
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + format_double(columns[c][i]);
    out += '\n';
  }
  return out;
}

}  // namespace mhdshred::io
