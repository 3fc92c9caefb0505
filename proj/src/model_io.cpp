#include "bitgear/model_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace bitgear {

namespace {

// Explicit little-endian encoding keeps the formats byte-identical across
// hosts.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 8;
    return v;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string magic() {
    need(4);
    std::string m = bytes_.substr(pos_, 4);
    pos_ += 4;
    return m;
  }
  void expect_end() const {
    if (pos_ != bytes_.size()) throw FormatError("trailing bytes in file");
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated file");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_binary(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

void save_teacher_checkpoint(const std::string& path,
                             const DenseEmbeddingTable& base) {
  std::string out;
  out.reserve(16 + base.values.size() * 4);
  out += "BGT1";
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(base.rows));
  put_u32(out, static_cast<std::uint32_t>(base.dim));
  for (double v : base.values) put_f32(out, static_cast<float>(v));
  write_binary(path, out);
}

DenseEmbeddingTable load_teacher_checkpoint(const std::string& path) {
  Reader r(read_binary(path));
  if (r.magic() != "BGT1") throw FormatError("unknown magic (expected BGT1)");
  if (r.u32() != 1) throw FormatError("unsupported BGT1 version");
  const std::uint32_t rows = r.u32();
  const std::uint32_t d = r.u32();
  DenseEmbeddingTable t(rows, d);
  for (double& v : t.values) v = static_cast<double>(r.f32());
  r.expect_end();
  return t;
}

void save_binarized_table(const std::string& path, const BinarizedTable& t) {
  std::string out;
  const std::size_t nodes = t.num_nodes();
  out.reserve(28 + nodes * t.num_layers * (4 + t.words_per_code * 8) +
              t.num_layers * 4);
  out += "BGR1";
  put_u32(out, 1);
  put_u32(out, t.num_users);
  put_u32(out, t.num_items);
  put_u32(out, t.dim);
  put_u32(out, t.num_layers - 1);  // L
  put_u32(out, 64);                // word width
  for (std::size_t node = 0; node < nodes; ++node) {
    for (std::size_t l = 0; l < t.num_layers; ++l)
      put_f32(out, static_cast<float>(t.scaler(node, l)));
    for (std::size_t l = 0; l < t.num_layers; ++l)
      for (std::uint64_t w : t.code(node, l)) put_u64(out, w);
  }
  for (double w : t.layer_weights) put_f32(out, static_cast<float>(w));
  write_binary(path, out);
}

BinarizedTable load_binarized_table(const std::string& path) {
  Reader r(read_binary(path));
  if (r.magic() != "BGR1") throw FormatError("unknown magic (expected BGR1)");
  if (r.u32() != 1) throw FormatError("unsupported BGR1 version");
  BinarizedTable t;
  t.num_users = r.u32();
  t.num_items = r.u32();
  t.dim = r.u32();
  const std::uint32_t depth = r.u32();
  t.num_layers = depth + 1;
  if (r.u32() != 64) throw FormatError("unsupported word width");
  t.words_per_code = words_for_bits(t.dim);
  const std::size_t nodes = t.num_nodes();
  t.scalers.resize(nodes * t.num_layers);
  t.codes.resize(nodes * t.num_layers * t.words_per_code);
  for (std::size_t node = 0; node < nodes; ++node) {
    for (std::size_t l = 0; l < t.num_layers; ++l)
      t.scalers[node * t.num_layers + l] = static_cast<double>(r.f32());
    for (std::size_t l = 0; l < t.num_layers; ++l) {
      auto code = t.code(node, l);
      for (std::size_t w = 0; w < t.words_per_code; ++w) code[w] = r.u64();
    }
  }
  t.layer_weights.resize(t.num_layers);
  for (double& w : t.layer_weights) w = static_cast<double>(r.f32());
  r.expect_end();
  const std::uint64_t mask = t.valid_mask();
  for (std::size_t node = 0; node < nodes; ++node)
    for (std::size_t l = 0; l < t.num_layers; ++l) {
      const auto code = t.code(node, l);
      if ((code[t.words_per_code - 1] & ~mask) != 0)
        throw FormatError("nonzero padding bits");
    }
  return t;
}

void save_teacher_cache(const std::string& path, const TeacherCache& c) {
  std::string out;
  out.reserve(20 + c.items.size() * 4);
  out += "BGC1";
  put_u32(out, 1);
  put_u32(out, c.num_users);
  put_u32(out, c.num_layers);
  put_u32(out, c.top_r);
  for (std::uint32_t it : c.items) put_u32(out, it);
  write_binary(path, out);
}

TeacherCache load_teacher_cache(const std::string& path) {
  Reader r(read_binary(path));
  if (r.magic() != "BGC1") throw FormatError("unknown magic (expected BGC1)");
  if (r.u32() != 1) throw FormatError("unsupported BGC1 version");
  TeacherCache c;
  c.num_users = r.u32();
  c.num_layers = r.u32();
  c.top_r = r.u32();
  c.items.resize(static_cast<std::size_t>(c.num_users) * c.num_layers *
                 c.top_r);
  for (std::uint32_t& it : c.items) it = r.u32();
  r.expect_end();
  return c;
}

void save_id_index(const std::string& path, const IdIndex& users,
                   const IdIndex& items) {
  std::ostringstream os;
  for (std::uint32_t u = 0; u < users.size(); ++u)
    os << "u\t" << u << '\t' << users.token(u) << '\n';
  for (std::uint32_t i = 0; i < items.size(); ++i)
    os << "i\t" << i << '\t' << items.token(i) << '\n';
  write_binary(path, os.str());
}

std::pair<IdIndex, IdIndex> load_id_index(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  IdIndex users, items;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind, idx, token;
    if (!std::getline(ls, kind, '\t') || !std::getline(ls, idx, '\t') ||
        !std::getline(ls, token))
      throw FormatError("bad idmap line " + std::to_string(line_no));
    IdIndex& target = kind == "u" ? users : items;
    if (kind != "u" && kind != "i")
      throw FormatError("bad idmap kind at line " + std::to_string(line_no));
    const std::uint32_t assigned = target.get_or_add(token);
    if (assigned != static_cast<std::uint32_t>(std::stoul(idx)))
      throw FormatError("idmap indices out of order at line " +
                        std::to_string(line_no));
  }
  return {std::move(users), std::move(items)};
}

std::uint64_t file_digest(const std::string& path) {
  const std::string bytes = read_binary(path);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  write_binary(tmp, contents);
  std::filesystem::rename(tmp, path);
}

}  // namespace bitgear
