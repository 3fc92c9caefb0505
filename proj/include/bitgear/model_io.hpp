#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "bitgear/binarize.hpp"
#include "bitgear/embedding.hpp"
#include "bitgear/graph.hpp"
#include "bitgear/training.hpp"

namespace bitgear {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// "BGT1": teacher base checkpoint. u32 version, u32 rows, u32 d, then
// float32 row-major values. All formats little-endian; readers reject
// unknown magic or version.
void save_teacher_checkpoint(const std::string& path,
                             const DenseEmbeddingTable& base);
DenseEmbeddingTable load_teacher_checkpoint(const std::string& path);

// "BGR1": the binarized model. u32 version=1, M, N, d, L, word-width(64);
// per node: (L+1) float32 scalers then (L+1)*ceil(d/64) u64 code words;
// then (L+1) float32 layer weights.
void save_binarized_table(const std::string& path, const BinarizedTable& t);
BinarizedTable load_binarized_table(const std::string& path);

// "BGC1": teacher cache. u32 version, M, L+1, R, then per user per layer R
// u32 item ids.
void save_teacher_cache(const std::string& path, const TeacherCache& c);
TeacherCache load_teacher_cache(const std::string& path);

// Sidecar mapping of internal indices back to original id tokens.
void save_id_index(const std::string& path, const IdIndex& users,
                   const IdIndex& items);
std::pair<IdIndex, IdIndex> load_id_index(const std::string& path);

std::uint64_t file_digest(const std::string& path);  // FNV-1a over bytes

// Writes to <path>.tmp then renames.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace bitgear
