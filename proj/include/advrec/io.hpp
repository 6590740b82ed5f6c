#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "advrec/interactions.hpp"

namespace advrec {

/// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

/// Creates `dir` (and parents) if missing.
void ensure_directory(const std::filesystem::path& dir);

/// Index-preserving dataset text: a "# advrec-indexed users=U items=I offset=O"
/// header followed by "user item" lines with users shifted by the offset.
std::string encode_indexed(const InteractionMatrix& m, std::size_t user_offset = 0);
InteractionMatrix decode_indexed(const std::string& text);

using NamedTables = std::vector<std::pair<std::string, Matrix>>;

/// Binary layout: "ADVRECK1", u32 table count, then per table u32 name length,
/// name bytes, u64 rows, u64 cols and rows*cols row-major float64, all
/// little-endian.
std::string encode_checkpoint(const NamedTables& tables);
NamedTables decode_checkpoint(const std::string& bytes);

/// Writes the checkpoint plus a "<path>.json" sidecar listing names and shapes.
void write_checkpoint(const std::filesystem::path& path, const NamedTables& tables,
                      const std::string& model);
NamedTables read_checkpoint(const std::filesystem::path& path);

}  // namespace advrec
