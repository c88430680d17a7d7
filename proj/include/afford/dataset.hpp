#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "afford/record.hpp"

namespace afford {

// Directory layout:
//   manifest.jsonl          one JSON object per record
//   blobs/<id>.rgb          u8 x 3, row-major
//   blobs/<id>.depth        f32 little-endian, row-major
//   blobs/<id>.mask         u8, row-major
//   blobs/<id>.hand         21 x 3 f64 little-endian (optional)
//   blobs/<id>.tracks       rows of {i32 id, f64 u_pre, v_pre, u_contact, v_contact, u8 visible} (optional)
//   blobs/<id>.region       3 x 2 f64 vertices then f64 dilation (optional)

/// Validates every record, then writes blobs and the manifest. Existing files are overwritten.
void write_dataset(std::span<const SampleRecord> records, const std::filesystem::path& dir);

/// Throws CorruptManifest (with the line number), MissingBlob (with the path) or SizeMismatch.
std::vector<SampleRecord> read_dataset(const std::filesystem::path& dir);

}  // namespace afford
