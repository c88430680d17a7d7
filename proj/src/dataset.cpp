#include "afford/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "afford/error.hpp"

namespace afford {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ByteWriter {
 public:
  template <typename U>
  void put(U value) {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &value, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    bytes_.append(reinterpret_cast<const char*>(b), sizeof(U));
  }
  void raw(const void* data, size_t n) { bytes_.append(static_cast<const char*>(data), n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > bytes_.size()) fail(ErrorCode::kSizeMismatch, path_ + " is shorter than expected");
    unsigned char b[sizeof(U)];
    std::memcpy(b, bytes_.data() + pos_, sizeof(U));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(U));
    pos_ += sizeof(U);
    U value;
    std::memcpy(&value, b, sizeof(U));
    return value;
  }
  size_t size() const { return bytes_.size(); }
  const std::string& bytes() const { return bytes_; }
  void expect_end() const {
    if (pos_ != bytes_.size()) fail(ErrorCode::kSizeMismatch, path_ + " is longer than expected");
  }

 private:
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::kIoError, "cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) fail(ErrorCode::kIoError, "write failed for " + path.string());
}

ByteReader read_blob(const fs::path& dir, const std::string& rel) {
  const fs::path path = dir / rel;
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::kMissingBlob, "missing blob " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ByteReader(ss.str(), path.string());
}

json affordance_json(const PoseCenteredAffordance& a) {
  const Quaternion& q = a.orientation;
  return {{"u", a.contact_point.u}, {"v", a.contact_point.v}, {"quaternion", {q.w, q.x, q.y, q.z}}};
}

PoseCenteredAffordance affordance_from(const json& j) {
  PoseCenteredAffordance a;
  a.contact_point = {j.at("u").get<double>(), j.at("v").get<double>()};
  const auto& q = j.at("quaternion");
  if (!q.is_array() || q.size() != 4) throw std::runtime_error("quaternion must have 4 entries");
  a.orientation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
  return a;
}

std::string blob_name(const std::string& id, const char* kind) { return "blobs/" + id + "." + kind; }

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..") {
    fail(ErrorCode::kInvalidArgument, "record id '" + id + "' is not a valid file stem");
  }
}

}  // namespace

void write_dataset(std::span<const SampleRecord> records, const fs::path& dir) {
  for (const auto& r : records) {
    check_id(r.id);
    r.validate();
  }
  std::error_code ec;
  fs::create_directories(dir / "blobs", ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + (dir / "blobs").string() + ": " + ec.message());

  std::string manifest;
  for (const auto& r : records) {
    json j;
    j["id"] = r.id;
    j["width"] = r.width();
    j["height"] = r.height();
    j["instruction_id"] = r.instruction_id;
    j["instruction"] = std::string(instruction_text(r.instruction_id));
    j["intrinsics"] = {{"fx", r.intrinsics.fx}, {"fy", r.intrinsics.fy}, {"cx", r.intrinsics.cx}, {"cy", r.intrinsics.cy}};
    j["gt"] = affordance_json(r.gt);
    j["provenance"] = std::string(provenance_name(r.provenance));
    if (r.curated) j["curated"] = affordance_json(*r.curated);

    json blobs;
    blobs["rgb"] = blob_name(r.id, "rgb");
    write_file(dir / blobs["rgb"].get<std::string>(), std::string(r.frame.rgb.begin(), r.frame.rgb.end()));
    ByteWriter depth;
    for (float d : r.frame.depth.values) depth.put<float>(d);
    blobs["depth"] = blob_name(r.id, "depth");
    write_file(dir / blobs["depth"].get<std::string>(), depth.bytes());
    blobs["mask"] = blob_name(r.id, "mask");
    write_file(dir / blobs["mask"].get<std::string>(), std::string(r.mask.values.begin(), r.mask.values.end()));

    if (r.intermediates) {
      const CurationInputs& in = *r.intermediates;
      ByteWriter hand;
      for (const auto& p : in.hand.joints) {
        for (int k = 0; k < 3; ++k) hand.put<double>(p(k));
      }
      blobs["hand"] = blob_name(r.id, "hand");
      write_file(dir / blobs["hand"].get<std::string>(), hand.bytes());
      ByteWriter tracks;
      for (const auto& t : in.tracks) {
        tracks.put<int32_t>(t.id);
        tracks.put<double>(t.pos_pre.u);
        tracks.put<double>(t.pos_pre.v);
        tracks.put<double>(t.pos_contact.u);
        tracks.put<double>(t.pos_contact.v);
        tracks.put<uint8_t>(t.visible_contact ? 1 : 0);
      }
      blobs["tracks"] = blob_name(r.id, "tracks");
      write_file(dir / blobs["tracks"].get<std::string>(), tracks.bytes());
      ByteWriter region;
      for (const auto& v : in.region.vertices) {
        region.put<double>(v.u);
        region.put<double>(v.v);
      }
      region.put<double>(in.region.dilation);
      blobs["region"] = blob_name(r.id, "region");
      write_file(dir / blobs["region"].get<std::string>(), region.bytes());
    }
    j["blobs"] = blobs;
    manifest += j.dump() + "\n";
  }
  write_file(dir / "manifest.jsonl", manifest);
}

std::vector<SampleRecord> read_dataset(const fs::path& dir) {
  std::ifstream is(dir / "manifest.jsonl");
  if (!is) fail(ErrorCode::kIoError, "cannot open " + (dir / "manifest.jsonl").string());
  std::vector<SampleRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SampleRecord r;
    json blobs;
    try {
      const json j = json::parse(line);
      r.id = j.at("id").get<std::string>();
      check_id(r.id);
      const int w = j.at("width").get<int>();
      const int h = j.at("height").get<int>();
      if (w <= 0 || h <= 0 || w > 8192 || h > 8192) throw std::runtime_error("implausible image size");
      r.frame = RgbdFrame(w, h);
      r.mask = Mask(w, h);
      r.instruction_id = j.at("instruction_id").get<int>();
      const auto& k = j.at("intrinsics");
      r.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                      k.at("cy").get<double>(), w, h};
      r.gt = affordance_from(j.at("gt"));
      r.provenance = provenance_from_name(j.at("provenance").get<std::string>());
      if (j.contains("curated")) r.curated = affordance_from(j.at("curated"));
      blobs = j.at("blobs");
      for (const char* req : {"rgb", "depth", "mask"}) {
        if (!blobs.contains(req)) throw std::runtime_error(std::string("blob '") + req + "' not listed");
      }
      const bool any = blobs.contains("hand") || blobs.contains("tracks") || blobs.contains("region");
      const bool all = blobs.contains("hand") && blobs.contains("tracks") && blobs.contains("region");
      if (any && !all) throw std::runtime_error("curation blobs must be listed together");
    } catch (const Error& e) {
      fail(ErrorCode::kCorruptManifest, "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::exception& e) {
      fail(ErrorCode::kCorruptManifest, "line " + std::to_string(line_no) + ": " + e.what());
    }

    const size_t n = static_cast<size_t>(r.width()) * r.height();
    ByteReader rgb = read_blob(dir, blobs["rgb"].get<std::string>());
    if (rgb.size() != 3 * n) fail(ErrorCode::kSizeMismatch, "rgb blob of " + r.id + " has the wrong size");
    r.frame.rgb.assign(rgb.bytes().begin(), rgb.bytes().end());
    ByteReader depth = read_blob(dir, blobs["depth"].get<std::string>());
    if (depth.size() != 4 * n) fail(ErrorCode::kSizeMismatch, "depth blob of " + r.id + " has the wrong size");
    for (size_t i = 0; i < n; ++i) r.frame.depth.values[i] = depth.get<float>();
    ByteReader mask = read_blob(dir, blobs["mask"].get<std::string>());
    if (mask.size() != n) fail(ErrorCode::kSizeMismatch, "mask blob of " + r.id + " has the wrong size");
    r.mask.values.assign(mask.bytes().begin(), mask.bytes().end());

    if (blobs.contains("hand")) {
      CurationInputs in;
      ByteReader hand = read_blob(dir, blobs["hand"].get<std::string>());
      if (hand.size() != kNumJoints * 3 * 8) fail(ErrorCode::kSizeMismatch, "hand blob of " + r.id + " has the wrong size");
      for (auto& p : in.hand.joints) {
        for (int k = 0; k < 3; ++k) p(k) = hand.get<double>();
      }
      ByteReader tracks = read_blob(dir, blobs["tracks"].get<std::string>());
      constexpr size_t kRow = 4 + 4 * 8 + 1;
      if (tracks.size() % kRow != 0) fail(ErrorCode::kSizeMismatch, "tracks blob of " + r.id + " has a partial row");
      for (size_t i = 0; i < tracks.size() / kRow; ++i) {
        TrackedPoint t;
        t.id = tracks.get<int32_t>();
        t.pos_pre.u = tracks.get<double>();
        t.pos_pre.v = tracks.get<double>();
        t.pos_contact.u = tracks.get<double>();
        t.pos_contact.v = tracks.get<double>();
        t.visible_contact = tracks.get<uint8_t>() != 0;
        in.tracks.push_back(t);
      }
      ByteReader region = read_blob(dir, blobs["region"].get<std::string>());
      if (region.size() != 7 * 8) fail(ErrorCode::kSizeMismatch, "region blob of " + r.id + " has the wrong size");
      for (auto& v : in.region.vertices) {
        v.u = region.get<double>();
        v.v = region.get<double>();
      }
      in.region.dilation = region.get<double>();
      r.intermediates = std::move(in);
    }
    try {
      r.validate();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kSizeMismatch) throw;
      fail(ErrorCode::kCorruptManifest, "line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace afford
