#include "afford/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

#include "afford/synth.hpp"
#include "helpers.hpp"

using namespace afford;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("afford_ds_" + name)) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void check_affordance(const PoseCenteredAffordance& a, const PoseCenteredAffordance& b) {
  CHECK(a.contact_point.u == b.contact_point.u);
  CHECK(a.contact_point.v == b.contact_point.v);
  CHECK(a.orientation.w == b.orientation.w);
  CHECK(a.orientation.x == b.orientation.x);
  CHECK(a.orientation.y == b.orientation.y);
  CHECK(a.orientation.z == b.orientation.z);
}

void check_equal(const SampleRecord& a, const SampleRecord& b) {
  CHECK(a.id == b.id);
  CHECK(a.instruction_id == b.instruction_id);
  CHECK(a.provenance == b.provenance);
  CHECK(a.intrinsics.fx == b.intrinsics.fx);
  CHECK(a.intrinsics.fy == b.intrinsics.fy);
  CHECK(a.intrinsics.cx == b.intrinsics.cx);
  CHECK(a.intrinsics.cy == b.intrinsics.cy);
  CHECK(a.frame.rgb == b.frame.rgb);
  CHECK(std::memcmp(a.frame.depth.values.data(), b.frame.depth.values.data(), a.frame.depth.values.size() * 4) == 0);
  CHECK(a.mask.values == b.mask.values);
  check_affordance(a.gt, b.gt);
  REQUIRE(a.curated.has_value() == b.curated.has_value());
  if (a.curated) check_affordance(*a.curated, *b.curated);
  REQUIRE(a.intermediates.has_value() == b.intermediates.has_value());
  if (!a.intermediates) return;
  const auto& x = *a.intermediates;
  const auto& y = *b.intermediates;
  for (size_t j = 0; j < x.hand.joints.size(); ++j) CHECK(x.hand.joints[j] == y.hand.joints[j]);
  REQUIRE(x.tracks.size() == y.tracks.size());
  for (size_t i = 0; i < x.tracks.size(); ++i) {
    CHECK(x.tracks[i].id == y.tracks[i].id);
    CHECK(x.tracks[i].pos_pre.u == y.tracks[i].pos_pre.u);
    CHECK(x.tracks[i].pos_pre.v == y.tracks[i].pos_pre.v);
    CHECK(x.tracks[i].pos_contact.u == y.tracks[i].pos_contact.u);
    CHECK(x.tracks[i].pos_contact.v == y.tracks[i].pos_contact.v);
    CHECK(x.tracks[i].visible_contact == y.tracks[i].visible_contact);
  }
  for (int k = 0; k < 3; ++k) {
    CHECK(x.region.vertices[k].u == y.region.vertices[k].u);
    CHECK(x.region.vertices[k].v == y.region.vertices[k].v);
  }
  CHECK(x.region.dilation == y.region.dilation);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_CASE("100 records round trip field for field") {
  GeneratorConfig g;
  g.track_noise_px = 1.5;
  auto recs = generate_dataset(g, 90, 21, "a_");
  GeneratorConfig robot;
  robot.provenance = Provenance::kRobot;
  auto more = generate_dataset(robot, 10, 22, "b_");
  recs.insert(recs.end(), more.begin(), more.end());
  for (int i = 0; i < 30; ++i) curate(recs[i]);

  TempDir dir("roundtrip");
  write_dataset(recs, dir.path);
  const auto back = read_dataset(dir.path);
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) check_equal(recs[i], back[i]);

  // the manifest is one line per record
  const std::string manifest = slurp(dir.path / "manifest.jsonl");
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 100);

  // rewriting what was read is byte-identical
  TempDir again("roundtrip2");
  write_dataset(back, again.path);
  CHECK(slurp(again.path / "manifest.jsonl") == manifest);
  CHECK(slurp(again.path / "blobs/a_000004.depth") == slurp(dir.path / "blobs/a_000004.depth"));
  CHECK(slurp(again.path / "blobs/a_000004.tracks") == slurp(dir.path / "blobs/a_000004.tracks"));
}

TEST_CASE("blob encodings are little-endian and row-major") {
  auto recs = generate_dataset(GeneratorConfig{}, 1, 23, "e_");
  TempDir dir("encoding");
  write_dataset(recs, dir.path);
  const SampleRecord& r = recs[0];
  const std::string depth = slurp(dir.path / "blobs/e_000000.depth");
  REQUIRE(depth.size() == 4u * r.width() * r.height());
  const size_t idx = static_cast<size_t>(20) * r.width() + 30;
  uint32_t bits = 0;
  for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(depth[4 * idx + b]);
  float value;
  std::memcpy(&value, &bits, 4);
  CHECK(value == r.frame.depth.at(30, 20));
  const std::string rgb = slurp(dir.path / "blobs/e_000000.rgb");
  CHECK(static_cast<unsigned char>(rgb[3 * idx + 1]) == r.frame.rgb[3 * idx + 1]);
  CHECK(slurp(dir.path / "blobs/e_000000.tracks").size() == r.intermediates->tracks.size() * 37);
}

TEST_CASE("robot records without intermediates are accepted") {
  GeneratorConfig robot;
  robot.provenance = Provenance::kRobot;
  const auto recs = generate_dataset(robot, 3, 24, "r_");
  TempDir dir("robot");
  write_dataset(recs, dir.path);
  CHECK(!fs::exists(dir.path / "blobs/r_000000.hand"));
  const auto back = read_dataset(dir.path);
  REQUIRE(back.size() == 3);
  CHECK(back[1].provenance == Provenance::kRobot);
  CHECK(!back[1].intermediates.has_value());
  CHECK(slurp(dir.path / "manifest.jsonl").find("\"provenance\":\"robot\"") != std::string::npos);
}

TEST_CASE("missing blob names the path") {
  const auto recs = generate_dataset(GeneratorConfig{}, 3, 25, "m_");
  TempDir dir("missing");
  write_dataset(recs, dir.path);
  fs::remove(dir.path / "blobs/m_000001.mask");
  try {
    read_dataset(dir.path);
    FAIL("expected MissingBlob");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingBlob);
    CHECK(std::string_view(e.what()).find("m_000001.mask") != std::string_view::npos);
  }
}

TEST_CASE("corrupt manifest reports the line") {
  const auto recs = generate_dataset(GeneratorConfig{}, 3, 26, "c_");
  TempDir dir("corrupt");
  write_dataset(recs, dir.path);
  const std::string good = slurp(dir.path / "manifest.jsonl");
  auto expect_line = [&](const std::string& manifest, const std::string& line) {
    spit(dir.path / "manifest.jsonl", manifest);
    try {
      read_dataset(dir.path);
      FAIL("expected CorruptManifest");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kCorruptManifest);
      CHECK_MESSAGE(std::string_view(e.what()).find("line " + line) != std::string_view::npos, e.what());
    }
  };
  const size_t second = good.find('\n') + 1;
  const size_t third = good.find('\n', second) + 1;

  expect_line(good.substr(0, second) + "{not json\n" + good.substr(third), "2");
  std::string no_gt = good;
  const size_t gt = no_gt.find("\"gt\"", third);
  no_gt.replace(gt, 4, "\"xx\"");
  expect_line(no_gt, "3");
  std::string bad_q = good;
  const size_t q = bad_q.find("\"quaternion\":[");
  bad_q.insert(q + 14, "0.5,");
  expect_line(bad_q, "1");
  std::string bad_prov = good;
  const size_t p = bad_prov.find("\"synthetic\"", second);
  bad_prov.replace(p, 11, "\"alien\"");
  expect_line(bad_prov, "2");
  // gt moved off the mask fails record validation
  std::string off = good;
  const size_t u = off.find("\"u\":");
  off.replace(u + 4, off.find(',', u) - (u + 4), "-5000.0");
  expect_line(off, "1");
}

TEST_CASE("blob size mismatches") {
  const auto recs = generate_dataset(GeneratorConfig{}, 2, 27, "s_");
  TempDir dir("size");
  write_dataset(recs, dir.path);
  const fs::path depth = dir.path / "blobs/s_000001.depth";
  spit(depth, slurp(depth).substr(4));
  CHECK_ERROR_CODE(read_dataset(dir.path), ErrorCode::kSizeMismatch);
  write_dataset(recs, dir.path);
  const fs::path tracks = dir.path / "blobs/s_000000.tracks";
  spit(tracks, slurp(tracks) + "x");
  CHECK_ERROR_CODE(read_dataset(dir.path), ErrorCode::kSizeMismatch);
}

TEST_CASE("write validates records first") {
  auto recs = generate_dataset(GeneratorConfig{}, 2, 28, "v_");
  recs[1].gt.orientation = {2.0, 0.0, 0.0, 0.0};
  TempDir dir("validate");
  CHECK_THROWS_AS(write_dataset(recs, dir.path), Error);
  CHECK(!fs::exists(dir.path / "manifest.jsonl"));
  recs[1] = recs[0];
  recs[1].id = "../escape";
  CHECK_ERROR_CODE(write_dataset(recs, dir.path), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(read_dataset(dir.path / "nope"), ErrorCode::kIoError);
}
