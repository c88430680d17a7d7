#include "afford/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "afford/contact_extract.hpp"
#include "afford/diffusion.hpp"
#include "afford/error.hpp"

namespace afford {

namespace {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

// Camera looks at a table plane tilted toward it; rows lower in the image are closer.
constexpr double kTableDistance = 1.0;  // m, depth at the principal point
constexpr double kTableTilt = 0.35;     // tan of the tilt
constexpr double kApexLift = 0.035;     // m, idle fingertip lifted toward the camera
constexpr int kMaxPlacementTries = 20;

struct Rgb {
  double r, g, b;
};

enum class Shape { kRect, kDisk };

/// One flat-topped primitive in pixel space.
struct Prim {
  Shape shape = Shape::kRect;
  Vec2 center = Vec2::Zero();  // px
  double yaw = 0.0;
  Vec2 half = Vec2::Zero();  // rect half extents, px
  double radius = 0.0;       // disk outer radius, px
  double inner = 0.0;        // disk inner radius (annulus), px
  double height = 0.0;       // m above the table
  Rgb color{};
  int owner = 0;  // 0 target, 1 twin, 2+ clutter

  bool contains(const Vec2& p) const {
    const Vec2 d = p - center;
    if (shape == Shape::kDisk) {
      const double r = d.norm();
      return r <= radius && r >= inner;
    }
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    const double lx = c * d.x() + s * d.y();
    const double ly = -s * d.x() + c * d.y();
    return std::abs(lx) <= half.x() && std::abs(ly) <= half.y();
  }
};

/// Part of an archetype in object units (multiplied by the scene scale).
struct Part {
  Shape shape;
  Vec2 center;
  Vec2 half;  // rect
  double radius;
  double inner;
  double height;
  int color_slot;  // 0 primary, 1 secondary, 2 primary darkened
};

struct ArchetypeModel {
  std::vector<Part> parts;
  double extent;  // bounding radius in object units
  std::array<Rgb, 2> colors;
};

const ArchetypeModel& archetype_model(Archetype a) {
  static const std::array<ArchetypeModel, kNumArchetypes> models = [] {
    std::array<ArchetypeModel, kNumArchetypes> m;
    m[0] = {{{Shape::kRect, {0.0, 0.15}, {0.5, 0.35}, 0, 0, 0.06, 0},
             {Shape::kRect, {0.0, -0.45}, {0.30, 0.05}, 0, 0, 0.09, 1},
             {Shape::kRect, {-0.26, -0.30}, {0.04, 0.12}, 0, 0, 0.075, 1},
             {Shape::kRect, {0.26, -0.30}, {0.04, 0.12}, 0, 0, 0.075, 1}},
            0.71,
            {Rgb{170, 120, 70}, Rgb{60, 50, 45}}};
    m[1] = {{{Shape::kDisk, {0.0, 0.0}, {0, 0}, 0.42, 0.32, 0.10, 0},
             {Shape::kDisk, {0.0, 0.0}, {0, 0}, 0.32, 0.0, 0.04, 2},
             {Shape::kRect, {0.62, 0.0}, {0.05, 0.30}, 0, 0, 0.08, 0},
             {Shape::kRect, {0.49, -0.26}, {0.09, 0.035}, 0, 0, 0.08, 0},
             {Shape::kRect, {0.49, 0.26}, {0.09, 0.035}, 0, 0, 0.08, 0}},
            0.73,
            {Rgb{200, 60, 60}, Rgb{200, 60, 60}}};
    m[2] = {{{Shape::kRect, {0.0, 0.0}, {0.6, 0.4}, 0, 0, 0.05, 0},
             {Shape::kRect, {0.0, -0.05}, {0.25, 0.045}, 0, 0, 0.08, 1}},
            0.73,
            {Rgb{150, 150, 195}, Rgb{70, 70, 80}}};
    m[3] = {{{Shape::kRect, {0.0, 0.0}, {0.5, 0.3}, 0, 0, 0.07, 0}}, 0.59, {Rgb{70, 170, 80}, Rgb{70, 170, 80}}};
    return m;
  }();
  return models.at(static_cast<int>(a));
}

/// Where and how the gripper meets the object for one (archetype, instruction) template.
struct GraspTemplate {
  Vec2 contact;          // object units
  double closing;        // closing-axis angle in the object frame, rad
  double tilt;           // approach tilt away from the view ray, rad
  double tilt_dir;       // in-plane tilt direction in the object frame, rad (perpendicular to closing)
  FingerPairId pair;     // finger pair that applies the force
};

GraspTemplate grasp_template(Archetype a, int instruction) {
  const auto ti = FingerPairId::kThumbIndex;
  const auto tm = FingerPairId::kThumbMiddle;
  switch (a) {
    case Archetype::kBoxWithHandle:
      if (instruction == static_cast<int>(Instruction::kGraspHandle)) return {{0.0, -0.45}, 90 * kDeg, 0.0, 0.0, ti};
      if (instruction == static_cast<int>(Instruction::kPushBox)) return {{0.2, 0.15}, 90 * kDeg, 40 * kDeg, 0.0, tm};
      break;
    case Archetype::kMug:
      if (instruction == static_cast<int>(Instruction::kGraspHandle)) return {{0.62, 0.0}, 0.0, 0.0, 90 * kDeg, ti};
      if (instruction == static_cast<int>(Instruction::kGraspMugBody)) {
        return {{-0.2, 0.0}, 0.0, 25 * kDeg, 90 * kDeg, tm};
      }
      break;
    case Archetype::kDrawerFront:
      if (instruction == static_cast<int>(Instruction::kPullDrawerOpen)) {
        return {{0.0, -0.05}, 90 * kDeg, 30 * kDeg, 180 * kDeg, ti};
      }
      if (instruction == static_cast<int>(Instruction::kPushDrawerClosed)) {
        return {{0.3, 0.2}, 0.0, 45 * kDeg, 90 * kDeg, tm};
      }
      break;
    case Archetype::kBlock:
      if (instruction == static_cast<int>(Instruction::kPickUpBlock)) return {{0.0, 0.0}, 90 * kDeg, 0.0, 0.0, ti};
      if (instruction == static_cast<int>(Instruction::kPushBlock)) {
        return {{-0.25, 0.0}, 90 * kDeg, 45 * kDeg, 180 * kDeg, tm};
      }
      break;
  }
  fail(ErrorCode::kInvalidArgument, "instruction " + std::to_string(instruction) + " does not apply to " +
                                        std::string(archetype_name(a)));
}

Vec2 rotate(const Vec2& v, double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

double table_depth(const CameraIntrinsics& k, double row) { return kTableDistance / (1.0 + kTableTilt * (row - k.cy) / k.fy); }

std::vector<Prim> object_prims(Archetype a, const Vec2& center, double yaw, double scale,
                               const std::array<Rgb, 2>& colors, int owner) {
  std::vector<Prim> out;
  for (const Part& part : archetype_model(a).parts) {
    Prim p;
    p.shape = part.shape;
    p.center = center + scale * rotate(part.center, yaw);
    p.yaw = yaw;
    p.half = scale * part.half;
    p.radius = scale * part.radius;
    p.inner = scale * part.inner;
    p.height = part.height;
    const Rgb base = colors[part.color_slot == 1 ? 1 : 0];
    p.color = part.color_slot == 2 ? Rgb{base.r * 0.55, base.g * 0.55, base.b * 0.55} : base;
    p.owner = owner;
    out.push_back(p);
  }
  return out;
}

uint8_t to_byte(double x) { return static_cast<uint8_t>(std::clamp(std::lround(x), 0L, 255L)); }

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

void GeneratorConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kBadParams, what);
  };
  need(width >= 16 && height >= 16, "image must be at least 16x16");
  need(!archetypes.empty(), "at least one archetype is required");
  need(scale_min > 0.0 && scale_max >= scale_min && scale_max <= 0.3, "scale range must lie in (0, 0.3]");
  need(yaw_range_deg >= 0.0 && yaw_range_deg <= 90.0, "yaw range must lie in [0, 90] degrees");
  need(max_clutter >= 0 && max_clutter <= 10, "max_clutter must lie in [0, 10]");
  need(track_noise_px >= 0.0 && track_shift_px >= 0.0, "track noise and shift must be non-negative");
  need(track_dropout >= 0.0 && track_dropout < 1.0, "track dropout must lie in [0, 1)");
  need(region_dilation_px >= 0.0, "region dilation must be non-negative");
  need(twin_probability >= 0.0 && twin_probability <= 1.0, "twin probability must lie in [0, 1]");
  need(grip_width_m > 0.0 && grip_width_m < 0.2, "grip width must lie in (0, 0.2) m");
}

void SceneSpec::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::kBadParams, "scene spec: " + what);
  };
  need(width >= 16 && height >= 16, "image too small");
  intrinsics.validate();
  need(intrinsics.width == width && intrinsics.height == height, "intrinsics size differs from the image size");
  need(scale > 0.0, "scale must be positive");
  const double margin = archetype_model(archetype).extent * scale;
  need(center.u - margin >= 8.0 && center.u + margin <= width - 8.0 && center.v - margin >= 8.0 &&
           center.v + margin <= height - 8.0,
       "object must stay 8 px inside the frame");
  const auto allowed = instructions_for(archetype);
  need(std::find(allowed.begin(), allowed.end(), instruction_id) != allowed.end(),
       "instruction does not apply to the archetype");
  need(clutter_count >= 0, "negative clutter count");
  need(track_noise_px >= 0.0 && track_shift_px >= 0.0 && track_dropout >= 0.0 && track_dropout < 1.0,
       "invalid tracking noise");
  need(region_dilation_px >= 0.0 && grip_width_m > 0.0, "invalid hand parameters");
}

std::vector<int> instructions_for(Archetype a) {
  switch (a) {
    case Archetype::kBoxWithHandle:
      return {static_cast<int>(Instruction::kGraspHandle), static_cast<int>(Instruction::kPushBox)};
    case Archetype::kMug:
      return {static_cast<int>(Instruction::kGraspHandle), static_cast<int>(Instruction::kGraspMugBody)};
    case Archetype::kDrawerFront:
      return {static_cast<int>(Instruction::kPullDrawerOpen), static_cast<int>(Instruction::kPushDrawerClosed)};
    case Archetype::kBlock:
      return {static_cast<int>(Instruction::kPickUpBlock), static_cast<int>(Instruction::kPushBlock)};
  }
  return {};
}

CameraIntrinsics default_intrinsics(int width, int height) {
  CameraIntrinsics k;
  k.fx = k.fy = 0.9 * width;
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

SceneSpec random_scene_spec(uint64_t seed, const GeneratorConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SceneSpec s;
  s.seed = seed;
  s.width = cfg.width;
  s.height = cfg.height;
  s.intrinsics = default_intrinsics(cfg.width, cfg.height);
  s.archetype = cfg.archetypes[std::uniform_int_distribution<size_t>(0, cfg.archetypes.size() - 1)(rng)];
  const auto options = instructions_for(s.archetype);
  s.instruction_id = options[std::uniform_int_distribution<size_t>(0, options.size() - 1)(rng)];
  s.twin = unit(rng) < cfg.twin_probability;
  // A twin needs room beside the target, so twin scenes use smaller objects.
  const double lo = s.twin ? std::min(cfg.scale_min, 0.16) : cfg.scale_min;
  const double hi = s.twin ? std::min(cfg.scale_max, 0.20) : cfg.scale_max;
  s.scale = (lo + (hi - lo) * unit(rng)) * cfg.width;
  s.yaw = (2.0 * unit(rng) - 1.0) * cfg.yaw_range_deg * kDeg;
  const double margin = archetype_model(s.archetype).extent * s.scale + 8.0;
  s.center.u = margin + (cfg.width - 2.0 * margin) * unit(rng);
  s.center.v = margin + (cfg.height - 2.0 * margin) * unit(rng);
  s.clutter_count = std::uniform_int_distribution<int>(0, cfg.max_clutter)(rng);
  s.track_noise_px = cfg.track_noise_px;
  s.track_shift_px = cfg.track_shift_px;
  s.track_dropout = cfg.track_dropout;
  s.region_dilation_px = cfg.region_dilation_px * cfg.width / 256.0;
  s.grip_width_m = cfg.grip_width_m;
  s.provenance = cfg.provenance;
  return s;
}

SampleRecord generate_sample(const SceneSpec& spec) {
  spec.validate();
  const CameraIntrinsics& k = spec.intrinsics;
  const ArchetypeModel& model = archetype_model(spec.archetype);
  const Vec2 center(spec.center.u, spec.center.v);
  const double radius = model.extent * spec.scale;

  // Independent streams so that tracking noise never changes the rendered scene.
  std::mt19937_64 color_rng(mix_seed(spec.seed, 1));
  std::mt19937_64 place_rng(mix_seed(spec.seed, 2));
  std::mt19937_64 track_rng(mix_seed(spec.seed, 3));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::array<Rgb, 2> colors = model.colors;
  for (Rgb& c : colors) {
    c.r += 24.0 * unit(color_rng) - 12.0;
    c.g += 24.0 * unit(color_rng) - 12.0;
    c.b += 24.0 * unit(color_rng) - 12.0;
  }
  std::vector<Prim> prims = object_prims(spec.archetype, center, spec.yaw, spec.scale, colors, 0);

  struct Disk {
    Vec2 c;
    double r;
  };
  std::vector<Disk> keep_out = {{center, radius}};
  if (spec.twin) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
      const Vec2 c(radius + 1.0 + (spec.width - 2.0 * radius - 2.0) * unit(place_rng),
                   radius + 1.0 + (spec.height - 2.0 * radius - 2.0) * unit(place_rng));
      const double yaw = spec.yaw + (unit(place_rng) - 0.5) * 20.0 * kDeg;
      if ((c - center).norm() < 2.0 * radius + 2.0) continue;
      const auto twin = object_prims(spec.archetype, c, yaw, spec.scale, colors, 1);
      prims.insert(prims.end(), twin.begin(), twin.end());
      keep_out.push_back({c, radius});
      placed = true;
    }
    if (!placed) fail(ErrorCode::kSpecInfeasible, "no room for the twin object after 20 attempts");
  }
  for (int i = 0; i < spec.clutter_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxPlacementTries && !placed; ++attempt) {
      Prim p;
      p.shape = Shape::kRect;
      p.half = Vec2((0.04 + 0.05 * unit(place_rng)) * spec.width, (0.04 + 0.05 * unit(place_rng)) * spec.width);
      p.center = Vec2(spec.width * unit(place_rng), spec.height * unit(place_rng));
      p.yaw = kPi * unit(place_rng);
      p.height = 0.02 + 0.03 * unit(place_rng);
      p.color = {40.0 + 180.0 * unit(place_rng), 40.0 + 180.0 * unit(place_rng), 40.0 + 180.0 * unit(place_rng)};
      p.owner = 2 + i;
      const double r = p.half.norm();
      const bool clear = std::all_of(keep_out.begin(), keep_out.end(),
                                     [&](const Disk& d) { return (p.center - d.c).norm() >= d.r + r + 1.0; });
      if (!clear) continue;
      prims.push_back(p);
      placed = true;
    }
    if (!placed) fail(ErrorCode::kSpecInfeasible, "clutter item " + std::to_string(i) + " would occlude the target");
  }

  SampleRecord rec;
  rec.intrinsics = k;
  rec.frame = RgbdFrame(spec.width, spec.height);
  rec.mask = Mask(spec.width, spec.height);
  rec.instruction_id = spec.instruction_id;
  rec.provenance = spec.provenance;
  for (int row = 0; row < spec.height; ++row) {
    const double zt = table_depth(k, row);
    for (int col = 0; col < spec.width; ++col) {
      const Vec2 p(col, row);
      const Prim* top = nullptr;
      for (const Prim& prim : prims) {
        if (prim.contains(p) && (!top || prim.height > top->height)) top = &prim;
      }
      Rgb c;
      double z = zt;
      if (top) {
        z -= top->height;
        const double shade = 0.9 + top->height;
        c = {top->color.r * shade, top->color.g * shade, top->color.b * shade};
        if (top->owner == 0) rec.mask.set(col, row, true);
      } else {
        const double shade = 0.92 + 0.08 * row / spec.height;
        c = {205.0 * shade, 195.0 * shade, 175.0 * shade};
      }
      uint8_t* px = &rec.frame.rgb[(static_cast<size_t>(row) * spec.width + col) * 3];
      px[0] = to_byte(c.r);
      px[1] = to_byte(c.g);
      px[2] = to_byte(c.b);
      rec.frame.depth.at(col, row) = static_cast<float>(z);
    }
  }

  // Ground-truth affordance from the archetype template.
  const GraspTemplate tmpl = grasp_template(spec.archetype, spec.instruction_id);
  const Vec2 contact = center + spec.scale * rotate(tmpl.contact, spec.yaw);
  rec.gt.contact_point = {contact.x(), contact.y()};
  if (!rec.gt.contact_point.in_image(spec.width, spec.height) ||
      !rec.mask.at(rec.gt.contact_point.col(), rec.gt.contact_point.row())) {
    fail(ErrorCode::kSpecInfeasible, "contact region is not visible on the target");
  }
  const double closing = spec.yaw + tmpl.closing;
  const double tilt_dir = spec.yaw + tmpl.tilt_dir;
  const Vec3 x_g(std::cos(closing), std::sin(closing), 0.0);
  const Vec3 t(std::cos(tilt_dir), std::sin(tilt_dir), 0.0);
  const Vec3 z_g = (std::cos(tmpl.tilt) * Vec3(0.0, 0.0, -1.0) + std::sin(tmpl.tilt) * t).normalized();
  const Vec3 y_g = z_g.cross(x_g);
  Eigen::Matrix3d rot;
  rot << x_g, y_g, z_g;
  rec.gt.orientation = Quaternion::from_matrix(rot);

  if (spec.provenance == Provenance::kRobot) return rec;

  // Demonstration in the contact frame, which is the pre-contact frame shifted by a small global offset.
  std::uniform_real_distribution<double> shift(-spec.track_shift_px, spec.track_shift_px);
  const Vec2 delta(shift(track_rng), shift(track_rng));
  const double z = rec.frame.depth.at(rec.gt.contact_point.col(), rec.gt.contact_point.row());
  const Vec2 c_contact = contact + delta;
  const Point3 p3 = backproject_at_depth(k, {c_contact.x(), c_contact.y()}, z);

  const Vec2 xh(x_g.x(), x_g.y());
  const Vec2 yh(-xh.y(), xh.x());
  const double w_px = spec.grip_width_m * k.fx / z;
  const double a = w_px / (2.0 * std::sqrt(3.0));
  const Vec2 thumb_px = c_contact - 0.5 * w_px * xh - a * yh;
  const Vec2 partner_px = c_contact + 0.5 * w_px * xh - a * yh;
  const Vec2 apex_px = c_contact + 2.0 * a * yh;
  const Point3 thumb = backproject_at_depth(k, {thumb_px.x(), thumb_px.y()}, z);
  const Point3 partner = backproject_at_depth(k, {partner_px.x(), partner_px.y()}, z);
  const Point3 apex = backproject_at_depth(k, {apex_px.x(), apex_px.y()}, z - kApexLift);
  const bool index_grips = tmpl.pair == FingerPairId::kThumbIndex;
  const Point3 index_tip = index_grips ? partner : apex;
  const Point3 middle_tip = index_grips ? apex : partner;

  // Palm plane normal to the approach axis, far enough back that it faces the object centroid.
  const std::vector<Point3> pts = object_points(rec, 2);
  Point3 centroid = Point3::Zero();
  for (const auto& q : pts) centroid += q;
  centroid /= static_cast<double>(std::max<size_t>(pts.size(), 1));
  const double h = std::max(0.1, z_g.dot(centroid - p3) + 0.05);
  const Point3 palm = p3 + h * z_g;

  HandKeypoints hand;
  const std::array<Joint, 4> mcps = {Joint::kIndexMcp, Joint::kMiddleMcp, Joint::kRingMcp, Joint::kPinkyMcp};
  const std::array<double, 4> spread = {0.03, 0.01, -0.01, -0.03};
  hand[Joint::kWrist] = palm - 0.07 * y_g;
  for (int f = 0; f < 4; ++f) hand[mcps[f]] = palm + 0.02 * y_g + spread[f] * x_g;
  auto finger = [&](Joint mcp, const Point3& tip) {
    const int base = static_cast<int>(mcp);
    const Point3 m = hand.joints[base];
    hand.joints[base + 1] = m + 0.4 * (tip - m);
    hand.joints[base + 2] = m + 0.7 * (tip - m);
    hand.joints[base + 3] = tip;
  };
  finger(Joint::kIndexMcp, index_tip);
  finger(Joint::kMiddleMcp, middle_tip);
  finger(Joint::kRingMcp, hand[Joint::kRingMcp] - 0.03 * z_g - 0.01 * y_g);
  finger(Joint::kPinkyMcp, hand[Joint::kPinkyMcp] - 0.03 * z_g - 0.01 * y_g);
  hand[Joint::kThumbCmc] = hand[Joint::kWrist] + 0.03 * y_g - 0.025 * x_g;
  hand[Joint::kThumbMcp] = hand[Joint::kThumbCmc] + 0.35 * (thumb - hand[Joint::kThumbCmc]);
  hand[Joint::kThumbIp] = hand[Joint::kThumbCmc] + 0.7 * (thumb - hand[Joint::kThumbCmc]);
  hand[Joint::kThumbTip] = thumb;

  CurationInputs inputs;
  inputs.hand = hand;
  inputs.region.vertices = {project(k, thumb), project(k, index_tip), project(k, middle_tip)};
  inputs.region.dilation = spec.region_dilation_px;

  std::normal_distribution<double> gauss(0.0, 1.0);
  int32_t id = 0;
  for (int row = 0; row < spec.height; ++row) {
    for (int col = 0; col < spec.width; ++col) {
      if (!rec.mask.at(col, row)) continue;
      TrackedPoint tp;
      tp.id = id++;
      tp.pos_pre = {static_cast<double>(col), static_cast<double>(row)};
      const double nu = gauss(track_rng);
      const double nv = gauss(track_rng);
      tp.pos_contact = {col + delta.x() + spec.track_noise_px * nu, row + delta.y() + spec.track_noise_px * nv};
      tp.visible_contact = unit(track_rng) >= spec.track_dropout;
      inputs.tracks.push_back(tp);
    }
  }
  rec.intermediates = std::move(inputs);
  return rec;
}

std::vector<SampleRecord> generate_dataset(const GeneratorConfig& cfg, int count, uint64_t seed,
                                           const std::string& id_prefix) {
  cfg.validate();
  if (count < 0) fail(ErrorCode::kInvalidArgument, "negative record count");
  std::vector<SampleRecord> out;
  out.reserve(count);
  const int digits = std::max(6, static_cast<int>(std::to_string(count).size()));
  for (int j = 0; j < count; ++j) {
    for (uint64_t attempt = 0;; ++attempt) {
      if (attempt >= 100) fail(ErrorCode::kSpecInfeasible, "record " + std::to_string(j) + ": no feasible scene");
      const uint64_t s = mix_seed(mix_seed(seed, static_cast<uint64_t>(j)), attempt);
      try {
        SampleRecord r = generate_sample(random_scene_spec(s, cfg));
        std::string idx = std::to_string(j);
        r.id = id_prefix + std::string(digits - std::min<int>(digits, idx.size()), '0') + idx;
        r.validate();
        out.push_back(std::move(r));
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kSpecInfeasible) throw;
      }
    }
  }
  return out;
}

PoseCenteredAffordance curate(SampleRecord& record, const CurationOptions& opts) {
  if (!record.intermediates) fail(ErrorCode::kCurationFailed, "record " + record.id + ": no curation intermediates");
  try {
    const CurationInputs& in = *record.intermediates;
    const std::vector<Point3> pts = object_points(record, opts.object_point_stride);
    if (pts.empty()) fail(ErrorCode::kNoObjectPoints, "mask has no valid depth");
    Point3 centroid = Point3::Zero();
    for (const auto& p : pts) centroid += p;
    centroid /= static_cast<double>(pts.size());

    const PalmFrame palm = fit_palm_plane(in.hand, centroid);
    const FingerPair pair = select_finger_pair(in.hand, pts, opts.grip);
    PoseCenteredAffordance a;
    a.orientation = recover_contact_pose(pair, palm);

    const std::vector<PixelPoint> selected = points_in_finger_region(in.tracks, in.region);
    if (selected.empty()) fail(ErrorCode::kTooFewPoints, "no tracked point inside the fingertip region");
    const int k = std::min<int>(opts.max_components, static_cast<int>(selected.size()));
    const GmmParams gmm = fit_gmm(selected, k, fnv1a(record.id));
    a.contact_point = contact_point(gmm);
    record.curated = a;
    return a;
  } catch (const Error& e) {
    fail(ErrorCode::kCurationFailed, "record " + record.id + ": " + e.what());
  }
}

}  // namespace afford
