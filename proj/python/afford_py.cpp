#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <array>
#include <cstring>

#include "afford/contact_extract.hpp"
#include "afford/dataset.hpp"
#include "afford/diffusion.hpp"
#include "afford/error.hpp"
#include "afford/evalkit.hpp"
#include "afford/geometry.hpp"
#include "afford/grip_mapping.hpp"
#include "afford/synth.hpp"

namespace py = pybind11;
using namespace afford;

namespace {

using Quat4 = std::array<double, 4>;  // (w, x, y, z)

Quaternion to_quat(const Quat4& q) { return {q[0], q[1], q[2], q[3]}; }
Quat4 from_quat(const Quaternion& q) { return {q.w, q.x, q.y, q.z}; }

Mask to_mask(py::array_t<uint8_t, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2) throw py::value_error("mask must be a 2-D array");
  Mask m(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(m.values.data(), a.data(), m.values.size());
  return m;
}

std::vector<PixelPoint> to_points(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw py::value_error("points must have shape (n, 2)");
  std::vector<PixelPoint> out(a.shape(0));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = {r(i, 0), r(i, 1)};
  return out;
}

py::dict affordance_dict(const PoseCenteredAffordance& a) {
  py::dict d;
  d["contact_point"] = py::make_tuple(a.contact_point.u, a.contact_point.v);
  d["orientation"] = from_quat(a.orientation);
  return d;
}

py::dict summary_dict(const EvalSummary& s) {
  py::dict d;
  d["count"] = s.count;
  d["sr"] = s.sr;
  d["nss"] = s.nss;
  d["dtm"] = s.dtm;
  d["rot_err"] = s.rot_err;
  d["rot_err_median"] = s.rot_err_median;
  d["chance"] = s.chance;
  return d;
}

ScheduleKind schedule_kind(const std::string& name) {
  if (name == "scaled_linear") return ScheduleKind::kScaledLinear;
  if (name == "squared_cosine") return ScheduleKind::kSquaredCosine;
  throw py::value_error("unknown schedule kind: " + name);
}

}  // namespace

PYBIND11_MODULE(_afford, m) {
  m.doc() = "Pose-centered affordance toolkit";

  static py::exception<Error> error(m, "AffordError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  py::class_<CameraIntrinsics>(m, "CameraIntrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int width, int height) {
             CameraIntrinsics k{fx, fy, cx, cy, width, height};
             k.validate();
             return k;
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"), py::arg("height"))
      .def_readonly("fx", &CameraIntrinsics::fx)
      .def_readonly("fy", &CameraIntrinsics::fy)
      .def_readonly("cx", &CameraIntrinsics::cx)
      .def_readonly("cy", &CameraIntrinsics::cy)
      .def_readonly("width", &CameraIntrinsics::width)
      .def_readonly("height", &CameraIntrinsics::height);

  m.def("project", [](const CameraIntrinsics& k, const Eigen::Vector3d& p) {
    const PixelPoint c = project(k, p);
    return py::make_tuple(c.u, c.v);
  });
  m.def(
      "unproject",
      [](const CameraIntrinsics& k, double u, double v, py::array_t<float, py::array::c_style | py::array::forcecast> depth) {
        if (depth.ndim() != 2) throw py::value_error("depth must be a 2-D array");
        DepthMap d(static_cast<int>(depth.shape(1)), static_cast<int>(depth.shape(0)));
        std::memcpy(d.values.data(), depth.data(), d.values.size() * sizeof(float));
        return Eigen::Vector3d(unproject(k, {u, v}, d));
      },
      py::arg("intrinsics"), py::arg("u"), py::arg("v"), py::arg("depth"));
  m.def("quat_to_rot6d", [](const Quat4& q) {
    const Rot6D r = quat_to_rot6d(to_quat(q));
    return py::make_tuple(Eigen::Vector3d(r.a1), Eigen::Vector3d(r.a2));
  });
  m.def("rot6d_to_quat", [](const Eigen::Vector3d& a1, const Eigen::Vector3d& a2) {
    return from_quat(rot6d_to_quat({a1, a2}));
  });
  m.def("geodesic_angle", [](const Quat4& a, const Quat4& b) { return geodesic_angle(to_quat(a), to_quat(b)); });

  m.def(
      "recover_contact_pose",
      [](const Eigen::Vector3d& tip_a, const Eigen::Vector3d& tip_b, const Eigen::Vector3d& palm_normal) {
        FingerPair pair;
        pair.tip_a = tip_a;
        pair.tip_b = tip_b;
        PalmFrame palm;
        palm.normal = palm_normal;
        return from_quat(recover_contact_pose(pair, palm));
      },
      py::arg("tip_a"), py::arg("tip_b"), py::arg("palm_normal"));

  m.def(
      "fit_gmm",
      [](py::array_t<double> points, int k, uint64_t seed) {
        const auto pts = to_points(points);
        const GmmParams g = fit_gmm(pts, k, seed);
        py::dict d;
        d["means"] = g.means;
        d["variances"] = g.variances;
        d["weights"] = g.weights;
        const PixelPoint c = contact_point(g);
        d["contact_point"] = py::make_tuple(c.u, c.v);
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "schedule",
      [](const std::string& kind, int n_steps) {
        const DiffusionSchedule s = build_schedule(schedule_kind(kind), n_steps);
        std::vector<double> betas, alpha_bar;
        for (int i = 1; i <= n_steps; ++i) {
          betas.push_back(s.beta(i));
          alpha_bar.push_back(s.alpha_bar(i));
        }
        py::dict d;
        d["betas"] = py::array(py::cast(betas));
        d["alpha_bar"] = py::array(py::cast(alpha_bar));
        return d;
      },
      py::arg("kind"), py::arg("n_steps") = 100);

  m.def(
      "success",
      [](double u, double v, py::array_t<uint8_t> mask) { return success_rate({u, v}, to_mask(mask)); },
      py::arg("u"), py::arg("v"), py::arg("mask"));
  m.def(
      "nss",
      [](py::array_t<double> points, py::array_t<uint8_t> mask, double sigma) {
        return nss(to_points(points), to_mask(mask), sigma);
      },
      py::arg("points"), py::arg("mask"), py::arg("sigma") = 8.0);
  m.def(
      "dtm", [](double u, double v, py::array_t<uint8_t> mask) { return dtm({u, v}, to_mask(mask)); }, py::arg("u"),
      py::arg("v"), py::arg("mask"));
  m.def("rotation_error", [](const Quat4& pred, const Quat4& gt) { return rotation_error(to_quat(pred), to_quat(gt)); });

  m.def(
      "generate_dataset",
      [](const std::filesystem::path& dir, int count, uint64_t seed, int width, int height, double track_noise_px,
         const std::string& id_prefix) {
        GeneratorConfig g;
        g.width = width;
        g.height = height;
        g.track_noise_px = track_noise_px;
        write_dataset(generate_dataset(g, count, seed, id_prefix), dir);
      },
      py::arg("dir"), py::arg("count"), py::arg("seed"), py::arg("width") = 64, py::arg("height") = 64,
      py::arg("track_noise_px") = 0.0, py::arg("id_prefix") = "s_");

  m.def(
      "read_dataset",
      [](const std::filesystem::path& dir) {
        py::list out;
        for (const SampleRecord& r : read_dataset(dir)) {
          py::dict d;
          d["id"] = r.id;
          d["width"] = r.width();
          d["height"] = r.height();
          d["instruction_id"] = r.instruction_id;
          d["instruction"] = std::string(instruction_text(r.instruction_id));
          d["provenance"] = std::string(provenance_name(r.provenance));
          d["gt"] = affordance_dict(r.gt);
          d["has_intermediates"] = r.intermediates.has_value();
          d["curated"] = r.curated ? py::object(affordance_dict(*r.curated)) : py::object(py::none());
          py::array_t<uint8_t> mask({r.mask.height, r.mask.width});
          std::memcpy(mask.mutable_data(), r.mask.values.data(), r.mask.values.size());
          d["mask"] = mask;
          out.append(d);
        }
        return out;
      },
      py::arg("dir"));

  m.def(
      "curate_dataset",
      [](const std::filesystem::path& dir) {
        auto recs = read_dataset(dir);
        int curated = 0;
        for (auto& r : recs) {
          if (!r.intermediates) continue;
          curate(r);
          ++curated;
        }
        write_dataset(recs, dir);
        return curated;
      },
      py::arg("dir"));

  m.def(
      "evaluate_oracle",
      [](const std::filesystem::path& dir, int samples_per_scene, uint64_t seed) {
        EvalConfig cfg;
        cfg.samples_per_scene = samples_per_scene;
        cfg.seed = seed;
        return summary_dict(evaluate_oracle(read_dataset(dir), cfg).summary);
      },
      py::arg("dir"), py::arg("samples_per_scene") = 8, py::arg("seed") = 0);
}
