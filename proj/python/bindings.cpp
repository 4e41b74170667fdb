#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "orts/harness.hpp"
#include "orts/mockmodel.hpp"
#include "orts/mutation.hpp"
#include "orts/protocol.hpp"
#include "orts/relevancy.hpp"

namespace py = pybind11;
using namespace orts;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<bool, py::array::c_style | py::array::forcecast>;

RasterImage to_raster(const ImageArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) {
    throw py::value_error("image must have shape (H, W, 3)");
  }
  RasterImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

ImageArray to_array(const RasterImage& img) {
  ImageArray a({img.height(), img.width(), 3});
  std::copy(img.data().begin(), img.data().end(), a.mutable_data());
  return a;
}

RegionMask to_mask(const MaskArray& a) {
  if (a.ndim() != 2) {
    throw py::value_error("mask must have shape (H, W)");
  }
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  RegionMask m(w, h);
  const auto r = a.unchecked<2>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      m.set(x, y, r(y, x));
    }
  }
  return m;
}

MaskArray mask_to_array(const RegionMask& m) {
  MaskArray a({m.height(), m.width()});
  auto w = a.mutable_unchecked<2>();
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      w(y, x) = m.test(x, y);
    }
  }
  return a;
}

MutationTarget make_target(const MaskArray& mask, bool has_mask) {
  MutationTarget t;
  t.region = to_mask(mask);
  const auto b = t.region.tight_bbox();
  if (!b) {
    throw py::value_error("mask is empty");
  }
  t.bbox = *b;
  t.has_mask = has_mask;
  return t;
}

const MutationCatalog& default_catalog() {
  static const MutationCatalog catalog;
  return catalog;
}

py::dict record_to_dict(const DetectionRecord& r) {
  py::dict d;
  d["label"] = r.label;
  d["bbox"] = py::make_tuple(r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h);
  d["confidence"] = r.confidence;
  d["mask"] = r.mask ? py::object(mask_to_array(*r.mask)) : py::none();
  return d;
}

DetectionRecord record_from_dict(const py::dict& d) {
  DetectionRecord r;
  r.label = d["label"].cast<CategoryId>();
  const auto b = d["bbox"].cast<std::array<int, 4>>();
  r.bbox = {b[0], b[1], b[2], b[3]};
  r.confidence = d["confidence"].cast<double>();
  if (d.contains("mask") && !d["mask"].is_none()) {
    r.mask = to_mask(d["mask"].cast<MaskArray>());
  }
  return r;
}

}  // namespace

PYBIND11_MODULE(_orts, m) {
  m.doc() = "Object-relevancy metamorphic testing core";

  static py::exception<Error> base(m, "OrtsError", PyExc_RuntimeError);
  // Translators run newest first, so the subclasses go after the catch-all.
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) {
        std::rethrow_exception(p);
      }
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });
  py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", base.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", base.ptr());

  // relevancy
  m.def("rank_of", [](const std::vector<double>& probs, CategoryId label) {
    const auto r = rank_of(probs, label);
    return py::make_tuple(r.p, r.j);
  }, py::arg("probs"), py::arg("label"), "(p, j) of `label`; ties go to the smaller id.");
  m.def("dist_cls_preserving", [](double p, int j, double p2, int j2) {
    return dist_cls_preserving({0, p, j}, {0, p2, j2});
  }, py::arg("p"), py::arg("j"), py::arg("p_fup"), py::arg("j_fup"));
  m.def("dist_cls_removing", [](double p, int j, double p2, int j2) {
    return dist_cls_removing({0, p, j}, {0, p2, j2});
  }, py::arg("p"), py::arg("j"), py::arg("p_fup"), py::arg("j_fup"));
  m.def("dist_det_preserving", &dist_det_preserving, py::arg("iou_aso"), py::arg("iou_fup"),
        py::arg("label_match"));
  m.def("dist_det_removing", &dist_det_removing, py::arg("iou_aso"), py::arg("iou_fup"));
  m.def("box_iou", [](std::array<int, 4> a, std::array<int, 4> b) {
    return iou(BoundingBox{a[0], a[1], a[2], a[3]}, BoundingBox{b[0], b[1], b[2], b[3]});
  }, py::arg("a"), py::arg("b"), "Boxes as (x, y, w, h).");
  m.def("mask_iou", [](const MaskArray& a, const MaskArray& b) { return iou(to_mask(a), to_mask(b)); });

  // mutation
  m.def("operation_ids", [] {
    std::vector<std::string> ids;
    for (const auto& op : default_catalog().operations()) {
      ids.push_back(op.operation_id);
    }
    return ids;
  });
  m.def("mutate", [](const ImageArray& image, const MaskArray& mask, const std::string& op_id,
                     bool has_mask) -> py::object {
    const auto& catalog = default_catalog();
    const MutationOperation* op = catalog.find(op_id);
    if (!op) {
      throw py::key_error(op_id);
    }
    MutationResult r;
    {
      const RasterImage src = to_raster(image);
      const MutationTarget t = make_target(mask, has_mask);
      py::gil_scoped_release release;
      r = catalog.apply(*op, src, t);
    }
    if (const auto* img = std::get_if<RasterImage>(&r)) {
      return to_array(*img);
    }
    return py::none();
  }, py::arg("image"), py::arg("mask"), py::arg("op_id"), py::arg("has_mask") = true,
     "Follow-up image, or None when the operation does not apply.");
  m.def("operation_weights", [](const std::string& kind, const MaskArray& mask, bool has_mask) {
    const MutationKind k = kind == "preserving" ? MutationKind::preserving
                         : kind == "removing"  ? MutationKind::removing
                                               : throw py::value_error("kind must be preserving or removing");
    std::vector<std::pair<std::string, double>> out;
    for (const auto& w : default_catalog().enumerate(k, make_target(mask, has_mask))) {
      out.emplace_back(w.op->operation_id, w.weight);
    }
    return out;
  }, py::arg("kind"), py::arg("mask"), py::arg("has_mask") = true);

  // imaging
  m.def("median_filter", [](const ImageArray& image, const MaskArray& band, int kernel) {
    return to_array(median_filter(to_raster(image), to_mask(band), kernel));
  }, py::arg("image"), py::arg("band"), py::arg("kernel") = 5);
  m.def("inpaint", [](const ImageArray& image, const MaskArray& mask, const std::string& method) {
    const RasterImage img = to_raster(image);
    const RegionMask region = to_mask(mask);
    if (method == "telea") {
      return to_array(inpaint_fmm(img, region, ImagingParams{}.fmm_radius));
    }
    if (method == "diffusion") {
      return to_array(inpaint_diffusion(img, region, ImagingParams{}.diffusion_iters));
    }
    throw py::value_error("method must be telea or diffusion");
  }, py::arg("image"), py::arg("mask"), py::arg("method") = "telea");

  // wire codec, for adapters written in Python
  m.def("encode_classify_response", [](const std::string& rid, const std::vector<double>& probs) {
    return encode_classify_response(rid, {probs});
  }, py::arg("request_id"), py::arg("probs"));
  m.def("decode_classify_response", [](const std::string& body, const std::string& rid, std::size_t n) {
    return decode_classify_response(body, rid, n).probs;
  }, py::arg("body"), py::arg("request_id"), py::arg("num_classes"));
  m.def("encode_detect_response", [](const std::string& rid, const py::list& records) {
    DetectionOutcome out;
    for (const auto& r : records) {
      out.records.push_back(record_from_dict(r.cast<py::dict>()));
    }
    return encode_detect_response(rid, out);
  }, py::arg("request_id"), py::arg("records"));
  m.def("decode_detect_response", [](const std::string& body, const std::string& rid, std::size_t n,
                                     int width, int height) {
    py::list out;
    for (const auto& r : decode_detect_response(body, rid, n, {width, height}).records) {
      out.append(record_to_dict(r));
    }
    return out;
  }, py::arg("body"), py::arg("request_id"), py::arg("num_classes"), py::arg("width"), py::arg("height"));
  m.def("decode_request", [](const std::string& body) {
    const auto req = decode_request(body);
    return py::make_tuple(std::string(to_string(req.task)),
                          py::bytes(reinterpret_cast<const char*>(req.png.data()), req.png.size()),
                          req.request_id);
  }, py::arg("body"), "(task, png_bytes, request_id)");

  // fixtures and reports
  m.def("make_fixtures", [](const std::string& set, const std::filesystem::path& dir) {
    Dataset ds;
    if (set == "relevancy") {
      ds = make_relevancy_fixtures(dir);
    } else if (set == "detection") {
      ds = make_detection_fixtures(dir);
    } else if (set == "attack") {
      ds = make_attack_fixtures(dir);
    } else {
      throw py::value_error("set must be relevancy, detection or attack");
    }
    return ds.images.size();
  }, py::arg("set"), py::arg("dir"), "Writes a fixture set; returns the image count.");
  m.def("report_to_csv", [](const std::string& report_json) {
    return report_to_csv(report_from_json(report_json));
  }, py::arg("report_json"));
}
