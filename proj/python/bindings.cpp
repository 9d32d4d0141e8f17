// Thin pybind11 layer. Structured values cross as JSON text; rtqc/__init__.py decodes them.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rtqc/controllers.hpp"
#include "rtqc/dataset_builder.hpp"
#include "rtqc/encoder_driver.hpp"
#include "rtqc/error.hpp"
#include "rtqc/eval_harness.hpp"
#include "rtqc/metrics.hpp"
#include "rtqc/predictor_bridge.hpp"
#include "rtqc/synthetic.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace rtqc;

namespace {

nlohmann::json request_json(const PredictRequest& r) { return nlohmann::json::parse(serialize_request(r)); }

std::span<const std::uint8_t> as_bytes(const py::bytes& b, std::string& hold) {
  hold = b;
  return {reinterpret_cast<const std::uint8_t*>(hold.data()), hold.size()};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rtqc native core";
  m.attr("PSNR_CAP_DB") = kPsnrCapDb;
  m.attr("PROTOCOL_VERSION") = kPredictorProtocolVersion;

  py::register_exception<Error>(m, "RtqcError");
  py::register_exception<MissingTableError>(m, "MissingTableError", m.attr("RtqcError"));
  py::register_exception<ProtocolError>(m, "ProtocolError", m.attr("RtqcError"));
  py::register_exception<PredictorReportedError>(m, "PredictorReportedError", m.attr("RtqcError"));
  py::register_exception<InvalidArgumentError>(m, "InvalidArgumentError", m.attr("RtqcError"));

  m.def("psnr_plane", [](const py::bytes& ref, const py::bytes& dist) {
    std::string a;
    std::string b;
    const auto ra = as_bytes(ref, a);
    const auto rb = as_bytes(dist, b);
    return psnr_plane(ra, rb);
  });
  m.def("bandwidth_efficiency", &bandwidth_efficiency, py::arg("b_actual"), py::arg("b_opt"));
  m.def("coefficient_of_variation", [](const std::vector<double>& v) { return coefficient_of_variation(v); });

  m.def("oracle_select", [](const std::string& table_json, double lambda_db) {
    const auto d = oracle_select(RdTable::from_json(nlohmann::json::parse(table_json)), lambda_db);
    return py::make_tuple(d.qp_final, d.nonconformable);
  });
  m.def("load_rd_tables", [](const std::string& dir) {
    std::vector<std::string> out;
    for (const auto& t : load_rd_tables(dir)) {
      out.push_back(t.to_json().dump());
    }
    return out;
  });

  m.def("write_synthetic_corpus",
        [](const std::string& dir, std::size_t clips, std::size_t chunks, int width, int height, double fps,
           std::size_t frames_per_chunk, std::uint64_t seed) {
          const auto list = default_synthetic_corpus(clips, chunks, width, height, fps, frames_per_chunk, seed);
          return write_synthetic_corpus(list, dir).size();
        },
        py::arg("dir"), py::arg("clips") = 2, py::arg("chunks") = 3, py::arg("width") = 96, py::arg("height") = 64,
        py::arg("fps") = 25.0, py::arg("frames_per_chunk") = 8, py::arg("seed") = 7);

  m.def("build_rd_tables",
        [](const std::string& corpus_dir, const std::string& tables_dir, std::size_t frames_per_chunk,
           const std::string& encoder_json, std::size_t parallelism) {
          BuildOptions o;
          o.out_dir = tables_dir;
          o.frames_per_chunk = frames_per_chunk;
          o.parallelism = parallelism;
          o.encoder = encoder_json.empty() ? EncoderConfig::reference(find_ffmpeg())
                                           : EncoderConfig::from_json(nlohmann::json::parse(encoder_json));
          const auto corpus = scan_corpus(corpus_dir);
          BuildSummary s;
          {
            py::gil_scoped_release release;
            s = build_rd_tables(corpus, o);
          }
          return py::make_tuple(s.tables.size(), s.encodes_performed, s.failures.size());
        },
        py::arg("corpus_dir"), py::arg("tables_dir"), py::arg("frames_per_chunk") = 8, py::arg("encoder_json") = "",
        py::arg("parallelism") = 1);

  m.def("emit_training_manifest",
        [](const std::string& tables_dir, const std::string& out_dir, double train_fraction, std::uint64_t seed) {
          const auto tables = load_rd_tables(tables_dir);
          const auto split = emit_training_manifest(tables, train_fraction, seed);
          fs::create_directories(out_dir);
          write_training_manifest_csv(fs::path(out_dir) / "train.csv", split.train);
          write_training_manifest_csv(fs::path(out_dir) / "test.csv", split.test);
          return py::make_tuple(split.train.size(), split.test.size());
        },
        py::arg("tables_dir"), py::arg("out_dir"), py::arg("train_fraction") = 0.8, py::arg("seed") = 0);
  m.def("read_training_manifest", [](const std::string& path) {
    py::list rows;
    for (const auto& s : read_training_manifest_csv(path)) {
      py::dict d;
      d["chunk_path"] = s.chunk_path;
      d["width"] = s.width;
      d["height"] = s.height;
      d["fps"] = s.fps;
      d["T"] = s.frames;
      d["qp_target"] = s.qp_target;
      d["lambda_target_db"] = s.lambda_target_db;
      rows.append(d);
    }
    return rows;
  });

  m.def("parse_request", [](const std::string& line) { return request_json(parse_request(line)).dump(); });
  m.def("serialize_response", [](std::uint64_t id, int qp, const std::string& model) {
    return serialize_response({id, qp, model});
  });
  m.def("serialize_error", &serialize_error, py::arg("id"), py::arg("message"));
  // handler(request_json) -> (qp, model_id)
  m.def("handle_request_line", [](const std::string& line, const std::function<py::tuple(std::string)>& handler) {
    return handle_request_line(line, [&](const PredictRequest& r) {
      const auto res = handler(request_json(r).dump());
      return PredictResponse{r.id, res[0].cast<int>(), res[1].cast<std::string>()};
    });
  });

  m.def("run_experiment",
        [](const std::string& corpus_dir, const std::string& tables_dir, const std::string& controller, double lambda_db,
           const std::string& out_dir, int decrement, const std::string& predictor, std::size_t frames_per_chunk,
           const std::string& encoder_json) {
          auto spec = ControllerSpec::parse(controller);
          spec.decrement = spec.kind == ControllerSpec::Kind::kFeedback || spec.kind == ControllerSpec::Kind::kLearned
                               ? decrement
                               : 0;
          spec.predictor_endpoint = predictor;
          ExperimentOptions o;
          o.tables_dir = tables_dir;
          o.build.frames_per_chunk = frames_per_chunk;
          o.build.encoder = encoder_json.empty() ? EncoderConfig::reference(find_ffmpeg())
                                                 : EncoderConfig::from_json(nlohmann::json::parse(encoder_json));
          const auto corpus = scan_corpus(corpus_dir);
          py::gil_scoped_release release;
          const auto report = run_experiment(corpus, spec, TargetSchedule::constant(lambda_db), o);
          if (!out_dir.empty()) {
            emit_report(report, out_dir);
          }
          return report.aggregates.to_json().dump();
        },
        py::arg("corpus_dir"), py::arg("tables_dir"), py::arg("controller"), py::arg("lambda_db"),
        py::arg("out_dir") = "", py::arg("decrement") = 1, py::arg("predictor") = "", py::arg("frames_per_chunk") = 8,
        py::arg("encoder_json") = "");
}
