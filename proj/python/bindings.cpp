// Thin python surface over the core: data loading, splitting, the prior,
// and the subcommand entry points. Heavy lifting stays in C++; this is for
// notebooks and smoke tests.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <sstream>

#include "poicast/commands.hpp"
#include "poicast/common.hpp"
#include "poicast/encoder.hpp"
#include "poicast/geo_prior.hpp"
#include "poicast/ingest.hpp"
#include "poicast/run_config.hpp"

namespace py = pybind11;
using namespace poicast;

namespace {

RunConfig config_from_text(const std::string& json_text) {
  RunConfig config = run_config_from_json(json_text);
  config.validate();
  return config;
}

void run_command(const std::string& command, const std::string& config_json, bool resume) {
  RunConfig config = config_from_text(config_json);
  CommandIO io{nullptr, nullptr};
  if (command == "ingest")
    cmd_ingest(config, io);
  else if (command == "train")
    cmd_train(config, resume, io);
  else if (command == "eval")
    cmd_eval(config, io);
  else if (command == "sweep")
    cmd_sweep(config, io);
  else if (command == "plot")
    cmd_plot(config, io);
  else
    throw ConfigError("unknown command: " + command);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "next-POI forecasting core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<TrainError>(m, "TrainError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("user_count",
                             [](const Dataset& d) { return d.histories.size(); })
      .def_property_readonly("poi_count", [](const Dataset& d) { return d.pois.poi_count(); })
      .def_property_readonly("category_count",
                             [](const Dataset& d) { return d.pois.category_count(); })
      .def_property_readonly("total_visits", [](const Dataset& d) { return d.total_visits(); })
      .def_readonly("skipped_lines", &Dataset::skipped_lines)
      .def("__repr__", [](const Dataset& d) {
        std::ostringstream s;
        s << "<Dataset users=" << d.histories.size() << " pois=" << d.pois.poi_count()
          << " visits=" << d.total_visits() << ">";
        return s.str();
      });

  py::class_<DatasetSplit>(m, "DatasetSplit")
      .def_readonly("threshold", &DatasetSplit::threshold)
      .def_readonly("realized_unseen_ratio", &DatasetSplit::realized_unseen_ratio)
      .def_property_readonly("unseen_poi_ids",
                             [](const DatasetSplit& s) {
                               return std::vector<std::string>(s.unseen_poi_ids.begin(),
                                                               s.unseen_poi_ids.end());
                             })
      .def_property_readonly("validation_count",
                             [](const DatasetSplit& s) { return s.validation.size(); })
      .def_property_readonly("test_count", [](const DatasetSplit& s) { return s.test.size(); });

  py::class_<ProximityPrior>(m, "ProximityPrior")
      .def_readonly("counts", &ProximityPrior::counts)
      .def_readonly("probabilities", &ProximityPrior::probabilities)
      .def("probability",
           [](const ProximityPrior& p, double distance_km) {
             return p.probabilities[p.bucketing.bucket_of(distance_km)];
           },
           py::arg("distance_km"));

  m.def("parse_checkins",
        [](const std::string& text) {
          std::istringstream raw(text);
          return parse_checkins(raw);
        },
        py::arg("text"), "Parse check-ins from a TSV string.");
  m.def("parse_checkins_file", &parse_checkins_file, py::arg("path"));
  m.def("project",
        [](Dataset& dataset) {
          ProjectionZone zone = project_dataset(dataset);
          return std::make_pair(zone.zone, zone.north);
        },
        py::arg("dataset"), "Project POIs to planar meters; returns (zone, north).");
  m.def("temporal_split",
        [](const Dataset& dataset, int64_t threshold, uint64_t seed) {
          return temporal_split(dataset.histories, threshold, seed);
        },
        py::arg("dataset"), py::arg("threshold"), py::arg("seed") = 7);
  m.def("find_threshold_for_unseen_ratio",
        [](const Dataset& dataset, double target_ratio) {
          double realized = 0.0;
          int64_t threshold =
              find_threshold_for_unseen_ratio(dataset.histories, target_ratio, &realized);
          return std::make_pair(threshold, realized);
        },
        py::arg("dataset"), py::arg("target_ratio"),
        "Returns (threshold, realized_unseen_ratio).");
  m.def("estimate_prior",
        [](const Dataset& dataset, const DatasetSplit& split, double bucket_width_km,
           double max_distance_km, double smoothing_alpha) {
          return estimate_prior(train_histories(dataset, split), dataset.pois,
                                DistanceBucketing{bucket_width_km, max_distance_km},
                                smoothing_alpha);
        },
        py::arg("dataset"), py::arg("split"), py::arg("bucket_width_km") = 0.5,
        py::arg("max_distance_km") = 30.0, py::arg("smoothing_alpha") = 1.0);
  m.def("hour_of_week", &hour_of_week, py::arg("utc_seconds"), py::arg("utc_offset_minutes"),
        "Hour of week in local time, Monday 00:00 = 0.");
  m.def("run", &run_command, py::arg("command"), py::arg("config_json"),
        py::arg("resume") = false,
        "Run one subcommand (ingest/train/eval/sweep/plot) from a config JSON string.");
}
