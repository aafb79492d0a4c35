#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "crowdlens/analytics.hpp"
#include "crowdlens/api.hpp"
#include "crowdlens/config.hpp"
#include "crowdlens/connectors.hpp"
#include "crowdlens/expr.hpp"
#include "crowdlens/keystore.hpp"
#include "crowdlens/scenario.hpp"
#include "crowdlens/service.hpp"
#include "crowdlens/store.hpp"

namespace py = pybind11;
using namespace crowdlens;

namespace {

using PyBindings = std::map<std::string, std::optional<double>>;
using PyPoint = std::pair<std::string, std::optional<double>>;
using PySample = std::tuple<std::string, std::string, std::string, double>;

Timestamp ts(const std::string& iso) { return Timestamp::parse(iso); }

std::vector<PyPoint> points(const Series& s) {
  std::vector<PyPoint> out;
  out.reserve(s.points.size());
  for (const auto& p : s.points) out.emplace_back(p.t.iso(), p.value);
  return out;
}

Series series_from(const std::vector<PyPoint>& pts) {
  Series s;
  for (const auto& [t, v] : pts) s.points.push_back({ts(t), v});
  return s;
}

std::optional<Region> region_arg(const std::optional<std::string>& rings) {
  if (!rings) return std::nullopt;
  return region_from_json_rings(*rings);
}

MetricDef metric_from(const py::dict& d) {
  MetricDef m;
  m.id = d["id"].cast<std::string>();
  m.label = d.contains("label") ? d["label"].cast<std::string>() : m.id;
  m.unit = d.contains("unit") ? d["unit"].cast<std::string>() : "";
  m.cap = d.contains("cap") ? d["cap"].cast<double>() : 1.0;
  if (d.contains("expression") && !d["expression"].is_none()) m.expression = d["expression"].cast<std::string>();
  return m;
}

}  // namespace

PYBIND11_MODULE(_crowdlens, m) {
  m.doc() = "Geo-temporal crowding analytics";

  // Translators run most recent first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<UnknownMetricError>(m, "UnknownMetricError", PyExc_KeyError);
  py::register_exception<CycleError>(m, "CycleError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("canonical", [](const std::string& text) { return parse_expression(text).to_string(); },
        py::arg("expression"));
  m.def("references", [](const std::string& text) { return parse_expression(text).references(); },
        py::arg("expression"));
  m.def(
      "evaluate",
      [](const std::string& text, const PyBindings& bindings) {
        Bindings b(bindings.begin(), bindings.end());
        return evaluate(parse_expression(text), b);
      },
      py::arg("expression"), py::arg("bindings") = PyBindings{});
  m.def(
      "evaluation_order",
      [](const std::vector<py::dict>& defs) {
        std::vector<MetricDef> ds;
        for (const auto& d : defs) ds.push_back(metric_from(d));
        return resolve_metric_graph(ds);
      },
      py::arg("metrics"));

  m.def(
      "region_contains",
      [](const std::string& rings, double lon, double lat) {
        return region_contains(region_from_json_rings(rings), {lon, lat});
      },
      py::arg("rings"), py::arg("lon"), py::arg("lat"));

  m.def(
      "timeline_hues",
      [](const std::vector<PyPoint>& pts) {
        std::vector<std::pair<std::string, double>> out;
        for (const auto& h : timeline_hues(series_from(pts))) out.emplace_back(h.t.iso(), h.hue);
        return out;
      },
      py::arg("series"));
  m.def(
      "peak",
      [](const std::vector<PyPoint>& pts) {
        auto p = peak(series_from(pts));
        return std::make_pair(p.t.iso(), p.value);
      },
      py::arg("series"));
  m.def("hue_color", [](double hue) { return hex_color(hsl_to_rgb(hue)); }, py::arg("hue"));

  py::class_<Store>(m, "Store")
      .def(py::init([](const std::string& places_geojson, const std::vector<py::dict>& metrics) {
             std::vector<MetricDef> defs;
             for (const auto& d : metrics) defs.push_back(metric_from(d));
             return std::make_unique<Store>(parse_places(places_geojson), MetricCatalog(std::move(defs)));
           }),
           py::arg("places_geojson"), py::arg("metrics"))
      .def(py::init([](const std::filesystem::path& config_path) {
             auto cfg = load_config(config_path);
             auto store = std::make_unique<Store>(load_all_places(cfg), cfg.catalog());
             load_history(*store, cfg);
             return store;
           }),
           py::arg("config_path"))
      .def(
          "upsert",
          [](Store& s, const std::vector<PySample>& rows) {
            std::vector<Sample> samples;
            samples.reserve(rows.size());
            for (const auto& [place, t, metric, v] : rows) samples.push_back({place, ts(t), metric, v});
            py::gil_scoped_release release;
            return s.upsert(samples);
          },
          py::arg("samples"))
      .def(
          "query_range",
          [](const Store& s, const std::string& metric, const std::string& from, const std::string& to) {
            std::vector<PySample> out;
            for (const auto& x : s.query_range(metric, ts(from), ts(to)))
              out.emplace_back(x.place_id, x.t.iso(), x.metric_id, x.value);
            return out;
          },
          py::arg("metric"), py::arg("from_"), py::arg("to"))
      .def("stats",
           [](const Store& s) {
             auto st = s.stats();
             py::dict d;
             d["sample_count"] = st.sample_count;
             d["place_count"] = st.place_count;
             d["metric_count"] = st.metric_count;
             d["t_min"] = st.t_min ? py::cast(st.t_min->iso()) : py::none();
             d["t_max"] = st.t_max ? py::cast(st.t_max->iso()) : py::none();
             return d;
           })
      .def("place_ids",
           [](const Store& s) {
             std::vector<std::string> ids;
             for (const auto& p : s.places()) ids.push_back(p.id);
             return ids;
           })
      .def("save_snapshot", &Store::save_snapshot, py::arg("path"))
      .def(
          "load_snapshot", [](Store& s, const std::filesystem::path& p) { return s.load_snapshot(p).sample_count; },
          py::arg("path"))
      .def(
          "sum_series",
          [](const Store& s, const std::string& metric, const std::string& from, const std::string& to,
             const std::optional<std::string>& region) {
            return points(sum_series(s, metric, ts(from), ts(to), region_arg(region)));
          },
          py::arg("metric"), py::arg("from_"), py::arg("to"), py::arg("region") = py::none())
      .def(
          "mean_series",
          [](const Store& s, const std::string& metric, const std::string& from, const std::string& to,
             const std::optional<std::string>& region) {
            return points(mean_series(s, metric, ts(from), ts(to), region_arg(region)));
          },
          py::arg("metric"), py::arg("from_"), py::arg("to"), py::arg("region") = py::none())
      .def(
          "frame_at",
          [](const Store& s, const std::string& metric, const std::string& t, std::int64_t staleness_s) {
            std::map<std::string, std::optional<double>> out;
            for (const auto& e : frame_at(s, metric, ts(t), Duration(staleness_s)).values)
              out.emplace(e.place_id, e.value);
            return out;
          },
          py::arg("metric"), py::arg("t"), py::arg("staleness_s") = 600);

  py::class_<KeyStore>(m, "KeyStore")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("add", [](KeyStore& k, const std::string& label) { return k.add(label).token(); }, py::arg("label"))
      .def("revoke", &KeyStore::revoke, py::arg("key_id"))
      .def("authenticate", &KeyStore::authenticate, py::arg("token"))
      .def("list", [](const KeyStore& k) {
        std::vector<std::tuple<std::string, std::string, bool>> out;
        for (const auto& r : k.list()) out.emplace_back(r.key_id, r.label, r.revoked);
        return out;
      });

  m.def(
      "generate_scenario",
      [](const std::string& preset, std::uint64_t seed, const std::filesystem::path& out_dir) {
        auto p = parse_preset(preset);
        if (!p) throw ConfigError("unknown preset '" + preset + "'");
        std::vector<std::string> files;
        for (const auto& f : write_scenario(generate_scenario(*p, seed), out_dir)) files.push_back(f.string());
        return files;
      },
      py::arg("preset"), py::arg("seed"), py::arg("out_dir"));

  m.def("validate_config", [](const std::filesystem::path& path) { return load_config(path).evaluation_order; },
        py::arg("path"));
}
