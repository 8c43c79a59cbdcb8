// Python surface for the core pipeline: synthetic worlds, encoder and
// classifier training, scoring, evaluation, zero-shot, and the scalar
// utilities the C++ test suites lean on. MatD maps to float64 arrays and
// Mat<real> to float32; both copy at the boundary.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kdiag/assembly.hpp"
#include "kdiag/eval.hpp"
#include "kdiag/io.hpp"
#include "kdiag/synth.hpp"
#include "kdiag/train.hpp"

namespace py = pybind11;
using namespace kdiag;

namespace {

LabelRecord to_label_record(const std::vector<int>& values) {
  LabelRecord rec;
  rec.values.reserve(values.size());
  for (int v : values) {
    LabelRecord::validate_value(v);
    rec.values.push_back(static_cast<std::int8_t>(v));
  }
  return rec;
}

std::vector<int> from_label_record(const LabelRecord& rec) {
  return std::vector<int>(rec.values.begin(), rec.values.end());
}

py::object report_to_dict(const eval::EvalReport& rep) {
  py::list classes;
  for (const auto& ce : rep.classes) {
    py::dict d;
    d["name"] = ce.name;
    d["auc"] = ce.auc ? py::object(py::float_(*ce.auc)) : py::object(py::none());
    d["n_pos"] = ce.n_pos;
    d["n_neg"] = ce.n_neg;
    d["ci"] = ce.ci ? py::object(py::make_tuple(ce.ci->first, ce.ci->second))
                    : py::object(py::none());
    d["excluded_min_cases"] = ce.excluded_min_cases;
    classes.append(d);
  }
  py::dict out;
  out["classes"] = classes;
  out["mean_auc"] = rep.has_defined() ? py::object(py::float_(rep.mean_auc()))
                                      : py::object(py::none());
  return out;
}

eval::EvalOptions make_opts(int n_boot, double level, int min_cases, std::uint64_t seed) {
  eval::EvalOptions opts;
  opts.n_boot = n_boot;
  opts.level = level;
  opts.min_cases = min_cases;
  opts.seed = seed;
  return opts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge-enhanced multi-label diagnosis core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "Error");

  // ---- synthetic worlds -------------------------------------------------
  py::class_<synth::Concept>(m, "Concept")
      .def_readonly("id", &synth::Concept::id)
      .def_readonly("name", &synth::Concept::name)
      .def_readonly("definition", &synth::Concept::definition)
      .def_readonly("attributes", &synth::Concept::attributes)
      .def("__repr__", [](const synth::Concept& c) { return "<Concept '" + c.name + "'>"; });

  py::class_<synth::ConceptCatalog>(m, "Catalog")
      .def_readonly("concepts", &synth::ConceptCatalog::concepts)
      .def_property_readonly("attribute_len",
                             [](const synth::ConceptCatalog& c) { return c.attribute_len; })
      .def("__len__", [](const synth::ConceptCatalog& c) { return c.concepts.size(); });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("class_names", &Dataset::class_names)
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def("sample_id",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.samples.size()) throw ParameterError("dataset: sample index out of range");
             return d.samples[i].id;
           })
      .def("pixels",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.samples.size()) throw ParameterError("dataset: sample index out of range");
             return d.samples[i].pixels;
           })
      .def("labels", [](const Dataset& d, std::size_t i) {
        if (i >= d.samples.size()) throw ParameterError("dataset: sample index out of range");
        return from_label_record(d.samples[i].labels);
      });

  m.def("generate_catalog", &synth::generate_catalog, py::arg("num_concepts"),
        py::arg("attribute_len"), py::arg("seed"));
  m.def("generate_zero_shot_catalog", &synth::generate_zero_shot_catalog, py::arg("num_seen"),
        py::arg("num_unseen"), py::arg("num_background"), py::arg("attribute_len"),
        py::arg("seed"));
  m.def(
      "render_dataset",
      [](const synth::ConceptCatalog& catalog, int image_size, int num_classes,
         int samples_per_class, double noise_sigma, std::uint64_t seed) {
        synth::SyntheticWorldSpec spec;
        spec.image_size = image_size;
        spec.num_classes = num_classes > 0 ? num_classes : static_cast<int>(catalog.concepts.size());
        spec.samples_per_class = samples_per_class;
        spec.noise_sigma = noise_sigma;
        spec.seed = seed;
        return synth::render_dataset(catalog, spec);
      },
      py::arg("catalog"), py::arg("image_size") = 32, py::arg("num_classes") = 0,
      py::arg("samples_per_class") = 8, py::arg("noise_sigma") = 0.05, py::arg("seed") = 0,
      py::call_guard<py::gil_scoped_release>());
  m.def("hide_labels", &synth::hide_labels, py::arg("dataset"), py::arg("visible_classes"));

  // ---- knowledge encoder ------------------------------------------------
  py::class_<knowledge::TextEncoder>(m, "TextEncoder")
      .def("embed_texts", &knowledge::TextEncoder::embed_texts, py::arg("texts"))
      .def("freeze", &knowledge::TextEncoder::freeze)
      .def("params_hash", &knowledge::TextEncoder::params_hash);

  py::class_<knowledge::KeTrainResult>(m, "KeTrainResult")
      .def_readwrite("encoder", &knowledge::KeTrainResult::encoder)
      .def_readonly("probe_loss_initial", &knowledge::KeTrainResult::probe_loss_initial)
      .def_readonly("probe_loss_final", &knowledge::KeTrainResult::probe_loss_final);

  m.def(
      "train_knowledge_encoder",
      [](const synth::ConceptCatalog& catalog, int d, int heads, int steps, int batch_pairs,
         int max_seq_len, double tau, double lr, double warmup_lr, std::uint64_t seed) {
        knowledge::ContrastiveConfig cfg;
        cfg.steps = steps;
        cfg.batch_pairs = batch_pairs;
        cfg.max_seq_len = max_seq_len;
        cfg.tau = tau;
        cfg.lr = lr;
        cfg.warmup_lr = warmup_lr;
        cfg.seed = seed;
        return knowledge::train_knowledge_encoder(catalog, cfg, d, heads);
      },
      py::arg("catalog"), py::arg("d") = 64, py::arg("heads") = 4, py::arg("steps") = 200,
      py::arg("batch_pairs") = 8, py::arg("max_seq_len") = 64, py::arg("tau") = 0.07,
      py::arg("lr") = 1e-4, py::arg("warmup_lr") = 1e-5, py::arg("seed") = 0,
      py::call_guard<py::gil_scoped_release>());
  m.def("save_encoder",
        [](const knowledge::TextEncoder& enc, const std::string& path) {
          knowledge::save_encoder(path, enc, knowledge::ContrastiveConfig{});
        },
        py::arg("encoder"), py::arg("path"));
  m.def("load_encoder", &knowledge::load_encoder, py::arg("path"));

  // ---- classifier ---------------------------------------------------------
  py::class_<train::ClassifierModel>(m, "Classifier")
      .def_readonly("class_names", &train::ClassifierModel::class_names)
      .def_property_readonly(
          "mode", [](const train::ClassifierModel& mdl) { return train::mode_name(mdl.cfg.mode); })
      .def(
          "score",
          [](train::ClassifierModel& mdl, const Dataset& data, int batch_size) {
            Mat<real> queries = train::build_queries(mdl, nullptr, {});
            return train::score_dataset(mdl, queries, data, batch_size);
          },
          py::arg("dataset"), py::arg("batch_size") = 32,
          py::call_guard<py::gil_scoped_release>())
      .def(
          "evaluate",
          [](train::ClassifierModel& mdl, const Dataset& data, int n_boot, double level,
             int min_cases, std::uint64_t seed) {
            return report_to_dict(
                eval::evaluate_dataset(mdl, nullptr, data, make_opts(n_boot, level, min_cases, seed)));
          },
          py::arg("dataset"), py::arg("n_boot") = 0, py::arg("level") = 0.95,
          py::arg("min_cases") = 0, py::arg("seed") = 0)
      .def(
          "zero_shot",
          [](train::ClassifierModel& mdl, const std::vector<std::string>& names,
             const Dataset& data, const knowledge::TextEncoder* encoder, int n_boot, double level,
             int min_cases, std::uint64_t seed) {
            return report_to_dict(eval::zero_shot_eval(mdl, encoder, names, data,
                                                       make_opts(n_boot, level, min_cases, seed)));
          },
          py::arg("names"), py::arg("dataset"), py::arg("encoder") = nullptr,
          py::arg("n_boot") = 0, py::arg("level") = 0.95, py::arg("min_cases") = 0,
          py::arg("seed") = 0)
      .def(
          "attention",
          [](train::ClassifierModel& mdl, const MatD& pixels, int class_index) {
            visual::VisualBackbone<real>::Cache vc;
            Mat<real> tokens = mdl.backbone.forward({pixels}, vc, true);
            Mat<real> queries = train::build_queries(mdl, nullptr, {});
            auto bundle = mdl.head.decode(queries, tokens);
            return query::attention_heatmap(bundle, class_index, vc.h, vc.w);
          },
          py::arg("pixels"), py::arg("class_index"))
      .def("save",
           [](const train::ClassifierModel& mdl, const std::string& path,
              const std::string& run_config) {
             train::save_classifier(path, mdl, train::TrainConfig{}, run_config);
           },
           py::arg("path"), py::arg("run_config") = "");

  m.def(
      "train_classifier",
      [](const Dataset& data, const knowledge::TextEncoder* encoder, const std::string& mode,
         int d, int c1, int c2, int decoder_layers, int heads, int prompt_count, int epochs,
         int batch_size, double lr, double warmup_lr, std::uint64_t seed) {
        train::ModelConfig mcfg;
        mcfg.mode = train::parse_mode(mode);
        mcfg.d = d;
        mcfg.c1 = c1;
        mcfg.c2 = c2;
        mcfg.decoder_layers = decoder_layers;
        mcfg.heads = heads;
        mcfg.prompt_count = prompt_count;
        train::TrainConfig tcfg;
        tcfg.epochs = epochs;
        tcfg.batch_size = batch_size;
        tcfg.lr = lr;
        tcfg.warmup_lr = warmup_lr;
        tcfg.seed = seed;
        return train::train_classifier(data, encoder, mcfg, tcfg);
      },
      py::arg("dataset"), py::arg("encoder") = nullptr, py::arg("mode") = "ke_lp",
      py::arg("d") = 64, py::arg("c1") = 16, py::arg("c2") = 32, py::arg("decoder_layers") = 2,
      py::arg("heads") = 4, py::arg("prompt_count") = 16, py::arg("epochs") = 10,
      py::arg("batch_size") = 32, py::arg("lr") = 1e-4, py::arg("warmup_lr") = 1e-5,
      py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>());
  m.def("load_classifier", &train::load_classifier, py::arg("path"));

  // ---- evaluation utilities ----------------------------------------------
  m.def("auc", &eval::auc, py::arg("scores"), py::arg("labels"));
  m.def("bootstrap_ci", &eval::bootstrap_ci, py::arg("scores"), py::arg("labels"),
        py::arg("n_boot") = 1000, py::arg("level") = 0.95, py::arg("seed") = 0);
  m.def(
      "masked_cross_entropy",
      [](const MatD& logits, const std::vector<int>& labels) {
        return train::masked_cross_entropy<double>(logits, to_label_record(labels));
      },
      py::arg("logits"), py::arg("labels"));
  m.def(
      "contrastive_loss",
      [](const MatD& name_emb, const MatD& def_emb, double tau) {
        return knowledge::contrastive_loss<double>(name_emb, def_emb, tau);
      },
      py::arg("name_emb"), py::arg("def_emb"), py::arg("tau") = 0.07);
  m.def("normalize_name", &assembly::normalize_name, py::arg("name"));

  // ---- image io -----------------------------------------------------------
  m.def("read_pgm", &io::read_pgm, py::arg("path"));
  m.def("write_pgm", &io::write_pgm, py::arg("path"), py::arg("image"));
}
