// Copyright 2026 The difftrans Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "difftrans/dataset.hpp"
#include "difftrans/errors.hpp"
#include "difftrans/metrics.hpp"
#include "difftrans/partition.hpp"
#include "difftrans/pipeline.hpp"
#include "difftrans/synth.hpp"

namespace py = pybind11;
using namespace difftrans;

namespace {

std::vector<double> as_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::dict strata_dict(const StratumCounts& c, const ClassNames& classes) {
  py::dict out;
  for (Split s : {Split::kTrain, Split::kTest})
    for (Agreement a : {Agreement::kTwoOfThree, Agreement::kThreeOfThree})
      for (ClassId k = 0; k < 2; ++k)
        out[py::make_tuple(to_string(s), to_string(a), classes[k])] = c.at(s, a, k);
  return out;
}

}  // namespace

PYBIND11_MODULE(_difftrans, m) {
  m.doc() = "Difficulty-translation experiment core";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<NotFoundError>(m, "NotFoundError", base.ptr());
  py::register_exception<MinTargetViolation>(m, "MinTargetViolation", base.ptr());

  m.def(
      "gold_and_agreement",
      [](std::array<ClassId, 3> labels) {
        const GoldLabel g = derive_gold_and_agreement(labels);
        return py::make_tuple(g.gold, to_string(g.agreement));
      },
      py::arg("labels"), "Majority class and agreement level of three class ids.");

  m.def(
      "auc",
      [](py::array_t<double> scores, py::array_t<int, py::array::c_style | py::array::forcecast> labels) {
        const auto s = as_vector(scores);
        const std::vector<int> y(labels.data(), labels.data() + labels.size());
        return metrics::auc(s, y);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "ks_two_sample",
      [](py::array_t<double> a, py::array_t<double> b) {
        const auto r = metrics::ks_two_sample(as_vector(a), as_vector(b));
        return py::make_tuple(r.statistic, r.p_value);
      },
      py::arg("sample1"), py::arg("sample2"), "Returns (D, p).");
  m.def("ks_p_value", &metrics::ks_p_value, py::arg("statistic"), py::arg("n1"), py::arg("n2"));
  m.def(
      "top5_mean", [](py::array_t<double> trace) { return metrics::top5_mean(as_vector(trace)); },
      py::arg("trace"));
  m.def(
      "paired_t_test_greater",
      [](py::array_t<double> a, py::array_t<double> b) {
        const auto r = metrics::paired_t_test_greater(as_vector(a), as_vector(b));
        return py::make_tuple(r.mean_difference, r.t_statistic, r.p_value);
      },
      py::arg("a"), py::arg("b"), "Returns (mean difference, t, one-sided p).");

  m.def("percent_count", &partition::percent_count, py::arg("percent"), py::arg("n"));

  m.def(
      "render_patch",
      [](ClassId cls, double t, std::uint64_t seed, int side) {
        synth::RenderParams p;
        p.side = side;
        const Image img = synth::render_patch(cls, t, seed, p);
        py::array_t<float> out({3, img.height, img.width});
        std::copy(img.data.begin(), img.data.end(), out.mutable_data());
        return out;
      },
      py::arg("cls"), py::arg("t"), py::arg("seed"), py::arg("side") = 64, "CHW float image in [0, 1].");

  m.def(
      "stratum_counts",
      [](const std::string& path) {
        const DatasetManifest mf = load_manifest(path);
        return strata_dict(count_strata(mf), mf.class_names);
      },
      py::arg("manifest"), "Counts keyed by (split, agreement, class name).");

  m.def(
      "validate_config", [](const std::string& path) { return pipeline::load_config(path).hash(); },
      py::arg("path"), "Validates an experiment config and returns its hash.");
  m.def(
      "run_experiment",
      [](const std::string& path, const std::string& output_dir) {
        pipeline::ExperimentConfig cfg = pipeline::load_config(path);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        pipeline::RunReport r;
        {
          py::gil_scoped_release release;
          r = pipeline::run_experiment(cfg);
        }
        return py::make_tuple(r.output_dir, r.executed());
      },
      py::arg("config"), py::arg("output_dir") = "", "Returns (output dir, executed stage names).");
}
