// Thin bindings; structured values cross the boundary as JSON text and are
// decoded by the pure-Python wrapper.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "tokprobe/common.hpp"
#include "tokprobe/metrics.hpp"
#include "tokprobe/parse.hpp"
#include "tokprobe/pipeline.hpp"
#include "tokprobe/prompts.hpp"
#include "tokprobe/taskgen.hpp"
#include "tokprobe/tokenizer.hpp"

namespace py = pybind11;
using namespace tokprobe;

namespace {

taskgen::FormatType fmt(const std::string& letter) { return taskgen::format_from_letter(letter); }

std::string merges_text(const std::vector<std::string>& corpus, std::size_t num_merges, bool pretokenize) {
  return tokenizer::format_merges(tokenizer::train_bpe(corpus, num_merges, pretokenize));
}

std::string tokenize_json(const std::string& merges, const std::string& text,
                          const std::vector<std::string>& units) {
  const auto view = tokenizer::encode(tokenizer::parse_merges(merges), text);
  nlohmann::json j;
  j["tokens"] = view.tokens;
  j["boundaries"] = nlohmann::json::array();
  for (const auto& b : view.boundaries) j["boundaries"].push_back({b.start, b.end});
  if (!units.empty()) {
    const auto rep = tokenizer::alignment_report(view, units);
    j["merged_unit_count"] = rep.merged_unit_count;
    j["split_unit_count"] = rep.split_unit_count;
    j["per_unit_aligned"] = rep.per_unit_aligned;
  }
  return j.dump();
}

std::string generate_json(const std::string& task, const std::string& alphabet, int lo, int hi, std::size_t n,
                          const std::string& format, std::uint64_t seed) {
  const auto kind = taskgen::TaskKind::from_label(task);
  std::optional<taskgen::WordList> words;
  if (alphabet == "word" || alphabet == "hfword") words = taskgen::load_word_list(pipeline::default_words_path());
  const auto spec = taskgen::resolve_alphabet(alphabet, words ? &*words : nullptr);
  const auto insts =
      taskgen::generate(kind, spec, taskgen::bucket_for(kind.type, lo, hi), n, fmt(format), seed);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& i : insts) out.push_back(taskgen::to_json(i));
  return out.dump();
}

std::string render_prompt_json(const std::string& instance_json, const std::string& variant,
                               const std::string& templates_dir) {
  const auto inst = taskgen::instance_from_json(nlohmann::json::parse(instance_json));
  const auto set = prompts::TemplateSet::load(templates_dir.empty() ? pipeline::default_templates_dir()
                                                                    : templates_dir);
  return prompts::to_json(prompts::render_prompt(set, inst, prompts::variant_from_name(variant))).dump();
}

std::string parse_json(const std::string& task, const std::string& raw) {
  const auto kind = taskgen::TaskKind::from_label(task);
  return parse::to_json(kind.type == taskgen::TaskType::kCounting ? parse::parse_count(raw)
                                                                   : parse::parse_string_result(raw))
      .dump();
}

std::string run_pipeline_json(const std::string& config_path) {
  const auto result = pipeline::run_pipeline(pipeline::load_config(config_path));
  return nlohmann::json{{"requests", result.stats.requests},
                        {"cache_hits", result.stats.cache_hits},
                        {"deduplicated", result.stats.deduplicated},
                        {"failed", result.stats.failed},
                        {"artifacts", result.artifacts}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_tokprobe, m) {
  m.doc() = "tokprobe native core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_ValueError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);

  m.def("render", [](const std::vector<std::string>& units, const std::string& format) {
    return taskgen::render(units, fmt(format));
  });
  m.def("parse_rendered", [](const std::string& rendered, const std::string& format) {
    return taskgen::parse_rendered(rendered, fmt(format));
  });
  m.def("oracle_count", &taskgen::oracle_count);
  m.def("oracle_sort", &taskgen::oracle_sort);
  m.def("oracle_reverse", &taskgen::oracle_reverse);
  m.def("train_bpe", &merges_text, py::arg("corpus"), py::arg("num_merges"), py::arg("pretokenize") = true);
  m.def("tokenize_json", &tokenize_json, py::arg("merges"), py::arg("text"),
        py::arg("units") = std::vector<std::string>{});
  m.def("generate_json", &generate_json);
  m.def("render_prompt_json", &render_prompt_json, py::arg("instance"), py::arg("variant"),
        py::arg("templates_dir") = "");
  m.def("parse_json", &parse_json);
  m.def("spearman", [](const std::vector<double>& x, const std::vector<double>& y) {
    return metrics::spearman(x, y);
  });
  m.def("pearson", [](const std::vector<double>& x, const std::vector<double>& y) {
    return metrics::pearson(x, y);
  });
  m.def("format_pct", &metrics::format_pct);
  m.def("run_pipeline_json", &run_pipeline_json, py::call_guard<py::gil_scoped_release>());
}
