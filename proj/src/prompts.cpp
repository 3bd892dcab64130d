#include "tokprobe/prompts.hpp"

#include <filesystem>

#include "tokprobe/common.hpp"
#include "tokprobe/jsonl.hpp"

namespace tokprobe::prompts {

using taskgen::TaskType;

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

void replace_once(std::string& text, std::string_view marker, const std::string& value) {
  const auto pos = text.find(marker);
  text.replace(pos, marker.size(), value);
}

}  // namespace

std::string_view variant_name(PromptVariant v) {
  switch (v) {
    case PromptVariant::kBase: return "base";
    case PromptVariant::kCot: return "cot";
    case PromptVariant::kScot: return "scot";
  }
  return "?";
}

PromptVariant variant_from_name(std::string_view name) {
  if (name == "base") return PromptVariant::kBase;
  if (name == "cot") return PromptVariant::kCot;
  if (name == "scot") return PromptVariant::kScot;
  throw InvalidInput("unknown prompt variant '" + std::string(name) + "'");
}

bool variant_applicable(TaskType task, PromptVariant variant) {
  return variant != PromptVariant::kBase || task == TaskType::kCounting;
}

std::string_view answer_shape_name(AnswerShape s) {
  return s == AnswerShape::kIntegerAfterResult ? "integer-after-Result" : "dict-with-key-Result";
}

AnswerShape answer_shape_for(TaskType task) {
  return task == TaskType::kCounting ? AnswerShape::kIntegerAfterResult
                                     : AnswerShape::kDictWithResultKey;
}

std::vector<std::string_view> markers_for(TaskType task) {
  if (task == TaskType::kCounting) return {kTargetMarker, kSampleMarker};
  return {kStringMarker};
}

TemplateSet TemplateSet::load(const std::string& dir) {
  TemplateSet set;
  for (TaskType task : {TaskType::kCounting, TaskType::kSorting, TaskType::kReversing}) {
    for (PromptVariant v : {PromptVariant::kBase, PromptVariant::kCot, PromptVariant::kScot}) {
      if (!variant_applicable(task, v)) continue;
      const auto path = std::filesystem::path(dir) / std::string(taskgen::task_type_name(task)) /
                        (std::string(variant_name(v)) + ".txt");
      if (!std::filesystem::is_regular_file(path)) {
        throw ConfigError("missing prompt template " + path.string());
      }
      std::string text = read_text_file(path.string());
      if (!text.empty() && text.back() == '\n') text.pop_back();
      for (auto marker : markers_for(task)) {
        if (count_occurrences(text, marker) != 1) {
          throw ConfigError("template " + path.string() + " must contain " + std::string(marker) +
                            " exactly once");
        }
      }
      set.templates_[{task, v}] = std::move(text);
    }
  }
  return set;
}

const std::string& TemplateSet::get(TaskType task, PromptVariant variant) const {
  auto it = templates_.find({task, variant});
  if (it == templates_.end()) {
    throw InvalidInput("prompt variant " + std::string(variant_name(variant)) +
                       " does not apply to task " + std::string(taskgen::task_type_name(task)));
  }
  return it->second;
}

PromptBundle render_prompt(const TemplateSet& templates, const taskgen::Instance& instance,
                           PromptVariant variant) {
  const TaskType task = instance.task.type;
  if (!variant_applicable(task, variant)) {
    throw InvalidInput("prompt variant " + std::string(variant_name(variant)) +
                       " does not apply to task " + std::string(taskgen::task_type_name(task)));
  }
  std::string text = templates.get(task, variant);
  // Substitute the sample last so that its contents are never rescanned for
  // markers.
  if (task == TaskType::kCounting) {
    if (split_code_points(instance.task.target).size() != 1) {
      throw InvalidInput("counting target must be a single unit character");
    }
    const auto target_pos = text.find(kTargetMarker);
    const auto sample_pos = text.find(kSampleMarker);
    if (target_pos > sample_pos) {
      replace_once(text, kTargetMarker, instance.task.target);
      replace_once(text, kSampleMarker, instance.rendered);
    } else {
      replace_once(text, kSampleMarker, instance.rendered);
      // Marker positions before the sample are unaffected by the replacement.
      text.replace(target_pos, kTargetMarker.size(), instance.task.target);
    }
  } else {
    replace_once(text, kStringMarker, instance.rendered);
  }
  return {instance.id, variant, std::move(text), answer_shape_for(task)};
}

nlohmann::json to_json(const PromptBundle& b) {
  return {{"instance_id", b.instance_id},
          {"variant", variant_name(b.variant)},
          {"text", b.text},
          {"expected_answer_shape", answer_shape_name(b.expected_answer_shape)}};
}

PromptBundle bundle_from_json(const nlohmann::json& j) {
  try {
    PromptBundle b;
    b.instance_id = j.at("instance_id").get<std::string>();
    b.variant = variant_from_name(j.at("variant").get<std::string>());
    b.text = j.at("text").get<std::string>();
    const auto shape = j.at("expected_answer_shape").get<std::string>();
    if (shape == answer_shape_name(AnswerShape::kIntegerAfterResult)) {
      b.expected_answer_shape = AnswerShape::kIntegerAfterResult;
    } else if (shape == answer_shape_name(AnswerShape::kDictWithResultKey)) {
      b.expected_answer_shape = AnswerShape::kDictWithResultKey;
    } else {
      throw InvalidInput("unknown answer shape: " + shape);
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("malformed prompt bundle: ") + e.what());
  }
}

std::vector<PromptBundle> read_bundles(const std::string& path) {
  std::vector<PromptBundle> out;
  for (const auto& row : read_jsonl(path)) out.push_back(bundle_from_json(row));
  return out;
}

void write_bundles(const std::vector<PromptBundle>& bundles, const std::string& path) {
  std::vector<nlohmann::json> rows;
  rows.reserve(bundles.size());
  for (const auto& b : bundles) rows.push_back(to_json(b));
  write_jsonl(rows, path);
}

}  // namespace tokprobe::prompts
