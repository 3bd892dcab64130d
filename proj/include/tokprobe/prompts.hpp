#pragma once

#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tokprobe/taskgen.hpp"

namespace tokprobe::prompts {

enum class PromptVariant { kBase, kCot, kScot };

std::string_view variant_name(PromptVariant v);
PromptVariant variant_from_name(std::string_view name);

// base is counting-only; cot and scot apply to every task.
bool variant_applicable(taskgen::TaskType task, PromptVariant variant);

enum class AnswerShape { kIntegerAfterResult, kDictWithResultKey };

std::string_view answer_shape_name(AnswerShape s);
AnswerShape answer_shape_for(taskgen::TaskType task);

struct PromptBundle {
  std::string instance_id;
  PromptVariant variant = PromptVariant::kBase;
  std::string text;
  AnswerShape expected_answer_shape = AnswerShape::kIntegerAfterResult;
};

// Placeholder markers as they appear in the template files.
inline constexpr std::string_view kTargetMarker = "{substring}";
inline constexpr std::string_view kSampleMarker = "{sample}";
inline constexpr std::string_view kStringMarker = "{{string}}";

// Prompt templates loaded from `<dir>/<task>/<variant>.txt`. A single trailing
// newline in a file is dropped. Loading checks that every template carries its
// placeholders exactly once.
class TemplateSet {
 public:
  static TemplateSet load(const std::string& dir);

  const std::string& get(taskgen::TaskType task, PromptVariant variant) const;

 private:
  std::map<std::pair<taskgen::TaskType, PromptVariant>, std::string> templates_;
};

// Placeholders the template for `task` must contain.
std::vector<std::string_view> markers_for(taskgen::TaskType task);

PromptBundle render_prompt(const TemplateSet& templates, const taskgen::Instance& instance,
                           PromptVariant variant);

nlohmann::json to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const nlohmann::json& j);

std::vector<PromptBundle> read_bundles(const std::string& path);
void write_bundles(const std::vector<PromptBundle>& bundles, const std::string& path);

}  // namespace tokprobe::prompts
