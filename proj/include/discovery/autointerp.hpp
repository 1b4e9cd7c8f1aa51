#pragma once

// Exemplar extraction, the explainer and detection prompts, and parsing of
// model replies into descriptions and 0/1 classifications.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "discovery/data_model.hpp"
#include "discovery/llm_backend.hpp"

namespace discovery {

struct Exemplar {
  std::string doc_id;
  std::string annotated_text;
  double max_activation = 0.0;
};

struct ExemplarSet {
  FeatureId feature_id = 0;
  std::vector<Exemplar> exemplars;
  std::size_t L = 20;
};

// Wraps the token at `span` in << >>.
std::string annotate_token(std::string_view text, TokenSpan span);

// Top-L documents of `scope` by pooled activation of each requested feature,
// highest first (ties by corpus order), each annotated at its earliest
// max-activating token. Throws ValidationError for a feature that never
// activates within the scope.
std::vector<ExemplarSet> extract_exemplars(const ActivationSummary& summary, std::span<const FeatureId> features,
                                           std::size_t L, std::span<const std::size_t> scope);
ExemplarSet extract_exemplars(const ActivationSummary& summary, FeatureId feature, std::size_t L,
                              std::span<const std::size_t> scope);

// Raw templates, byte for byte.
const std::string& generation_system_template();
const std::string& generation_user_template();
const std::string& detection_system_template();
const std::string& detection_user_template();

// Replaces each `{name}` placeholder once, in a single left-to-right pass;
// substituted values are never re-scanned.
std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string_view>> values);

std::vector<ChatMessage> build_generation_prompt(const ExemplarSet& exemplars);
std::vector<ChatMessage> build_detection_prompt(std::string_view description, std::string_view text);
std::string prompt_hash(const std::vector<ChatMessage>& messages);

struct Description {
  FeatureId feature_id = 0;
  std::string text;
  std::string raw_model_output;
  std::string model_id;
  std::string reasoning_effort;
  std::string prompt_hash;
};

// Contents of the unique [[...]] span, trimmed; nullopt when there is no span,
// more than one, or the span is blank.
std::optional<std::string> parse_description(std::string_view output);
// First standalone 0 or 1 in the output.
std::optional<int> parse_classification(std::string_view output);

// Asks the backend for a description, retrying up to `retries` times when the
// reply lacks a unique span. Throws BackendError carrying every raw reply once
// attempts are exhausted.
Description generate_description(LlmBackend& backend, const ExemplarSet& exemplars, std::size_t retries,
                                 std::string_view reasoning_effort = "medium");

struct ClassifierPrediction {
  std::string doc_id;
  FeatureId feature_id = 0;
  int predicted = 0;
  bool valid = true;
  std::string raw_model_output;
};

struct ClassifyTask {
  std::string doc_id;
  FeatureId feature_id = 0;
  std::string description;
  std::string text;
};

ClassifierPrediction classify(LlmBackend& backend, const ClassifyTask& task, std::size_t retries,
                              std::string_view reasoning_effort = "low");

// Runs every task with at most `max_in_flight` concurrent calls; results
// come back sorted by (feature_id, doc_id).
std::vector<ClassifierPrediction> classify_all(LlmBackend& backend, std::vector<ClassifyTask> tasks,
                                               std::size_t retries, std::string_view reasoning_effort,
                                               std::size_t max_in_flight);

}  // namespace discovery
