#include "discovery/autointerp.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_map>

#include "discovery/error.hpp"
#include "discovery/hashing.hpp"
#include "discovery/parallel.hpp"

namespace discovery {

std::string annotate_token(std::string_view text, TokenSpan span) {
  if (span.begin > span.end || span.end > text.size()) throw ValidationError("token span outside the text");
  std::string out;
  out.reserve(text.size() + 4);
  out.append(text.substr(0, span.begin));
  out.append("<<");
  out.append(text.substr(span.begin, span.end - span.begin));
  out.append(">>");
  out.append(text.substr(span.end));
  return out;
}

std::vector<ExemplarSet> extract_exemplars(const ActivationSummary& summary, std::span<const FeatureId> features,
                                           std::size_t L, std::span<const std::size_t> scope) {
  if (L < 1) throw ConfigError("exemplar count L must be at least 1");
  const Corpus& corpus = summary.corpus();
  std::unordered_map<FeatureId, std::size_t> slot;
  for (std::size_t f = 0; f < features.size(); ++f) slot.emplace(features[f], f);

  struct Candidate {
    double value;
    std::size_t doc;
    std::uint32_t token;
  };
  std::vector<std::vector<Candidate>> candidates(features.size());
  std::vector<std::size_t> docs(scope.begin(), scope.end());
  std::sort(docs.begin(), docs.end());
  for (std::size_t i : docs) {
    for (const PooledActivation& entry : summary.pooled(i)) {
      const auto it = slot.find(entry.feature_id);
      if (it == slot.end() || !(entry.max_value > 0.0)) continue;
      candidates[it->second].push_back({entry.max_value, i, entry.argmax_token});
    }
  }

  std::vector<ExemplarSet> sets(features.size());
  for (std::size_t f = 0; f < features.size(); ++f) {
    auto& list = candidates[f];
    if (list.empty()) {
      throw ValidationError("feature " + std::to_string(features[f]) +
                            " never activates in the estimation split; nothing to interpret");
    }
    std::stable_sort(list.begin(), list.end(), [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
    if (list.size() > L) list.resize(L);
    ExemplarSet& set = sets[f];
    set.feature_id = features[f];
    set.L = L;
    for (const Candidate& c : list) {
      const std::vector<TokenSpan> spans = corpus.token_spans(c.doc);
      const std::string text = corpus.rendered_text(c.doc);
      std::string annotated = c.token < spans.size() ? annotate_token(text, spans[c.token]) : text;
      set.exemplars.push_back({corpus.at(c.doc).doc_id, std::move(annotated), c.value});
    }
  }
  return sets;
}

ExemplarSet extract_exemplars(const ActivationSummary& summary, FeatureId feature, std::size_t L,
                              std::span<const std::size_t> scope) {
  const FeatureId one[] = {feature};
  return std::move(extract_exemplars(summary, one, L, scope).front());
}

// ---- prompts --------------------------------------------------------------

const std::string& generation_system_template() {
  static const std::string text =
      "\n"
      "    You are a meticulous AI researcher conducting an important\n"
      "    investigation into patterns found in language.\n";
  return text;
}

const std::string& generation_user_template() {
  static const std::string text =
      "\n"
      "    When a corpus of texts was passed through a LLM, a particular neuron\n"
      "    most activated on the following examples, and specifically on the text\n"
      "    delimited << like this >>. Provide a single phrase description of what \n"
      "    the neuron likely responds to (in any corpus, not just this one), and\n"
      "    delimit it as [[your concise description here]]. Do not mention the \n"
      "    marker tokens ($<<$ $>>$) in your interpretation. The examples are: \n"
      "    {texts}\n";
  return text;
}

const std::string& detection_system_template() {
  static const std::string text =
      "\n"
      "    You are an intelligent and meticulous linguistics researcher.\n"
      "\n"
      "    You will be provided a certain latent attribute of text, such as\n"
      "    ‘‘male pronouns\" or ‘‘text with negative sentiment\".\n"
      "\n"
      "    You will then be given a text example. Your task\n"
      "    is to determine if the example possess the latent attribute.\n"
      "\n"
      "    Return 1 if the text possess the latent attribute,\n"
      "    and return 0 otherwise. Return only this number.\n";
  return text;
}

const std::string& detection_user_template() {
  static const std::string text =
      "\n"
      "    LATENT ATTRIBUTE: {description}\n"
      "    TEXT EXAMPLE: {text}\n";
  return text;
}

std::string fill_template(std::string_view tmpl,
                          std::span<const std::pair<std::string_view, std::string_view>> values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    bool matched = false;
    if (tmpl[pos] == '{') {
      for (const auto& [name, value] : values) {
        const std::size_t len = name.size() + 2;
        if (tmpl.size() - pos >= len && tmpl[pos + len - 1] == '}' && tmpl.substr(pos + 1, name.size()) == name) {
          out.append(value);
          pos += len;
          matched = true;
          break;
        }
      }
    }
    if (!matched) out.push_back(tmpl[pos++]);
  }
  return out;
}

std::vector<ChatMessage> build_generation_prompt(const ExemplarSet& exemplars) {
  if (exemplars.exemplars.empty()) throw ValidationError("cannot build a prompt from an empty exemplar set");
  std::string texts;
  for (std::size_t e = 0; e < exemplars.exemplars.size(); ++e) {
    if (e) texts += "\n\n";
    texts += exemplars.exemplars[e].annotated_text;
  }
  const std::pair<std::string_view, std::string_view> values[] = {{"texts", texts}};
  return {{"system", generation_system_template()}, {"user", fill_template(generation_user_template(), values)}};
}

std::vector<ChatMessage> build_detection_prompt(std::string_view description, std::string_view text) {
  const std::pair<std::string_view, std::string_view> values[] = {{"description", description}, {"text", text}};
  return {{"system", detection_system_template()}, {"user", fill_template(detection_user_template(), values)}};
}

std::string prompt_hash(const std::vector<ChatMessage>& messages) {
  Sha256 hasher;
  for (const ChatMessage& message : messages) {
    hasher.update_u64(message.role.size());
    hasher.update(message.role);
    hasher.update_u64(message.content.size());
    hasher.update(message.content);
  }
  return hasher.hex_digest();
}

// ---- reply parsing --------------------------------------------------------

namespace {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::optional<std::string> parse_description(std::string_view output) {
  std::optional<std::string_view> found;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = output.find("[[", pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = output.find("]]", open + 2);
    if (close == std::string_view::npos) break;
    if (found) return std::nullopt;
    found = output.substr(open + 2, close - open - 2);
    pos = close + 2;
  }
  if (!found) return std::nullopt;
  const std::string_view text = trim(*found);
  if (text.empty()) return std::nullopt;
  return std::string(text);
}

std::optional<int> parse_classification(std::string_view output) {
  for (std::size_t i = 0; i < output.size(); ++i) {
    const char c = output[i];
    if (c != '0' && c != '1') continue;
    if (i > 0 && (is_alnum(output[i - 1]) || output[i - 1] == '.')) continue;
    if (i + 1 < output.size()) {
      const char next = output[i + 1];
      if (is_alnum(next)) continue;
      if (next == '.' && i + 2 < output.size() && std::isdigit(static_cast<unsigned char>(output[i + 2]))) continue;
    }
    return c - '0';
  }
  return std::nullopt;
}

Description generate_description(LlmBackend& backend, const ExemplarSet& exemplars, std::size_t retries,
                                 std::string_view reasoning_effort) {
  ChatRequest request;
  request.messages = build_generation_prompt(exemplars);
  request.reasoning_effort = std::string(reasoning_effort);
  request.purpose = RequestPurpose::generation;
  request.feature_id = exemplars.feature_id;

  std::vector<std::string> outputs;
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    request.attempt = attempt;
    std::string output = backend.complete(request);
    if (auto text = parse_description(output)) {
      Description d;
      d.feature_id = exemplars.feature_id;
      d.text = std::move(*text);
      d.raw_model_output = std::move(output);
      d.model_id = backend.model();
      d.reasoning_effort = request.reasoning_effort;
      d.prompt_hash = prompt_hash(request.messages);
      return d;
    }
    outputs.push_back(std::move(output));
  }
  std::string message = "no unique [[...]] description for feature " + std::to_string(exemplars.feature_id) +
                        " after " + std::to_string(outputs.size()) + " attempts; replies:";
  for (const std::string& output : outputs) message += "\n---\n" + output;
  throw BackendError(message);
}

ClassifierPrediction classify(LlmBackend& backend, const ClassifyTask& task, std::size_t retries,
                              std::string_view reasoning_effort) {
  if (task.description.empty()) throw ValidationError("classification needs a nonempty description");
  ChatRequest request;
  request.messages = build_detection_prompt(task.description, task.text);
  request.reasoning_effort = std::string(reasoning_effort);
  request.purpose = RequestPurpose::detection;
  request.feature_id = task.feature_id;
  request.doc_id = task.doc_id;
  request.description = task.description;
  request.text = task.text;

  ClassifierPrediction prediction;
  prediction.doc_id = task.doc_id;
  prediction.feature_id = task.feature_id;
  for (std::size_t attempt = 0; attempt <= retries; ++attempt) {
    request.attempt = attempt;
    prediction.raw_model_output = backend.complete(request);
    if (auto label = parse_classification(prediction.raw_model_output)) {
      prediction.predicted = *label;
      prediction.valid = true;
      return prediction;
    }
  }
  prediction.valid = false;
  prediction.predicted = 0;
  return prediction;
}

std::vector<ClassifierPrediction> classify_all(LlmBackend& backend, std::vector<ClassifyTask> tasks,
                                               std::size_t retries, std::string_view reasoning_effort,
                                               std::size_t max_in_flight) {
  std::sort(tasks.begin(), tasks.end(), [](const ClassifyTask& a, const ClassifyTask& b) {
    return a.feature_id != b.feature_id ? a.feature_id < b.feature_id : a.doc_id < b.doc_id;
  });
  std::vector<ClassifierPrediction> results(tasks.size());
  const auto workers = static_cast<unsigned>(std::max<std::size_t>(1, max_in_flight));
  // Interleaved assignment keeps every worker busy on a similar mix of tasks.
  parallel_for(std::min<std::size_t>(workers, tasks.size()), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t w = begin; w < end; ++w) {
      for (std::size_t t = w; t < tasks.size(); t += workers) {
        results[t] = classify(backend, tasks[t], retries, reasoning_effort);
      }
    }
  });
  return results;
}

}  // namespace discovery
