#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "oodmine/embedding_io.hpp"

namespace oodmine {

enum class DedupPolicy {
  no_duplicates_one_lemma,
  duplicates_all_lemmas,
  duplicates_one_lemma,
};

std::string_view to_string(DedupPolicy policy) noexcept;
DedupPolicy parse_dedup_policy(std::string_view name);

// Ordered list of candidate label names. Lemma selection happens upstream;
// this type only knows surface forms.
struct Corpus {
  LabelList labels;
  std::string source_tag;
  DedupPolicy policy = DedupPolicy::no_duplicates_one_lemma;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Unicode case fold of the label with surrounding whitespace removed.
std::string dedup_key(std::string_view label);

/// Drops blank lines and trims surrounding whitespace. Under
/// no_duplicates_one_lemma the first occurrence of each dedup_key wins.
Corpus ingest_corpus(std::span<const std::string> raw_lines, DedupPolicy policy, std::string source_tag = {});
Corpus ingest_corpus(std::istream& raw, DedupPolicy policy, std::string source_tag = {});

class PromptSet {
 public:
  static constexpr std::string_view kPlaceholder = "{label}";

  /// Throws unless every template contains exactly one placeholder.
  PromptSet(std::string name, std::vector<std::string> templates);

  /// The seven-template ensemble used by default.
  static PromptSet simple();
  /// JSON array of template strings.
  static PromptSet from_json(const nlohmann::json& j, std::string name);
  /// Either a built-in set name ("simple") or a path to a JSON file.
  static PromptSet load(const std::string& name_or_path);

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& templates() const noexcept { return templates_; }
  std::size_t size() const noexcept { return templates_.size(); }

  std::string apply(std::size_t template_index, std::string_view label) const;

 private:
  std::string name_;
  std::vector<std::string> templates_;
};

/// Label-major query list: entry i * |prompts| + j is template j applied to label i.
LabelList expand_prompts(const Corpus& corpus, const PromptSet& prompts);

/// Collapses label-major per-query embeddings (labels * prompts rows) to one
/// row per label: the renormalized mean of its prompt embeddings.
EmbeddingMatrix aggregate_prompt_embeddings(const EmbeddingMatrix& per_query, std::size_t labels, std::size_t prompts);

}  // namespace oodmine
