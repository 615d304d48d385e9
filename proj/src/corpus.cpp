#include "oodmine/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "oodmine/error.hpp"

namespace oodmine {
namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool valid_utf8(std::string_view s) {
  const auto* p = reinterpret_cast<const uint8_t*>(s.data());
  const auto n = static_cast<int32_t>(s.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(p, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

std::size_t count_placeholders(std::string_view t) {
  std::size_t n = 0;
  for (auto pos = t.find(PromptSet::kPlaceholder); pos != std::string_view::npos;
       pos = t.find(PromptSet::kPlaceholder, pos + PromptSet::kPlaceholder.size()))
    ++n;
  return n;
}

}  // namespace

std::string_view to_string(DedupPolicy policy) noexcept {
  switch (policy) {
    case DedupPolicy::no_duplicates_one_lemma: return "no_duplicates_one_lemma";
    case DedupPolicy::duplicates_all_lemmas: return "duplicates_all_lemmas";
    case DedupPolicy::duplicates_one_lemma: return "duplicates_one_lemma";
  }
  return "unknown";
}

DedupPolicy parse_dedup_policy(std::string_view name) {
  for (auto p : {DedupPolicy::no_duplicates_one_lemma, DedupPolicy::duplicates_all_lemmas,
                 DedupPolicy::duplicates_one_lemma})
    if (name == to_string(p)) return p;
  throw Error(Errc::invalid_argument, "unknown dedup policy '" + std::string(name) + "'");
}

std::string dedup_key(std::string_view label) {
  const auto t = trim(label);
  auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(t.data(), static_cast<int32_t>(t.size())));
  u.foldCase();
  std::string out;
  u.toUTF8String(out);
  return out;
}

Corpus ingest_corpus(std::span<const std::string> raw_lines, DedupPolicy policy, std::string source_tag) {
  Corpus corpus{{}, std::move(source_tag), policy};
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < raw_lines.size(); ++i) {
    const auto& line = raw_lines[i];
    if (!valid_utf8(line)) throw Error(Errc::parse, "line " + std::to_string(i + 1) + " is not valid UTF-8");
    const auto label = trim(line);
    if (label.empty()) continue;
    if (policy == DedupPolicy::no_duplicates_one_lemma && !seen.insert(dedup_key(label)).second) continue;
    corpus.labels.emplace_back(label);
  }
  if (corpus.labels.empty()) throw Error(Errc::empty_input, "corpus is empty after filtering");
  return corpus;
}

Corpus ingest_corpus(std::istream& raw, DedupPolicy policy, std::string source_tag) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(raw, line);) lines.push_back(std::move(line));
  return ingest_corpus(lines, policy, std::move(source_tag));
}

PromptSet::PromptSet(std::string name, std::vector<std::string> templates)
    : name_(std::move(name)), templates_(std::move(templates)) {
  if (templates_.empty()) throw Error(Errc::invalid_argument, "prompt set '" + name_ + "' has no templates");
  for (const auto& t : templates_)
    if (count_placeholders(t) != 1)
      throw Error(Errc::invalid_argument, "template must contain exactly one {label}: '" + t + "'");
}

PromptSet PromptSet::simple() {
  return PromptSet("simple", {
                                 "itap of a {label}",
                                 "a bad photo of the {label}",
                                 "an origami {label}",
                                 "a photo of the large {label}",
                                 "a {label} in a video game",
                                 "art of the {label}",
                                 "a photo of the small {label}",
                             });
}

PromptSet PromptSet::from_json(const nlohmann::json& j, std::string name) {
  if (!j.is_array()) throw Error(Errc::parse, "prompt set must be a JSON array of strings");
  std::vector<std::string> templates;
  for (const auto& t : j) {
    if (!t.is_string()) throw Error(Errc::parse, "prompt set entries must be strings");
    templates.push_back(t.get<std::string>());
  }
  return PromptSet(std::move(name), std::move(templates));
}

PromptSet PromptSet::load(const std::string& name_or_path) {
  if (name_or_path == "simple") return simple();
  std::ifstream in(name_or_path);
  if (!in) throw Error(Errc::io, "unknown prompt set or unreadable file: " + name_or_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, name_or_path + ": " + e.what());
  }
  return from_json(j, std::filesystem::path(name_or_path).stem().string());
}

std::string PromptSet::apply(std::size_t template_index, std::string_view label) const {
  std::string out = templates_.at(template_index);
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), label);
  return out;
}

LabelList expand_prompts(const Corpus& corpus, const PromptSet& prompts) {
  if (corpus.labels.empty()) throw Error(Errc::empty_input, "cannot expand prompts for an empty corpus");
  LabelList queries;
  queries.reserve(corpus.size() * prompts.size());
  for (const auto& label : corpus.labels)
    for (std::size_t j = 0; j < prompts.size(); ++j) queries.push_back(prompts.apply(j, label));
  return queries;
}

EmbeddingMatrix aggregate_prompt_embeddings(const EmbeddingMatrix& per_query, std::size_t labels, std::size_t prompts) {
  if (prompts == 0 || labels == 0) throw Error(Errc::invalid_argument, "labels and prompts must be positive");
  const auto rows = static_cast<std::size_t>(per_query.rows());
  if (rows % prompts != 0 || rows / prompts != labels)
    throw Error(Errc::invalid_argument, std::to_string(rows) + " query rows do not form " + std::to_string(labels) +
                                            " labels x " + std::to_string(prompts) + " prompts");
  RowMatrixXf out(static_cast<Index>(labels), per_query.dims());
  for (std::size_t l = 0; l < labels; ++l) {
    const Eigen::RowVectorXd mean =
        per_query.data().middleRows(static_cast<Index>(l * prompts), static_cast<Index>(prompts))
            .cast<double>().colwise().mean();
    const double norm = mean.norm();
    if (norm < 1e-8)
      throw Error(Errc::zero_norm, "mean prompt embedding of label " + std::to_string(l) + " vanishes");
    out.row(static_cast<Index>(l)) = (mean / norm).cast<float>();
  }
  return EmbeddingMatrix(std::move(out));
}

}  // namespace oodmine
