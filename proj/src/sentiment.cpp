#include "policylab/sentiment.hpp"

#include <algorithm>
#include <charconv>
#include <optional>

#include "policylab/cleaning.hpp"
#include "policylab/error.hpp"
#include "policylab/json_util.hpp"

namespace policylab::sentiment {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  bool custom_negators = false;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view tag = "#negator";
      if (line.starts_with(tag)) {
        if (!custom_negators) lex.negators.clear();
        custom_negators = true;
        lex.negators.insert(std::string(trim(line.substr(tag.size()))));
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw Error(ErrorCode::ParseError, "sentiment lexicon line " + std::to_string(line_no) + ": expected word<TAB>score",
                  "line " + std::to_string(line_no));
    }
    const auto word = trim(line.substr(0, tab));
    const auto value = trim(line.substr(tab + 1));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size() || word.empty()) {
      throw Error(ErrorCode::ParseError, "sentiment lexicon line " + std::to_string(line_no) + ": bad entry",
                  "line " + std::to_string(line_no));
    }
    lex.scores[std::string(word)] = std::clamp(v, -1.0, 1.0);
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) { return parse_lexicon(read_file(path)); }

double score(std::string_view text, const Lexicon& lexicon) {
  const auto tokens = cleaning::tokenize(text);
  double sum = 0.0;
  std::size_t hits = 0;
  std::optional<std::size_t> negator_at;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (lexicon.negators.contains(tokens[i])) {
      negator_at = i;
      continue;
    }
    const auto it = lexicon.scores.find(tokens[i]);
    if (it == lexicon.scores.end()) continue;
    double s = it->second;
    if (negator_at && i - *negator_at <= kNegationReach) s = -s;
    negator_at.reset();
    sum += s;
    ++hits;
  }
  if (hits == 0) return 0.0;
  return std::clamp(sum / static_cast<double>(hits), -1.0, 1.0);
}

}  // namespace policylab::sentiment
