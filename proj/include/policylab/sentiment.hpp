#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace policylab::sentiment {

struct Lexicon {
  std::map<std::string, double, std::less<>> scores;
  std::set<std::string, std::less<>> negators{"not", "no", "never"};
};

/// Negator flips the next lexicon hit at most this many tokens later.
inline constexpr std::size_t kNegationReach = 3;

/// Tab-separated `word<TAB>score` lines. `#negator <word>` lines replace the
/// default negator set; other `#` lines are comments. Scores are clamped to [-1, 1].
Lexicon parse_lexicon(std::string_view text);
Lexicon load_lexicon(const std::filesystem::path& path);

/// Mean of the contributing lexicon scores, clamped to [-1, 1]; 0 with no hits.
double score(std::string_view text, const Lexicon& lexicon);

}  // namespace policylab::sentiment
