#pragma once
// Contrastive evaluation corpora: the instance model, dataset loaders for
// the native line-delimited format and the public corpus layouts, and
// token-level minimal-edit validation.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qebias {

enum class Condition { ambiguous_fm, ambiguous_neutral, unambiguous_intra, unambiguous_extra };

// F/M: feminine and masculine inflections. N/G: gender-neutral and gendered.
enum class VariantLabel { F, M, N, G };

enum class Gender { F, M };

enum class Schema { mtgeneval, gate, mgente, native };

std::string_view to_string(Condition c);
std::string_view to_string(VariantLabel v);
std::string_view to_string(Gender g);
std::string_view to_string(Schema s);
Condition parse_condition(std::string_view text);
VariantLabel parse_variant_label(std::string_view text);
Gender parse_gender(std::string_view text);
Schema parse_schema(std::string_view text);

bool is_ambiguous(Condition c);

// The two variant labels a condition demands, in (numerator, denominator)
// order: (F, M) for the F/M conditions and (N, G) for the neutral one.
std::pair<VariantLabel, VariantLabel> variant_labels(Condition c);

VariantLabel variant_for(Gender g);

struct LanguagePair {
  std::string source;
  std::string target;

  // "en-it" form; the target tag may itself contain hyphens.
  static LanguagePair parse(std::string_view tag);
  std::string str() const;
  auto operator<=>(const LanguagePair&) const = default;
};

struct EvaluationInstance {
  std::string id;
  LanguagePair language_pair;
  std::string source;
  std::optional<std::string> context;
  Condition condition = Condition::ambiguous_fm;
  std::map<VariantLabel, std::string> variants;
  std::optional<VariantLabel> correct_variant;
  std::optional<Gender> source_group;
  // Columns the schema adapters did not map, kept verbatim.
  std::map<std::string, std::string> metadata;

  const std::string& variant(VariantLabel label) const;
  // For unambiguous instances: the variant opposite to correct_variant.
  VariantLabel incorrect_variant() const;

  bool operator==(const EvaluationInstance&) const = default;
};

// Throws InputError describing the first violated invariant.
void check_invariants(const EvaluationInstance& instance);

struct Diagnostic {
  std::size_t line = 0;
  std::string instance_id;
  std::string message;
};

struct LoadOptions {
  // Selects how layouts that serve several conditions are read (for
  // example the MT-GenEval contextual subset feeds both the ambiguous and
  // the extra-sentential condition).
  std::optional<Condition> condition;
  LanguagePair default_language_pair{"en", "und"};
};

struct LoadedDataset {
  std::vector<EvaluationInstance> instances;
  // Warnings only, e.g. pairs that are not minimal edits.
  std::vector<Diagnostic> warnings;
  // Rows the adapter intentionally skipped (out-of-subset rows).
  std::size_t skipped_rows = 0;
};

// Loads and validates a dataset. Throws InputError naming the line number
// on malformed records, duplicate ids or label sets inconsistent with the
// condition.
LoadedDataset load_dataset(const std::filesystem::path& path, Schema schema,
                           const LoadOptions& options = {});
LoadedDataset load_dataset(std::istream& in, Schema schema, const LoadOptions& options = {});

std::string to_native_record(const EvaluationInstance& instance);
void write_native(std::ostream& out, const std::vector<EvaluationInstance>& instances);

struct EditDiff {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  // (token in a, token in b); a side is absent for insertions and the b
  // side for deletions.
  std::vector<std::pair<std::optional<std::string>, std::optional<std::string>>> changed_tokens;
  double diff_ratio = 0.0;
};

// Unit-cost token alignment of a against b. Among minimum-cost alignments
// the one with the most substitutions is chosen, which makes the counts
// symmetric: swapping the arguments swaps insertions and deletions.
EditDiff validate_minimal_edit(std::string_view a, std::string_view b);

inline constexpr double kMinimalEditWarnRatio = 0.5;

}  // namespace qebias
