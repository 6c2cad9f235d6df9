#include "qebias/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "qebias/errors.hpp"
#include "qebias/text.hpp"

namespace qebias {

using nlohmann::json;

std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::ambiguous_fm: return "ambiguous_fm";
    case Condition::ambiguous_neutral: return "ambiguous_neutral";
    case Condition::unambiguous_intra: return "unambiguous_intra";
    case Condition::unambiguous_extra: return "unambiguous_extra";
  }
  return "?";
}

std::string_view to_string(VariantLabel v) {
  switch (v) {
    case VariantLabel::F: return "F";
    case VariantLabel::M: return "M";
    case VariantLabel::N: return "N";
    case VariantLabel::G: return "G";
  }
  return "?";
}

std::string_view to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

std::string_view to_string(Schema s) {
  switch (s) {
    case Schema::mtgeneval: return "mtgeneval";
    case Schema::gate: return "gate";
    case Schema::mgente: return "mgente";
    case Schema::native: return "native";
  }
  return "?";
}

Condition parse_condition(std::string_view text) {
  for (auto c : {Condition::ambiguous_fm, Condition::ambiguous_neutral,
                 Condition::unambiguous_intra, Condition::unambiguous_extra}) {
    if (text == to_string(c)) return c;
  }
  throw InputError("unknown condition '" + std::string(text) + "'");
}

VariantLabel parse_variant_label(std::string_view text) {
  for (auto v : {VariantLabel::F, VariantLabel::M, VariantLabel::N, VariantLabel::G}) {
    if (text == to_string(v)) return v;
  }
  throw InputError("unknown variant label '" + std::string(text) + "'");
}

Gender parse_gender(std::string_view text) {
  if (text == "F" || text == "f" || text == "female" || text == "feminine") return Gender::F;
  if (text == "M" || text == "m" || text == "male" || text == "masculine") return Gender::M;
  throw InputError("unknown gender '" + std::string(text) + "'");
}

Schema parse_schema(std::string_view text) {
  for (auto s : {Schema::mtgeneval, Schema::gate, Schema::mgente, Schema::native}) {
    if (text == to_string(s)) return s;
  }
  throw InputError("unknown schema '" + std::string(text) + "'");
}

bool is_ambiguous(Condition c) {
  return c == Condition::ambiguous_fm || c == Condition::ambiguous_neutral;
}

std::pair<VariantLabel, VariantLabel> variant_labels(Condition c) {
  if (c == Condition::ambiguous_neutral) return {VariantLabel::N, VariantLabel::G};
  return {VariantLabel::F, VariantLabel::M};
}

VariantLabel variant_for(Gender g) { return g == Gender::F ? VariantLabel::F : VariantLabel::M; }

LanguagePair LanguagePair::parse(std::string_view tag) {
  const auto dash = tag.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == tag.size()) {
    throw InputError("language pair must look like 'en-it', got '" + std::string(tag) + "'");
  }
  return {std::string(tag.substr(0, dash)), std::string(tag.substr(dash + 1))};
}

std::string LanguagePair::str() const { return source + "-" + target; }

const std::string& EvaluationInstance::variant(VariantLabel label) const {
  const auto it = variants.find(label);
  if (it == variants.end()) {
    throw InputError("instance '" + id + "' has no variant " + std::string(to_string(label)));
  }
  return it->second;
}

VariantLabel EvaluationInstance::incorrect_variant() const {
  if (!correct_variant) throw InputError("instance '" + id + "' has no correct variant");
  for (const auto& [label, text] : variants) {
    if (label != *correct_variant) return label;
  }
  throw InputError("instance '" + id + "' has a single variant");
}

void check_invariants(const EvaluationInstance& inst) {
  if (inst.id.empty()) throw InputError("empty id");
  if (inst.source.empty()) throw InputError("instance '" + inst.id + "': empty source");
  const auto [first, second] = variant_labels(inst.condition);
  if (inst.variants.size() != 2 || !inst.variants.contains(first) ||
      !inst.variants.contains(second)) {
    throw InputError("instance '" + inst.id + "': condition " +
                     std::string(to_string(inst.condition)) + " requires variants " +
                     std::string(to_string(first)) + " and " + std::string(to_string(second)));
  }
  for (const auto& [label, text] : inst.variants) {
    if (text.empty()) {
      throw InputError("instance '" + inst.id + "': empty variant " +
                       std::string(to_string(label)));
    }
  }
  if (inst.variants.at(first) == inst.variants.at(second)) {
    throw InputError("instance '" + inst.id + "': variants are identical");
  }
  if (!is_ambiguous(inst.condition)) {
    if (!inst.correct_variant) {
      throw InputError("instance '" + inst.id + "': missing field 'correct_variant'");
    }
    if (!inst.variants.contains(*inst.correct_variant)) {
      throw InputError("instance '" + inst.id + "': correct_variant is not a variant label");
    }
    if (!inst.source_group) {
      throw InputError("instance '" + inst.id + "': missing field 'source_group'");
    }
  }
  if (inst.condition == Condition::unambiguous_extra && (!inst.context || inst.context->empty())) {
    throw InputError("instance '" + inst.id + "': missing field 'context'");
  }
}

namespace {

[[noreturn]] void fail_at(std::size_t line, const std::string& what) {
  throw InputError("line " + std::to_string(line) + ": " + what);
}

std::string required_string(const json& obj, const char* field, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) fail_at(line, std::string("missing field '") + field + "'");
  if (!it->is_string()) fail_at(line, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* field, std::size_t line) {
  const auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) fail_at(line, std::string("field '") + field + "' must be a string");
  return it->get<std::string>();
}

EvaluationInstance parse_native_record(const std::string& text, std::size_t line,
                                       const LoadOptions& options) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    fail_at(line, std::string("malformed record: ") + e.what());
  }
  if (!obj.is_object()) fail_at(line, "record is not an object");

  EvaluationInstance inst;
  inst.id = required_string(obj, "id", line);
  inst.source = required_string(obj, "source", line);
  inst.condition = parse_condition(required_string(obj, "condition", line));
  inst.context = optional_string(obj, "context", line);
  if (auto lp = optional_string(obj, "language_pair", line)) {
    inst.language_pair = LanguagePair::parse(*lp);
  } else {
    inst.language_pair = options.default_language_pair;
  }
  const auto vit = obj.find("variants");
  if (vit == obj.end() || !vit->is_object()) fail_at(line, "missing field 'variants'");
  for (const auto& [key, value] : vit->items()) {
    if (!value.is_string()) fail_at(line, "variant '" + key + "' must be a string");
    inst.variants[parse_variant_label(key)] = value.get<std::string>();
  }
  if (auto cv = optional_string(obj, "correct_variant", line)) {
    inst.correct_variant = parse_variant_label(*cv);
  }
  if (auto sg = optional_string(obj, "source_group", line)) {
    inst.source_group = parse_gender(*sg);
  }
  if (const auto mit = obj.find("metadata"); mit != obj.end() && !mit->is_null()) {
    if (!mit->is_object()) fail_at(line, "field 'metadata' must be an object");
    for (const auto& [key, value] : mit->items()) {
      inst.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  return inst;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cells.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!cells.empty() && !cells.back().empty() && cells.back().back() == '\r') {
    cells.back().pop_back();
  }
  return cells;
}

// One TSV row addressed by header name. Reading a column marks it as
// consumed; the rest go into the metadata bag.
class Row {
 public:
  Row(const std::vector<std::string>& header, std::vector<std::string> cells, std::size_t line)
      : header_(header), cells_(std::move(cells)), line_(line) {
    if (cells_.size() != header_.size()) {
      fail_at(line_, "expected " + std::to_string(header_.size()) + " columns, got " +
                         std::to_string(cells_.size()));
    }
  }

  bool has_column(std::string_view name) const { return index(name).has_value(); }

  std::string required(std::string_view name) {
    auto value = optional(name);
    if (!value) fail_at(line_, "missing field '" + std::string(name) + "'");
    return *value;
  }

  std::optional<std::string> optional(std::string_view name) {
    const auto i = index(name);
    if (!i) return std::nullopt;
    used_.insert(*i);
    if (cells_[*i].empty()) return std::nullopt;
    return cells_[*i];
  }

  std::map<std::string, std::string> leftovers() const {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < header_.size(); ++i) {
      if (!used_.contains(i) && !cells_[i].empty()) out[header_[i]] = cells_[i];
    }
    return out;
  }

  std::size_t line() const { return line_; }

 private:
  std::optional<std::size_t> index(std::string_view name) const {
    const auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header_.begin());
  }

  const std::vector<std::string>& header_;
  std::vector<std::string> cells_;
  std::size_t line_;
  std::unordered_set<std::size_t> used_;
};

LanguagePair row_language_pair(Row& row, const LoadOptions& options) {
  if (auto lp = row.optional("language_pair")) return LanguagePair::parse(*lp);
  if (auto lang = row.optional("lang")) return {options.default_language_pair.source, *lang};
  return options.default_language_pair;
}

struct RowOutput {
  std::vector<EvaluationInstance> instances;
  bool skipped = false;
};

RowOutput read_mtgeneval_row(Row& row, const LoadOptions& options) {
  RowOutput out;
  const auto id = row.required("id");
  const auto pair = row_language_pair(row, options);
  if (row.has_column("source_feminine")) {
    // Counterfactual subset: one row holds both sources and both references.
    if (options.condition && *options.condition != Condition::unambiguous_intra) {
      fail_at(row.line(), "the counterfactual layout only provides unambiguous_intra instances");
    }
    const auto src_f = row.required("source_feminine");
    const auto src_m = row.required("source_masculine");
    const auto ref_f = row.required("reference_feminine");
    const auto ref_m = row.required("reference_masculine");
    const auto meta = row.leftovers();
    for (auto g : {Gender::F, Gender::M}) {
      EvaluationInstance inst;
      inst.id = id + "#" + std::string(to_string(g));
      inst.language_pair = pair;
      inst.source = g == Gender::F ? src_f : src_m;
      inst.condition = Condition::unambiguous_intra;
      inst.variants = {{VariantLabel::F, ref_f}, {VariantLabel::M, ref_m}};
      inst.correct_variant = variant_for(g);
      inst.source_group = g;
      inst.metadata = meta;
      out.instances.push_back(std::move(inst));
    }
    return out;
  }

  // Contextual subset.
  const auto condition = options.condition.value_or(Condition::unambiguous_extra);
  if (condition != Condition::ambiguous_fm && condition != Condition::unambiguous_extra) {
    fail_at(row.line(), "the contextual layout provides ambiguous_fm or unambiguous_extra only");
  }
  EvaluationInstance inst;
  inst.id = id;
  inst.language_pair = pair;
  inst.source = row.required("source");
  inst.condition = condition;
  inst.variants = {{VariantLabel::F, row.required("reference_feminine")},
                   {VariantLabel::M, row.required("reference_masculine")}};
  auto context = row.optional("context");
  if (condition == Condition::unambiguous_extra) {
    if (!context) fail_at(row.line(), "missing field 'context'");
    const auto g = parse_gender(row.required("gender"));
    inst.context = std::move(context);
    inst.correct_variant = variant_for(g);
    inst.source_group = g;
  } else {
    // The disambiguating context is dropped for the ambiguous condition.
    row.optional("gender");
  }
  inst.metadata = row.leftovers();
  out.instances.push_back(std::move(inst));
  return out;
}

RowOutput read_gate_row(Row& row, const LoadOptions& options) {
  if (options.condition && *options.condition != Condition::ambiguous_fm) {
    fail_at(row.line(), "the GATE layout only provides ambiguous_fm instances");
  }
  EvaluationInstance inst;
  inst.id = row.required("id");
  inst.language_pair = row_language_pair(row, options);
  inst.source = row.required("source");
  inst.condition = Condition::ambiguous_fm;
  inst.variants = {{VariantLabel::F, row.required("feminine")},
                   {VariantLabel::M, row.required("masculine")}};
  inst.metadata = row.leftovers();
  return {{std::move(inst)}, false};
}

RowOutput read_mgente_row(Row& row, const LoadOptions& options) {
  if (options.condition && *options.condition != Condition::ambiguous_neutral) {
    fail_at(row.line(), "the mGeNTE layout only provides ambiguous_neutral instances");
  }
  if (auto set = row.optional("set"); set && *set != "Set-N") {
    return {{}, true};
  }
  EvaluationInstance inst;
  inst.id = row.required("id");
  inst.language_pair = row_language_pair(row, options);
  inst.source = row.required("source");
  inst.condition = Condition::ambiguous_neutral;
  inst.variants = {{VariantLabel::N, row.required("neutral")},
                   {VariantLabel::G, row.required("gendered")}};
  inst.metadata = row.leftovers();
  return {{std::move(inst)}, false};
}

// Prefixes errors raised by parsing helpers with the line number.
template <typename Fn>
auto with_line(std::size_t line, Fn&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    const std::string what = e.what();
    if (what.rfind("line ", 0) == 0) throw;
    fail_at(line, what);
  }
}

void accept(LoadedDataset& out, EvaluationInstance inst, std::size_t line,
            std::unordered_set<std::string>& seen) {
  try {
    check_invariants(inst);
  } catch (const InputError& e) {
    fail_at(line, e.what());
  }
  if (!seen.insert(inst.id).second) fail_at(line, "duplicate id '" + inst.id + "'");

  const auto [first, second] = variant_labels(inst.condition);
  const auto diff = validate_minimal_edit(inst.variants.at(first), inst.variants.at(second));
  if (diff.diff_ratio == 0.0) {
    out.warnings.push_back({line, inst.id, "variants differ only in whitespace"});
  } else if (diff.diff_ratio > kMinimalEditWarnRatio &&
             inst.condition != Condition::ambiguous_neutral) {
    std::ostringstream msg;
    msg << "not minimal-edit (diff_ratio " << diff.diff_ratio << ")";
    out.warnings.push_back({line, inst.id, msg.str()});
  }
  out.instances.push_back(std::move(inst));
}

}  // namespace

LoadedDataset load_dataset(std::istream& in, Schema schema, const LoadOptions& options) {
  LoadedDataset out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;

  if (schema == Schema::native) {
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      auto inst = with_line(line, [&] { return parse_native_record(text, line, options); });
      accept(out, std::move(inst), line, seen);
    }
    return out;
  }

  std::vector<std::string> header;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (header.empty()) {
      header = split_tabs(text);
      continue;
    }
    auto rows = with_line(line, [&] {
      Row row(header, split_tabs(text), line);
      switch (schema) {
        case Schema::mtgeneval: return read_mtgeneval_row(row, options);
        case Schema::gate: return read_gate_row(row, options);
        case Schema::mgente: return read_mgente_row(row, options);
        case Schema::native: break;
      }
      return RowOutput{};
    });
    if (rows.skipped) ++out.skipped_rows;
    for (auto& inst : rows.instances) accept(out, std::move(inst), line, seen);
  }
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& path, Schema schema,
                           const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  return load_dataset(in, schema, options);
}

std::string to_native_record(const EvaluationInstance& inst) {
  json obj;
  obj["id"] = inst.id;
  obj["language_pair"] = inst.language_pair.str();
  obj["condition"] = to_string(inst.condition);
  obj["source"] = inst.source;
  if (inst.context) obj["context"] = *inst.context;
  json variants = json::object();
  for (const auto& [label, text] : inst.variants) variants[std::string(to_string(label))] = text;
  obj["variants"] = std::move(variants);
  if (inst.correct_variant) obj["correct_variant"] = to_string(*inst.correct_variant);
  if (inst.source_group) obj["source_group"] = to_string(*inst.source_group);
  if (!inst.metadata.empty()) obj["metadata"] = inst.metadata;
  return obj.dump();
}

void write_native(std::ostream& out, const std::vector<EvaluationInstance>& instances) {
  for (const auto& inst : instances) out << to_native_record(inst) << '\n';
}

EditDiff validate_minimal_edit(std::string_view a_text, std::string_view b_text) {
  const auto a = tokenize(a_text);
  const auto b = tokenize(b_text);
  const std::size_t n = a.size();
  const std::size_t m = b.size();

  // cost[i][j] = (edits, -substitutions) for a[0..i) vs b[0..j), compared
  // lexicographically.
  struct Cell {
    std::size_t edits;
    std::size_t subs;
    bool better_than(const Cell& o) const {
      return edits < o.edits || (edits == o.edits && subs > o.subs);
    }
  };
  std::vector<std::vector<Cell>> dp(n + 1, std::vector<Cell>(m + 1));
  for (std::size_t i = 0; i <= n; ++i) dp[i][0] = {i, 0};
  for (std::size_t j = 0; j <= m; ++j) dp[0][j] = {j, 0};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = a[i - 1] == b[j - 1];
      Cell best{dp[i - 1][j - 1].edits + (same ? 0 : 1), dp[i - 1][j - 1].subs + (same ? 0 : 1)};
      const Cell del{dp[i - 1][j].edits + 1, dp[i - 1][j].subs};
      const Cell ins{dp[i][j - 1].edits + 1, dp[i][j - 1].subs};
      if (del.better_than(best)) best = del;
      if (ins.better_than(best)) best = ins;
      dp[i][j] = best;
    }
  }

  EditDiff diff;
  std::size_t i = n;
  std::size_t j = m;
  while (i > 0 || j > 0) {
    const Cell here = dp[i][j];
    if (i > 0 && j > 0) {
      const bool same = a[i - 1] == b[j - 1];
      const Cell& d = dp[i - 1][j - 1];
      if (d.edits + (same ? 0 : 1) == here.edits && d.subs + (same ? 0 : 1) == here.subs) {
        if (!same) {
          ++diff.substitutions;
          diff.changed_tokens.emplace_back(a[i - 1], b[j - 1]);
        }
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && dp[i - 1][j].edits + 1 == here.edits && dp[i - 1][j].subs == here.subs) {
      ++diff.deletions;
      diff.changed_tokens.emplace_back(a[i - 1], std::nullopt);
      --i;
      continue;
    }
    ++diff.insertions;
    diff.changed_tokens.emplace_back(std::nullopt, b[j - 1]);
    --j;
  }
  std::reverse(diff.changed_tokens.begin(), diff.changed_tokens.end());
  const std::size_t longest = std::max(n, m);
  const std::size_t changed = diff.substitutions + diff.insertions + diff.deletions;
  diff.diff_ratio = longest == 0 ? 0.0 : static_cast<double>(changed) / static_cast<double>(longest);
  return diff;
}

}  // namespace qebias
