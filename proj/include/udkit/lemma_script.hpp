#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Lemmatization as classification: a (form, lemma) pair is reduced to an
// edit script over the form's prefix and suffix around their longest common
// substring. The script's canonical tag is the class label.
namespace udkit::lemma {

enum class OpKind : char { kKeep = 'k', kDelete = 'd', kSubstitute = 's', kInsert = 'i' };

struct EditOp {
  OpKind kind = OpKind::kKeep;
  char32_t ch = 0;  // only for substitute / insert

  friend bool operator==(const EditOp&, const EditOp&) = default;
};

using EditOps = std::vector<EditOp>;

struct EditScript {
  EditOps prefix_ops;
  EditOps suffix_ops;
  // False for whole-word replacement scripts; `replacement` is then the lemma.
  bool lcs_present = true;
  std::u32string replacement;

  friend bool operator==(const EditScript&, const EditScript&) = default;
};

struct CommonSpan {
  std::size_t start_a = 0;
  std::size_t start_b = 0;
  std::size_t length = 0;

  friend bool operator==(const CommonSpan&, const CommonSpan&) = default;
};

// Maximal common substring; ties go to the smallest start in `a`, then in `b`.
CommonSpan longest_common_substring(std::u32string_view a, std::u32string_view b);

// Wagner-Fischer with unit insert/delete/substitute costs and free keeps.
// At equal cost the walk prefers keep, then substitute, delete, insert.
EditOps shortest_edit_script(std::u32string_view source, std::u32string_view target);

// Number of non-keep operations.
std::size_t edit_cost(const EditOps& ops);

// Number of source characters the operations consume.
std::size_t consumed_length(const EditOps& ops);

EditScript compute_lemma_script(std::u32string_view form, std::u32string_view lemma);
EditScript compute_lemma_script(std::string_view form, std::string_view lemma);

struct AppliedLemma {
  std::string lemma;
  bool fallback = false;  // script did not fit the form; lemma is the form
};

std::u32string apply_lemma_script(const EditScript& script, std::u32string_view form,
                                  bool* fallback = nullptr);
AppliedLemma apply_lemma_script(const EditScript& script, std::string_view form);

class TagError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// "p:<ops>|s:<ops>" with ops k, d, s<c>, i<c>; replacements are "r:<lemma>".
std::string encode_tag(const EditScript& script);
EditScript decode_tag(std::string_view tag);

}  // namespace udkit::lemma
