#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "udkit/conllu.hpp"

namespace udkit::metrics {

struct Score {
  std::size_t correct = 0;
  std::size_t total = 0;

  // Undefined (nullopt) when total is 0.
  std::optional<double> value() const;
};

struct EvalReport {
  Score upos, ufeats, lemmas, uas, las, clas;
};

struct EvalOptions {
  // Compare deprels on the main type only (text before ':').
  bool strip_subtypes = false;
};

class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Relations excluded from CLAS, matched on the main type.
bool is_functional_relation(const std::string& deprel);
std::string main_type(const std::string& deprel);

// Word-aligned comparison with gold segmentation. Throws AlignmentError
// naming the first sentence whose word count differs.
EvalReport evaluate(const std::vector<conllu::Sentence>& gold, const std::vector<conllu::Sentence>& system,
                    const EvalOptions& options = {});

// "75.00"-style percentage, or "-" when undefined.
std::string format_percent(const Score& score);

// Fixed-width table with columns UPOS, Feats, Lem, UAS, LAS.
std::string format_report(const EvalReport& report);

// One "metric<TAB>value" line per metric (value as a fraction, or "-").
std::string format_machine(const EvalReport& report);

}  // namespace udkit::metrics
