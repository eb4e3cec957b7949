#include "udkit/metrics.hpp"

#include <array>
#include <cstdio>

namespace udkit::metrics {
namespace {

constexpr std::array<const char*, 8> kFunctional = {"aux", "case", "cc", "clf", "cop", "det", "mark", "punct"};

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

void tally(Score& s, bool ok) {
  ++s.total;
  if (ok) ++s.correct;
}

}  // namespace

std::optional<double> Score::value() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::string main_type(const std::string& deprel) { return deprel.substr(0, deprel.find(':')); }

bool is_functional_relation(const std::string& deprel) {
  const std::string main = main_type(deprel);
  for (const char* f : kFunctional) {
    if (main == f) return true;
  }
  return false;
}

EvalReport evaluate(const std::vector<conllu::Sentence>& gold, const std::vector<conllu::Sentence>& system,
                    const EvalOptions& options) {
  if (gold.size() != system.size()) {
    throw AlignmentError("gold has " + std::to_string(gold.size()) + " sentences, system has " +
                         std::to_string(system.size()));
  }
  EvalReport r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& gw = gold[s].tokens;
    const auto& sw = system[s].tokens;
    if (gw.size() != sw.size()) {
      throw AlignmentError("sentence " + std::to_string(s + 1) + ": gold has " + std::to_string(gw.size()) +
                           " words, system has " + std::to_string(sw.size()));
    }
    for (std::size_t i = 0; i < gw.size(); ++i) {
      const auto& g = gw[i];
      const auto& y = sw[i];
      tally(r.upos, g.upos == y.upos);
      tally(r.ufeats, g.feats == y.feats);
      tally(r.lemmas, g.lemma == y.lemma);
      const bool head_ok = g.head == y.head;
      auto rel = [&](const std::optional<std::string>& d) -> std::optional<std::string> {
        if (!d || !options.strip_subtypes) return d;
        return main_type(*d);
      };
      const bool las_ok = head_ok && rel(g.deprel) == rel(y.deprel);
      tally(r.uas, head_ok);
      tally(r.las, las_ok);
      if (!g.deprel || !is_functional_relation(*g.deprel)) tally(r.clas, las_ok);
    }
  }
  return r;
}

std::string format_percent(const Score& score) {
  const auto v = score.value();
  return v ? fixed(100.0 * *v, 2) : "-";
}

std::string format_report(const EvalReport& report) {
  const std::pair<const char*, const Score*> cols[] = {
      {"UPOS", &report.upos}, {"Feats", &report.ufeats}, {"Lem", &report.lemmas},
      {"UAS", &report.uas},   {"LAS", &report.las}};
  std::string header;
  std::string values;
  for (const auto& [name, score] : cols) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8s", name);
    header += buf;
    std::snprintf(buf, sizeof buf, "%8s", format_percent(*score).c_str());
    values += buf;
  }
  return header + "\n" + values + "\n";
}

std::string format_machine(const EvalReport& report) {
  const std::pair<const char*, const Score*> rows[] = {
      {"UPOS", &report.upos}, {"UFeats", &report.ufeats}, {"Lemmas", &report.lemmas},
      {"UAS", &report.uas},   {"LAS", &report.las},       {"CLAS", &report.clas}};
  std::string out;
  for (const auto& [name, score] : rows) {
    const auto v = score->value();
    out += std::string(name) + "\t" + (v ? fixed(*v, 6) : "-") + "\n";
  }
  return out;
}

}  // namespace udkit::metrics
