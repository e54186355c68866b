// Acceptance: one PASS/FAIL line per criterion, built from the verification suites.

#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

#include "regstruct/suites.hpp"

using namespace regstruct;

namespace {

using Rows = std::vector<std::vector<std::string>>;

Rows body(const CsvTable& t) {
  std::istringstream in(t.str());
  Rows r = parse_csv(in);
  r.erase(r.begin());
  return r;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

/// Every checked row whose case starts with one of the prefixes passes; at least one row must match.
bool rows_pass(const SuiteResult& r, std::initializer_list<std::string> prefixes, std::string& why) {
  int seen = 0;
  for (const auto& row : body(r.table))
    for (const auto& p : prefixes)
      if (starts_with(row[0], p)) {
        ++seen;
        if (row[5] != "true") why += " " + row[0] + "/" + row[1] + "=" + row[2];
      }
  if (!seen) why += " no rows";
  return seen && why.empty();
}

double seconds(const SuiteResult& r, std::initializer_list<std::string> cases) {
  double s = 0.0;
  for (const auto& row : body(r.timing))
    for (const auto& c : cases)
      if (row[0] == c) s += std::stod(row[1]);
  return s;
}

int failures = 0;

void verdict(int n, const std::string& what, bool ok, const std::string& detail) {
  std::printf("criterion %d %-28s %s%s\n", n, what.c_str(), ok ? "PASS" : "FAIL", detail.empty() ? "" : ("  " + detail).c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

}  // namespace

int main() {
  SuiteConfig base;
  SuiteConfig axioms = base;
  axioms.level = 7;
  axioms.scaling_level = 7;

  std::map<std::string, SuiteConfig> configs;
  for (const auto& n : suite_names()) configs[n] = base;
  configs["model-axioms"] = axioms;

  std::map<std::string, SuiteResult> first;
  for (const auto& n : suite_names()) first.emplace(n, run_suite(n, configs[n]));

  {
    std::string why;
    const auto& r = first.at("model-axioms");
    bool ok = rows_pass(r, {"polynomial", "phi4"}, why);
    double s = seconds(r, {"polynomial", "phi4"});
    verdict(1, "model algebra", ok && s <= 60.0, why + " seconds=" + format_double(s));
  }
  {
    std::string why;
    verdict(2, "model scaling", rows_pass(first.at("model-axioms"), {"scaling"}, why), why);
  }
  {
    std::string why;
    verdict(3, "reconstruction", rows_pass(first.at("reconstruction"), {"x2", "phi4", "decomposition"}, why), why);
  }
  {
    std::string why;
    bool ok = rows_pass(first.at("schauder"), {"killing"}, why);
    SuiteConfig neg = base;
    neg.negative = true;
    auto broken = run_suite("schauder", neg);
    double worst = 0.0;
    for (const auto& row : body(broken.table))
      if (starts_with(row[0], "killing")) worst = std::max(worst, std::stod(row[2]));
    if (worst < 1e-3) why += " uncorrected residual " + format_double(worst);
    if (broken.ok) why += " uncorrected suite passed";
    verdict(4, "polynomial killing", ok && worst >= 1e-3 && !broken.ok, why);
  }
  {
    std::string why;
    verdict(5, "schauder identity", rows_pass(first.at("schauder"), {"identity", "commutation"}, why), why);
  }
  {
    std::string why;
    verdict(6, "schauder gain", rows_pass(first.at("schauder"), {"gain"}, why), why);
  }
  {
    std::string why;
    const auto& r = first.at("fixedpoint");
    bool ok = rows_pass(r, {"affine", "linear", "zero-noise", "phi4"}, why);
    double s = 0.0;
    for (const auto& row : body(r.timing)) s += std::stod(row[1]);
    verdict(7, "fixed point", ok && s <= 600.0, why + " seconds=" + format_double(s));
  }
  {
    std::string why;
    verdict(8, "extension", rows_pass(first.at("model-axioms"), {"extension"}, why), why);
  }
  {
    std::string why;
    for (const auto& n : suite_names())
      if (run_suite(n, configs[n]).table.str() != first.at(n).table.str()) why += " " + n;
    verdict(9, "determinism", why.empty(), why);
  }
  return failures ? 1 : 0;
}
