#include "fedhpo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedhpo/dataset.hpp"

namespace fedhpo {

std::string to_string(Approach a) {
  switch (a) {
    case Approach::kGlobalGrid: return "globalGrid";
    case Approach::kLocalGrid: return "localGrid";
    case Approach::kGlobalBayes: return "globalBayes";
    case Approach::kLocalBayes: return "localBayes";
    case Approach::kIndividual: return "individual";
    case Approach::kCentral: return "central";
    case Approach::kFederated: return "federated";
  }
  throw std::invalid_argument("unknown approach");
}

Approach approach_from_string(const std::string& s) {
  for (Approach a : {Approach::kGlobalGrid, Approach::kLocalGrid,
                     Approach::kGlobalBayes, Approach::kLocalBayes,
                     Approach::kIndividual, Approach::kCentral,
                     Approach::kFederated}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown approach `" + s + "`");
}

void ResultTable::add(ResultRow row) {
  if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) {
    throw std::invalid_argument("result table: accuracy " +
                                std::to_string(row.accuracy) +
                                " outside [0, 1]");
  }
  if (find(row.client_id, row.approach) != nullptr) {
    throw std::invalid_argument("result table: duplicate (client " +
                                std::to_string(row.client_id) + ", " +
                                to_string(row.approach) + ")");
  }
  rows.push_back(std::move(row));
}

const ResultRow* ResultTable::find(int client_id, Approach a) const {
  for (const ResultRow& r : rows) {
    if (r.client_id == client_id && r.approach == a) return &r;
  }
  return nullptr;
}

std::vector<int> ResultTable::client_ids() const {
  std::set<int> ids;
  for (const ResultRow& r : rows) ids.insert(r.client_id);
  return {ids.begin(), ids.end()};
}

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kTol = 1e-12;
  constexpr int kMaxIter = 500;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kTol) return h;
  }
  throw std::runtime_error("incomplete beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("incomplete beta: a and b must be > 0");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_continued_fraction(a, b, x) / a;
  }
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, int df) {
  if (df < 1) {
    throw std::invalid_argument("t-test: degrees of freedom must be >= 1");
  }
  if (std::isinf(t)) return 0.0;
  const double v = static_cast<double>(df);
  return regularized_incomplete_beta(v / 2.0, 0.5, v / (v + t * t));
}

TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired t-test: vectors differ in length");
  }
  const auto n = a.size();
  if (n < 2) {
    throw std::invalid_argument("paired t-test: need at least 2 pairs");
  }

  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  TTestResult res;
  res.pair_count = static_cast<int>(n);
  res.degrees_of_freedom = static_cast<int>(n) - 1;
  if (sd == 0.0) {
    res.degenerate = true;
    if (mean == 0.0) {
      res.t = 0.0;
      res.p = 1.0;
    } else {
      res.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      res.p = 0.0;
    }
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p = student_t_two_tailed_p(res.t, res.degrees_of_freedom);
  return res;
}

std::vector<TTestResult> compare_approaches(
    const ResultTable& table,
    const std::vector<std::pair<Approach, Approach>>& pairs,
    const std::vector<int>& exclude_clients) {
  const std::set<int> excluded(exclude_clients.begin(), exclude_clients.end());
  std::vector<int> ids;
  for (int id : table.client_ids()) {
    if (excluded.count(id) == 0) ids.push_back(id);
  }

  std::vector<TTestResult> out;
  for (const auto& [a, b] : pairs) {
    std::vector<double> va, vb;
    for (int id : ids) {
      const ResultRow* ra = table.find(id, a);
      const ResultRow* rb = table.find(id, b);
      if (ra == nullptr || rb == nullptr) {
        throw std::invalid_argument(
            "compare: client " + std::to_string(id) + " is missing " +
            to_string(ra == nullptr ? a : b) + " (required for " +
            to_string(a) + " vs " + to_string(b) + ")");
      }
      va.push_back(ra->accuracy);
      vb.push_back(rb->accuracy);
    }
    TTestResult r = paired_t_test(va, vb);
    r.approach_a = a;
    r.approach_b = b;
    r.excluded_clients = {excluded.begin(), excluded.end()};
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CohortSummaryRow> cohort_summary(const ResultTable& table) {
  if (table.rows.empty()) {
    throw std::invalid_argument("cohort summary: empty table");
  }
  std::map<std::pair<int, Approach>, std::vector<double>> groups;
  for (const ResultRow& r : table.rows) {
    groups[{r.cohort_id, r.approach}].push_back(r.accuracy);
  }
  std::vector<CohortSummaryRow> out;
  for (const auto& [key, accs] : groups) {
    CohortSummaryRow row;
    row.cohort_id = key.first;
    row.approach = key.second;
    row.clients = static_cast<int>(accs.size());
    row.min = *std::min_element(accs.begin(), accs.end());
    row.max = *std::max_element(accs.begin(), accs.end());
    double sum = 0.0;
    for (double v : accs) sum += v;
    row.mean = sum / static_cast<double>(accs.size());
    out.push_back(row);
  }
  return out;
}

ResultTable load_result_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  // Optional trailing columns (learningRate) are accepted.
  if (line.rfind("clientId,cohortId,approach,accuracy", 0) != 0) {
    throw ParseError(path +
                     ": line 1: expected header `clientId,cohortId,approach,accuracy`");
  }
  const bool has_lr = line.find("learningRate") != std::string::npos;

  ResultTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != (has_lr ? 5u : 4u)) {
      throw ParseError(path + ": line " + std::to_string(lineno) +
                       ": expected " + std::to_string(has_lr ? 5 : 4) +
                       " fields, got " + std::to_string(cells.size()));
    }
    try {
      ResultRow row;
      row.client_id = std::stoi(cells[0]);
      row.cohort_id = std::stoi(cells[1]);
      row.approach = approach_from_string(cells[2]);
      row.accuracy = std::stod(cells[3]);
      if (has_lr) row.learning_rate = std::stod(cells[4]);
      table.add(row);
    } catch (const std::invalid_argument& e) {
      throw ParseError(path + ": line " + std::to_string(lineno) + ": " +
                       e.what());
    }
  }
  return table;
}

void save_result_table(const ResultTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "clientId,cohortId,approach,accuracy\n";
  char buf[32];
  for (const ResultRow& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%.10g", r.accuracy);
    out << r.client_id << ',' << r.cohort_id << ',' << to_string(r.approach)
        << ',' << buf << "\n";
  }
}

void append_rows(ResultTable& into, const ResultTable& from) {
  for (const ResultRow& r : from.rows) into.add(r);
}

void write_ttest_report(const std::vector<TTestResult>& results,
                        std::ostream& out) {
  out << std::left << std::setw(14) << "approach A" << std::setw(14)
      << "approach B" << std::right << std::setw(6) << "n" << std::setw(12)
      << "t" << std::setw(10) << "df" << std::setw(12) << "p" << "\n";
  for (const TTestResult& r : results) {
    out << std::left << std::setw(14) << to_string(r.approach_a)
        << std::setw(14) << to_string(r.approach_b) << std::right
        << std::setw(6) << r.pair_count << std::setw(12) << std::fixed
        << std::setprecision(4) << r.t << std::setw(10)
        << r.degrees_of_freedom << std::setw(12) << std::setprecision(4)
        << r.p;
    if (r.degenerate) out << "  (degenerate: zero variance)";
    if (!r.excluded_clients.empty()) {
      out << "  excluded:";
      for (int id : r.excluded_clients) out << ' ' << id;
    }
    out << "\n";
    out.unsetf(std::ios::fixed);
  }
}

}  // namespace fedhpo
