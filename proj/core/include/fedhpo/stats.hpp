#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fedhpo {

enum class Approach {
  kGlobalGrid,
  kLocalGrid,
  kGlobalBayes,
  kLocalBayes,
  kIndividual,
  kCentral,
  kFederated,
};

std::string to_string(Approach a);
Approach approach_from_string(const std::string& s);

struct ResultRow {
  int client_id = 0;
  int cohort_id = 0;
  Approach approach = Approach::kFederated;
  double accuracy = 0.0;
  double learning_rate = 0.0;  // 0 when not applicable
};

// Per-client, per-approach test accuracies. (client, approach) is unique and
// accuracies lie in [0, 1].
struct ResultTable {
  std::vector<ResultRow> rows;

  void add(ResultRow row);
  const ResultRow* find(int client_id, Approach a) const;
  std::vector<int> client_ids() const;  // sorted, unique
};

struct TTestResult {
  double t = 0.0;
  int degrees_of_freedom = 0;
  double p = 1.0;  // two-tailed
  bool degenerate = false;  // zero variance of differences
  Approach approach_a = Approach::kFederated;
  Approach approach_b = Approach::kFederated;
  int pair_count = 0;
  std::vector<int> excluded_clients;
};

// Paired two-tailed t-test on differences a - b (sample sd, n-1 denominator).
// Zero variance: p = 1 when the mean difference is 0, else p = 0, flagged.
TTestResult paired_t_test(const std::vector<double>& a,
                          const std::vector<double>& b);

// One test per approach pair over the non-excluded clients, paired by client
// id. A client missing either approach raises an error naming the gap.
std::vector<TTestResult> compare_approaches(
    const ResultTable& table,
    const std::vector<std::pair<Approach, Approach>>& pairs,
    const std::vector<int>& exclude_clients);

struct CohortSummaryRow {
  int cohort_id = 0;
  Approach approach = Approach::kFederated;
  int clients = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

std::vector<CohortSummaryRow> cohort_summary(const ResultTable& table);

// Regularized incomplete beta I_x(a, b) by continued fractions (1e-12
// convergence tolerance).
double regularized_incomplete_beta(double a, double b, double x);

// Two-tailed p-value of Student's t with df degrees of freedom.
double student_t_two_tailed_p(double t, int df);

// Results CSV: header `clientId,cohortId,approach,accuracy`, UTF-8, LF.
ResultTable load_result_table(const std::string& path);
void save_result_table(const ResultTable& table, const std::string& path);
void append_rows(ResultTable& into, const ResultTable& from);

void write_ttest_report(const std::vector<TTestResult>& results,
                        std::ostream& out);

}  // namespace fedhpo
