#include "fairdi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

#include <boost/math/special_functions/gamma.hpp>

#include "fairdi/csv.hpp"
#include "fairdi/error.hpp"

namespace fairdi {
namespace {

void check_shape(const std::vector<std::vector<double>>& scores) {
  if (scores.empty()) throw Error(ErrorCode::invalid_input, "rank table has no tasks");
  const std::size_t k = scores.front().size();
  if (k < 2) throw Error(ErrorCode::invalid_input, "rank table needs at least two algorithms");
  for (const auto& row : scores) {
    if (row.size() != k) throw Error(ErrorCode::invalid_input, "rank table rows differ in length");
  }
}

// Per-row doubled ranks are integers, so statistics on them are exact.
std::vector<std::vector<std::int64_t>> doubled_ranks(const RankTable& t) {
  std::vector<std::vector<std::int64_t>> out;
  for (const auto& row : t.ranks) {
    std::vector<std::int64_t> r;
    for (const double v : row) r.push_back(std::llround(2.0 * v));
    out.push_back(std::move(r));
  }
  return out;
}

struct RowPerms {
  std::vector<std::vector<std::int64_t>> perms;  // distinct arrangements
  double weight = 1.0;                           // k! / number of distinct arrangements
};

}  // namespace

std::vector<std::vector<double>> rank_rows(const std::vector<std::vector<double>>& scores, bool higher_is_better) {
  check_shape(scores);
  std::vector<std::vector<double>> ranks;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& row = scores[i];
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (std::isnan(row[j])) {
        throw Error(ErrorCode::invalid_input,
                    "NaN score at row " + std::to_string(i) + ", column " + std::to_string(j));
      }
    }
    std::vector<std::size_t> order(row.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return higher_is_better ? row[a] > row[b] : row[a] < row[b];
    });
    std::vector<double> r(row.size());
    std::size_t a = 0;
    while (a < order.size()) {
      std::size_t b = a + 1;
      while (b < order.size() && row[order[b]] == row[order[a]]) ++b;
      const double mid = static_cast<double>(a + 1 + b) / 2.0;
      for (std::size_t m = a; m < b; ++m) r[order[m]] = mid;
      a = b;
    }
    ranks.push_back(std::move(r));
  }
  return ranks;
}

RankTable make_rank_table(std::vector<std::string> algorithms, std::vector<std::string> tasks,
                          std::vector<std::vector<double>> scores, bool higher_is_better) {
  check_shape(scores);
  if (algorithms.size() != scores.front().size()) {
    throw Error(ErrorCode::invalid_input, "algorithm names do not match score columns");
  }
  if (tasks.size() != scores.size()) throw Error(ErrorCode::invalid_input, "task names do not match score rows");
  RankTable t;
  t.algorithms = std::move(algorithms);
  t.tasks = std::move(tasks);
  t.scores = std::move(scores);
  t.higher_is_better = higher_is_better;
  t.ranks = rank_rows(t.scores, higher_is_better);
  return t;
}

RankTable load_rank_table(const std::filesystem::path& path, bool higher_is_better) {
  const CsvTable csv = read_csv(path);
  const std::string src = path.string();
  if (csv.header.size() < 3) throw Error(ErrorCode::parse_error, src + ": need a task column and two algorithms");
  std::vector<std::string> algs(csv.header.begin() + 1, csv.header.end());
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> scores;
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    tasks.push_back(csv.rows[r][0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < csv.rows[r].size(); ++j) {
      row.push_back(parse_double_field(csv.rows[r][j], src, csv.line_numbers[r]));
    }
    scores.push_back(std::move(row));
  }
  if (scores.empty()) throw Error(ErrorCode::parse_error, src + ": no tasks");
  return make_rank_table(std::move(algs), std::move(tasks), std::move(scores), higher_is_better);
}

std::vector<double> average_ranks(const RankTable& t) {
  std::vector<double> avg(t.algorithms.size(), 0.0);
  for (const auto& row : t.ranks) {
    for (std::size_t j = 0; j < row.size(); ++j) avg[j] += row[j];
  }
  for (auto& v : avg) v /= static_cast<double>(t.ranks.size());
  return avg;
}

double chi_square_sf(double x, int dof) {
  if (dof < 1) throw Error(ErrorCode::invalid_parameter, "chi-square needs dof >= 1");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

FriedmanResult friedman(const RankTable& t) {
  if (t.ranks.size() < 2) throw Error(ErrorCode::invalid_input, "Friedman test needs at least two tasks");
  const std::size_t k = t.algorithms.size();
  if (k < 2) throw Error(ErrorCode::invalid_input, "Friedman test needs at least two algorithms");
  const double n = static_cast<double>(t.ranks.size());
  const double kd = static_cast<double>(k);
  const double centre = n * (kd + 1.0) / 2.0;
  double ss = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double rj = 0.0;
    for (const auto& row : t.ranks) rj += row[j];
    ss += (rj - centre) * (rj - centre);
  }
  FriedmanResult r;
  r.dof = static_cast<int>(k) - 1;
  r.chi2 = 12.0 / (n * kd * (kd + 1.0)) * ss;
  if (!std::isfinite(r.chi2)) throw Error(ErrorCode::invalid_input, "degenerate rank table");
  r.p_value = chi_square_sf(r.chi2, r.dof);
  return r;
}

double friedman_exact_p(const RankTable& t, double max_permutations) {
  if (t.ranks.empty()) throw Error(ErrorCode::invalid_input, "empty rank table");
  const std::size_t k = t.algorithms.size();
  double k_fact = 1.0;
  for (std::size_t i = 2; i <= k; ++i) k_fact *= static_cast<double>(i);
  if (std::pow(k_fact, static_cast<double>(t.ranks.size())) > max_permutations) {
    throw Error(ErrorCode::invalid_input, "too many permutations for exact enumeration");
  }

  const auto rows = doubled_ranks(t);
  std::vector<RowPerms> perms;
  for (const auto& row : rows) {
    RowPerms rp;
    std::vector<std::int64_t> v = row;
    std::sort(v.begin(), v.end());
    do {
      rp.perms.push_back(v);
    } while (std::next_permutation(v.begin(), v.end()));
    rp.weight = k_fact / static_cast<double>(rp.perms.size());
    perms.push_back(std::move(rp));
  }

  // Column rank-sum sum of squares orders tables exactly as chi-square does.
  auto sum_sq = [](const std::vector<std::int64_t>& sums) {
    std::int64_t s = 0;
    for (const auto v : sums) s += v * v;
    return s;
  };
  std::vector<std::int64_t> observed(k, 0);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < k; ++j) observed[j] += row[j];
  }
  const std::int64_t target = sum_sq(observed);

  double hits = 0.0;
  double total = 0.0;
  std::vector<std::int64_t> sums(k, 0);
  auto recurse = [&](auto&& self, std::size_t i, double w) -> void {
    if (i == perms.size()) {
      total += w;
      if (sum_sq(sums) >= target) hits += w;
      return;
    }
    for (const auto& p : perms[i].perms) {
      for (std::size_t j = 0; j < k; ++j) sums[j] += p[j];
      self(self, i + 1, w * perms[i].weight);
      for (std::size_t j = 0; j < k; ++j) sums[j] -= p[j];
    }
  };
  recurse(recurse, 0, 1.0);
  return hits / total;
}

double nemenyi_q(int k, double alpha) {
  static constexpr double q05[] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164};
  static constexpr double q10[] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920};
  if (k < 2 || k > 10) throw Error(ErrorCode::unsupported_k, "no studentized-range constant for k=" + std::to_string(k));
  if (std::abs(alpha - 0.05) < 1e-12) return q05[k - 2];
  if (std::abs(alpha - 0.10) < 1e-12) return q10[k - 2];
  throw Error(ErrorCode::invalid_parameter, "alpha must be 0.05 or 0.10");
}

double nemenyi_cd(int k, int n, double alpha) {
  if (n < 1) throw Error(ErrorCode::invalid_parameter, "N must be positive");
  const double q = nemenyi_q(k, alpha);
  return q * std::sqrt(static_cast<double>(k) * (k + 1) / (6.0 * n));
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_cliques(const std::vector<double>& sorted_ranks,
                                                                     double cd) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const std::size_t n = sorted_ranks.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t j = i;
    while (j + 1 < n && sorted_ranks[j + 1] - sorted_ranks[i] <= cd) ++j;
    if (out.empty() || j > out.back().second) out.emplace_back(i, j);
  }
  return out;
}

CdDiagram cd_diagram_data(const RankTable& t, double alpha) {
  CdDiagram d;
  d.alpha = alpha;
  d.friedman = friedman(t);
  d.cd = nemenyi_cd(static_cast<int>(t.algorithms.size()), static_cast<int>(t.ranks.size()), alpha);
  const auto avg = average_ranks(t);
  for (std::size_t j = 0; j < avg.size(); ++j) d.ranking.push_back({t.algorithms[j], avg[j]});
  std::stable_sort(d.ranking.begin(), d.ranking.end(),
                   [](const RankedAlgorithm& a, const RankedAlgorithm& b) { return a.avg_rank < b.avg_rank; });
  d.gate_passed = d.friedman.p_value < alpha;
  if (!d.gate_passed) return d;
  std::vector<double> sorted;
  for (const auto& r : d.ranking) sorted.push_back(r.avg_rank);
  for (const auto& [a, b] : contiguous_cliques(sorted, d.cd)) {
    std::vector<std::string> names;
    for (std::size_t i = a; i <= b; ++i) names.push_back(d.ranking[i].name);
    d.cliques.push_back(std::move(names));
  }
  return d;
}

nlohmann::json cd_diagram_to_json(const CdDiagram& d) {
  nlohmann::json j;
  j["alpha"] = d.alpha;
  j["chi2"] = d.friedman.chi2;
  j["p_value"] = d.friedman.p_value;
  j["dof"] = d.friedman.dof;
  j["cd"] = d.cd;
  j["gate_passed"] = d.gate_passed;
  j["ranking"] = nlohmann::json::array();
  for (const auto& r : d.ranking) j["ranking"].push_back({{"algorithm", r.name}, {"avg_rank", r.avg_rank}});
  if (d.gate_passed) {
    j["cliques"] = d.cliques;
  } else {
    j["cliques"] = nullptr;
    j["gate"] = "failed";
  }
  return j;
}

std::string ranks_to_csv(const RankTable& t) {
  std::ostringstream out;
  out << "task";
  for (const auto& a : t.algorithms) out << "," << a;
  out << "\n";
  for (std::size_t i = 0; i < t.ranks.size(); ++i) {
    out << t.tasks[i];
    for (const double r : t.ranks[i]) out << "," << format_double(r);
    out << "\n";
  }
  return out.str();
}

}  // namespace fairdi
