#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace fairdi {

// Algorithms x tasks score matrix. scores[i][j] is algorithm j on task i.
struct RankTable {
  std::vector<std::string> algorithms;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> scores;
  bool higher_is_better = true;
  std::vector<std::vector<double>> ranks;  // 1 = best, ties averaged
};

// Fractional ranking of each row. NaN scores throw invalid_input naming the cell.
std::vector<std::vector<double>> rank_rows(const std::vector<std::vector<double>>& scores, bool higher_is_better);

RankTable make_rank_table(std::vector<std::string> algorithms, std::vector<std::string> tasks,
                          std::vector<std::vector<double>> scores, bool higher_is_better);

// Scores CSV: header "task,<alg1>,<alg2>,...", one row per task.
RankTable load_rank_table(const std::filesystem::path& path, bool higher_is_better);

std::vector<double> average_ranks(const RankTable& table);

struct FriedmanResult {
  double chi2 = 0.0;
  double p_value = 1.0;
  int dof = 0;
};

// Upper tail of the chi-square distribution.
double chi_square_sf(double x, int dof);

FriedmanResult friedman(const RankTable& table);

// Exact permutation p-value of the Friedman statistic: the share of all
// (k!)^N within-row rank permutations with a statistic at least as large as
// the observed one. Refuses tables with more than max_permutations arrangements.
double friedman_exact_p(const RankTable& table, double max_permutations = 1e7);

// Two-tailed studentized-range constants divided by sqrt(2); alpha is 0.05 or 0.10.
double nemenyi_q(int k, double alpha);
double nemenyi_cd(int k, int n, double alpha);

struct RankedAlgorithm {
  std::string name;
  double avg_rank = 0.0;
};

// Maximal runs of the rank-sorted algorithms whose spread is within cd,
// as index ranges [first, last] into the sorted list.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_cliques(const std::vector<double>& sorted_ranks, double cd);

struct CdDiagram {
  std::vector<RankedAlgorithm> ranking;  // ascending average rank
  double cd = 0.0;
  double alpha = 0.05;
  FriedmanResult friedman;
  bool gate_passed = false;
  std::vector<std::vector<std::string>> cliques;  // empty when the gate fails
};

CdDiagram cd_diagram_data(const RankTable& table, double alpha = 0.05);

nlohmann::json cd_diagram_to_json(const CdDiagram& d);
std::string ranks_to_csv(const RankTable& table);

}  // namespace fairdi
