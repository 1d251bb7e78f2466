#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace abmsim {

/// One-dimensional target distribution for a single attribute.
struct MarginalTable {
  std::string axis;
  std::vector<std::string> bins;
  std::vector<double> counts;

  double total() const noexcept;
  /// Throws SchemaError on empty/duplicate bins, negative counts or zero total.
  void validate() const;
};

/// Dense joint table over several attributes, row-major (last axis fastest).
struct JointTable {
  std::vector<std::string> axes;
  std::vector<std::vector<std::string>> labels;
  std::vector<double> cells;

  std::size_t rank() const noexcept { return axes.size(); }
  std::vector<std::size_t> shape() const;
  std::size_t axis_index(const std::string& axis) const;
  /// Sum over all axes but `axis`.
  std::vector<double> marginal(std::size_t axis) const;
  double total() const noexcept;

  /// All-ones seed spanning the bins of the given marginals.
  static JointTable ones_like(const std::vector<MarginalTable>& marginals);
};

struct IpfResult {
  JointTable table;
  std::size_t iterations = 0;
  /// Residual before the first sweep followed by one entry per sweep.
  std::vector<double> residual_history;
  std::vector<std::string> warnings;

  double residual() const noexcept { return residual_history.back(); }
};

/// Max absolute deviation between the table's normalised axis marginals and
/// the normalised targets.
double ipf_residual(const JointTable& table, const std::vector<MarginalTable>& marginals);

/// Iterative proportional fitting of `seed` to the given axis marginals.
///
/// Targets whose totals disagree by more than 1e-6 relative are rescaled to
/// the mean total (recorded in `warnings`). Zero seed cells stay zero. Throws
/// InfeasibleError when a positive target bin has no support in the seed, and
/// ConvergenceError (carrying the last residual) after `max_iter` sweeps.
IpfResult ipf_fit(const JointTable& seed, std::vector<MarginalTable> marginals, double tol,
                  std::size_t max_iter);

}  // namespace abmsim
