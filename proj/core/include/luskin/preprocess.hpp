#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "luskin/tabular.hpp"

namespace luskin {

struct FeatureMatrix {
  Eigen::MatrixXd features;
  /// Empty when the table has no label column.
  std::vector<int> labels;
  std::vector<std::string> feature_names;
};

/// Turns a Table into a numeric design matrix.
///
/// Feature columns are every protected or unprotected column not named in the
/// drop list. Numeric columns are standardized with the fit-time mean and
/// population standard deviation (constant columns map to 0). Binary columns
/// map to {0, 1} by sorted vocabulary. Categorical columns are one-hot encoded
/// with the fit-time vocabulary; unseen categories encode as all zeros.
class Preprocessor {
 public:
  Preprocessor() = default;

  static Preprocessor fit(const Table& table, const std::vector<std::string>& drops = {});

  bool fitted() const noexcept { return fitted_; }
  std::size_t output_dimension() const noexcept { return dimension_; }
  std::vector<std::string> feature_names() const;

  FeatureMatrix apply(const Table& table) const;
  Eigen::MatrixXd transform(const Table& table) const;

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& doc);

 private:
  struct ColumnTransform {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    double mean = 0.0;
    double scale = 0.0;  // 0 marks a constant column
    std::vector<std::string> vocabulary;
  };

  std::vector<ColumnTransform> columns_;
  std::size_t dimension_ = 0;
  bool fitted_ = false;
};

/// Principal components of a data matrix (population covariance).
class PcaModel {
 public:
  PcaModel() = default;

  /// Throws for k == 0, k > columns, fewer than two rows, or zero variance.
  static PcaModel fit(const Eigen::MatrixXd& data, std::size_t k);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(components_.rows()); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  /// k x d, rows orthonormal, largest-magnitude entry of each row positive.
  const Eigen::MatrixXd& components() const noexcept { return components_; }
  /// Eigenvalues matching each component, non-increasing.
  const Eigen::VectorXd& explained_variance() const noexcept { return variance_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& data) const;
  Eigen::MatrixXd reconstruct(const Eigen::MatrixXd& projected) const;

  nlohmann::json to_json() const;
  static PcaModel from_json(const nlohmann::json& doc);

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd components_;
  Eigen::VectorXd variance_;
};

/// Row-major CSV with 17 significant digits per entry.
std::string format_matrix_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& header = {});

}  // namespace luskin
