#include "luskin/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Eigenvalues>

#include "luskin/error.hpp"

namespace luskin {
namespace {

bool is_feature(const ColumnSchema& col, const std::vector<std::string>& drops) {
  if (col.role == ColumnRole::label || col.role == ColumnRole::ignore) return false;
  return std::find(drops.begin(), drops.end(), col.name) == drops.end();
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

Preprocessor Preprocessor::fit(const Table& table, const std::vector<std::string>& drops) {
  if (table.empty()) throw InvalidInput("cannot fit a preprocessor on an empty table");
  const auto& schema = table.schema();
  for (const auto& d : drops) schema.index_of(d);

  Preprocessor p;
  const double n = static_cast<double>(table.row_count());
  for (std::size_t c = 0; c < schema.size(); ++c) {
    const auto& col = schema[c];
    if (!is_feature(col, drops)) continue;
    ColumnTransform t;
    t.name = col.name;
    t.kind = col.kind;
    if (col.kind == ColumnKind::numeric) {
      double sum = 0.0;
      for (std::size_t r = 0; r < table.row_count(); ++r) sum += table.number(r, c);
      t.mean = sum / n;
      double ss = 0.0;
      for (std::size_t r = 0; r < table.row_count(); ++r) {
        const double d = table.number(r, c) - t.mean;
        ss += d * d;
      }
      const double sd = std::sqrt(ss / n);
      t.scale = sd > 1e-12 * std::max(1.0, std::abs(t.mean)) ? sd : 0.0;
      p.dimension_ += 1;
    } else {
      std::set<std::string> vocab;
      for (std::size_t r = 0; r < table.row_count(); ++r) vocab.insert(table.symbol(r, c));
      t.vocabulary.assign(vocab.begin(), vocab.end());
      if (col.kind == ColumnKind::binary) {
        if (t.vocabulary.size() > 2) {
          throw InvalidInput("binary column '" + col.name + "' has " +
                             std::to_string(t.vocabulary.size()) + " distinct values");
        }
        p.dimension_ += 1;
      } else {
        p.dimension_ += t.vocabulary.size();
      }
    }
    p.columns_.push_back(std::move(t));
  }
  if (p.dimension_ == 0) throw InvalidInput("no feature columns to fit");
  p.fitted_ = true;
  return p;
}

std::vector<std::string> Preprocessor::feature_names() const {
  std::vector<std::string> names;
  for (const auto& t : columns_) {
    if (t.kind == ColumnKind::categorical) {
      for (const auto& v : t.vocabulary) names.push_back(t.name + "=" + v);
    } else {
      names.push_back(t.name);
    }
  }
  return names;
}

Eigen::MatrixXd Preprocessor::transform(const Table& table) const {
  if (!fitted_) throw InvalidInput("preprocessor applied before fit");
  const auto& schema = table.schema();
  const auto rows = static_cast<Eigen::Index>(table.row_count());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(dimension_));
  Eigen::Index offset = 0;
  for (const auto& t : columns_) {
    const auto c = schema.index_of(t.name);
    const auto& col = schema[c];
    if (col.kind != t.kind || col.role == ColumnRole::ignore || col.role == ColumnRole::label) {
      throw InvalidInput("column '" + t.name + "' changed type since fit");
    }
    if (t.kind == ColumnKind::numeric) {
      if (t.scale != 0.0) {
        for (Eigen::Index r = 0; r < rows; ++r) {
          out(r, offset) = (table.number(static_cast<std::size_t>(r), c) - t.mean) / t.scale;
        }
      }
      offset += 1;
    } else if (t.kind == ColumnKind::binary) {
      if (t.vocabulary.size() == 2) {
        for (Eigen::Index r = 0; r < rows; ++r) {
          out(r, offset) = table.symbol(static_cast<std::size_t>(r), c) == t.vocabulary[1] ? 1.0 : 0.0;
        }
      }
      offset += 1;
    } else {
      for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& s = table.symbol(static_cast<std::size_t>(r), c);
        auto it = std::lower_bound(t.vocabulary.begin(), t.vocabulary.end(), s);
        if (it != t.vocabulary.end() && *it == s) {
          out(r, offset + (it - t.vocabulary.begin())) = 1.0;
        }
      }
      offset += static_cast<Eigen::Index>(t.vocabulary.size());
    }
  }
  return out;
}

FeatureMatrix Preprocessor::apply(const Table& table) const {
  FeatureMatrix fm;
  fm.features = transform(table);
  if (table.has_label()) fm.labels = table.labels();
  fm.feature_names = feature_names();
  return fm;
}

nlohmann::json Preprocessor::to_json() const {
  auto cols = nlohmann::json::array();
  for (const auto& t : columns_) {
    cols.push_back({{"name", t.name},
                    {"kind", std::string(to_string(t.kind))},
                    {"mean", t.mean},
                    {"scale", t.scale},
                    {"vocabulary", t.vocabulary}});
  }
  return {{"fitted", fitted_}, {"dimension", dimension_}, {"columns", cols}};
}

Preprocessor Preprocessor::from_json(const nlohmann::json& doc) {
  Preprocessor p;
  p.fitted_ = doc.at("fitted").get<bool>();
  p.dimension_ = doc.at("dimension").get<std::size_t>();
  for (const auto& c : doc.at("columns")) {
    ColumnTransform t;
    t.name = c.at("name").get<std::string>();
    t.kind = parse_column_kind(c.at("kind").get<std::string>());
    t.mean = c.at("mean").get<double>();
    t.scale = c.at("scale").get<double>();
    t.vocabulary = c.at("vocabulary").get<std::vector<std::string>>();
    p.columns_.push_back(std::move(t));
  }
  return p;
}

// ---------------------------------------------------------------- PCA

PcaModel PcaModel::fit(const Eigen::MatrixXd& data, std::size_t k) {
  const auto n = data.rows();
  const auto d = data.cols();
  if (k == 0 || static_cast<Eigen::Index>(k) > d) {
    throw InvalidInput("PCA dimension " + std::to_string(k) + " out of range 1.." + std::to_string(d));
  }
  if (n < 2) throw InvalidInput("PCA needs at least two rows");
  if ((data.rowwise() - data.row(0)).cwiseAbs().maxCoeff() == 0.0) {
    throw InvalidInput("PCA input rows are all identical");
  }

  PcaModel m;
  m.mean_ = data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = data.rowwise() - m.mean_.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("PCA eigendecomposition failed");

  // Eigen returns ascending eigenvalues.
  const auto kk = static_cast<Eigen::Index>(k);
  m.components_.resize(kk, d);
  m.variance_.resize(kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    const Eigen::Index src = d - 1 - i;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    m.components_.row(i) = v.transpose();
    m.variance_(i) = std::max(0.0, solver.eigenvalues()(src));
  }
  return m;
}

Eigen::MatrixXd PcaModel::apply(const Eigen::MatrixXd& data) const {
  if (data.cols() != components_.cols()) throw InvalidInput("PCA input dimension mismatch");
  return (data.rowwise() - mean_.transpose()) * components_.transpose();
}

Eigen::MatrixXd PcaModel::reconstruct(const Eigen::MatrixXd& projected) const {
  if (projected.cols() != components_.rows()) throw InvalidInput("PCA projection dimension mismatch");
  return (projected * components_).rowwise() + mean_.transpose();
}

nlohmann::json PcaModel::to_json() const {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < components_.rows(); ++i) {
    rows.push_back(to_vector(components_.row(i).transpose()));
  }
  return {{"mean", to_vector(mean_)}, {"components", rows}, {"variance", to_vector(variance_)}};
}

PcaModel PcaModel::from_json(const nlohmann::json& doc) {
  PcaModel m;
  m.mean_ = from_vector(doc.at("mean").get<std::vector<double>>());
  m.variance_ = from_vector(doc.at("variance").get<std::vector<double>>());
  const auto& rows = doc.at("components");
  m.components_.resize(static_cast<Eigen::Index>(rows.size()), m.mean_.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.components_.row(static_cast<Eigen::Index>(i)) = from_vector(rows[i].get<std::vector<double>>()).transpose();
  }
  return m;
}

std::string format_matrix_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out.push_back(',');
      out += quote_csv_field(header[i]);
    }
    out.push_back('\n');
  }
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c) out.push_back(',');
      out += format_number17(matrix(r, c));
    }
    out.push_back('\n');
  }
  return out;
}

}  // namespace luskin
