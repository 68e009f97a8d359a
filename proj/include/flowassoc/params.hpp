#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace flowassoc {

struct ParamGroup {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

/// All trainable parameters in one flat buffer; groups are column-major
/// matrix views into it. Gradients use the same layout.
class ParamStore {
 public:
  using MatMap = Eigen::Map<Eigen::MatrixXd>;
  using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

  int add(const std::string& name, int rows, int cols);

  MatMap mat(int group) { return view(values_, group); }
  ConstMatMap mat(int group) const { return view(values_, group); }

  static MatMap view(std::vector<double>& buffer, const ParamGroup& g) {
    return MatMap(buffer.data() + g.offset, g.rows, g.cols);
  }
  static ConstMatMap view(const std::vector<double>& buffer, const ParamGroup& g) {
    return ConstMatMap(buffer.data() + g.offset, g.rows, g.cols);
  }
  MatMap view(std::vector<double>& buffer, int group) const { return view(buffer, groups_.at(group)); }
  ConstMatMap view(const std::vector<double>& buffer, int group) const { return view(buffer, groups_.at(group)); }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }
  std::size_t size() const { return values_.size(); }
  int find(const std::string& name) const;  // -1 if absent

 private:
  std::vector<double> values_;
  std::vector<ParamGroup> groups_;
};

}  // namespace flowassoc
