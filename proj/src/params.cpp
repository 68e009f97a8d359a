#include "flowassoc/params.hpp"

#include "flowassoc/errors.hpp"

namespace flowassoc {

int ParamStore::add(const std::string& name, int rows, int cols) {
  if (rows < 0 || cols < 0) throw InvalidArgument("negative parameter shape for " + name);
  if (find(name) >= 0) throw InvalidArgument("duplicate parameter group " + name);
  ParamGroup g{name, values_.size(), rows, cols};
  values_.resize(values_.size() + g.size(), 0.0);
  groups_.push_back(g);
  return static_cast<int>(groups_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i) {
    if (groups_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace flowassoc
