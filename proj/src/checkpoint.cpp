#include <cstdlib>
#include <sstream>

#include "flowassoc/errors.hpp"
#include "flowassoc/flow.hpp"
#include "flowassoc/mot_io.hpp"

namespace flowassoc::flow {

namespace {

constexpr const char* kMagic = "flowassoc-checkpoint v1";

std::string join(const std::vector<double>& v) {
  std::string s;
  for (double x : v) s += " " + io::format_double(x);
  return s;
}

void write_flow(std::ostringstream& out, const FlowModel& m) {
  const auto& c = m.config();
  out << "config " << c.input_dim << ' ' << c.blocks << ' ' << c.hidden << ' ' << c.context_dim << ' ' << c.window_dim
      << ' ' << c.gru_hidden << ' ' << c.embed_dim << ' ' << c.scene_clusters << ' ' << (c.scene_conditioning ? 1 : 0)
      << ' ' << io::format_double(c.learning_rate) << ' ' << c.batch_size << ' ' << c.epochs << ' '
      << io::format_double(c.validation_fraction) << ' ' << c.seed << '\n';
  const auto& st = m.standardization();
  out << "mean" << join(st.mean) << '\n';
  out << "stddev" << join(st.stddev) << '\n';
  out << "window_scale" << join(st.window_scale) << '\n';
  out << "accept_nll " << io::format_double(m.accept_nll) << '\n';
  const auto& k = m.scene_clusters;
  out << "clusters " << (k.empty() ? 0 : k.k()) << ' ' << (k.empty() ? 0 : k.dim()) << '\n';
  if (!k.empty()) {
    out << "cluster_mean" << join(k.mean) << '\n';
    out << "cluster_stddev" << join(k.stddev) << '\n';
    out << "centroids" << join(std::vector<double>(k.centroids.data(), k.centroids.data() + k.centroids.size()))
        << '\n';
    out << "sse_history" << join(k.sse_history) << '\n';
  }
  out << "params " << m.params().size() << '\n';
  for (const auto& g : m.params().groups()) {
    out << g.name << ' ' << g.rows << ' ' << g.cols
        << join(std::vector<double>(m.params().values().begin() + static_cast<std::ptrdiff_t>(g.offset),
                                    m.params().values().begin() + static_cast<std::ptrdiff_t>(g.offset + g.size())))
        << '\n';
  }
}

class Reader {
 public:
  Reader(std::string path) : path_(std::move(path)), text_(io::read_file(path_)), in_(text_) {}

  /// Next line split into tokens; the first token must equal `key`.
  std::vector<std::string> expect(const std::string& key) {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file, expected '" + key + "'");
    ++line_;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty() || tok[0] != key) fail("expected '" + key + "'");
    tok.erase(tok.begin());
    return tok;
  }

  double number(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') fail("bad number '" + s + "'");
    return v;
  }
  long integer(const std::string& s) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') fail("bad integer '" + s + "'");
    return v;
  }
  std::vector<double> numbers(const std::vector<std::string>& tok, std::size_t from = 0) {
    std::vector<double> v;
    for (std::size_t i = from; i < tok.size(); ++i) v.push_back(number(tok[i]));
    return v;
  }
  std::vector<double> vec(const std::string& key, std::size_t n) {
    auto v = numbers(expect(key));
    if (v.size() != n) fail("'" + key + "' has " + std::to_string(v.size()) + " values, expected " + std::to_string(n));
    return v;
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_, what); }

 private:
  std::string path_;
  std::string text_;
  std::istringstream in_;
  std::size_t line_ = 0;
};

FlowModel read_flow(Reader& r) {
  const auto c = r.expect("config");
  if (c.size() != 14) r.fail("config needs 14 fields");
  FlowConfig cfg;
  cfg.input_dim = static_cast<int>(r.integer(c[0]));
  cfg.blocks = static_cast<int>(r.integer(c[1]));
  cfg.hidden = static_cast<int>(r.integer(c[2]));
  cfg.context_dim = static_cast<int>(r.integer(c[3]));
  cfg.window_dim = static_cast<int>(r.integer(c[4]));
  cfg.gru_hidden = static_cast<int>(r.integer(c[5]));
  cfg.embed_dim = static_cast<int>(r.integer(c[6]));
  cfg.scene_clusters = static_cast<int>(r.integer(c[7]));
  cfg.scene_conditioning = r.integer(c[8]) != 0;
  cfg.learning_rate = r.number(c[9]);
  cfg.batch_size = static_cast<int>(r.integer(c[10]));
  cfg.epochs = static_cast<int>(r.integer(c[11]));
  cfg.validation_fraction = r.number(c[12]);
  cfg.seed = std::strtoull(c[13].c_str(), nullptr, 10);
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    r.fail(std::string("invalid config: ") + e.what());
  }
  FlowModel m(cfg);
  auto& st = m.standardization();
  st.mean = r.vec("mean", static_cast<std::size_t>(cfg.input_dim));
  st.stddev = r.vec("stddev", static_cast<std::size_t>(cfg.input_dim));
  st.window_scale = r.vec("window_scale", static_cast<std::size_t>(cfg.window_dim));
  m.accept_nll = r.vec("accept_nll", 1)[0];

  const auto kc = r.expect("clusters");
  if (kc.size() != 2) r.fail("clusters needs k and dim");
  const long k = r.integer(kc[0]);
  const long dim = r.integer(kc[1]);
  if (k > 0) {
    auto& sc = m.scene_clusters;
    sc.mean = r.vec("cluster_mean", static_cast<std::size_t>(dim));
    sc.stddev = r.vec("cluster_stddev", static_cast<std::size_t>(dim));
    const auto cent = r.vec("centroids", static_cast<std::size_t>(k * dim));
    sc.centroids = Eigen::Map<const Eigen::MatrixXd>(cent.data(), dim, k);
    sc.sse_history = r.numbers(r.expect("sse_history"));
  }

  const auto pc = r.expect("params");
  if (pc.size() != 1 || static_cast<std::size_t>(r.integer(pc[0])) != m.params().size()) {
    r.fail("parameter count does not match config");
  }
  for (const auto& g : m.params().groups()) {
    const auto tok = r.expect(g.name);
    if (tok.size() < 2 || r.integer(tok[0]) != g.rows || r.integer(tok[1]) != g.cols) r.fail("shape mismatch for " + g.name);
    const auto v = r.numbers(tok, 2);
    if (v.size() != g.size()) r.fail("value count mismatch for " + g.name);
    std::copy(v.begin(), v.end(), m.params().values().begin() + static_cast<std::ptrdiff_t>(g.offset));
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const FlowModel& model) {
  std::ostringstream out;
  out << kMagic << "\nkind flow\n";
  write_flow(out, model);
  io::write_atomic(path, out.str());
}

void save_checkpoint(const std::string& path, const FactorizedModel& model) {
  std::ostringstream out;
  out << kMagic << "\nkind factorized\naccept_nll " << io::format_double(model.accept_nll) << '\n';
  for (const auto& p : model.parts) write_flow(out, p);
  io::write_atomic(path, out.str());
}

std::string checkpoint_kind(const std::string& path) {
  Reader r(path);
  if (r.expect("flowassoc-checkpoint") != std::vector<std::string>{"v1"}) r.fail("unsupported checkpoint version");
  const auto k = r.expect("kind");
  if (k.size() != 1 || (k[0] != "flow" && k[0] != "factorized")) r.fail("unknown checkpoint kind");
  return k[0];
}

FlowModel load_flow_checkpoint(const std::string& path) {
  if (checkpoint_kind(path) != "flow") throw InvalidArgument(path + ": not a joint flow checkpoint");
  Reader r(path);
  r.expect("flowassoc-checkpoint");
  r.expect("kind");
  return read_flow(r);
}

FactorizedModel load_factorized_checkpoint(const std::string& path) {
  if (checkpoint_kind(path) != "factorized") throw InvalidArgument(path + ": not a factorized checkpoint");
  Reader r(path);
  r.expect("flowassoc-checkpoint");
  r.expect("kind");
  FactorizedModel m;
  m.accept_nll = r.vec("accept_nll", 1)[0];
  for (auto& p : m.parts) p = read_flow(r);
  return m;
}

}  // namespace flowassoc::flow
