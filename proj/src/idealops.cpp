#include <qclab/idealops.hpp>

#include <algorithm>

namespace qclab {

namespace {

double parameter(const OperatorModelSpec& spec, const std::string& key, double fallback)
{
  const auto it = spec.parameters.find(key);
  return it == spec.parameters.end() ? fallback : it->second;
}

// Position-like diagonal min(j, L) / L with 1-based j.
Matrix position_diagonal(Eigen::Index n, double grid, bool reversed)
{
  Matrix t = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = std::min(static_cast<double>(i + 1), grid) / grid;
    t(i, i) = reversed ? 1.0 - x : x;
  }
  return t;
}

int natural_bandwidth(const std::string& name)
{
  if (name == "diagonal-grid") {
    return 0;
  }
  if (name == "lap-pos" || name == "shift-parts") {
    return 1;
  }
  throw InvalidInput("unknown operator model '" + name + "'");
}

} // namespace

OperatorModelSpec builtin_model(const std::string& name, int n, std::map<std::string, double> parameters)
{
  OperatorModelSpec spec;
  spec.name = name;
  spec.bandwidth = natural_bandwidth(name);
  if (name == "diagonal-grid") {
    spec.n = n > 0 ? n : 1;
  } else {
    spec.n = 2;
    require(n == 0 || n == 2, "model '" + name + "' is a pair; n must be 2");
  }
  spec.parameters = std::move(parameters);
  return spec;
}

HermitianTuple instantiate_model(const OperatorModelSpec& spec, Eigen::Index n)
{
  const int band = natural_bandwidth(spec.name);
  require(spec.bandwidth >= band, "model '" + spec.name + "' has bandwidth " + std::to_string(band) +
                                      ", declared " + std::to_string(spec.bandwidth));
  require(n >= 2 * static_cast<Eigen::Index>(spec.bandwidth) + 2,
          "instantiate_model: N = " + std::to_string(n) + " is below 2*bandwidth + 2");
  require(spec.n >= 1, "instantiate_model: tuple needs n >= 1");

  HermitianTuple tau;
  tau.bandwidth = spec.bandwidth;
  tau.source = spec;
  const double grid = parameter(spec, "grid", static_cast<double>(n));
  require(grid > 0.0, "instantiate_model: grid parameter must be positive");

  if (spec.name == "diagonal-grid") {
    for (int j = 0; j < spec.n; ++j) {
      tau.ops.push_back(position_diagonal(n, grid, j % 2 == 1));
    }
  } else if (spec.name == "lap-pos") {
    require(spec.n == 2, "lap-pos is a pair; n must be 2");
    const double scale = parameter(spec, "scale", 1.0);
    tau.ops.push_back(position_diagonal(n, grid, false));
    Matrix lap = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      lap(i, i) = 2.0 * scale;
      if (i + 1 < n) {
        lap(i, i + 1) = -scale;
        lap(i + 1, i) = -scale;
      }
    }
    tau.ops.push_back(std::move(lap));
  } else if (spec.name == "shift-parts") {
    require(spec.n == 2, "shift-parts is a pair; n must be 2");
    // unilateral shift V e_j = e_{j+1}; Re V = (V + V^*)/2, Im V = (V - V^*)/(2i)
    Matrix re = Matrix::Zero(n, n);
    Matrix im = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
      re(i + 1, i) = 0.5;
      re(i, i + 1) = 0.5;
      im(i + 1, i) = Complex(0.0, -0.5);
      im(i, i + 1) = Complex(0.0, 0.5);
    }
    tau.ops.push_back(std::move(re));
    tau.ops.push_back(std::move(im));
  }
  return tau;
}

HermitianTuple make_tuple(std::vector<Matrix> ops, std::string name)
{
  require(!ops.empty(), "make_tuple: empty tuple");
  const Eigen::Index n = ops.front().rows();
  int band = 0;
  for (const auto& t : ops) {
    require(t.rows() == n && t.cols() == n, "make_tuple: operators must share one square dimension");
    require((t - t.adjoint()).cwiseAbs().maxCoeff() <= 1e-12, "make_tuple: operator is not hermitian");
    for (Eigen::Index c = 0; c < n; ++c) {
      for (Eigen::Index r = 0; r < n; ++r) {
        if (t(r, c) != Complex(0.0)) {
          band = std::max(band, static_cast<int>(std::abs(r - c)));
        }
      }
    }
  }
  HermitianTuple tau;
  tau.bandwidth = band;
  tau.source.name = std::move(name);
  tau.source.n = static_cast<int>(ops.size());
  tau.source.bandwidth = band;
  tau.ops = std::move(ops);
  return tau;
}

bool is_real(const HermitianTuple& tau)
{
  return std::all_of(tau.ops.begin(), tau.ops.end(), [](const Matrix& t) { return t.imag().isZero(0.0); });
}

RealHermitianTuple real_part(const HermitianTuple& tau)
{
  RealHermitianTuple out{{}, tau.bandwidth, tau.source};
  for (const auto& t : tau.ops) {
    out.ops.push_back(t.real());
  }
  return out;
}

} // namespace qclab
