#include <qclab/gauges.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace qclab {

GaugeSpec GaugeSpec::schatten(double p)
{
  GaugeSpec g{GaugeFamily::SchattenP, p, 1, {}};
  g.label = describe(g);
  return g;
}

GaugeSpec GaugeSpec::ky_fan(int k)
{
  GaugeSpec g{GaugeFamily::KyFan, 1.0, k, {}};
  g.label = describe(g);
  return g;
}

GaugeSpec GaugeSpec::ky_fan_dual(int k)
{
  GaugeSpec g{GaugeFamily::KyFanDual, 1.0, k, {}};
  g.label = describe(g);
  return g;
}

GaugeSpec GaugeSpec::sup()
{
  GaugeSpec g{GaugeFamily::Sup, 1.0, 1, {}};
  g.label = describe(g);
  return g;
}

void validate(const GaugeSpec& g)
{
  switch (g.family) {
  case GaugeFamily::SchattenP:
    if (!(g.p >= 1.0) || !std::isfinite(g.p)) {
      throw InvalidInput("SchattenP gauge needs a finite exponent p >= 1, got " + std::to_string(g.p));
    }
    break;
  case GaugeFamily::KyFan:
  case GaugeFamily::KyFanDual:
    if (g.k < 1) {
      throw InvalidInput("KyFan gauge needs k >= 1, got " + std::to_string(g.k));
    }
    break;
  case GaugeFamily::Sup:
    break;
  }
}

std::string describe(const GaugeSpec& g)
{
  std::ostringstream os;
  switch (g.family) {
  case GaugeFamily::SchattenP:
    os << "schatten-" << g.p;
    break;
  case GaugeFamily::KyFan:
    os << "kyfan-" << g.k;
    break;
  case GaugeFamily::KyFanDual:
    os << "kyfan-dual-" << g.k;
    break;
  case GaugeFamily::Sup:
    os << "sup";
    break;
  }
  return os.str();
}

double evaluate(const GaugeSpec& g, std::span<const double> t)
{
  validate(g);
  if (t.empty()) {
    return 0.0;
  }
  switch (g.family) {
  case GaugeFamily::SchattenP: {
    if (g.p == 1.0) {
      return std::accumulate(t.begin(), t.end(), 0.0);
    }
    // scale by the largest entry to keep t^p in range
    const double top = t.front();
    if (top == 0.0) {
      return 0.0;
    }
    double acc = 0.0;
    for (double v : t) {
      acc += std::pow(v / top, g.p);
    }
    return top * std::pow(acc, 1.0 / g.p);
  }
  case GaugeFamily::KyFan: {
    const auto count = std::min<std::size_t>(t.size(), static_cast<std::size_t>(g.k));
    return std::accumulate(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  }
  case GaugeFamily::KyFanDual:
    return std::max(t.front(), std::accumulate(t.begin(), t.end(), 0.0) / g.k);
  case GaugeFamily::Sup:
    return t.front();
  }
  return 0.0;
}

Vector gauge_weights(const GaugeSpec& g, std::span<const double> s)
{
  validate(g);
  const auto n = static_cast<Eigen::Index>(s.size());
  Vector d = Vector::Zero(n);
  if (n == 0) {
    return d;
  }
  const double value = evaluate(g, s);
  const double tiny = 1e-14 * std::max(1.0, s.front());
  switch (g.family) {
  case GaugeFamily::SchattenP:
    if (value == 0.0) {
      break;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (g.p == 1.0) {
        d(i) = s[i] > tiny ? 1.0 : 0.0;
      } else {
        d(i) = std::pow(s[i] / value, g.p - 1.0);
      }
    }
    break;
  case GaugeFamily::KyFan:
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(n, g.k); ++i) {
      d(i) = 1.0;
    }
    break;
  case GaugeFamily::KyFanDual: {
    const double mean_part = std::accumulate(s.begin(), s.end(), 0.0) / g.k;
    if (s.front() >= mean_part) {
      d(0) = 1.0;
    } else {
      d.setConstant(1.0 / g.k);
    }
    break;
  }
  case GaugeFamily::Sup:
    d(0) = 1.0;
    break;
  }
  return d;
}

GaugeSpec conjugate_gauge(const GaugeSpec& g)
{
  validate(g);
  switch (g.family) {
  case GaugeFamily::SchattenP:
    if (g.p == 1.0) {
      return GaugeSpec::sup();
    }
    return GaugeSpec::schatten(g.p / (g.p - 1.0));
  case GaugeFamily::KyFan:
    return GaugeSpec::ky_fan_dual(g.k);
  case GaugeFamily::KyFanDual:
    return GaugeSpec::ky_fan(g.k);
  case GaugeFamily::Sup:
    return GaugeSpec::schatten(1.0);
  }
  return g;
}

bool is_excluded_duality(const GaugeSpec& g)
{
  return (g.family == GaugeFamily::SchattenP && g.p == 1.0) || g.family == GaugeFamily::Sup;
}

bool is_mononorming(const GaugeSpec& g)
{
  validate(g);
  return true;
}

} // namespace qclab
