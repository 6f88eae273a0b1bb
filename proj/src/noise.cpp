#include "cfl/noise.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cfl/errors.hpp"

namespace cfl {

namespace {

constexpr double kProbSumTol = 1e-12;

void check_probability(double p, const std::string& who) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ValidationError(who + ": probability " + std::to_string(p) + " outside [0,1]");
  }
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

NoiseSpec NoiseSpec::point_mass(std::string name, double c) {
  NoiseSpec s;
  s.name_ = std::move(name);
  s.kind_ = DistKind::PointMass;
  s.a_ = c;
  return s;
}

NoiseSpec NoiseSpec::bernoulli(std::string name, double p) {
  check_probability(p, name);
  NoiseSpec s;
  s.name_ = std::move(name);
  s.kind_ = DistKind::Bernoulli;
  s.a_ = p;
  return s;
}

NoiseSpec NoiseSpec::discrete(std::string name, std::vector<WeightedValue> atoms) {
  if (atoms.empty()) throw ValidationError(name + ": discrete distribution needs atoms");
  double sum = 0.0;
  std::set<double> seen;
  for (const auto& a : atoms) {
    check_probability(a.prob, name);
    if (!seen.insert(a.value).second) {
      throw ValidationError(name + ": duplicate atom value " + format_real(a.value));
    }
    sum += a.prob;
  }
  if (std::abs(sum - 1.0) > kProbSumTol) {
    throw ValidationError(name + ": atom probabilities sum to " + format_real(sum));
  }
  NoiseSpec s;
  s.name_ = std::move(name);
  s.kind_ = DistKind::Discrete;
  s.atoms_ = std::move(atoms);
  return s;
}

NoiseSpec NoiseSpec::uniform(std::string name, double a, double b) {
  if (!(a < b)) {
    throw ValidationError(name + ": uniform requires a < b, got [" + format_real(a) + ", " +
                          format_real(b) + "]");
  }
  NoiseSpec s;
  s.name_ = std::move(name);
  s.kind_ = DistKind::Uniform;
  s.a_ = a;
  s.b_ = b;
  return s;
}

NoiseSpec NoiseSpec::gaussian(std::string name, double mean, double variance) {
  if (!(variance >= 0.0)) {
    throw ValidationError(name + ": gaussian variance must be >= 0, got " + format_real(variance));
  }
  NoiseSpec s;
  s.name_ = std::move(name);
  s.kind_ = DistKind::Gaussian;
  s.a_ = mean;
  s.b_ = variance;
  return s;
}

bool NoiseSpec::finite_support() const {
  switch (kind_) {
    case DistKind::PointMass:
    case DistKind::Bernoulli:
    case DistKind::Discrete:
      return true;
    case DistKind::Gaussian:
      return b_ == 0.0;
    case DistKind::Uniform:
      return false;
  }
  return false;
}

std::vector<WeightedValue> NoiseSpec::support() const {
  switch (kind_) {
    case DistKind::PointMass:
      return {{a_, 1.0}};
    case DistKind::Bernoulli: {
      std::vector<WeightedValue> out;
      if (a_ < 1.0) out.push_back({0.0, 1.0 - a_});
      if (a_ > 0.0) out.push_back({1.0, a_});
      return out;
    }
    case DistKind::Discrete: {
      std::vector<WeightedValue> out;
      for (const auto& a : atoms_)
        if (a.prob > 0.0) out.push_back(a);
      return out;
    }
    case DistKind::Gaussian:
      if (b_ == 0.0) return {{a_, 1.0}};
      throw NotEnumerable(name_ + " has continuous support (gaussian)");
    case DistKind::Uniform:
      throw NotEnumerable(name_ + " has continuous support (uniform)");
  }
  throw NotEnumerable(name_);
}

double NoiseSpec::mean() const {
  switch (kind_) {
    case DistKind::PointMass:
      return a_;
    case DistKind::Bernoulli:
      return a_;
    case DistKind::Discrete: {
      double m = 0.0;
      for (const auto& a : atoms_) m += a.value * a.prob;
      return m;
    }
    case DistKind::Uniform:
      return 0.5 * (a_ + b_);
    case DistKind::Gaussian:
      return a_;
  }
  return 0.0;
}

double NoiseSpec::variance() const {
  switch (kind_) {
    case DistKind::PointMass:
      return 0.0;
    case DistKind::Bernoulli:
      return a_ * (1.0 - a_);
    case DistKind::Discrete: {
      const double m = mean();
      double v = 0.0;
      for (const auto& a : atoms_) v += (a.value - m) * (a.value - m) * a.prob;
      return v;
    }
    case DistKind::Uniform: {
      const double w = b_ - a_;
      return w * w / 12.0;
    }
    case DistKind::Gaussian:
      return b_;
  }
  return 0.0;
}

bool NoiseSpec::contains(double v) const {
  switch (kind_) {
    case DistKind::PointMass:
      return v == a_;
    case DistKind::Bernoulli:
      return v == 0.0 || v == 1.0;
    case DistKind::Discrete:
      for (const auto& a : atoms_)
        if (a.value == v) return true;
      return false;
    case DistKind::Uniform:
      return v >= a_ && v <= b_;
    case DistKind::Gaussian:
      return b_ > 0.0 || v == a_;
  }
  return false;
}

double NoiseSpec::sample(RngStream& rng) const {
  switch (kind_) {
    case DistKind::PointMass:
      return a_;
    case DistKind::Bernoulli:
      return rng.uniform01() < a_ ? 1.0 : 0.0;
    case DistKind::Discrete: {
      // CDF inversion in declaration order.
      const double u = rng.uniform01();
      double acc = 0.0;
      for (const auto& a : atoms_) {
        acc += a.prob;
        if (u < acc) return a.value;
      }
      return atoms_.back().value;
    }
    case DistKind::Uniform:
      return a_ + (b_ - a_) * rng.uniform01();
    case DistKind::Gaussian:
      return b_ == 0.0 ? a_ : a_ + std::sqrt(b_) * rng.gaussian01();
  }
  return 0.0;
}

bool NoiseSpec::operator==(const NoiseSpec& other) const {
  if (name_ != other.name_ || kind_ != other.kind_ || a_ != other.a_ || b_ != other.b_)
    return false;
  if (atoms_.size() != other.atoms_.size()) return false;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (atoms_[i].value != other.atoms_[i].value || atoms_[i].prob != other.atoms_[i].prob)
      return false;
  }
  return true;
}

NoiseSpace::NoiseSpace(std::vector<NoiseSpec> specs) : specs_(std::move(specs)) {
  std::set<std::string> names;
  std::ostringstream id;
  for (const auto& s : specs_) {
    if (!names.insert(s.name()).second) {
      throw ValidationError("duplicate noise name: " + s.name());
    }
    id << s.name() << '#' << static_cast<int>(s.kind()) << '#' << s.param_a() << '#'
       << s.param_b();
    for (const auto& a : s.atoms()) id << '@' << a.value << ':' << a.prob;
    id << ';';
  }
  id_ = id.str();
}

int NoiseSpace::index_of(const std::string& name) const {
  for (std::size_t j = 0; j < specs_.size(); ++j) {
    if (specs_[j].name() == name) return static_cast<int>(j);
  }
  return -1;
}

NoiseBatch sample_noise(const NoiseSpace& space, std::uint64_t seed, long n) {
  if (n < 1) throw ValidationError("sample_noise: n must be >= 1");
  NoiseBatch batch;
  batch.seed = seed;
  batch.space_id = space.id();
  batch.values.resize(n, static_cast<Eigen::Index>(space.size()));
  constexpr std::uint64_t kColumnDomain = 0x636f6c756d6e7321ull;
  for (std::size_t j = 0; j < space.size(); ++j) {
    RngStream rng(stream_key(seed, j, kColumnDomain));
    for (long i = 0; i < n; ++i) {
      batch.values(i, static_cast<Eigen::Index>(j)) = space.spec(j).sample(rng);
    }
  }
  return batch;
}

std::vector<std::uint64_t> split_stream(std::uint64_t seed, int k) {
  if (k < 1) throw ValidationError("split_stream: k must be >= 1");
  std::vector<std::uint64_t> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(i)] = stream_key(seed, i);
  return out;
}

AtomTable enumerate_noise(const NoiseSpace& space) {
  std::vector<std::vector<WeightedValue>> supports;
  supports.reserve(space.size());
  std::size_t total = 1;
  for (const auto& s : space.specs()) {
    if (!s.finite_support()) {
      throw NotEnumerable(s.name() + " is continuous");
    }
    supports.push_back(s.support());
    total *= supports.back().size();
  }
  AtomTable table;
  table.coords.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(space.size()));
  table.probs.resize(static_cast<Eigen::Index>(total));
  // Odometer over coordinates; the last coordinate varies fastest.
  std::vector<std::size_t> idx(space.size(), 0);
  for (std::size_t row = 0; row < total; ++row) {
    double p = 1.0;
    for (std::size_t j = 0; j < space.size(); ++j) {
      table.coords(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) =
          supports[j][idx[j]].value;
      p *= supports[j][idx[j]].prob;
    }
    table.probs(static_cast<Eigen::Index>(row)) = p;
    for (std::size_t j = space.size(); j-- > 0;) {
      if (++idx[j] < supports[j].size()) break;
      idx[j] = 0;
    }
  }
  return table;
}

}  // namespace cfl
