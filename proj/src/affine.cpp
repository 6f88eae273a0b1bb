#include "cfl/affine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cfl/errors.hpp"
#include "cfl/scm.hpp"

namespace cfl {

namespace {

constexpr double kEvidenceTol = 1e-9;
constexpr double kEigenTol = 1e-12;

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

AffineForm& AffineForm::operator+=(const AffineForm& o) {
  c += o.c;
  for (const auto& [k, v] : o.var_coef) var_coef[k] += v;
  for (const auto& [k, v] : o.noise_coef) noise_coef[k] += v;
  return *this;
}

AffineForm& AffineForm::operator-=(const AffineForm& o) {
  c -= o.c;
  for (const auto& [k, v] : o.var_coef) var_coef[k] -= v;
  for (const auto& [k, v] : o.noise_coef) noise_coef[k] -= v;
  return *this;
}

AffineForm& AffineForm::operator*=(double s) {
  c *= s;
  for (auto& [k, v] : var_coef) v *= s;
  for (auto& [k, v] : noise_coef) v *= s;
  return *this;
}

double AffineForm::coef_of_var(const std::string& v) const {
  auto it = var_coef.find(v);
  return it == var_coef.end() ? 0.0 : it->second;
}

double AffineForm::coef_of_noise(const std::string& u) const {
  auto it = noise_coef.find(u);
  return it == noise_coef.end() ? 0.0 : it->second;
}

std::optional<AffineForm> to_affine(
    const Expression& e,
    const std::function<std::optional<AffineForm>(const std::string&)>& resolve) {
  std::function<std::optional<AffineForm>(int)> go =
      [&](int i) -> std::optional<AffineForm> {
    const auto& n = e.nodes()[static_cast<std::size_t>(i)];
    switch (n.kind) {
      case Expression::Kind::Constant:
        return AffineForm{n.value, {}, {}};
      case Expression::Kind::Ref:
        return resolve(n.name);
      case Expression::Kind::Add: {
        auto a = go(n.a), b = go(n.b);
        if (!a || !b) return std::nullopt;
        *a += *b;
        return a;
      }
      case Expression::Kind::Mul: {
        auto a = go(n.a), b = go(n.b);
        if (!a || !b) return std::nullopt;
        if (b->is_constant()) {
          *a *= b->c;
          return a;
        }
        if (a->is_constant()) {
          *b *= a->c;
          return b;
        }
        return std::nullopt;
      }
      case Expression::Kind::Neg: {
        auto a = go(n.a);
        if (!a) return std::nullopt;
        *a *= -1.0;
        return a;
      }
      case Expression::Kind::Min:
      case Expression::Kind::Max: {
        auto a = go(n.a), b = go(n.b);
        if (!a || !b || !a->is_constant() || !b->is_constant()) return std::nullopt;
        const double v = n.kind == Expression::Kind::Min ? std::fmin(a->c, b->c)
                                                         : std::fmax(a->c, b->c);
        return AffineForm{v, {}, {}};
      }
      case Expression::Kind::Indicator: {
        auto a = go(n.a);
        if (!a || !a->is_constant()) return std::nullopt;
        return AffineForm{a->c > 0.0 ? 1.0 : 0.0, {}, {}};
      }
      case Expression::Kind::TableLookup: {
        const auto& t = e.tables()[static_cast<std::size_t>(n.table)];
        std::vector<double> key;
        key.reserve(t.inputs.size());
        for (const auto& in : t.inputs) {
          auto f = resolve(in);
          if (!f || !f->is_constant()) return std::nullopt;
          key.push_back(f->c);
        }
        if (const double* v = t.find(key)) return AffineForm{*v, {}, {}};
        return std::nullopt;
      }
    }
    return std::nullopt;
  };
  return go(e.root());
}

std::optional<AffineForm> equation_affine(const ScmModel& model, const std::string& var) {
  return to_affine(model.equation(var), [&](const std::string& name) -> std::optional<AffineForm> {
    AffineForm f;
    if (model.is_variable(name)) {
      f.var_coef[name] = 1.0;
    } else if (model.noise().has(name)) {
      f.noise_coef[name] = 1.0;
    } else {
      return std::nullopt;
    }
    return f;
  });
}

int MixtureRep::var_index(const std::string& name) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == name) return static_cast<int>(i);
  }
  return -1;
}

int MixtureRep::cont_index(const std::string& name) const {
  for (std::size_t i = 0; i < cont_noises.size(); ++i) {
    if (cont_noises[i] == name) return static_cast<int>(i);
  }
  return -1;
}

double MixtureRep::mean_of(const std::string& var) const {
  const int vi = var_index(var);
  if (vi < 0) throw UnknownReference(var);
  double m = 0.0;
  for (const auto& comp : components) {
    double cm = comp.vars[static_cast<std::size_t>(vi)].c;
    for (const auto& [u, coef] : comp.vars[static_cast<std::size_t>(vi)].noise_coef) {
      cm += coef * cont_mean(cont_index(u));
    }
    m += comp.prob * cm;
  }
  return m;
}

Law MixtureRep::marginal_law(const std::vector<std::string>& vars) const {
  const int q = static_cast<int>(vars.size());
  std::vector<GaussComponent> out;
  for (const auto& comp : components) {
    GaussComponent g;
    g.label = comp.label;
    g.weight = comp.prob;
    g.mean.resize(q);
    Eigen::MatrixXd coefs(q, cont_mean.size());
    coefs.setZero();
    for (int a = 0; a < q; ++a) {
      const int vi = var_index(vars[static_cast<std::size_t>(a)]);
      if (vi < 0) throw UnknownReference(vars[static_cast<std::size_t>(a)]);
      const auto& f = comp.vars[static_cast<std::size_t>(vi)];
      double m = f.c;
      for (const auto& [u, coef] : f.noise_coef) {
        const int ui = cont_index(u);
        coefs(a, ui) = coef;
        m += coef * cont_mean(ui);
      }
      g.mean(a) = m;
    }
    g.cov = coefs * cont_var.asDiagonal() * coefs.transpose();
    out.push_back(std::move(g));
  }
  return Law::gaussian_mixture(vars, std::move(out));
}

std::optional<MixtureRep> mixture_rep(const ScmModel& model, std::size_t max_components) {
  MixtureRep rep;
  rep.variables = model.variables();
  std::vector<std::vector<WeightedValue>> disc_support;
  std::vector<double> cont_mean, cont_var;
  for (const auto& s : model.noise().specs()) {
    switch (s.kind()) {
      case DistKind::Uniform:
        return std::nullopt;
      case DistKind::Gaussian:
      case DistKind::PointMass:
        rep.cont_noises.push_back(s.name());
        cont_mean.push_back(s.mean());
        cont_var.push_back(s.variance());
        break;
      case DistKind::Bernoulli:
      case DistKind::Discrete:
        rep.disc_noises.push_back(s.name());
        disc_support.push_back(s.support());
        break;
    }
  }
  rep.cont_mean = Eigen::Map<Eigen::VectorXd>(cont_mean.data(), static_cast<Eigen::Index>(cont_mean.size()));
  rep.cont_var = Eigen::Map<Eigen::VectorXd>(cont_var.data(), static_cast<Eigen::Index>(cont_var.size()));

  std::size_t total = 1;
  for (const auto& sup : disc_support) {
    total *= sup.size();
    if (total > max_components) return std::nullopt;
  }

  std::vector<std::size_t> idx(disc_support.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    MixtureComponent comp;
    comp.prob = 1.0;
    std::string label;
    for (std::size_t j = 0; j < disc_support.size(); ++j) {
      const auto& atom = disc_support[j][idx[j]];
      comp.discrete_values.push_back(atom.value);
      comp.prob *= atom.prob;
      if (!label.empty()) label += ",";
      label += rep.disc_noises[j] + "=" + format_value(atom.value);
    }
    comp.label = label.empty() ? "*" : label;

    auto resolve = [&](const std::string& name) -> std::optional<AffineForm> {
      const int vi = rep.var_index(name);
      if (vi >= 0) return comp.vars[static_cast<std::size_t>(vi)];
      for (std::size_t j = 0; j < rep.disc_noises.size(); ++j) {
        if (rep.disc_noises[j] == name) return AffineForm{comp.discrete_values[j], {}, {}};
      }
      if (rep.cont_index(name) >= 0) {
        AffineForm f;
        f.noise_coef[name] = 1.0;
        return f;
      }
      return std::nullopt;
    };

    // Walk the topological order so parents resolve to computed forms.
    comp.vars.assign(rep.variables.size(), AffineForm{});
    std::vector<bool> ready(rep.variables.size(), false);
    for (const auto& var : model.topo_order()) {
      const int vi = rep.var_index(var);
      auto resolve_parents = [&](const std::string& name) -> std::optional<AffineForm> {
        const int pv = rep.var_index(name);
        if (pv >= 0) {
          if (!ready[static_cast<std::size_t>(pv)]) return std::nullopt;
          return comp.vars[static_cast<std::size_t>(pv)];
        }
        return resolve(name);
      };
      auto form = to_affine(model.equation(var), resolve_parents);
      if (!form) return std::nullopt;
      comp.vars[static_cast<std::size_t>(vi)] = std::move(*form);
      ready[static_cast<std::size_t>(vi)] = true;
    }
    rep.components.push_back(std::move(comp));

    for (std::size_t j = disc_support.size(); j-- > 0;) {
      if (++idx[j] < disc_support[j].size()) break;
      idx[j] = 0;
    }
  }
  return rep;
}

Posterior condition_mixture(const MixtureRep& rep,
                            const std::vector<std::pair<std::string, double>>& evidence) {
  const Eigen::Index K = rep.cont_mean.size();
  const Eigen::MatrixXd prior_cov = rep.cont_var.asDiagonal();

  struct Scored {
    PosteriorComponent pc;
    int rank = 0;
    double log_density = 0.0;
    double prior = 0.0;
  };
  std::vector<Scored> alive;

  for (std::size_t ci = 0; ci < rep.components.size(); ++ci) {
    const auto& comp = rep.components[ci];
    if (comp.prob <= 0.0) continue;
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;
    bool dead = false;
    for (const auto& [var, val] : evidence) {
      const int vi = rep.var_index(var);
      if (vi < 0) throw UnknownReference(var);
      const auto& f = comp.vars[static_cast<std::size_t>(vi)];
      if (!f.var_coef.empty()) {
        throw EngineInapplicable("unresolved variable in affine form of " + var);
      }
      Eigen::VectorXd row = Eigen::VectorXd::Zero(K);
      bool has_noise = false;
      for (const auto& [u, coef] : f.noise_coef) {
        if (coef != 0.0) {
          row(rep.cont_index(u)) = coef;
          has_noise = true;
        }
      }
      if (!has_noise) {
        if (std::abs(f.c - val) > kEvidenceTol) {
          dead = true;
          break;
        }
        continue;  // constant evidence satisfied; no constraint row
      }
      rows.push_back(std::move(row));
      rhs.push_back(val - f.c);
    }
    if (dead) continue;

    Scored s;
    s.pc.label = comp.label;
    s.pc.component = ci;
    s.prior = comp.prob;
    if (rows.empty()) {
      s.pc.mean = rep.cont_mean;
      s.pc.cov = prior_cov;
      s.rank = 0;
      s.log_density = 0.0;
      alive.push_back(std::move(s));
      continue;
    }
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd C(r, K);
    Eigen::VectorXd e(r);
    for (Eigen::Index i = 0; i < r; ++i) {
      C.row(i) = rows[static_cast<std::size_t>(i)].transpose();
      e(i) = rhs[static_cast<std::size_t>(i)];
    }
    const Eigen::MatrixXd CS = C * prior_cov;           // r x K
    const Eigen::MatrixXd M = CS * C.transpose();       // r x r
    const Eigen::VectorXd d = e - C * rep.cont_mean;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    const Eigen::VectorXd lam = es.eigenvalues();
    const Eigen::MatrixXd V = es.eigenvectors();
    const double lam_max = std::max(1.0, lam.cwiseAbs().maxCoeff());
    const Eigen::VectorXd z = V.transpose() * d;

    int rank = 0;
    double log_density = 0.0;
    Eigen::VectorXd inv_lam = Eigen::VectorXd::Zero(r);
    bool incompatible = false;
    for (Eigen::Index i = 0; i < r; ++i) {
      if (lam(i) > kEigenTol * lam_max) {
        ++rank;
        inv_lam(i) = 1.0 / lam(i);
        log_density += -0.5 * z(i) * z(i) * inv_lam(i) -
                       0.5 * std::log(2.0 * M_PI * lam(i));
      } else if (std::abs(z(i)) > kEvidenceTol) {
        incompatible = true;  // deterministic constraint violated
        break;
      }
    }
    if (incompatible) continue;

    const Eigen::MatrixXd pinv = V * inv_lam.asDiagonal() * V.transpose();
    s.pc.mean = rep.cont_mean + CS.transpose() * (pinv * d);
    s.pc.cov = prior_cov - CS.transpose() * pinv * CS;
    s.rank = rank;
    s.log_density = log_density;
    alive.push_back(std::move(s));
  }

  if (alive.empty()) {
    throw ZeroProbabilityEvidence("no mixture component is compatible with the evidence");
  }
  for (const auto& s : alive) {
    if (s.rank != alive.front().rank) {
      throw EngineInapplicable(
          "evidence density has different dimension across mixture components");
    }
  }
  double max_log = alive.front().log_density;
  for (const auto& s : alive) max_log = std::max(max_log, s.log_density);
  double total = 0.0;
  for (auto& s : alive) {
    s.pc.weight = s.prior * std::exp(s.log_density - max_log);
    total += s.pc.weight;
  }
  Posterior post;
  for (auto& s : alive) {
    s.pc.weight /= total;
    post.components.push_back(std::move(s.pc));
  }
  return post;
}

Law posterior_law(const MixtureRep& pushforward_rep, const Posterior& posterior,
                  const std::vector<std::string>& query) {
  const int q = static_cast<int>(query.size());
  std::vector<GaussComponent> comps;
  for (const auto& pc : posterior.components) {
    if (pc.component >= pushforward_rep.components.size()) {
      throw EngineInapplicable("posterior component outside pushforward representation");
    }
    const auto& comp = pushforward_rep.components[pc.component];
    if (comp.label != pc.label) {
      throw EngineInapplicable("component enumeration differs between models");
    }
    GaussComponent g;
    g.label = pc.label;
    g.weight = pc.weight;
    g.mean.resize(q);
    Eigen::MatrixXd coefs(q, pushforward_rep.cont_mean.size());
    coefs.setZero();
    for (int a = 0; a < q; ++a) {
      const int vi = pushforward_rep.var_index(query[static_cast<std::size_t>(a)]);
      if (vi < 0) throw UnknownReference(query[static_cast<std::size_t>(a)]);
      const auto& f = comp.vars[static_cast<std::size_t>(vi)];
      double m = f.c;
      for (const auto& [u, coef] : f.noise_coef) {
        const int ui = pushforward_rep.cont_index(u);
        coefs(a, ui) = coef;
        m += coef * pc.mean(ui);
      }
      g.mean(a) = m;
    }
    g.cov = coefs * pc.cov * coefs.transpose();
    comps.push_back(std::move(g));
  }
  return Law::gaussian_mixture(query, std::move(comps));
}

}  // namespace cfl
