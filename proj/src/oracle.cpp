#include "crl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace crl {
namespace oracle {

namespace {

// Gaussian elimination with partial pivoting; A is n x n row-major.
Vec solve_linear(Vec a, Vec b, int n) {
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(a[r * n + col]) > std::abs(a[pivot * n + col])) pivot = r;
    }
    if (std::abs(a[pivot * n + col]) < 1e-14) {
      throw std::runtime_error("oracle: singular linear system");
    }
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a[col * n + j], a[pivot * n + j]);
      std::swap(b[col], b[pivot]);
    }
    const double inv = 1.0 / a[col * n + col];
    for (int r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] * inv;
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) a[r * n + j] -= f * a[col * n + j];
      b[r] -= f * b[col];
    }
  }
  Vec x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = b[r];
    for (int j = r + 1; j < n; ++j) acc -= a[r * n + j] * x[j];
    x[r] = acc / a[r * n + r];
  }
  return x;
}

// v solves (I - gamma P_pi) v = f_pi.
Vec policy_values(const TabularCMDP& m, const TabularPolicy& pi, const Vec& f) {
  const int n = m.n_states;
  Vec a(static_cast<std::size_t>(n) * n, 0.0);
  Vec b(n, 0.0);
  for (int s = 0; s < n; ++s) {
    a[s * n + s] = 1.0;
    for (int act = 0; act < m.n_actions; ++act) {
      const double pa = pi.pi(s, act);
      if (pa == 0.0) continue;
      b[s] += pa * f[static_cast<std::size_t>(s) * m.n_actions + act];
      for (int s2 = 0; s2 < n; ++s2) {
        a[s * n + s2] -= m.gamma * pa * m.p(s, act, s2);
      }
    }
  }
  return solve_linear(std::move(a), std::move(b), n);
}

// Discounted state occupancy d(s) = sum_t gamma^t p_t(s), unnormalized:
// solves (I - gamma P_pi^T) d = P0.
Vec state_occupancy(const TabularCMDP& m, const TabularPolicy& pi) {
  const int n = m.n_states;
  Vec a(static_cast<std::size_t>(n) * n, 0.0);
  for (int s = 0; s < n; ++s) {
    a[s * n + s] = 1.0;
    for (int act = 0; act < m.n_actions; ++act) {
      const double pa = pi.pi(s, act);
      if (pa == 0.0) continue;
      for (int s2 = 0; s2 < n; ++s2) {
        a[s2 * n + s] -= m.gamma * pa * m.p(s, act, s2);
      }
    }
  }
  return solve_linear(std::move(a), m.initial, n);
}

Vec lagrangian_table(const TabularCMDP& m, const Vec& lambda) {
  Vec l = m.reward;
  for (int k = 0; k < m.n_costs; ++k) {
    for (std::size_t i = 0; i < l.size(); ++i) l[i] -= lambda[k] * m.cost[k][i];
  }
  return l;
}

}  // namespace

void TabularCMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0 || n_costs < 0) {
    throw std::invalid_argument("cmdp: dimensions must be positive");
  }
  if (gamma <= 0.0 || gamma >= 1.0) throw std::invalid_argument("cmdp: gamma must lie in (0,1)");
  if (transition.size() != static_cast<std::size_t>(n_states) * n_actions * n_states ||
      reward.size() != static_cast<std::size_t>(n_states) * n_actions ||
      static_cast<int>(cost.size()) != n_costs ||
      thresholds.size() != static_cast<std::size_t>(n_costs) ||
      initial.size() != static_cast<std::size_t>(n_states)) {
    throw std::invalid_argument("cmdp: table sizes inconsistent with dimensions");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = p(s, a, s2);
        if (v < -1e-15) throw std::invalid_argument("cmdp: negative transition probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("cmdp: transition row does not sum to 1");
      }
    }
  }
  for (const Vec& table : cost) {
    if (table.size() != reward.size()) throw std::invalid_argument("cmdp: cost table size");
    for (double v : table) {
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("cmdp: cost entries must be 0 or 1");
    }
  }
  for (double d : thresholds) {
    if (d < 0.0 || d > 1.0) throw std::invalid_argument("cmdp: thresholds must lie in [0,1]");
  }
  double p0 = 0.0;
  for (double v : initial) {
    if (v < 0.0) throw std::invalid_argument("cmdp: negative initial probability");
    p0 += v;
  }
  if (std::abs(p0 - 1.0) > 1e-12) throw std::invalid_argument("cmdp: P0 does not sum to 1");
}

void TabularPolicy::validate() const {
  if (prob.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw std::invalid_argument("policy: table size mismatch");
  }
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      if (pi(s, a) < 0.0) throw std::invalid_argument("policy: negative probability");
      sum += pi(s, a);
    }
    if (std::abs(sum - 1.0) > 1e-10) throw std::invalid_argument("policy: row does not sum to 1");
  }
}

TabularPolicy uniform_policy(int n_states, int n_actions) {
  TabularPolicy p{n_states, n_actions,
                  Vec(static_cast<std::size_t>(n_states) * n_actions, 1.0 / n_actions)};
  return p;
}

TabularPolicy greedy_policy(const std::vector<int>& actions, int n_actions) {
  TabularPolicy p{static_cast<int>(actions.size()), n_actions,
                  Vec(actions.size() * n_actions, 0.0)};
  for (std::size_t s = 0; s < actions.size(); ++s) p.prob[s * n_actions + actions[s]] = 1.0;
  return p;
}

double exact_return(const TabularCMDP& m, const TabularPolicy& pi, const Vec& f) {
  m.validate();
  pi.validate();
  if (f.size() != static_cast<std::size_t>(m.n_states) * m.n_actions) {
    throw std::invalid_argument("exact_return: f table size mismatch");
  }
  const Vec v = policy_values(m, pi, f);
  double j = 0.0;
  for (int s = 0; s < m.n_states; ++s) j += m.initial[s] * v[s];
  return j;
}

Vec occupancy(const TabularCMDP& m, const TabularPolicy& pi) {
  m.validate();
  pi.validate();
  const Vec d = state_occupancy(m, pi);
  Vec x(static_cast<std::size_t>(m.n_states) * m.n_actions, 0.0);
  const double norm = 1.0 - m.gamma;  // Z(gamma, inf) = 1/(1-gamma)
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      x[static_cast<std::size_t>(s) * m.n_actions + a] = norm * d[s] * pi.pi(s, a);
    }
  }
  return x;
}

double normalized_cost(const TabularCMDP& m, const TabularPolicy& pi, int k) {
  return (1.0 - m.gamma) * exact_return(m, pi, m.cost[k]);
}

std::pair<TabularPolicy, double> lagrangian_best_response(const TabularCMDP& m,
                                                          const Vec& lambda) {
  m.validate();
  if (static_cast<int>(lambda.size()) != m.n_costs) {
    throw std::invalid_argument("best_response: lambda size mismatch");
  }
  for (double l : lambda) {
    if (l < 0.0) throw std::invalid_argument("best_response: lambda must be >= 0");
  }
  const Vec l_table = lagrangian_table(m, lambda);
  Vec v(m.n_states, 0.0);
  std::vector<int> best(m.n_states, 0);
  for (long iter = 0; iter < 1000000; ++iter) {
    double delta = 0.0;
    for (int s = 0; s < m.n_states; ++s) {
      double best_q = -1e300;
      int best_a = 0;
      for (int a = 0; a < m.n_actions; ++a) {
        double q = l_table[static_cast<std::size_t>(s) * m.n_actions + a];
        for (int s2 = 0; s2 < m.n_states; ++s2) q += m.gamma * m.p(s, a, s2) * v[s2];
        if (q > best_q) {
          best_q = q;
          best_a = a;
        }
      }
      delta = std::max(delta, std::abs(best_q - v[s]));
      v[s] = best_q;
      best[s] = best_a;
    }
    if (delta <= 1e-12) break;
  }
  TabularPolicy greedy = greedy_policy(best, m.n_actions);
  return {greedy, exact_return(m, greedy, l_table)};
}

DualResult dual_minimize(const TabularCMDP& m, const std::vector<Vec>& lambda_grid) {
  m.validate();
  if (static_cast<int>(lambda_grid.size()) != m.n_costs) {
    throw std::invalid_argument("dual_minimize: need one value list per constraint");
  }
  for (const Vec& vals : lambda_grid) {
    if (vals.empty()) throw std::invalid_argument("dual_minimize: empty grid axis");
  }
  // Raw-scale thresholds for the Lagrangian's threshold terms.
  Vec d_raw(m.n_costs);
  for (int k = 0; k < m.n_costs; ++k) d_raw[k] = m.thresholds[k] / (1.0 - m.gamma);

  DualResult res;
  res.dual_value = 1e300;
  res.best_feasible_return = -1e300;

  std::vector<std::size_t> idx(m.n_costs, 0);
  while (true) {
    Vec lambda(m.n_costs);
    for (int k = 0; k < m.n_costs; ++k) lambda[k] = lambda_grid[k][idx[k]];

    auto [pi, j_l] = lagrangian_best_response(m, lambda);
    double g = j_l;
    for (int k = 0; k < m.n_costs; ++k) g += lambda[k] * d_raw[k];
    if (g < res.dual_value) {
      res.dual_value = g;
      res.lambda_star = lambda;
    }
    bool feasible = true;
    for (int k = 0; k < m.n_costs; ++k) {
      if (normalized_cost(m, pi, k) > m.thresholds[k] + 1e-9) {
        feasible = false;
        break;
      }
    }
    if (feasible) {
      const double j_r = exact_return(m, pi, m.reward);
      if (j_r > res.best_feasible_return) {
        res.best_feasible_return = j_r;
        res.best_feasible_policy = pi;
        res.found_feasible = true;
      }
    }

    int k = 0;
    for (; k < m.n_costs; ++k) {
      if (++idx[k] < lambda_grid[k].size()) break;
      idx[k] = 0;
    }
    if (k == m.n_costs) break;
  }
  return res;
}

GdaResult gda_reference(const TabularCMDP& m, const GdaOptions& opt) {
  m.validate();
  const int S = m.n_states, A = m.n_actions, K = m.n_costs;
  Vec theta(static_cast<std::size_t>(S) * A, 0.0);

  MultiplierState mult =
      make_multiplier_state(K, opt.z_init, opt.multiplier_lr, opt.mode);
  std::vector<ConstraintSpec> specs(K);
  for (int k = 0; k < K; ++k) {
    specs[k] = ConstraintSpec{"c" + std::to_string(k), Bound::Upper, m.thresholds[k]};
  }

  GdaResult out;
  TabularPolicy pi = uniform_policy(S, A);
  for (long it = 0; it < opt.steps; ++it) {
    // Softmax policy from the logits.
    for (int s = 0; s < S; ++s) {
      double mx = -1e300;
      for (int a = 0; a < A; ++a) mx = std::max(mx, theta[s * A + a]);
      double z = 0.0;
      for (int a = 0; a < A; ++a) z += std::exp(theta[s * A + a] - mx);
      for (int a = 0; a < A; ++a) pi.prob[s * A + a] = std::exp(theta[s * A + a] - mx) / z;
    }

    const Multipliers lam = normalized_multipliers(mult);
    // Ascent table: lambda0 * R - sum_k lambda_k C_k.
    Vec f(m.reward.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = lam.lambda0 * m.reward[i];
    for (int k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < f.size(); ++i) f[i] -= lam.lambda[k] * m.cost[k][i];
    }

    const Vec v = policy_values(m, pi, f);
    const Vec docc = state_occupancy(m, pi);
    // Exact policy gradient for softmax logits: d(s) pi(a|s) (Q(s,a) - V(s)).
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) {
        double q = f[static_cast<std::size_t>(s) * A + a];
        for (int s2 = 0; s2 < S; ++s2) q += m.gamma * m.p(s, a, s2) * v[s2];
        theta[s * A + a] += opt.policy_lr * docc[s] * pi.pi(s, a) * (q - v[s]);
      }
    }

    // Normalized cost rates through the occupancy measure.
    const Vec x = occupancy(m, pi);
    RateEstimate rates;
    rates.batch_size = 1;
    rates.rates.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
      double jc = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) jc += x[i] * m.cost[k][i];
      rates.rates[k] = jc;
    }
    multiplier_update(mult, rates, specs);

    const Multipliers lam_now = normalized_multipliers(mult);
    for (double l : lam_now.lambda) {
      if (!(l < opt.divergence_bound)) out.diverged = true;
    }

    if (it % opt.record_every == 0 || it + 1 == opt.steps) {
      GdaPoint pt;
      pt.iter = it;
      double jr = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) jr += x[i] * m.reward[i];
      pt.return_value = jr / (1.0 - m.gamma);
      pt.costs = rates.rates;
      pt.lambda0 = lam_now.lambda0;
      pt.lambda = lam_now.lambda;
      out.trace.push_back(std::move(pt));
    }
  }
  out.final_policy = pi;
  return out;
}

TabularCMDP load_cmdp(std::istream& is) {
  TabularCMDP m;
  std::string line;
  bool have_header = false, have_p0 = false;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    auto fail = [&](const std::string& why) {
      throw std::runtime_error("cmdp line " + std::to_string(line_no) + ": " + why);
    };
    if (tag == "cmdp") {
      if (!(ls >> m.n_states >> m.n_actions >> m.n_costs >> m.gamma)) fail("bad header");
      m.transition.assign(static_cast<std::size_t>(m.n_states) * m.n_actions * m.n_states, 0.0);
      m.reward.assign(static_cast<std::size_t>(m.n_states) * m.n_actions, 0.0);
      m.cost.assign(m.n_costs, Vec(m.reward.size(), 0.0));
      m.thresholds.assign(m.n_costs, 0.0);
      m.initial.assign(m.n_states, 0.0);
      have_header = true;
    } else if (!have_header) {
      fail("'cmdp' header must come first");
    } else if (tag == "p") {
      int s, a;
      if (!(ls >> s >> a)) fail("bad transition row");
      for (int s2 = 0; s2 < m.n_states; ++s2) {
        double v;
        if (!(ls >> v)) fail("transition row too short");
        m.transition[(static_cast<std::size_t>(s) * m.n_actions + a) * m.n_states + s2] = v;
      }
    } else if (tag == "r") {
      int s, a;
      double v;
      if (!(ls >> s >> a >> v)) fail("bad reward row");
      m.reward[static_cast<std::size_t>(s) * m.n_actions + a] = v;
    } else if (tag == "c") {
      int k, s, a;
      double v;
      if (!(ls >> k >> s >> a >> v)) fail("bad cost row");
      m.cost[k][static_cast<std::size_t>(s) * m.n_actions + a] = v;
    } else if (tag == "d") {
      int k;
      double v;
      if (!(ls >> k >> v)) fail("bad threshold row");
      m.thresholds[k] = v;
    } else if (tag == "p0") {
      for (int s = 0; s < m.n_states; ++s) {
        double v;
        if (!(ls >> v)) fail("p0 row too short");
        m.initial[s] = v;
      }
      have_p0 = true;
    } else {
      fail("unknown tag '" + tag + "'");
    }
  }
  if (!have_header) throw std::runtime_error("cmdp: missing header");
  if (!have_p0) m.initial.assign(m.n_states, 1.0 / m.n_states);
  m.validate();
  return m;
}

void save_cmdp(std::ostream& os, const TabularCMDP& m) {
  os.precision(17);
  os << "cmdp " << m.n_states << ' ' << m.n_actions << ' ' << m.n_costs << ' ' << m.gamma << '\n';
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      os << "p " << s << ' ' << a;
      for (int s2 = 0; s2 < m.n_states; ++s2) os << ' ' << m.p(s, a, s2);
      os << '\n';
    }
  }
  for (int s = 0; s < m.n_states; ++s) {
    for (int a = 0; a < m.n_actions; ++a) {
      if (m.r(s, a) != 0.0) os << "r " << s << ' ' << a << ' ' << m.r(s, a) << '\n';
    }
  }
  for (int k = 0; k < m.n_costs; ++k) {
    for (int s = 0; s < m.n_states; ++s) {
      for (int a = 0; a < m.n_actions; ++a) {
        if (m.c(k, s, a) != 0.0) os << "c " << k << ' ' << s << ' ' << a << ' ' << m.c(k, s, a) << '\n';
      }
    }
    os << "d " << k << ' ' << m.thresholds[k] << '\n';
  }
  os << "p0";
  for (int s = 0; s < m.n_states; ++s) os << ' ' << m.initial[s];
  os << '\n';
}

}  // namespace oracle
}  // namespace crl
