#include "seqsum/optim.hpp"

#include <algorithm>
#include <cmath>

namespace seqsum {

double global_grad_norm(std::span<Parameter* const> params) {
  double sq = 0.0;
  for (const Parameter* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_and_step(AdamState& state, std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    if (p->grad.rows() != p->value.rows() || p->grad.cols() != p->value.cols())
      throw Error("clip_and_step: parameter \"" + p->name + "\" has no gradient of shape " +
                  shape_string(p->value));
  }
  const double norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw Error("clip_and_step: non-finite gradient norm");
  const double clip = state.clip_norm > 0.0 && norm > state.clip_norm ? state.clip_norm / norm : 1.0;

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter* p : params) {
    auto [m_it, m_new] = state.first_moment.try_emplace(p->name, Matrix::Zero(p->value.rows(), p->value.cols()));
    auto [v_it, v_new] = state.second_moment.try_emplace(p->name, Matrix::Zero(p->value.rows(), p->value.cols()));
    Matrix& m = m_it->second;
    Matrix& v = v_it->second;
    const Matrix g = p->grad * clip;
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseAbs2();
    if (state.learning_rate != 0.0) {
      p->value.array() -= state.learning_rate * (m.array() / correction1) /
                          ((v.array() / correction2).sqrt() + state.epsilon);
    }
    p->grad.setZero();
  }
  return norm;
}

double grad_check(const std::function<Var(Graph&)>& f, std::span<Parameter* const> params,
                  double epsilon) {
  auto evaluate = [&f]() {
    Graph g;
    return f(g).scalar();
  };
  const double base = evaluate();
  if (evaluate() != base) throw Error("grad_check: program is not deterministic");

  for (Parameter* p : params) p->grad.setZero(p->value.rows(), p->value.cols());
  {
    Graph g;
    Var loss = f(g);
    g.backward(loss);
  }

  double worst = 0.0;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (Eigen::Index k = 0; k < p->value.size(); ++k) {
      double& x = p->value.data()[k];
      const double saved = x;
      x = saved + epsilon;
      const double up = evaluate();
      x = saved - epsilon;
      const double down = evaluate();
      x = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = p->grad.data()[k];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
  }
  for (Parameter* p : params) p->grad.setZero();
  return worst;
}

}  // namespace seqsum
