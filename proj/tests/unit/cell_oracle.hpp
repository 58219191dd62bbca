#pragma once

// Independent scalar-loop reference for the recurrent steps. Shares no code
// with the tape-based implementation: every gate is written out elementwise.

#include <cmath>
#include <vector>

#include "onlstm/cell/cell.hpp"

namespace onlstm::testing {

struct OracleStep {
  std::vector<double> h, c;
  std::vector<double> master_forget, master_input;
  std::vector<double> master_forget_probs;  // softmax behind master_forget
};

inline std::vector<double> affine_gate(const GateParams& g, const std::vector<double>& x,
                                       const std::vector<double>& h) {
  const std::size_t rows = g.bias.value.size();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = g.bias.value[r];
    for (std::size_t k = 0; k < x.size(); ++k) acc += g.input_weight.value.at(r, k) * x[k];
    for (std::size_t k = 0; k < h.size(); ++k) acc += g.recurrent_weight.value.at(r, k) * h[k];
    out[r] = acc;
  }
  return out;
}

inline double oracle_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline std::vector<double> oracle_softmax(const std::vector<double>& z) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v);
  std::vector<double> p(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) total += (p[k] = std::exp(z[k] - mx));
  for (double& v : p) v /= total;
  return p;
}

inline OracleStep oracle_step(const CellParams& params, const std::vector<double>& x,
                              const std::vector<double>& h_prev, const std::vector<double>& c_prev,
                              bool structured) {
  const std::size_t d = params.hidden_size();
  const auto zf = affine_gate(params.gate(Gate::kForget), x, h_prev);
  const auto zi = affine_gate(params.gate(Gate::kInput), x, h_prev);
  const auto zo = affine_gate(params.gate(Gate::kOutput), x, h_prev);
  const auto zc = affine_gate(params.gate(Gate::kCandidate), x, h_prev);
  OracleStep out;
  out.h.resize(d);
  out.c.resize(d);
  std::vector<double> mf_expanded(d, 1.0), mi_expanded(d, 1.0);
  if (structured) {
    const std::size_t m = params.master_size();
    const auto pf = oracle_softmax(affine_gate(params.gate(Gate::kMasterForget), x, h_prev));
    const auto pi = oracle_softmax(affine_gate(params.gate(Gate::kMasterInput), x, h_prev));
    out.master_forget_probs = pf;
    out.master_forget.resize(m);
    out.master_input.resize(m);
    double run_f = 0.0, run_i = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      run_f += pf[k];
      run_i += pi[k];
      out.master_forget[k] = run_f;
      out.master_input[k] = 1.0 - run_i;
    }
    const std::size_t chunk = params.chunk_factor();
    for (std::size_t j = 0; j < d; ++j) {
      mf_expanded[j] = out.master_forget[j / chunk];
      mi_expanded[j] = out.master_input[j / chunk];
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    const double f = oracle_sigmoid(zf[j]);
    const double i = oracle_sigmoid(zi[j]);
    const double o = oracle_sigmoid(zo[j]);
    const double cand = std::tanh(zc[j]);
    double f_hat = f, i_hat = i;
    if (structured) {
      const double w = mf_expanded[j] * mi_expanded[j];
      f_hat = f * w + (mf_expanded[j] - w);
      i_hat = i * w + (mi_expanded[j] - w);
    }
    out.c[j] = f_hat * c_prev[j] + i_hat * cand;
    out.h[j] = o * std::tanh(out.c[j]);
  }
  return out;
}

}  // namespace onlstm::testing
