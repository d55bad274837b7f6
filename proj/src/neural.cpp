#include "tsce/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "json.hpp"

namespace tsce {

std::vector<int> FcnArchitecture::filter_counts() const {
  std::vector<int> out;
  int f = first_filters;
  for (int i = 0; i < n_layers; ++i) {
    out.push_back(f);
    f *= 2;
  }
  return out;
}

std::vector<int> FcnArchitecture::kernel_sizes() const {
  static const int fixed[4] = {8, 5, 3, 3};
  return std::vector<int>(fixed, fixed + n_layers);
}

void FcnArchitecture::validate() const {
  if (n_layers < 1 || n_layers > 4)
    throw std::invalid_argument("fcn: n_layers must be in 1..4");
  if (first_filters != 4 && first_filters != 16 && first_filters != 64 &&
      first_filters != 128)
    throw std::invalid_argument("fcn: first_filters must be one of {4,16,64,128}");
  if (n_classes < 2) throw std::invalid_argument("fcn: need >= 2 classes");
}

namespace {

int pad_left_of(int k) { return (k - 1) / 2; }

void conv_forward(const ConvLayer& layer, const Matrix& in, Matrix& out) {
  std::size_t L = in[0].size();
  int pl = pad_left_of(layer.ksize);
  out.assign(layer.out_ch, Series(L, 0.0));
  for (int c = 0; c < layer.out_ch; ++c) {
    Series& row = out[c];
    for (std::size_t t = 0; t < L; ++t) row[t] = layer.b[c];
    for (int ic = 0; ic < layer.in_ch; ++ic) {
      const Series& src = in[ic];
      const double* wp = &layer.w[(static_cast<std::size_t>(c) * layer.in_ch + ic) *
                                  layer.ksize];
      for (int dk = 0; dk < layer.ksize; ++dk) {
        double wv = wp[dk];
        long shift = static_cast<long>(dk) - pl;
        std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
        std::size_t t1 = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
        for (std::size_t t = t0; t < t1; ++t)
          row[t] += wv * src[t + shift];
      }
    }
  }
}

}  // namespace

FcnModel init_fcn(const FcnArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  FcnModel m;
  m.arch = arch;
  std::mt19937 rng(static_cast<std::uint32_t>(seed));
  auto filters = arch.filter_counts();
  auto kernels = arch.kernel_sizes();
  int in_ch = 1;
  for (int l = 0; l < arch.n_layers; ++l) {
    ConvLayer layer;
    layer.in_ch = in_ch;
    layer.out_ch = filters[l];
    layer.ksize = kernels[l];
    double s = std::sqrt(1.0 / (static_cast<double>(in_ch) * kernels[l]));
    std::uniform_real_distribution<double> u(-s, s);
    layer.w.resize(static_cast<std::size_t>(layer.out_ch) * in_ch * kernels[l]);
    for (double& v : layer.w) v = u(rng);
    layer.b.assign(layer.out_ch, 0.0);
    m.convs.push_back(std::move(layer));
    in_ch = filters[l];
  }
  double s = std::sqrt(1.0 / static_cast<double>(in_ch));
  std::uniform_real_distribution<double> u(-s, s);
  m.dense_w.resize(static_cast<std::size_t>(arch.n_classes) * in_ch);
  for (double& v : m.dense_w) v = u(rng);
  m.dense_b.assign(arch.n_classes, 0.0);
  return m;
}

void fcn_forward(const FcnModel& m, const Series& x, FcnActivations& act) {
  auto kernels = m.arch.kernel_sizes();
  int max_k = *std::max_element(kernels.begin(), kernels.end());
  if (x.size() < static_cast<std::size_t>(max_k))
    throw std::invalid_argument("fcn_forward: input shorter than largest kernel");

  std::size_t L = x.size();
  std::size_t n_layers = m.convs.size();
  act.pre.resize(n_layers);
  act.post.resize(n_layers);
  Matrix input(1, x);
  const Matrix* cur = &input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    conv_forward(m.convs[l], *cur, act.pre[l]);
    act.post[l] = act.pre[l];
    for (auto& row : act.post[l])
      for (double& v : row) v = v > 0 ? v : 0.0;
    cur = &act.post[l];
  }

  int C = m.convs.back().out_ch;
  act.gap.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0;
    for (double v : (*cur)[c]) s += v;
    act.gap[c] = s / static_cast<double>(L);
  }

  int K = m.arch.n_classes;
  act.logits.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    double s = m.dense_b[k];
    for (int c = 0; c < C; ++c) s += m.dense_w[static_cast<std::size_t>(k) * C + c] * act.gap[c];
    act.logits[k] = s;
  }
  act.probs = act.logits;
  double mx = *std::max_element(act.probs.begin(), act.probs.end());
  double sum = 0;
  for (double& v : act.probs) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : act.probs) v /= sum;
}

Series fcn_predict_proba(const FcnModel& m, const Series& x) {
  FcnActivations act;
  fcn_forward(m, x, act);
  return act.probs;
}

int fcn_predict_class(const FcnModel& m, const Series& x) {
  Series p = fcn_predict_proba(m, x);
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

FcnGrads fcn_backward_from_dlogits(const FcnModel& m, const Series& x,
                                   const FcnActivations& act,
                                   const Series& dlogits) {
  std::size_t L = x.size();
  int K = m.arch.n_classes;
  int C = m.convs.back().out_ch;
  std::size_t n_layers = m.convs.size();

  FcnGrads g;
  g.conv_w.resize(n_layers);
  g.conv_b.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    g.conv_w[l].assign(m.convs[l].w.size(), 0.0);
    g.conv_b[l].assign(m.convs[l].b.size(), 0.0);
  }
  g.dense_w.assign(m.dense_w.size(), 0.0);
  g.dense_b.assign(m.dense_b.size(), 0.0);

  // dense layer
  Series dgap(C, 0.0);
  for (int k = 0; k < K; ++k) {
    g.dense_b[k] = dlogits[k];
    for (int c = 0; c < C; ++c) {
      g.dense_w[static_cast<std::size_t>(k) * C + c] = dlogits[k] * act.gap[c];
      dgap[c] += dlogits[k] * m.dense_w[static_cast<std::size_t>(k) * C + c];
    }
  }

  // GAP: d/d(post_last[c][t]) = dgap[c] / L
  Matrix dpost(C, Series(L, 0.0));
  for (int c = 0; c < C; ++c) {
    double v = dgap[c] / static_cast<double>(L);
    std::fill(dpost[c].begin(), dpost[c].end(), v);
  }

  Matrix input(1, x);
  for (std::size_t l = n_layers; l-- > 0;) {
    const ConvLayer& layer = m.convs[l];
    const Matrix& in = l == 0 ? input : act.post[l - 1];
    int pl = pad_left_of(layer.ksize);

    // ReLU (derivative 0 at exactly 0)
    Matrix dz = dpost;
    for (int c = 0; c < layer.out_ch; ++c)
      for (std::size_t t = 0; t < L; ++t)
        if (!(act.pre[l][c][t] > 0)) dz[c][t] = 0.0;

    Matrix din(layer.in_ch, Series(L, 0.0));
    for (int c = 0; c < layer.out_ch; ++c) {
      double bsum = 0;
      for (std::size_t t = 0; t < L; ++t) bsum += dz[c][t];
      g.conv_b[l][c] = bsum;
      for (int ic = 0; ic < layer.in_ch; ++ic) {
        std::size_t wbase =
            (static_cast<std::size_t>(c) * layer.in_ch + ic) * layer.ksize;
        for (int dk = 0; dk < layer.ksize; ++dk) {
          long shift = static_cast<long>(dk) - pl;
          std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          std::size_t t1 = shift > 0 ? L - static_cast<std::size_t>(shift) : L;
          double wsum = 0;
          double wv = layer.w[wbase + dk];
          for (std::size_t t = t0; t < t1; ++t) {
            wsum += dz[c][t] * in[ic][t + shift];
            din[ic][t + shift] += dz[c][t] * wv;
          }
          g.conv_w[l][wbase + dk] = wsum;
        }
      }
    }
    dpost = std::move(din);
  }
  g.input = std::move(dpost[0]);
  return g;
}

FcnGrads fcn_backward(const FcnModel& m, const Series& x, int y) {
  if (y < 0 || y >= m.arch.n_classes)
    throw std::invalid_argument("fcn_backward: label out of range");
  FcnActivations act;
  fcn_forward(m, x, act);
  Series dlogits = act.probs;
  dlogits[y] -= 1.0;
  return fcn_backward_from_dlogits(m, x, act, dlogits);
}

Series class_input_gradient(const FcnModel& m, const Series& x, int class_index) {
  if (class_index < 0 || class_index >= m.arch.n_classes)
    throw std::invalid_argument("class_input_gradient: class out of range");
  FcnActivations act;
  fcn_forward(m, x, act);
  Series dlogits(m.arch.n_classes, 0.0);
  dlogits[class_index] = 1.0;
  return fcn_backward_from_dlogits(m, x, act, dlogits).input;
}

Matrix logit_grad_last_conv(const FcnModel& m, const Series& x, int class_index) {
  if (m.convs.empty())
    throw std::invalid_argument("logit_grad_last_conv: model has no conv layer");
  if (class_index < 0 || class_index >= m.arch.n_classes)
    throw std::invalid_argument("logit_grad_last_conv: class out of range");
  std::size_t L = x.size();
  int C = m.convs.back().out_ch;
  // logit depends on the last conv activations only through GAP, so the
  // gradient is the dense weight spread uniformly over time
  Matrix dA(C, Series(L, 0.0));
  for (int c = 0; c < C; ++c) {
    double v = m.dense_w[static_cast<std::size_t>(class_index) * C + c] /
               static_cast<double>(L);
    std::fill(dA[c].begin(), dA[c].end(), v);
  }
  return dA;
}

namespace {

struct AdamState {
  std::vector<Series> m, v;
  long t = 0;
};

void apply_update(std::vector<Series*>& params, const std::vector<Series*>& grads,
                  const OptParams& opt, AdamState& state) {
  if (!opt.adam) {
    for (std::size_t a = 0; a < params.size(); ++a)
      for (std::size_t i = 0; i < params[a]->size(); ++i)
        (*params[a])[i] -= opt.lr * (*grads[a])[i];
    return;
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.t;
  double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t a = 0; a < params.size(); ++a) {
    Series& mm = state.m[a];
    Series& vv = state.v[a];
    for (std::size_t i = 0; i < params[a]->size(); ++i) {
      double gval = (*grads[a])[i];
      mm[i] = b1 * mm[i] + (1 - b1) * gval;
      vv[i] = b2 * vv[i] + (1 - b2) * gval * gval;
      (*params[a])[i] -= opt.lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
    }
  }
}

}  // namespace

FcnModel fit_fcn(const Matrix& X, const std::vector<int>& y,
                 const FcnArchitecture& arch, const OptParams& opt,
                 std::uint64_t seed) {
  std::size_t n = X.size();
  if (n == 0 || y.size() != n) throw std::invalid_argument("fit_fcn: bad input sizes");
  std::set<int> classes(y.begin(), y.end());
  if (classes.size() < 2) throw std::invalid_argument("fit_fcn: need >= 2 classes");
  for (int label : y)
    if (label < 0 || label >= arch.n_classes)
      throw std::invalid_argument("fit_fcn: label out of range");

  FcnModel m = init_fcn(arch, seed);
  std::mt19937 rng(static_cast<std::uint32_t>(seed ^ 0x9e3779b97f4a7c15ull));

  auto collect = [](FcnModel& model) {
    std::vector<Series*> out;
    for (auto& layer : model.convs) {
      out.push_back(&layer.w);
      out.push_back(&layer.b);
    }
    out.push_back(&model.dense_w);
    out.push_back(&model.dense_b);
    return out;
  };
  std::vector<Series*> params = collect(m);

  AdamState state;
  if (opt.adam) {
    for (Series* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  FcnActivations act;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t start = 0; start < n; start += opt.batch) {
      std::size_t stop = std::min(n, start + opt.batch);
      FcnGrads acc;
      bool first = true;
      for (std::size_t bi = start; bi < stop; ++bi) {
        std::size_t i = order[bi];
        fcn_forward(m, X[i], act);
        epoch_loss += -std::log(std::max(act.probs[y[i]], 1e-300));
        Series dlogits = act.probs;
        dlogits[y[i]] -= 1.0;
        FcnGrads g = fcn_backward_from_dlogits(m, X[i], act, dlogits);
        if (first) {
          acc = std::move(g);
          first = false;
        } else {
          for (std::size_t l = 0; l < acc.conv_w.size(); ++l) {
            for (std::size_t j = 0; j < acc.conv_w[l].size(); ++j)
              acc.conv_w[l][j] += g.conv_w[l][j];
            for (std::size_t j = 0; j < acc.conv_b[l].size(); ++j)
              acc.conv_b[l][j] += g.conv_b[l][j];
          }
          for (std::size_t j = 0; j < acc.dense_w.size(); ++j)
            acc.dense_w[j] += g.dense_w[j];
          for (std::size_t j = 0; j < acc.dense_b.size(); ++j)
            acc.dense_b[j] += g.dense_b[j];
        }
      }
      double scale = 1.0 / static_cast<double>(stop - start);
      std::vector<Series*> grads;
      for (std::size_t l = 0; l < acc.conv_w.size(); ++l) {
        grads.push_back(&acc.conv_w[l]);
        grads.push_back(&acc.conv_b[l]);
      }
      grads.push_back(&acc.dense_w);
      grads.push_back(&acc.dense_b);
      for (Series* gr : grads)
        for (double& v : *gr) v *= scale;
      apply_update(params, grads, opt, state);
    }
    m.training_log.push_back(epoch_loss / static_cast<double>(n));
  }
  return m;
}

void save_fcn_json(const FcnModel& m, const std::string& path) {
  nlohmann::json j;
  j["model"] = "fcn";
  j["n_layers"] = m.arch.n_layers;
  j["first_filters"] = m.arch.first_filters;
  j["n_classes"] = m.arch.n_classes;
  nlohmann::json convs = nlohmann::json::array();
  for (const auto& layer : m.convs)
    convs.push_back({{"in_ch", layer.in_ch},
                     {"out_ch", layer.out_ch},
                     {"ksize", layer.ksize},
                     {"w", layer.w},
                     {"b", layer.b}});
  j["convs"] = convs;
  j["dense_w"] = m.dense_w;
  j["dense_b"] = m.dense_b;
  j["training_log"] = m.training_log;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_fcn_json: cannot open " + path);
  out << j.dump(1) << "\n";
}

FcnModel load_fcn_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_fcn_json: cannot open " + path);
  nlohmann::json j;
  in >> j;
  FcnModel m;
  m.arch.n_layers = j.at("n_layers").get<int>();
  m.arch.first_filters = j.at("first_filters").get<int>();
  m.arch.n_classes = j.at("n_classes").get<int>();
  for (const auto& cj : j.at("convs")) {
    ConvLayer layer;
    layer.in_ch = cj.at("in_ch").get<int>();
    layer.out_ch = cj.at("out_ch").get<int>();
    layer.ksize = cj.at("ksize").get<int>();
    layer.w = cj.at("w").get<Series>();
    layer.b = cj.at("b").get<Series>();
    m.convs.push_back(std::move(layer));
  }
  m.dense_w = j.at("dense_w").get<Series>();
  m.dense_b = j.at("dense_b").get<Series>();
  m.training_log = j.at("training_log").get<Series>();
  return m;
}

}  // namespace tsce
