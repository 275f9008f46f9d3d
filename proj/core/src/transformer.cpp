#include "addrkit/transformer.hpp"

#include <cmath>

namespace addrkit {

namespace {

ConstMatMap cmat(const ParamStore& s, const std::string& n) { return s.mat(n); }

constexpr double kLnEps = 1e-5;
constexpr double kMaskScore = -1e30;

// y = g .* xhat + b columnwise; xhat and rstd are cached for backward.
void ln_forward(const Mat& x, ConstMatMap g, ConstMatMap b, Mat* out, Mat* xhat, Vec* rstd) {
  const int d = static_cast<int>(x.rows());
  const int t = static_cast<int>(x.cols());
  xhat->resize(d, t);
  rstd->resize(t);
  out->resize(d, t);
  for (int c = 0; c < t; ++c) {
    const double mean = x.col(c).mean();
    const double var = (x.col(c).array() - mean).square().mean();
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    (*rstd)(c) = rs;
    xhat->col(c) = ((x.col(c).array() - mean) * rs).matrix();
    out->col(c) = (xhat->col(c).array() * g.col(0).array() + b.col(0).array()).matrix();
  }
}

// Accumulates dg/db and returns dx for the affine layer norm above.
Mat ln_backward(const Mat& d_out, const Mat& xhat, const Vec& rstd, ConstMatMap g,
                MatMap dg, MatMap db) {
  const int d = static_cast<int>(d_out.rows());
  const int t = static_cast<int>(d_out.cols());
  Mat dx(d, t);
  for (int c = 0; c < t; ++c) {
    dg.col(0).array() += d_out.col(c).array() * xhat.col(c).array();
    db.col(0).array() += d_out.col(c).array();
    Vec dxh = (d_out.col(c).array() * g.col(0).array()).matrix();
    const double m1 = dxh.mean();
    const double m2 = (dxh.array() * xhat.col(c).array()).mean();
    dx.col(c) = (rstd(c) * (dxh.array() - m1 - xhat.col(c).array() * m2)).matrix();
  }
  return dx;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_prime(double x) {
  return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

std::string Trunk::lkey(int layer, const std::string& suffix) const {
  return prefix_ + "l" + std::to_string(layer) + "." + suffix;
}

Trunk::Trunk(ParamStore& store, std::string prefix, const TrunkConfig& cfg)
    : store_(store), prefix_(std::move(prefix)), cfg_(cfg) {
  if (cfg_.vocab <= 0) throw ConfigError("trunk vocab must be positive");
  if (cfg_.d_model <= 0 || cfg_.n_layers <= 0 || cfg_.d_ff <= 0 || cfg_.max_len <= 0)
    throw ConfigError("trunk dimensions must be positive");
  if (cfg_.n_heads <= 0 || cfg_.d_model % cfg_.n_heads != 0)
    throw ConfigError("d_model must be divisible by n_heads");
  store_.add(key("tok"), cfg_.d_model, cfg_.vocab);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    store_.add(lkey(l, "ln1.g"), cfg_.d_model, 1);
    store_.add(lkey(l, "ln1.b"), cfg_.d_model, 1);
    store_.add(lkey(l, "wq"), cfg_.d_model, cfg_.d_model);
    store_.add(lkey(l, "wk"), cfg_.d_model, cfg_.d_model);
    store_.add(lkey(l, "wv"), cfg_.d_model, cfg_.d_model);
    store_.add(lkey(l, "wo"), cfg_.d_model, cfg_.d_model);
    store_.add(lkey(l, "ln2.g"), cfg_.d_model, 1);
    store_.add(lkey(l, "ln2.b"), cfg_.d_model, 1);
    store_.add(lkey(l, "w1"), cfg_.d_ff, cfg_.d_model);
    store_.add(lkey(l, "b1"), cfg_.d_ff, 1);
    store_.add(lkey(l, "w2"), cfg_.d_model, cfg_.d_ff);
    store_.add(lkey(l, "b2"), cfg_.d_model, 1);
  }
  store_.add(key("lnf.g"), cfg_.d_model, 1);
  store_.add(key("lnf.b"), cfg_.d_model, 1);
  slopes_.resize(cfg_.n_heads);
  for (int h = 0; h < cfg_.n_heads; ++h)
    slopes_[h] = std::pow(2.0, -8.0 * (h + 1) / cfg_.n_heads);
}

void Trunk::init(Rng& rng) {
  auto gauss = [&](MatMap m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = 0.02 * rng.gaussian();
  };
  gauss(store_.mat(key("tok")));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    store_.mat(lkey(l, "ln1.g")).setOnes();
    store_.mat(lkey(l, "ln1.b")).setZero();
    gauss(store_.mat(lkey(l, "wq")));
    gauss(store_.mat(lkey(l, "wk")));
    gauss(store_.mat(lkey(l, "wv")));
    gauss(store_.mat(lkey(l, "wo")));
    store_.mat(lkey(l, "ln2.g")).setOnes();
    store_.mat(lkey(l, "ln2.b")).setZero();
    gauss(store_.mat(lkey(l, "w1")));
    store_.mat(lkey(l, "b1")).setZero();
    gauss(store_.mat(lkey(l, "w2")));
    store_.mat(lkey(l, "b2")).setZero();
  }
  store_.mat(key("lnf.g")).setOnes();
  store_.mat(key("lnf.b")).setZero();
}

Mat Trunk::forward(const std::vector<int>& tokens, Cache* cache) const {
  const int t_len = static_cast<int>(tokens.size());
  if (t_len == 0) throw std::invalid_argument("trunk forward on empty sequence");
  if (t_len > cfg_.max_len)
    throw std::invalid_argument("sequence length " + std::to_string(t_len) +
                                " exceeds context window " + std::to_string(cfg_.max_len));
  const int d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  ConstMatMap tok = cmat(store_, key("tok"));
  Mat x(d, t_len);
  for (int i = 0; i < t_len; ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg_.vocab)
      throw std::invalid_argument("token id out of vocabulary: " + std::to_string(tokens[i]));
    x.col(i) = tok.col(tokens[i]);
  }
  if (cache) {
    cache->tokens = tokens;
    cache->layers.assign(cfg_.n_layers, LayerCache{});
  }

  Mat a, xhat;
  Vec rstd;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    ln_forward(x, cmat(store_, lkey(l, "ln1.g")), cmat(store_, lkey(l, "ln1.b")), &a, &xhat, &rstd);
    if (lc) {
      lc->a1 = a;
      lc->xhat1 = xhat;
      lc->rstd1 = rstd;
    }
    Mat q = cmat(store_, lkey(l, "wq")) * a;
    Mat k = cmat(store_, lkey(l, "wk")) * a;
    Mat v = cmat(store_, lkey(l, "wv")) * a;
    Mat att(d, t_len);
    if (lc) lc->p.resize(heads);
    for (int h = 0; h < heads; ++h) {
      auto qh = q.middleRows(h * dh, dh);
      auto kh = k.middleRows(h * dh, dh);
      auto vh = v.middleRows(h * dh, dh);
      Mat s = (qh.transpose() * kh) * inv_sqrt_dh;  // s(i,j): query i, key j
      for (int i = 0; i < t_len; ++i) {
        for (int j = 0; j <= i; ++j) s(i, j) -= slopes_[h] * (i - j);
        for (int j = i + 1; j < t_len; ++j) s(i, j) = kMaskScore;
      }
      Mat p(t_len, t_len);
      for (int i = 0; i < t_len; ++i) {
        const double mx = s.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (int j = 0; j <= i; ++j) {
          p(i, j) = std::exp(s(i, j) - mx);
          z += p(i, j);
        }
        for (int j = 0; j <= i; ++j) p(i, j) /= z;
        for (int j = i + 1; j < t_len; ++j) p(i, j) = 0.0;
      }
      att.middleRows(h * dh, dh) = vh * p.transpose();
      if (lc) lc->p[h] = std::move(p);
    }
    if (lc) {
      lc->q = std::move(q);
      lc->k = std::move(k);
      lc->v = std::move(v);
      lc->att_concat = att;
    }
    x += cmat(store_, lkey(l, "wo")) * att;

    ln_forward(x, cmat(store_, lkey(l, "ln2.g")), cmat(store_, lkey(l, "ln2.b")), &a, &xhat, &rstd);
    if (lc) {
      lc->a2 = a;
      lc->xhat2 = xhat;
      lc->rstd2 = rstd;
    }
    Mat h_pre = (cmat(store_, lkey(l, "w1")) * a).colwise() + cmat(store_, lkey(l, "b1")).col(0);
    Mat h_act = h_pre.unaryExpr([](double u) { return gelu(u); });
    x += (cmat(store_, lkey(l, "w2")) * h_act).colwise() + cmat(store_, lkey(l, "b2")).col(0);
    if (lc) {
      lc->h_pre = std::move(h_pre);
      lc->h_act = std::move(h_act);
    }
  }

  Mat y;
  if (cache) {
    ln_forward(x, cmat(store_, key("lnf.g")), cmat(store_, key("lnf.b")), &y, &cache->xhat_f,
               &cache->rstd_f);
  } else {
    ln_forward(x, cmat(store_, key("lnf.g")), cmat(store_, key("lnf.b")), &y, &xhat, &rstd);
  }
  return y;
}

void Trunk::backward(const Cache& cache, const Mat& d_hidden) {
  const int t_len = static_cast<int>(cache.tokens.size());
  const int d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Mat dx = ln_backward(d_hidden, cache.xhat_f, cache.rstd_f, cmat(store_, key("lnf.g")),
                       store_.grad(key("lnf.g")), store_.grad(key("lnf.b")));

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    // MLP block
    store_.grad(lkey(l, "w2")) += dx * lc.h_act.transpose();
    store_.grad(lkey(l, "b2")).col(0) += dx.rowwise().sum();
    Mat dh_act = cmat(store_, lkey(l, "w2")).transpose() * dx;
    Mat dh_pre =
        dh_act.binaryExpr(lc.h_pre, [](double g, double u) { return g * gelu_prime(u); });
    store_.grad(lkey(l, "w1")) += dh_pre * lc.a2.transpose();
    store_.grad(lkey(l, "b1")).col(0) += dh_pre.rowwise().sum();
    Mat da2 = cmat(store_, lkey(l, "w1")).transpose() * dh_pre;
    dx += ln_backward(da2, lc.xhat2, lc.rstd2, cmat(store_, lkey(l, "ln2.g")),
                      store_.grad(lkey(l, "ln2.g")), store_.grad(lkey(l, "ln2.b")));

    // attention block
    store_.grad(lkey(l, "wo")) += dx * lc.att_concat.transpose();
    Mat datt = cmat(store_, lkey(l, "wo")).transpose() * dx;
    Mat dq(d, t_len), dk(d, t_len), dv(d, t_len);
    for (int h = 0; h < heads; ++h) {
      auto d_oh = datt.middleRows(h * dh, dh);
      auto qh = lc.q.middleRows(h * dh, dh);
      auto kh = lc.k.middleRows(h * dh, dh);
      auto vh = lc.v.middleRows(h * dh, dh);
      const Mat& p = lc.p[h];
      Mat dp = d_oh.transpose() * vh;  // dp(i,j)
      Mat ds(t_len, t_len);
      for (int i = 0; i < t_len; ++i) {
        double dot = 0.0;
        for (int j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
        for (int j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot);
        for (int j = i + 1; j < t_len; ++j) ds(i, j) = 0.0;
      }
      dq.middleRows(h * dh, dh) = (kh * ds.transpose()) * inv_sqrt_dh;
      dk.middleRows(h * dh, dh) = (qh * ds) * inv_sqrt_dh;
      dv.middleRows(h * dh, dh) = d_oh * p;
    }
    store_.grad(lkey(l, "wq")) += dq * lc.a1.transpose();
    store_.grad(lkey(l, "wk")) += dk * lc.a1.transpose();
    store_.grad(lkey(l, "wv")) += dv * lc.a1.transpose();
    Mat da1 = cmat(store_, lkey(l, "wq")).transpose() * dq +
              cmat(store_, lkey(l, "wk")).transpose() * dk +
              cmat(store_, lkey(l, "wv")).transpose() * dv;
    dx += ln_backward(da1, lc.xhat1, lc.rstd1, cmat(store_, lkey(l, "ln1.g")),
                      store_.grad(lkey(l, "ln1.g")), store_.grad(lkey(l, "ln1.b")));
  }

  MatMap dtok = store_.grad(key("tok"));
  for (int i = 0; i < t_len; ++i) dtok.col(cache.tokens[i]) += dx.col(i);
}

Trunk::StepState Trunk::make_state() const {
  StepState st;
  st.k.assign(cfg_.n_layers, Mat::Zero(cfg_.d_model, cfg_.max_len));
  st.v.assign(cfg_.n_layers, Mat::Zero(cfg_.d_model, cfg_.max_len));
  st.len = 0;
  return st;
}

Mat Trunk::prefill(StepState& state, const std::vector<int>& tokens) const {
  const int t_len = static_cast<int>(tokens.size());
  const int start = state.len;
  if (t_len == 0) throw std::invalid_argument("trunk prefill on empty sequence");
  if (start + t_len > cfg_.max_len)
    throw std::invalid_argument("prefill would exceed context window");
  const int d = cfg_.d_model;
  const int heads = cfg_.n_heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const int total = start + t_len;

  ConstMatMap tok = cmat(store_, key("tok"));
  Mat x(d, t_len);
  for (int i = 0; i < t_len; ++i) {
    if (tokens[i] < 0 || tokens[i] >= cfg_.vocab)
      throw std::invalid_argument("token id out of vocabulary: " + std::to_string(tokens[i]));
    x.col(i) = tok.col(tokens[i]);
  }

  Mat a, xhat;
  Vec rstd;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    ln_forward(x, cmat(store_, lkey(l, "ln1.g")), cmat(store_, lkey(l, "ln1.b")), &a, &xhat, &rstd);
    state.k[l].middleCols(start, t_len) = cmat(store_, lkey(l, "wk")) * a;
    state.v[l].middleCols(start, t_len) = cmat(store_, lkey(l, "wv")) * a;
    Mat q = cmat(store_, lkey(l, "wq")) * a;
    Mat att(d, t_len);
    for (int h = 0; h < heads; ++h) {
      auto qh = q.middleRows(h * dh, dh);
      auto kh = state.k[l].middleRows(h * dh, dh);
      auto vh = state.v[l].middleRows(h * dh, dh);
      for (int i = 0; i < t_len; ++i) {
        const int pos = start + i;
        Vec s(pos + 1);
        for (int j = 0; j <= pos; ++j)
          s(j) = qh.col(i).dot(kh.col(j)) * inv_sqrt_dh - slopes_[h] * (pos - j);
        const double mx = s.maxCoeff();
        Vec p = (s.array() - mx).exp().matrix();
        p /= p.sum();
        att.block(h * dh, i, dh, 1) = vh.leftCols(pos + 1) * p;
      }
    }
    x += cmat(store_, lkey(l, "wo")) * att;
    ln_forward(x, cmat(store_, lkey(l, "ln2.g")), cmat(store_, lkey(l, "ln2.b")), &a, &xhat, &rstd);
    Mat h_pre = (cmat(store_, lkey(l, "w1")) * a).colwise() + cmat(store_, lkey(l, "b1")).col(0);
    Mat h_act = h_pre.unaryExpr([](double u) { return gelu(u); });
    x += (cmat(store_, lkey(l, "w2")) * h_act).colwise() + cmat(store_, lkey(l, "b2")).col(0);
  }
  state.len = total;
  Mat y;
  ln_forward(x, cmat(store_, key("lnf.g")), cmat(store_, key("lnf.b")), &y, &xhat, &rstd);
  return y;
}

Vec Trunk::step(StepState& state, int token) const {
  std::vector<int> one = {token};
  Mat y = prefill(state, one);
  return y.col(0);
}

}  // namespace addrkit
