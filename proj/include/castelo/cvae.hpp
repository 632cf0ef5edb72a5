#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "castelo/error.hpp"
#include "castelo/io.hpp"
#include "castelo/rng.hpp"
#include "castelo/types.hpp"

namespace castelo {

// Architecture of the convolutional variational autoencoder. Four conv
// layers, kernel (1,7), stride (1,2), no padding, mirrored by four
// transposed conv layers on the decoder side.
struct CvaeArch {
  int filters = 32;
  int latent_dim = 10;
  int input_height = 2;
  int input_width = 91;
};

inline constexpr int kConvLayers = 4;
inline constexpr int kKernelW = 7;
inline constexpr int kStrideW = 2;

// Widths after each encoder layer: W' = (W - 7) / 2 + 1, requiring W >= 7 at
// every layer. Returns a vector of kConvLayers + 1 entries starting at the
// input width.
inline std::vector<int> encoder_widths(const CvaeArch& arch) {
  if (arch.filters < 1) fail(Errc::ConfigError, "filters must be positive");
  if (arch.latent_dim < 1) fail(Errc::ConfigError, "latent_dim must be positive");
  if (arch.input_height < 1) fail(Errc::ConfigError, "input_height must be positive");
  std::vector<int> widths{arch.input_width};
  int w = arch.input_width;
  for (int layer = 0; layer < kConvLayers; ++layer) {
    if (w < kKernelW)
      fail(Errc::ShapeMismatch, "input width " + std::to_string(arch.input_width) + " leaves width " +
                                    std::to_string(w) + " at conv layer " + std::to_string(layer + 1) +
                                    ", need at least " + std::to_string(kKernelW));
    w = (w - kKernelW) / kStrideW + 1;
    widths.push_back(w);
  }
  return widths;
}

// Extra right-side columns each transposed layer needs so the decoder lands
// exactly back on the encoder widths (0 or 1 per layer).
inline std::vector<int> decoder_output_padding(const std::vector<int>& widths) {
  std::vector<int> pad(kConvLayers);
  for (int layer = 0; layer < kConvLayers; ++layer) {
    int w_in = widths[kConvLayers - layer];
    int w_target = widths[kConvLayers - layer - 1];
    int base = (w_in - 1) * kStrideW + kKernelW;
    pad[layer] = w_target - base;
    if (pad[layer] < 0 || pad[layer] > 1) fail(Errc::Internal, "inconsistent decoder width chain");
  }
  return pad;
}

struct TrainConfig {
  double learning_rate = 0.005;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  int max_epochs = 600;
  int patience = 10;
  int batch_size = 64;
  double kl_weight = 1.0;
  std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.learning_rate < 0.0) fail(Errc::ConfigError, "learning_rate must be non-negative");
  if (cfg.rms_decay < 0.0 || cfg.rms_decay >= 1.0) fail(Errc::ConfigError, "rms_decay must be in [0,1)");
  if (cfg.rms_eps <= 0.0) fail(Errc::ConfigError, "rms_eps must be positive");
  if (cfg.max_epochs < 1) fail(Errc::ConfigError, "max_epochs must be at least 1");
  if (cfg.patience < 1) fail(Errc::ConfigError, "patience must be at least 1");
  if (cfg.batch_size < 1) fail(Errc::ConfigError, "batch_size must be at least 1");
  if (cfg.kl_weight < 0.0) fail(Errc::ConfigError, "kl_weight must be non-negative");
}

template <typename Real>
struct CvaeParams {
  CvaeArch arch;
  std::vector<std::vector<Real>> enc_w, enc_b;  // [C_out x C_in*7] / [C_out]
  std::vector<Real> mu_w, mu_b;                 // [d x F] / [d]
  std::vector<Real> lv_w, lv_b;
  std::vector<Real> dec_w, dec_b;               // [F x d] / [F]
  std::vector<std::vector<Real>> dct_w, dct_b;  // [(ci*C_out + co)*7 + k] / [C_out]
};

template <typename Real>
struct ParamView {
  const char* name;
  std::vector<Real>* data;
  int fan_in;  // C_in * kernel for convs, input features for affine layers
};

template <typename Real>
std::vector<ParamView<Real>> param_views(CvaeParams<Real>& p) {
  int f = p.arch.filters, d = p.arch.latent_dim;
  std::vector<int> widths = encoder_widths(p.arch);
  int F = f * p.arch.input_height * widths[kConvLayers];
  std::vector<ParamView<Real>> v;
  static const char* enc_names[] = {"enc_w1", "enc_w2", "enc_w3", "enc_w4"};
  static const char* encb_names[] = {"enc_b1", "enc_b2", "enc_b3", "enc_b4"};
  static const char* dct_names[] = {"dct_w1", "dct_w2", "dct_w3", "dct_w4"};
  static const char* dctb_names[] = {"dct_b1", "dct_b2", "dct_b3", "dct_b4"};
  for (int l = 0; l < kConvLayers; ++l) v.push_back({enc_names[l], &p.enc_w[l], (l == 0 ? 1 : f) * kKernelW});
  v.push_back({"mu_w", &p.mu_w, F});
  v.push_back({"lv_w", &p.lv_w, F});
  v.push_back({"dec_w", &p.dec_w, d});
  for (int l = 0; l < kConvLayers; ++l) v.push_back({dct_names[l], &p.dct_w[l], f * kKernelW});
  for (int l = 0; l < kConvLayers; ++l) v.push_back({encb_names[l], &p.enc_b[l], 0});
  v.push_back({"mu_b", &p.mu_b, 0});
  v.push_back({"lv_b", &p.lv_b, 0});
  v.push_back({"dec_b", &p.dec_b, 0});
  for (int l = 0; l < kConvLayers; ++l) v.push_back({dctb_names[l], &p.dct_b[l], 0});
  return v;
}

template <typename Real>
CvaeParams<Real> make_params(const CvaeArch& arch) {
  std::vector<int> widths = encoder_widths(arch);
  int f = arch.filters, d = arch.latent_dim, H = arch.input_height;
  int F = f * H * widths[kConvLayers];
  CvaeParams<Real> p;
  p.arch = arch;
  p.enc_w.resize(kConvLayers);
  p.enc_b.resize(kConvLayers);
  p.dct_w.resize(kConvLayers);
  p.dct_b.resize(kConvLayers);
  for (int l = 0; l < kConvLayers; ++l) {
    int cin = l == 0 ? 1 : f;
    p.enc_w[l].assign(static_cast<std::size_t>(f) * cin * kKernelW, Real(0));
    p.enc_b[l].assign(static_cast<std::size_t>(f), Real(0));
    int dc_in = f;
    int dc_out = l == kConvLayers - 1 ? 1 : f;
    p.dct_w[l].assign(static_cast<std::size_t>(dc_in) * dc_out * kKernelW, Real(0));
    p.dct_b[l].assign(static_cast<std::size_t>(dc_out), Real(0));
  }
  p.mu_w.assign(static_cast<std::size_t>(d) * F, Real(0));
  p.mu_b.assign(static_cast<std::size_t>(d), Real(0));
  p.lv_w.assign(static_cast<std::size_t>(d) * F, Real(0));
  p.lv_b.assign(static_cast<std::size_t>(d), Real(0));
  p.dec_w.assign(static_cast<std::size_t>(F) * d, Real(0));
  p.dec_b.assign(static_cast<std::size_t>(F), Real(0));
  return p;
}

// Weights drawn uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) in a fixed tensor
// order, biases zero.
template <typename Real>
CvaeParams<Real> init_params(const CvaeArch& arch, std::uint64_t seed) {
  CvaeParams<Real> p = make_params<Real>(arch);
  Rng rng(seed);
  for (auto& view : param_views(p)) {
    if (view.fan_in == 0) continue;  // bias
    double bound = std::sqrt(1.0 / view.fan_in);
    for (auto& w : *view.data) w = static_cast<Real>(rng.uniform(-bound, bound));
  }
  return p;
}

struct LossParts {
  double bce = 0.0;
  double kld = 0.0;
  double total(double kl_weight = 1.0) const { return bce + kl_weight * kld; }
};

// One trained architecture's latent trace over the trajectory.
struct LatentSeries {
  int frames = 0;
  int latent_dim = 0;
  int filters = 0;
  std::vector<float> mu;  // frames x latent_dim, row-major
  double final_loss = 0.0;
  int best_epoch = 0;
};

inline TensorF latent_to_tensor(const LatentSeries& ls) {
  TensorF t;
  t.dims = {ls.frames, ls.latent_dim};
  t.data = ls.mu;
  return t;
}

namespace detail {

template <typename Real>
using MatMap = Eigen::Map<Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename Real>
using CMatMap = Eigen::Map<const Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline constexpr double kBceClamp = 1e-7;

}  // namespace detail

// The network with its forward/backward machinery. Activations live in
// channel-major buffers: index(c, b, y, x) = ((c*B + b)*H + y)*W + x, so each
// channel is one contiguous [B*H*W] row of a GEMM operand. Convolutions are
// lowered to im2col + GEMM; transposed convolutions to GEMM + col2im.
template <typename Real>
class Cvae {
 public:
  explicit Cvae(const CvaeArch& arch)
      : arch_(arch), widths_(encoder_widths(arch)), pad_(decoder_output_padding(widths_)) {
    F_ = arch_.filters * arch_.input_height * widths_[kConvLayers];
  }

  const CvaeArch& arch() const { return arch_; }
  const std::vector<int>& widths() const { return widths_; }
  int feature_size() const { return F_; }

  // x: [B][H][W0] row-major (equivalently channel-major with C=1).
  // eps: [B][d] reparameterization noise, or nullptr for the deterministic
  // z = mu pass. Keeps all intermediates for a following backward().
  LossParts forward(const CvaeParams<Real>& p, const Real* x, int B, const Real* eps, double kl_weight = 1.0) {
    resize_buffers(B);
    const int H = arch_.input_height, f = arch_.filters, d = arch_.latent_dim;
    B_ = B;

    std::size_t n0 = bhw(B, 0);
    h_[0].assign(x, x + n0);

    // encoder convs
    for (int l = 0; l < kConvLayers; ++l) {
      int cin = l == 0 ? 1 : f;
      int win = widths_[l], wout = widths_[l + 1];
      im2col(h_[l].data(), cols_[l].data(), cin, B, H, win, wout);
      detail::CMatMap<Real> W(p.enc_w[l].data(), f, cin * kKernelW);
      detail::CMatMap<Real> C(cols_[l].data(), cin * kKernelW, static_cast<std::ptrdiff_t>(B) * H * wout);
      detail::MatMap<Real> O(h_[l + 1].data(), f, static_cast<std::ptrdiff_t>(B) * H * wout);
      O.noalias() = W * C;
      std::size_t n = static_cast<std::size_t>(B) * H * wout;
      for (int co = 0; co < f; ++co) {
        Real b = p.enc_b[l][co];
        Real* row = h_[l + 1].data() + static_cast<std::size_t>(co) * n;
        for (std::size_t i = 0; i < n; ++i) {
          Real v = row[i] + b;
          row[i] = v > Real(0) ? v : Real(0);
        }
      }
    }

    // flatten to per-sample feature rows
    gather_features(h_[kConvLayers].data(), e_.data(), B);

    // latent heads
    affine(e_.data(), p.mu_w.data(), p.mu_b.data(), mu_.data(), B, F_, d);
    affine(e_.data(), p.lv_w.data(), p.lv_b.data(), lv_.data(), B, F_, d);
    if (eps)
      eps_.assign(eps, eps + static_cast<std::size_t>(B) * d);
    else
      std::fill(eps_.begin(), eps_.begin() + static_cast<std::size_t>(B) * d, Real(0));
    for (std::size_t i = 0; i < static_cast<std::size_t>(B) * d; ++i)
      z_[i] = mu_[i] + std::exp(Real(0.5) * lv_[i]) * eps_[i];

    double kld = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(B) * d; ++i) {
      double m = mu_[i], l = lv_[i];
      kld += 0.5 * (m * m + std::exp(l) - l - 1.0);
      if (!std::isfinite(kld)) fail(Errc::NonFiniteActivation, "non-finite latent moments");
    }
    kld /= B;

    // decoder affine, scattered back to channel-major
    affine(z_.data(), p.dec_w.data(), p.dec_b.data(), g_.data(), B, d, F_);
    scatter_features_relu(g_.data(), u_[0].data(), B);

    // transposed convs
    for (int l = 0; l < kConvLayers; ++l) {
      int cin = f;
      int cout = l == kConvLayers - 1 ? 1 : f;
      int win = widths_[kConvLayers - l], wout = widths_[kConvLayers - l - 1];
      pack_dct(p.dct_w[l], m2_, cin, cout);
      detail::CMatMap<Real> M2(m2_.data(), cout * kKernelW, cin);
      detail::CMatMap<Real> U(u_[l].data(), cin, static_cast<std::ptrdiff_t>(B) * H * win);
      detail::MatMap<Real> S(s_[l].data(), cout * kKernelW, static_cast<std::ptrdiff_t>(B) * H * win);
      S.noalias() = M2 * U;
      Real* out = l == kConvLayers - 1 ? yhat_.data() : u_[l + 1].data();
      col2im_bias(s_[l].data(), p.dct_b[l].data(), out, cout, B, H, win, wout);
      std::size_t n = static_cast<std::size_t>(cout) * B * H * wout;
      if (l < kConvLayers - 1) {
        for (std::size_t i = 0; i < n; ++i) out[i] = out[i] > Real(0) ? out[i] : Real(0);
      } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = Real(1) / (Real(1) + std::exp(-out[i]));
      }
    }

    // losses: reconstruction summed over elements, both terms averaged over
    // the batch
    double bce = 0.0;
    for (std::size_t i = 0; i < n0; ++i) {
      double yh = std::min(1.0 - detail::kBceClamp, std::max(detail::kBceClamp, static_cast<double>(yhat_[i])));
      double xv = h_[0][i];
      bce -= xv * std::log(yh) + (1.0 - xv) * std::log(1.0 - yh);
    }
    bce /= B;

    LossParts parts;
    parts.bce = bce;
    parts.kld = kld;
    kl_weight_ = kl_weight;
    return parts;
  }

  // Gradients of forward()'s loss with respect to every parameter; must be
  // called right after forward() on the same batch. Grads are overwritten.
  void backward(const CvaeParams<Real>& p, CvaeParams<Real>& g) {
    const int B = B_, H = arch_.input_height, f = arch_.filters, d = arch_.latent_dim;
    const double invB = 1.0 / B;

    // d loss / d yhat-preact, only where the clamp was inactive
    std::size_t n0 = bhw(B, 0);
    dbuf_a_.resize(std::max(dbuf_a_.size(), n0));
    Real* dt = dbuf_a_.data();
    for (std::size_t i = 0; i < n0; ++i) {
      double yh = yhat_[i];
      bool clamped = yh < detail::kBceClamp || yh > 1.0 - detail::kBceClamp;
      dt[i] = clamped ? Real(0) : static_cast<Real>((yh - static_cast<double>(h_[0][i])) * invB);
    }

    // transposed convs, last to first
    for (int l = kConvLayers - 1; l >= 0; --l) {
      int cin = f;
      int cout = l == kConvLayers - 1 ? 1 : f;
      int win = widths_[kConvLayers - l], wout = widths_[kConvLayers - l - 1];
      std::size_t nout = static_cast<std::size_t>(B) * H * wout;
      std::size_t nin = static_cast<std::size_t>(B) * H * win;

      for (int co = 0; co < cout; ++co) {
        double acc = 0.0;
        const Real* row = dt + static_cast<std::size_t>(co) * nout;
        for (std::size_t i = 0; i < nout; ++i) acc += row[i];
        g.dct_b[l][co] = static_cast<Real>(acc);
      }
      // adjoint of col2im: gather strided windows of dt into dS
      Real* dS = s_[l].data();  // reuse the forward S buffer
      for (int co = 0; co < cout; ++co)
        for (int k = 0; k < kKernelW; ++k) {
          Real* dst = dS + (static_cast<std::size_t>(co) * kKernelW + k) * nin;
          const Real* src = dt + static_cast<std::size_t>(co) * nout;
          for (int by = 0; by < B * H; ++by) {
            const Real* srow = src + static_cast<std::size_t>(by) * wout + k;
            Real* drow = dst + static_cast<std::size_t>(by) * win;
            for (int i = 0; i < win; ++i) drow[i] = srow[i * kStrideW];
          }
        }
      // dM2 = dS * U^T, unpacked into the (ci, co, k) weight layout
      dm2_.resize(static_cast<std::size_t>(cout) * kKernelW * cin);
      {
        detail::CMatMap<Real> dSm(dS, cout * kKernelW, static_cast<std::ptrdiff_t>(nin));
        detail::CMatMap<Real> U(u_[l].data(), cin, static_cast<std::ptrdiff_t>(nin));
        detail::MatMap<Real> dM2(dm2_.data(), cout * kKernelW, cin);
        dM2.noalias() = dSm * U.transpose();
      }
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          for (int k = 0; k < kKernelW; ++k)
            g.dct_w[l][(static_cast<std::size_t>(ci) * cout + co) * kKernelW + k] =
                dm2_[(static_cast<std::size_t>(co) * kKernelW + k) * cin + ci];
      // dU = M2^T * dS, then through the relu that produced u_[l]
      pack_dct(p.dct_w[l], m2_, cin, cout);
      dbuf_b_.resize(std::max(dbuf_b_.size(), static_cast<std::size_t>(cin) * nin));
      {
        detail::CMatMap<Real> M2(m2_.data(), cout * kKernelW, cin);
        detail::CMatMap<Real> dSm(dS, cout * kKernelW, static_cast<std::ptrdiff_t>(nin));
        detail::MatMap<Real> dU(dbuf_b_.data(), cin, static_cast<std::ptrdiff_t>(nin));
        dU.noalias() = M2.transpose() * dSm;
      }
      std::size_t nu = static_cast<std::size_t>(cin) * nin;
      for (std::size_t i = 0; i < nu; ++i) dbuf_b_[i] = u_[l][i] > Real(0) ? dbuf_b_[i] : Real(0);
      std::swap(dbuf_a_, dbuf_b_);
      dt = dbuf_a_.data();
    }

    // dt now holds d loss / dG (G = decoder affine preact), channel-major;
    // bring it back to per-sample rows
    dg_.resize(static_cast<std::size_t>(B) * F_);
    gather_features(dt, dg_.data(), B);
    {
      detail::CMatMap<Real> dG(dg_.data(), B, F_);
      detail::CMatMap<Real> Z(z_.data(), B, d);
      detail::MatMap<Real> dW(g.dec_w.data(), F_, d);
      dW.noalias() = dG.transpose() * Z;
      detail::MatMap<Real> dB(g.dec_b.data(), 1, F_);
      dB.noalias() = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Ones(B) * dG;
      dz_.resize(static_cast<std::size_t>(B) * d);
      detail::CMatMap<Real> Wd(p.dec_w.data(), F_, d);
      detail::MatMap<Real> dZ(dz_.data(), B, d);
      dZ.noalias() = dG * Wd;
    }

    // z = mu + exp(lv/2) * eps, plus the KL terms
    dmu_.resize(static_cast<std::size_t>(B) * d);
    dlv_.resize(static_cast<std::size_t>(B) * d);
    for (std::size_t i = 0; i < static_cast<std::size_t>(B) * d; ++i) {
      Real sd = std::exp(Real(0.5) * lv_[i]);
      dmu_[i] = dz_[i] + static_cast<Real>(kl_weight_ * invB) * mu_[i];
      dlv_[i] = dz_[i] * Real(0.5) * sd * eps_[i] +
                static_cast<Real>(kl_weight_ * 0.5 * invB) * (std::exp(lv_[i]) - Real(1));
    }

    de_.resize(static_cast<std::size_t>(B) * F_);
    {
      detail::CMatMap<Real> dMu(dmu_.data(), B, d);
      detail::CMatMap<Real> dLv(dlv_.data(), B, d);
      detail::CMatMap<Real> E(e_.data(), B, F_);
      detail::MatMap<Real> gMw(g.mu_w.data(), d, F_);
      gMw.noalias() = dMu.transpose() * E;
      detail::MatMap<Real> gLw(g.lv_w.data(), d, F_);
      gLw.noalias() = dLv.transpose() * E;
      detail::MatMap<Real> gMb(g.mu_b.data(), 1, d);
      gMb.noalias() = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Ones(B) * dMu;
      detail::MatMap<Real> gLb(g.lv_b.data(), 1, d);
      gLb.noalias() = Eigen::Matrix<Real, 1, Eigen::Dynamic>::Ones(B) * dLv;
      detail::CMatMap<Real> Mw(p.mu_w.data(), d, F_);
      detail::CMatMap<Real> Lw(p.lv_w.data(), d, F_);
      detail::MatMap<Real> dE(de_.data(), B, F_);
      dE.noalias() = dMu * Mw + dLv * Lw;
    }

    // back into channel-major, through the last encoder relu
    std::size_t n4 = bhw(B, kConvLayers) * f;
    dbuf_a_.resize(std::max(dbuf_a_.size(), n4));
    scatter_features(de_.data(), dbuf_a_.data(), B);
    for (std::size_t i = 0; i < n4; ++i) dbuf_a_[i] = h_[kConvLayers][i] > Real(0) ? dbuf_a_[i] : Real(0);
    dt = dbuf_a_.data();

    // encoder convs, last to first
    for (int l = kConvLayers - 1; l >= 0; --l) {
      int cin = l == 0 ? 1 : f;
      int win = widths_[l], wout = widths_[l + 1];
      std::size_t nout = static_cast<std::size_t>(B) * H * wout;
      {
        detail::CMatMap<Real> dO(dt, f, static_cast<std::ptrdiff_t>(nout));
        detail::CMatMap<Real> C(cols_[l].data(), cin * kKernelW, static_cast<std::ptrdiff_t>(nout));
        detail::MatMap<Real> dW(g.enc_w[l].data(), f, cin * kKernelW);
        dW.noalias() = dO * C.transpose();
        for (int co = 0; co < f; ++co) {
          double acc = 0.0;
          const Real* row = dt + static_cast<std::size_t>(co) * nout;
          for (std::size_t i = 0; i < nout; ++i) acc += row[i];
          g.enc_b[l][co] = static_cast<Real>(acc);
        }
      }
      if (l == 0) break;  // input gradient not needed
      std::size_t ncols = static_cast<std::size_t>(cin) * kKernelW * nout;
      dcols_.resize(std::max(dcols_.size(), ncols));
      {
        detail::CMatMap<Real> W(p.enc_w[l].data(), f, cin * kKernelW);
        detail::CMatMap<Real> dO(dt, f, static_cast<std::ptrdiff_t>(nout));
        detail::MatMap<Real> dC(dcols_.data(), cin * kKernelW, static_cast<std::ptrdiff_t>(nout));
        dC.noalias() = W.transpose() * dO;
      }
      std::size_t nprev = static_cast<std::size_t>(cin) * bhw(B, l);
      dbuf_b_.resize(std::max(dbuf_b_.size(), nprev));
      std::fill(dbuf_b_.begin(), dbuf_b_.begin() + nprev, Real(0));
      col2im_add(dcols_.data(), dbuf_b_.data(), cin, B, H, win, wout);
      for (std::size_t i = 0; i < nprev; ++i) dbuf_b_[i] = h_[l][i] > Real(0) ? dbuf_b_[i] : Real(0);
      std::swap(dbuf_a_, dbuf_b_);
      dt = dbuf_a_.data();
    }
  }

  // Encoder-only pass; writes mu (and optionally logvar), [B][d] row-major.
  void encode(const CvaeParams<Real>& p, const Real* x, int B, Real* mu_out, Real* lv_out = nullptr) {
    resize_buffers(B);
    const int H = arch_.input_height, f = arch_.filters, d = arch_.latent_dim;
    std::size_t n0 = bhw(B, 0);
    h_[0].assign(x, x + n0);
    for (int l = 0; l < kConvLayers; ++l) {
      int cin = l == 0 ? 1 : f;
      int win = widths_[l], wout = widths_[l + 1];
      im2col(h_[l].data(), cols_[l].data(), cin, B, H, win, wout);
      detail::CMatMap<Real> W(p.enc_w[l].data(), f, cin * kKernelW);
      detail::CMatMap<Real> C(cols_[l].data(), cin * kKernelW, static_cast<std::ptrdiff_t>(B) * H * wout);
      detail::MatMap<Real> O(h_[l + 1].data(), f, static_cast<std::ptrdiff_t>(B) * H * wout);
      O.noalias() = W * C;
      std::size_t n = static_cast<std::size_t>(B) * H * wout;
      for (int co = 0; co < f; ++co) {
        Real b = p.enc_b[l][co];
        Real* row = h_[l + 1].data() + static_cast<std::size_t>(co) * n;
        for (std::size_t i = 0; i < n; ++i) {
          Real v = row[i] + b;
          row[i] = v > Real(0) ? v : Real(0);
        }
      }
    }
    gather_features(h_[kConvLayers].data(), e_.data(), B);
    affine(e_.data(), p.mu_w.data(), p.mu_b.data(), mu_out, B, F_, d);
    if (lv_out) affine(e_.data(), p.lv_w.data(), p.lv_b.data(), lv_out, B, F_, d);
  }

  const std::vector<Real>& reconstruction() const { return yhat_; }
  const std::vector<Real>& latent_mu() const { return mu_; }
  const std::vector<Real>& latent_logvar() const { return lv_; }

 private:
  std::size_t bhw(int B, int level) const {
    return static_cast<std::size_t>(B) * arch_.input_height * widths_[level];
  }

  void resize_buffers(int B) {
    const int H = arch_.input_height, f = arch_.filters, d = arch_.latent_dim;
    h_.resize(kConvLayers + 1);
    cols_.resize(kConvLayers);
    u_.resize(kConvLayers);
    s_.resize(kConvLayers);
    h_[0].resize(bhw(B, 0));
    for (int l = 0; l < kConvLayers; ++l) {
      int cin = l == 0 ? 1 : f;
      h_[l + 1].resize(static_cast<std::size_t>(f) * bhw(B, l + 1));
      cols_[l].resize(static_cast<std::size_t>(cin) * kKernelW * bhw(B, l + 1));
      int dcout = l == kConvLayers - 1 ? 1 : f;
      u_[l].resize(static_cast<std::size_t>(f) * bhw(B, kConvLayers - l));
      s_[l].resize(static_cast<std::size_t>(dcout) * kKernelW * bhw(B, kConvLayers - l));
    }
    e_.resize(static_cast<std::size_t>(B) * F_);
    g_.resize(static_cast<std::size_t>(B) * F_);
    mu_.resize(static_cast<std::size_t>(B) * d);
    lv_.resize(static_cast<std::size_t>(B) * d);
    z_.resize(static_cast<std::size_t>(B) * d);
    eps_.resize(static_cast<std::size_t>(B) * d);
    yhat_.resize(bhw(B, 0));
  }

  // cols[(ci*7 + k)][by*Wout + x] = in[ci][by*Win + 2x + k]
  void im2col(const Real* in, Real* cols, int cin, int B, int H, int win, int wout) const {
    std::size_t nin = static_cast<std::size_t>(B) * H * win;
    std::size_t nout = static_cast<std::size_t>(B) * H * wout;
    for (int ci = 0; ci < cin; ++ci)
      for (int k = 0; k < kKernelW; ++k) {
        const Real* src = in + static_cast<std::size_t>(ci) * nin;
        Real* dst = cols + (static_cast<std::size_t>(ci) * kKernelW + k) * nout;
        for (int by = 0; by < B * H; ++by) {
          const Real* srow = src + static_cast<std::size_t>(by) * win + k;
          Real* drow = dst + static_cast<std::size_t>(by) * wout;
          for (int x = 0; x < wout; ++x) drow[x] = srow[x * kStrideW];
        }
      }
  }

  // scatter-add adjoint of im2col
  void col2im_add(const Real* cols, Real* out, int cin, int B, int H, int win, int wout) const {
    std::size_t nin = static_cast<std::size_t>(B) * H * win;
    std::size_t nout = static_cast<std::size_t>(B) * H * wout;
    for (int ci = 0; ci < cin; ++ci)
      for (int k = 0; k < kKernelW; ++k) {
        Real* dst = out + static_cast<std::size_t>(ci) * nin;
        const Real* src = cols + (static_cast<std::size_t>(ci) * kKernelW + k) * nout;
        for (int by = 0; by < B * H; ++by) {
          Real* drow = dst + static_cast<std::size_t>(by) * win + k;
          const Real* srow = src + static_cast<std::size_t>(by) * wout;
          for (int x = 0; x < wout; ++x) drow[x * kStrideW] += srow[x];
        }
      }
  }

  // transposed conv: out[co][by*Wout + 2i + k] += S[(co*7+k)][by*Win + i],
  // starting from the bias (output-padding columns keep the plain bias)
  void col2im_bias(const Real* s, const Real* bias, Real* out, int cout, int B, int H, int win, int wout) const {
    std::size_t nin = static_cast<std::size_t>(B) * H * win;
    std::size_t nout = static_cast<std::size_t>(B) * H * wout;
    for (int co = 0; co < cout; ++co) {
      Real* dst = out + static_cast<std::size_t>(co) * nout;
      std::fill(dst, dst + nout, bias[co]);
      for (int k = 0; k < kKernelW; ++k) {
        const Real* src = s + (static_cast<std::size_t>(co) * kKernelW + k) * nin;
        for (int by = 0; by < B * H; ++by) {
          Real* drow = dst + static_cast<std::size_t>(by) * wout + k;
          const Real* srow = src + static_cast<std::size_t>(by) * win;
          for (int i = 0; i < win; ++i) drow[i * kStrideW] += srow[i];
        }
      }
    }
  }

  // channel-major [f][B*H*W4] <-> per-sample feature rows [B][f*H*W4]
  void gather_features(const Real* cm, Real* rows, int B) const {
    const int H = arch_.input_height, f = arch_.filters, w4 = widths_[kConvLayers];
    for (int ci = 0; ci < f; ++ci)
      for (int b = 0; b < B; ++b)
        for (int y = 0; y < H; ++y)
          std::memcpy(rows + (static_cast<std::size_t>(b) * F_) + (static_cast<std::size_t>(ci) * H + y) * w4,
                      cm + ((static_cast<std::size_t>(ci) * B + b) * H + y) * w4, sizeof(Real) * w4);
  }

  void scatter_features(const Real* rows, Real* cm, int B) const {
    const int H = arch_.input_height, f = arch_.filters, w4 = widths_[kConvLayers];
    for (int ci = 0; ci < f; ++ci)
      for (int b = 0; b < B; ++b)
        for (int y = 0; y < H; ++y)
          std::memcpy(cm + ((static_cast<std::size_t>(ci) * B + b) * H + y) * w4,
                      rows + (static_cast<std::size_t>(b) * F_) + (static_cast<std::size_t>(ci) * H + y) * w4,
                      sizeof(Real) * w4);
  }

  void scatter_features_relu(const Real* rows, Real* cm, int B) {
    scatter_features(rows, cm, B);
    std::size_t n = static_cast<std::size_t>(arch_.filters) * bhw(B, kConvLayers);
    for (std::size_t i = 0; i < n; ++i) cm[i] = cm[i] > Real(0) ? cm[i] : Real(0);
  }

  // out[B x N] = in[B x K] * W[N x K]^T + b
  void affine(const Real* in, const Real* w, const Real* b, Real* out, int B, int K, int N) const {
    detail::CMatMap<Real> I(in, B, K);
    detail::CMatMap<Real> W(w, N, K);
    detail::MatMap<Real> O(out, B, N);
    O.noalias() = I * W.transpose();
    for (int r = 0; r < B; ++r)
      for (int c = 0; c < N; ++c) out[static_cast<std::size_t>(r) * N + c] += b[c];
  }

  // weights [(ci*cout + co)*7 + k] -> GEMM operand [(co*7 + k)][ci]
  void pack_dct(const std::vector<Real>& w, std::vector<Real>& packed, int cin, int cout) const {
    packed.resize(static_cast<std::size_t>(cout) * kKernelW * cin);
    for (int ci = 0; ci < cin; ++ci)
      for (int co = 0; co < cout; ++co)
        for (int k = 0; k < kKernelW; ++k)
          packed[(static_cast<std::size_t>(co) * kKernelW + k) * cin + ci] =
              w[(static_cast<std::size_t>(ci) * cout + co) * kKernelW + k];
  }

  CvaeArch arch_;
  std::vector<int> widths_;
  std::vector<int> pad_;
  int F_ = 0;
  int B_ = 0;
  double kl_weight_ = 1.0;

  std::vector<std::vector<Real>> h_, cols_, u_, s_;
  std::vector<Real> e_, g_, mu_, lv_, z_, eps_, yhat_, m2_, dm2_;
  std::vector<Real> dbuf_a_, dbuf_b_, dcols_, dg_, dz_, dmu_, dlv_, de_;
};

// RMSProp: v <- decay*v + (1-decay)*g^2; p <- p - lr*g/(sqrt(v)+eps).
template <typename Real>
class RmsProp {
 public:
  RmsProp(CvaeParams<Real>& params, const TrainConfig& cfg) : cfg_(cfg) {
    for (auto& view : param_views(params)) state_.emplace_back(view.data->size(), Real(0));
  }

  void step(CvaeParams<Real>& params, CvaeParams<Real>& grads) {
    auto pv = param_views(params);
    auto gv = param_views(grads);
    const Real decay = static_cast<Real>(cfg_.rms_decay);
    const Real one_minus = static_cast<Real>(1.0 - cfg_.rms_decay);
    const Real lr = static_cast<Real>(cfg_.learning_rate);
    const Real eps = static_cast<Real>(cfg_.rms_eps);
    for (std::size_t t = 0; t < pv.size(); ++t) {
      Real* p = pv[t].data->data();
      const Real* g = gv[t].data->data();
      Real* v = state_[t].data();
      std::size_t n = pv[t].data->size();
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = decay * v[i] + one_minus * g[i] * g[i];
        p[i] -= lr * g[i] / (std::sqrt(v[i]) + eps);
      }
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<std::vector<Real>> state_;
};

struct LossPoint {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double eval_loss = 0.0;
};

template <typename Real>
struct TrainResult {
  CvaeParams<Real> params;  // weights from the best evaluation epoch
  LatentSeries latent;
  std::vector<LossPoint> curve;
  int best_epoch = 0;
  int epochs_run = 0;
};

namespace detail {

template <typename Real>
void gather_batch(const TensorF& inputs, const std::vector<int>& order, std::size_t begin, int B,
                  std::vector<Real>& out) {
  std::size_t sample = static_cast<std::size_t>(inputs.dims[1]) * inputs.dims[2];
  out.resize(static_cast<std::size_t>(B) * sample);
  for (int b = 0; b < B; ++b) {
    const float* src = inputs.data.data() + static_cast<std::size_t>(order[begin + b]) * sample;
    Real* dst = out.data() + static_cast<std::size_t>(b) * sample;
    for (std::size_t i = 0; i < sample; ++i) dst[i] = static_cast<Real>(src[i]);
  }
}

}  // namespace detail

// Trains one architecture on [T, H, W] inputs. Batches are visited in a
// seeded shuffled order; the early-stopping monitor is a deterministic
// end-of-epoch evaluation over the whole dataset with z = mu, so a run with
// zero learning rate improves exactly once and stops after patience more
// epochs. Divergence (non-finite loss) aborts with the epoch number.
template <typename Real = float>
TrainResult<Real> train(const TensorF& inputs, const CvaeArch& arch_in, const TrainConfig& cfg) {
  validate_train_config(cfg);
  if (inputs.dims.size() != 3) fail(Errc::ShapeMismatch, "training tensor must be [frames, height, width]");
  int T = static_cast<int>(inputs.dims[0]);
  if (T < 1) fail(Errc::ShapeMismatch, "training tensor has no frames");
  for (float v : inputs.data)
    if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::InvalidSpec, "training inputs must lie in [0,1]");

  CvaeArch arch = arch_in;
  arch.input_height = static_cast<int>(inputs.dims[1]);
  arch.input_width = static_cast<int>(inputs.dims[2]);

  Cvae<Real> net(arch);
  CvaeParams<Real> params = init_params<Real>(arch, cfg.seed);
  CvaeParams<Real> grads = make_params<Real>(arch);
  CvaeParams<Real> best_params = params;
  RmsProp<Real> opt(params, cfg);
  Rng rng(derive_seed(cfg.seed, 0x7261696e));  // draws for shuffling and eps

  int B_cap = std::min(cfg.batch_size, T);
  int d = arch.latent_dim;
  std::vector<int> order(T), natural(T);
  for (int i = 0; i < T; ++i) natural[i] = i;
  std::vector<Real> xbuf, epsbuf(static_cast<std::size_t>(B_cap) * d);

  TrainResult<Real> res;
  double best_eval = std::numeric_limits<double>::infinity();
  int since_improved = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order = natural;
    rng.shuffle(order);
    double train_acc = 0.0;
    for (std::size_t begin = 0; begin < static_cast<std::size_t>(T); begin += B_cap) {
      int B = static_cast<int>(std::min<std::size_t>(B_cap, T - begin));
      detail::gather_batch(inputs, order, begin, B, xbuf);
      for (int i = 0; i < B * d; ++i) epsbuf[i] = static_cast<Real>(rng.normal());
      LossParts parts = net.forward(params, xbuf.data(), B, epsbuf.data(), cfg.kl_weight);
      double total = parts.total(cfg.kl_weight);
      if (!std::isfinite(total))
        fail(Errc::Diverged, "non-finite loss at epoch " + std::to_string(epoch), epoch);
      train_acc += total * B;
      net.backward(params, grads);
      opt.step(params, grads);
    }
    double train_loss = train_acc / T;

    double eval_acc = 0.0;
    for (std::size_t begin = 0; begin < static_cast<std::size_t>(T); begin += B_cap) {
      int B = static_cast<int>(std::min<std::size_t>(B_cap, T - begin));
      detail::gather_batch(inputs, natural, begin, B, xbuf);
      LossParts parts = net.forward(params, xbuf.data(), B, nullptr, cfg.kl_weight);
      eval_acc += parts.total(cfg.kl_weight) * B;
    }
    double eval_loss = eval_acc / T;
    if (!std::isfinite(eval_loss))
      fail(Errc::Diverged, "non-finite evaluation loss at epoch " + std::to_string(epoch), epoch);

    res.curve.push_back({epoch, train_loss, eval_loss});
    res.epochs_run = epoch;
    if (eval_loss < best_eval) {
      best_eval = eval_loss;
      best_params = params;
      res.best_epoch = epoch;
      since_improved = 0;
    } else {
      ++since_improved;
      if (since_improved >= cfg.patience) break;
    }
  }

  res.params = std::move(best_params);
  res.latent.frames = T;
  res.latent.latent_dim = d;
  res.latent.filters = arch.filters;
  res.latent.final_loss = best_eval;
  res.latent.best_epoch = res.best_epoch;
  res.latent.mu.resize(static_cast<std::size_t>(T) * d);
  std::vector<Real> mu_chunk(static_cast<std::size_t>(B_cap) * d);
  for (std::size_t begin = 0; begin < static_cast<std::size_t>(T); begin += B_cap) {
    int B = static_cast<int>(std::min<std::size_t>(B_cap, T - begin));
    detail::gather_batch(inputs, natural, begin, B, xbuf);
    net.encode(res.params, xbuf.data(), B, mu_chunk.data());
    for (int i = 0; i < B * d; ++i)
      res.latent.mu[begin * d + i] = static_cast<float>(mu_chunk[i]);
  }
  return res;
}

// The standard architecture grid: filters x latent_dim.
inline std::vector<std::pair<int, int>> default_ensemble() {
  return {{32, 3}, {32, 5}, {32, 10}, {64, 3}, {64, 5}, {64, 10}};
}

template <typename Real>
struct EnsembleItem {
  int filters = 0;
  int latent_dim = 0;
  bool ok = false;
  std::string error;
  TrainResult<Real> result;
};

// Trains every architecture in the grid; a diverging architecture is
// recorded and skipped rather than aborting the ensemble. Each architecture
// gets a seed derived from the base seed and its (filters, latent_dim) tag.
template <typename Real = float>
std::vector<EnsembleItem<Real>> train_ensemble(const TensorF& inputs, const std::vector<std::pair<int, int>>& grid,
                                               const TrainConfig& base_cfg) {
  if (grid.empty()) fail(Errc::EmptyEnsemble, "architecture grid is empty");
  std::vector<EnsembleItem<Real>> items;
  for (auto [f, d] : grid) {
    EnsembleItem<Real> item;
    item.filters = f;
    item.latent_dim = d;
    TrainConfig cfg = base_cfg;
    cfg.seed = derive_seed(base_cfg.seed, (static_cast<std::uint64_t>(f) << 32) | static_cast<std::uint64_t>(d));
    CvaeArch arch;
    arch.filters = f;
    arch.latent_dim = d;
    try {
      item.result = train<Real>(inputs, arch, cfg);
      item.ok = true;
    } catch (const Error& e) {
      if (e.code() != Errc::Diverged && e.code() != Errc::NonFiniteActivation) throw;
      item.error = e.what();
    }
    items.push_back(std::move(item));
  }
  return items;
}

// ---------------------------------------------------------------------------
// checkpoint file: magic, u64 little-endian header length, JSON header, then
// every parameter tensor as raw little-endian float64 in param_views order

inline constexpr char kCheckpointMagic[8] = {'C', 'V', 'A', 'E', 'C', 'K', 'P', '1'};

template <typename Real>
void save_checkpoint(const CvaeParams<Real>& params, const TrainConfig& cfg, int best_epoch, double final_loss,
                     const std::string& path) {
  auto views = param_views(const_cast<CvaeParams<Real>&>(params));
  ordered_json header;
  header["version"] = 1;
  header["arch"] = {{"filters", params.arch.filters},
                    {"latent_dim", params.arch.latent_dim},
                    {"input_height", params.arch.input_height},
                    {"input_width", params.arch.input_width}};
  header["train"] = {{"learning_rate", cfg.learning_rate}, {"rms_decay", cfg.rms_decay},
                     {"rms_eps", cfg.rms_eps},             {"max_epochs", cfg.max_epochs},
                     {"patience", cfg.patience},           {"batch_size", cfg.batch_size},
                     {"kl_weight", cfg.kl_weight},         {"seed", cfg.seed}};
  header["best_epoch"] = best_epoch;
  header["final_loss"] = final_loss;
  ordered_json plist = ordered_json::array();
  for (const auto& v : views) plist.push_back({{"name", v.name}, {"size", v.data->size()}});
  header["params"] = std::move(plist);

  std::string head = header.dump();
  std::string blob;
  blob.reserve(sizeof(kCheckpointMagic) + 8 + head.size());
  blob.append(kCheckpointMagic, sizeof(kCheckpointMagic));
  std::uint64_t hlen = head.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
  blob.append(lenbuf, 8);
  blob += head;
  for (const auto& v : views)
    for (Real x : *v.data) {
      double dv = static_cast<double>(x);
      char db[8];
      std::memcpy(db, &dv, 8);
      blob.append(db, 8);
    }
  write_file_atomic(path, blob);
}

struct CheckpointMeta {
  TrainConfig train;
  int best_epoch = 0;
  double final_loss = 0.0;
};

template <typename Real>
CvaeParams<Real> load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
  std::string blob = read_file(path);
  if (blob.size() < sizeof(kCheckpointMagic) + 8 ||
      std::memcmp(blob.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    fail(Errc::IoError, path + ": not a checkpoint file");
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i)
    hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[sizeof(kCheckpointMagic) + i])) << (8 * i);
  std::size_t head_begin = sizeof(kCheckpointMagic) + 8;
  if (blob.size() < head_begin + hlen) fail(Errc::IoError, path + ": truncated checkpoint header");
  json header = json::parse(blob.substr(head_begin, hlen), nullptr, false);
  if (header.is_discarded()) fail(Errc::IoError, path + ": invalid checkpoint header");

  CvaeArch arch;
  arch.filters = header.at("arch").at("filters").get<int>();
  arch.latent_dim = header.at("arch").at("latent_dim").get<int>();
  arch.input_height = header.at("arch").at("input_height").get<int>();
  arch.input_width = header.at("arch").at("input_width").get<int>();
  CvaeParams<Real> p = make_params<Real>(arch);
  auto views = param_views(p);

  std::size_t offset = head_begin + hlen;
  std::size_t vi = 0;
  for (const auto& pj : header.at("params")) {
    if (vi >= views.size()) fail(Errc::IoError, path + ": too many parameter tensors");
    auto& view = views[vi];
    if (pj.at("name").get<std::string>() != view.name || pj.at("size").get<std::size_t>() != view.data->size())
      fail(Errc::ShapeMismatch, path + ": parameter " + pj.at("name").get<std::string>() + " does not match");
    std::size_t bytes = view.data->size() * 8;
    if (blob.size() < offset + bytes) fail(Errc::IoError, path + ": truncated parameter data");
    for (std::size_t i = 0; i < view.data->size(); ++i) {
      double dv;
      std::memcpy(&dv, blob.data() + offset + i * 8, 8);
      (*view.data)[i] = static_cast<Real>(dv);
    }
    offset += bytes;
    ++vi;
  }
  if (vi != views.size()) fail(Errc::IoError, path + ": missing parameter tensors");

  if (meta) {
    const auto& t = header.at("train");
    meta->train.learning_rate = t.at("learning_rate").get<double>();
    meta->train.rms_decay = t.at("rms_decay").get<double>();
    meta->train.rms_eps = t.at("rms_eps").get<double>();
    meta->train.max_epochs = t.at("max_epochs").get<int>();
    meta->train.patience = t.at("patience").get<int>();
    meta->train.batch_size = t.at("batch_size").get<int>();
    meta->train.kl_weight = t.at("kl_weight").get<double>();
    meta->train.seed = t.at("seed").get<std::uint64_t>();
    meta->best_epoch = header.at("best_epoch").get<int>();
    meta->final_loss = header.at("final_loss").get<double>();
  }
  return p;
}

inline void write_loss_curve(const std::vector<LossPoint>& curve, const std::string& path) {
  std::string out = "epoch,train_loss,eval_loss\n";
  for (const auto& pt : curve)
    out += std::to_string(pt.epoch) + "," + fmt_shortest(pt.train_loss) + "," + fmt_shortest(pt.eval_loss) + "\n";
  write_file_atomic(path, out);
}

}  // namespace castelo
