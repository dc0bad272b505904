#pragma once

// Attention kernels.
//
// Three forms share the same row-weighted-average structure
//
//   out_i = sum_j sim(q_i, k_j) v_j / sum_j sim(q_i, k_j)
//
//  * softmax_attention: sim = exp(q_i . k_j). Builds the full N x N weight
//    matrix; this is the quadratic reference.
//  * kernel_attention: sim = phi(q_i) . psi(k_j) for caller-supplied
//    nonnegative feature maps. The sums over j are factored out and computed
//    once, so nothing N x N is ever formed.
//  * linear_attention: the first-order Taylor map sim = 1 + q^_i . k^_j with
//    l2-normalised rows q^, k^. Factored the same way:
//
//        out_i = (sum_j v_j + q^_i^T (K^^T V)) / (N + q^_i . sum_j k^_j)
//
//    Cost O(N D^2) time and O(N D + D^2) scratch.
//
// No 1/sqrt(D_k) temperature is applied in either path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mlagan/autodiff.hpp"
#include "mlagan/kernels.hpp"
#include "mlagan/random.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan {

template <typename T>
constexpr T default_eps() {
  if constexpr (sizeof(T) >= 8) {
    return T(1e-12);
  } else {
    return T(1e-6);
  }
}

/// Denominator guard for the attention kernels.
inline constexpr double kAttentionDenominatorEps = 1e-6;

struct AttentionConfig {
  std::size_t heads = 4;
  std::size_t model_dim = 0;
  std::size_t head_key_dim = 0;
  std::size_t head_value_dim = 0;
  double eps = kAttentionDenominatorEps;

  /// Splits width C evenly across h heads (D_k = D_v = C / h).
  static AttentionConfig for_width(std::size_t model_dim, std::size_t heads) {
    if (heads == 0 || model_dim % heads != 0) {
      throw ConfigError("attention: width " + std::to_string(model_dim) +
                        " is not divisible by head count " + std::to_string(heads));
    }
    return AttentionConfig{heads, model_dim, model_dim / heads, model_dim / heads,
                           kAttentionDenominatorEps};
  }

  void validate() const {
    if (heads == 0 || model_dim == 0 || head_key_dim == 0 || head_value_dim == 0) {
      throw ConfigError("attention: all dimensions must be positive");
    }
    if (!(eps > 0.0)) throw ConfigError("attention: eps must be positive");
  }
};

/// Counters filled in by the kernels when a pointer is supplied.
struct AttentionDiagnostics {
  std::size_t clamped_rows = 0;
  std::size_t peak_transient_elements = 0;
  std::size_t live_transient_elements = 0;

  void acquire(std::size_t n) {
    live_transient_elements += n;
    peak_transient_elements = std::max(peak_transient_elements, live_transient_elements);
  }
  void release(std::size_t n) { live_transient_elements -= n; }
};

/// Scratch tensor whose lifetime is reported to an AttentionDiagnostics.
template <typename T>
class Transient {
 public:
  Transient(Shape shape, AttentionDiagnostics* diag) : buf_(std::move(shape)), diag_(diag) {
    if (diag_) diag_->acquire(buf_.size());
  }
  Transient(const Transient&) = delete;
  Transient& operator=(const Transient&) = delete;
  ~Transient() {
    if (diag_) diag_->release(buf_.size());
  }

  Tensor<T>& operator*() { return buf_; }
  const Tensor<T>& operator*() const { return buf_; }
  Tensor<T>* operator->() { return &buf_; }
  const Tensor<T>* operator->() const { return &buf_; }

 private:
  Tensor<T> buf_;
  AttentionDiagnostics* diag_;
};

namespace detail {

template <typename T>
void require_qkv(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, const char* op) {
  require_rank(q, 2, op);
  require_rank(k, 2, op);
  require_rank(v, 2, op);
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError(std::string(op) + ": query width " + std::to_string(q.dim(1)) +
                         " != key width " + std::to_string(k.dim(1)));
  }
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError(std::string(op) + ": " + std::to_string(k.dim(0)) + " keys but " +
                         std::to_string(v.dim(0)) + " values");
  }
}

// out_i = (base + f_i^T kv) / max(offset + f_i . ksum, eps) for every query row f_i.
template <typename T>
void factored_readout(const Tensor<T>& features, const Tensor<T>& kv, const Tensor<T>& ksum,
                      const T* base, T offset, T eps, Tensor<T>& out, AttentionDiagnostics* diag) {
  const std::size_t n = features.dim(0), d = features.dim(1), dv = kv.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    const T* f = features.ptr() + i * d;
    T* o = out.ptr() + i * dv;
    T den = offset;
    for (std::size_t a = 0; a < d; ++a) den += f[a] * ksum[a];
    for (std::size_t c = 0; c < dv; ++c) o[c] = base ? base[c] : T{0};
    for (std::size_t a = 0; a < d; ++a) {
      const T fa = f[a];
      const T* kvrow = kv.ptr() + a * dv;
      for (std::size_t c = 0; c < dv; ++c) o[c] += fa * kvrow[c];
    }
    if (den < eps) {
      den = eps;
      if (diag) ++diag->clamped_rows;
    }
    for (std::size_t c = 0; c < dv; ++c) o[c] /= den;
  }
}

}  // namespace detail

/// rho(Q K^T) V with a row softmax. Materialises the N x N weights.
template <typename T>
Tensor<T> softmax_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            AttentionDiagnostics* diag = nullptr) {
  detail::require_qkv(q, k, v, "softmax_attention");
  const std::size_t n = q.dim(0), m = k.dim(0), d = q.dim(1), dv = v.dim(1);
  Transient<T> weights({n, m}, diag);
  for (std::size_t i = 0; i < n; ++i) {
    T* w = weights->ptr() + i * m;
    const T* qi = q.ptr() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const T* kj = k.ptr() + j * d;
      T s{0};
      for (std::size_t a = 0; a < d; ++a) s += qi[a] * kj[a];
      w[j] = s;
    }
    const T mx = *std::max_element(w, w + m);
    T total{0};
    for (std::size_t j = 0; j < m; ++j) {
      w[j] = std::exp(w[j] - mx);
      total += w[j];
    }
    for (std::size_t j = 0; j < m; ++j) w[j] /= total;
  }
  Tensor<T> out({n, dv});
  for (std::size_t i = 0; i < n; ++i) {
    const T* w = weights->ptr() + i * m;
    T* o = out.ptr() + i * dv;
    for (std::size_t j = 0; j < m; ++j) {
      const T wj = w[j];
      const T* vj = v.ptr() + j * dv;
      for (std::size_t c = 0; c < dv; ++c) o[c] += wj * vj[c];
    }
  }
  return out;
}

/// The softmax weight matrix on its own (rows sum to one).
template <typename T>
Tensor<T> softmax_attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
  return kernels::softmax_rows(kernels::matmul_nt(q, k));
}

/// Generic factored attention with nonnegative features phi(Q), psi(K).
template <typename T>
Tensor<T> kernel_attention(const Tensor<T>& phi_q, const Tensor<T>& psi_k, const Tensor<T>& v,
                           T eps = T(kAttentionDenominatorEps), AttentionDiagnostics* diag = nullptr) {
  detail::require_qkv(phi_q, psi_k, v, "kernel_attention");
  const std::size_t df = psi_k.dim(1), dv = v.dim(1);
  Transient<T> kv({df, dv}, diag);
  *kv = kernels::matmul_tn(psi_k, v);
  Transient<T> ksum({df}, diag);
  for (std::size_t j = 0; j < psi_k.dim(0); ++j)
    for (std::size_t a = 0; a < df; ++a) (*ksum)[a] += psi_k[j * df + a];
  Tensor<T> out({phi_q.dim(0), dv});
  detail::factored_readout(phi_q, *kv, *ksum, static_cast<const T*>(nullptr), T{0}, eps, out, diag);
  return out;
}

/// Taylor-map linear attention in factored O(N) form.
template <typename T>
Tensor<T> linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           T eps = T(kAttentionDenominatorEps), AttentionDiagnostics* diag = nullptr) {
  detail::require_qkv(q, k, v, "linear_attention");
  const std::size_t n = k.dim(0), d = q.dim(1), dv = v.dim(1);
  const T norm_eps = default_eps<T>();
  Transient<T> qn(q.shape(), diag);
  *qn = kernels::l2_normalize_rows(q, norm_eps);
  Transient<T> kn(k.shape(), diag);
  *kn = kernels::l2_normalize_rows(k, norm_eps);
  Transient<T> kv({d, dv}, diag);
  *kv = kernels::matmul_tn(*kn, v);
  Transient<T> ksum({d}, diag);
  Transient<T> vsum({dv}, diag);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < d; ++a) (*ksum)[a] += (*kn)[j * d + a];
    for (std::size_t c = 0; c < dv; ++c) (*vsum)[c] += v[j * dv + c];
  }
  Tensor<T> out({q.dim(0), dv});
  detail::factored_readout(*qn, *kv, *ksum, vsum->ptr(), static_cast<T>(n), eps, out, diag);
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable forms
// ---------------------------------------------------------------------------
namespace ad {

/// Linear attention on already-normalised rows. Fused forward with a
/// hand-derived backward; the l2 normalisation is a separate tape op.
template <typename T>
Var<T> linear_attention_core(const Var<T>& qn, const Var<T>& kn, const Var<T>& v, T eps,
                             AttentionDiagnostics* diag = nullptr) {
  mlagan::detail::require_qkv(qn.value(), kn.value(), v.value(), "linear_attention");
  const Tensor<T>& Q = qn.value();
  const Tensor<T>& K = kn.value();
  const Tensor<T>& V = v.value();
  const std::size_t n = K.dim(0), d = Q.dim(1), dv = V.dim(1);

  Tensor<T> kv = kernels::matmul_tn(K, V);
  Tensor<T> ksum({d});
  Tensor<T> vsum({dv});
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t a = 0; a < d; ++a) ksum[a] += K[j * d + a];
    for (std::size_t c = 0; c < dv; ++c) vsum[c] += V[j * dv + c];
  }
  // denominators, with 0 marking a clamped row
  std::vector<T> den(Q.dim(0));
  std::vector<bool> clamped(Q.dim(0), false);
  Tensor<T> out({Q.dim(0), dv});
  for (std::size_t i = 0; i < Q.dim(0); ++i) {
    T s = static_cast<T>(n);
    for (std::size_t a = 0; a < d; ++a) s += Q[i * d + a] * ksum[a];
    if (s < eps) {
      s = eps;
      clamped[i] = true;
      if (diag) ++diag->clamped_rows;
    }
    den[i] = s;
  }
  {
    Tensor<T> num = kernels::matmul(Q, kv);
    for (std::size_t i = 0; i < Q.dim(0); ++i)
      for (std::size_t c = 0; c < dv; ++c) out[i * dv + c] = (vsum[c] + num[i * dv + c]) / den[i];
  }

  return qn.tape().record(
      "linear_attention", std::move(out), {qn, kn, v},
      [qn, kn, v, kv = std::move(kv), ksum = std::move(ksum), den = std::move(den),
       clamped = std::move(clamped)](Tape<T>& t, const Tensor<T>& g, const Tensor<T>& y) {
        const Tensor<T>& Q = qn.value();
        const Tensor<T>& K = kn.value();
        const Tensor<T>& V = v.value();
        const std::size_t nq = Q.dim(0), nk = K.dim(0), d = Q.dim(1), dv = V.dim(1);
        // out_i = num_i / den_i  =>  dnum_i = g_i / den_i,  dden_i = -g_i . out_i / den_i
        Tensor<T> dnum({nq, dv});
        std::vector<T> dden(nq, T{0});
        for (std::size_t i = 0; i < nq; ++i) {
          T dot{0};
          for (std::size_t c = 0; c < dv; ++c) {
            dnum[i * dv + c] = g[i * dv + c] / den[i];
            dot += g[i * dv + c] * y[i * dv + c];
          }
          if (!clamped[i]) dden[i] = -dot / den[i];
        }
        if (t.requires_grad(qn)) {
          Tensor<T> dq = kernels::matmul_nt(dnum, kv);
          for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t a = 0; a < d; ++a) dq[i * d + a] += dden[i] * ksum[a];
          t.accumulate(qn, dq);
        }
        const bool want_k = t.requires_grad(kn), want_v = t.requires_grad(v);
        if (!want_k && !want_v) return;
        Tensor<T> dkv = kernels::matmul_tn(Q, dnum);  // d x dv
        if (want_k) {
          Tensor<T> dksum({d});
          for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t a = 0; a < d; ++a) dksum[a] += dden[i] * Q[i * d + a];
          Tensor<T> dk = kernels::matmul_nt(V, dkv);
          for (std::size_t j = 0; j < nk; ++j)
            for (std::size_t a = 0; a < d; ++a) dk[j * d + a] += dksum[a];
          t.accumulate(kn, dk);
        }
        if (want_v) {
          Tensor<T> dvsum({dv});
          for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t c = 0; c < dv; ++c) dvsum[c] += dnum[i * dv + c];
          Tensor<T> dV = kernels::matmul(K, dkv);
          for (std::size_t j = 0; j < nk; ++j)
            for (std::size_t c = 0; c < dv; ++c) dV[j * dv + c] += dvsum[c];
          t.accumulate(v, dV);
        }
      });
}

template <typename T>
Var<T> linear_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v,
                        T eps = T(kAttentionDenominatorEps), AttentionDiagnostics* diag = nullptr) {
  const T norm_eps = default_eps<T>();
  return linear_attention_core(l2_normalize_rows(q, norm_eps), l2_normalize_rows(k, norm_eps), v, eps,
                               diag);
}

/// Quadratic reference composed from primitives (used for gradient checks).
template <typename T>
Var<T> softmax_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  return matmul(softmax_rows(matmul(q, transpose(k))), v);
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Multi-head wrapper
// ---------------------------------------------------------------------------

/// Per-head projections W_q, W_k, W_v and the shared output projection W_o.
template <typename T>
struct AttentionWeights {
  std::vector<Param<T>> wq, wk, wv;
  Param<T> wo;

  /// Zero-mean normal init with variance 2 / fan_in.
  static AttentionWeights init(const AttentionConfig& cfg, Rng& rng, const std::string& prefix = "attn") {
    cfg.validate();
    AttentionWeights w;
    const std::size_t c = cfg.model_dim;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::string tag = prefix + ".h" + std::to_string(h);
      w.wq.emplace_back(tag + ".wq", he_normal<T>({c, cfg.head_key_dim}, c, rng));
      w.wk.emplace_back(tag + ".wk", he_normal<T>({c, cfg.head_key_dim}, c, rng));
      w.wv.emplace_back(tag + ".wv", he_normal<T>({c, cfg.head_value_dim}, c, rng));
    }
    const std::size_t concat = cfg.heads * cfg.head_value_dim;
    w.wo = Param<T>(prefix + ".wo", he_normal<T>({concat, c}, concat, rng));
    return w;
  }

  std::size_t heads() const noexcept { return wq.size(); }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    for (std::size_t h = 0; h < wq.size(); ++h) {
      out.push_back(&wq[h]);
      out.push_back(&wk[h]);
      out.push_back(&wv[h]);
    }
    out.push_back(&wo);
    return out;
  }

  void check(const AttentionConfig& cfg) const {
    const bool ok = wq.size() == cfg.heads && wk.size() == cfg.heads && wv.size() == cfg.heads &&
                    wo.value.shape() == Shape{cfg.heads * cfg.head_value_dim, cfg.model_dim};
    if (!ok) throw DimensionError("attention weights do not match config");
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      if (wq[h].value.shape() != Shape{cfg.model_dim, cfg.head_key_dim} ||
          wk[h].value.shape() != Shape{cfg.model_dim, cfg.head_key_dim} ||
          wv[h].value.shape() != Shape{cfg.model_dim, cfg.head_value_dim}) {
        throw DimensionError("attention weights of head " + std::to_string(h) + " do not match config");
      }
    }
  }
};

/// How a Param enters a tape: trainable leaf or frozen constant.
enum class ParamUse { train, freeze };

template <typename T>
Var<T> bind(Tape<T>& tape, Param<T>& p, ParamUse use) {
  return use == ParamUse::train ? tape.param(p) : tape.frozen(p);
}

template <typename T>
struct Projections {
  Var<T> q, k, v;
};

/// Q = X W_q, K = X W_k, V = X W_v for one head.
template <typename T>
Projections<T> project_qkv(const Var<T>& x, AttentionWeights<T>& w, std::size_t head,
                           ParamUse use = ParamUse::train) {
  if (head >= w.heads()) throw DimensionError("project_qkv: head index out of range");
  Tape<T>& tape = x.tape();
  return {ad::matmul(x, bind(tape, w.wq[head], use)), ad::matmul(x, bind(tape, w.wk[head], use)),
          ad::matmul(x, bind(tape, w.wv[head], use))};
}

/// Per-head linear attention, concatenated on the feature axis, then W_o.
template <typename T>
Var<T> multi_head_linear_attention(const Var<T>& x, AttentionWeights<T>& w, const AttentionConfig& cfg,
                                   ParamUse use = ParamUse::train, AttentionDiagnostics* diag = nullptr) {
  cfg.validate();
  w.check(cfg);
  require_rank(x.value(), 2, "multi_head_linear_attention");
  if (x.shape()[1] != cfg.model_dim) {
    throw DimensionError("multi_head_linear_attention: input width " + std::to_string(x.shape()[1]) +
                         " != model_dim " + std::to_string(cfg.model_dim));
  }
  std::vector<Var<T>> heads;
  heads.reserve(cfg.heads);
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    auto p = project_qkv(x, w, h, use);
    heads.push_back(ad::linear_attention(p.q, p.k, p.v, static_cast<T>(cfg.eps), diag));
  }
  Var<T> joined = heads.size() == 1 ? heads.front() : ad::concat(heads, 1);
  return ad::matmul(joined, bind(x.tape(), w.wo, use));
}

/// Feature map [C x H x W] -> sequence of H*W rows (row-major, W fastest),
/// multi-head linear attention, identity residual, back to [C x H x W].
template <typename T>
Var<T> attention_block(const Var<T>& fmap, AttentionWeights<T>& w, const AttentionConfig& cfg,
                       ParamUse use = ParamUse::train, AttentionDiagnostics* diag = nullptr) {
  require_rank(fmap.value(), 3, "attention_block");
  const Shape s = fmap.shape();
  const std::size_t c = s[0], n = s[1] * s[2];
  Var<T> seq = ad::transpose(ad::reshape(fmap, {c, n}));
  Var<T> att = multi_head_linear_attention(seq, w, cfg, use, diag);
  Var<T> back = ad::reshape(ad::transpose(att), s);
  return ad::add(fmap, back);
}

}  // namespace mlagan
