#pragma once

// Adversarial training: losses, Adam, the alternating step and the loop.
//
//   D step:  minimise -mean log D(x, y) - mean log(1 - D(x, G(x)))
//   G step:  minimise g_adv(D(x, G(x))) + L1(y, G(x))
//
// g_adv is the non-saturating -mean log D by default, or the literal
// mean log(1 - D) of the minimax objective.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mlagan/autodiff.hpp"
#include "mlagan/checkpoint.hpp"
#include "mlagan/data.hpp"
#include "mlagan/metrics.hpp"
#include "mlagan/models.hpp"

namespace mlagan {

struct GanLossParams {
  std::vector<double> lambda_c{100.0, 100.0, 100.0};  // zero switches the L1 term off for that channel
  double log_eps = 1e-7;
  bool literal_generator_loss = false;

  void validate(std::size_t channels) const {
    if (lambda_c.size() != channels) {
      throw ConfigError("lambda_c has " + std::to_string(lambda_c.size()) + " entries for " +
                        std::to_string(channels) + " channels");
    }
    for (double l : lambda_c)
      if (!(l >= 0) || !std::isfinite(l)) throw ConfigError("lambda_c must be finite and non-negative per channel");
    if (!(log_eps > 0 && log_eps < 0.5)) throw ConfigError("log clamp must be in (0, 0.5)");
  }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace ad {

/// (1 / CHW) sum_c sum_hw lambda_c |gt - gen|
template <typename T>
Var<T> l1_loss(const Var<T>& gt, const Var<T>& gen, const std::vector<double>& lambda_c) {
  if (gt.shape() != gen.shape()) {
    throw DimensionError("l1_loss: shape mismatch " + shape_str(gt.shape()) + " vs " + shape_str(gen.shape()));
  }
  if (gt.shape().size() != 3 || gt.shape()[0] != lambda_c.size()) {
    throw DimensionError("l1_loss: expected [C x H x W] with " + std::to_string(lambda_c.size()) +
                         " channels, got " + shape_str(gt.shape()));
  }
  Tensor<T> weights(gt.shape());
  const std::size_t plane = gt.shape()[1] * gt.shape()[2];
  for (std::size_t c = 0; c < lambda_c.size(); ++c)
    std::fill_n(weights.ptr() + c * plane, plane, static_cast<T>(lambda_c[c]));
  return mean(mul(abs(sub(gt, gen)), gt.tape().constant(std::move(weights))));
}

template <typename T>
Var<T> one_minus(const Var<T>& p) {
  return add_scalar(scale(p, T{-1}), T{1});
}

template <typename T>
Var<T> d_loss(const Var<T>& d_real, const Var<T>& d_fake, T eps) {
  return scale(add(mean(log_clamped(d_real, eps)), mean(log_clamped(one_minus(d_fake), eps))), T{-1});
}

template <typename T>
Var<T> g_adv_loss(const Var<T>& d_fake, T eps, bool literal = false) {
  if (literal) return mean(log_clamped(one_minus(d_fake), eps));
  return scale(mean(log_clamped(d_fake, eps)), T{-1});
}

}  // namespace ad

namespace detail {

template <typename T>
T scalar_of(const std::function<Var<T>(Tape<T>&)>& build) {
  Tape<T> t(GradMode::off);
  return build(t).value()[0];
}

}  // namespace detail

template <typename T>
T l1_loss(const Tensor<T>& gt, const Tensor<T>& gen, const std::vector<double>& lambda_c) {
  return detail::scalar_of<T>([&](Tape<T>& t) { return ad::l1_loss(t.constant(gt), t.constant(gen), lambda_c); });
}

template <typename T>
T d_loss(const Tensor<T>& d_real, const Tensor<T>& d_fake, T eps = T(1e-7)) {
  return detail::scalar_of<T>([&](Tape<T>& t) { return ad::d_loss(t.constant(d_real), t.constant(d_fake), eps); });
}

template <typename T>
T g_adv_loss(const Tensor<T>& d_fake, T eps = T(1e-7), bool literal = false) {
  return detail::scalar_of<T>([&](Tape<T>& t) { return ad::g_adv_loss(t.constant(d_fake), eps, literal); });
}

/// mean log D(x, y) + mean log(1 - D(x, G(x))); diagnostic only.
template <typename T>
double minimax_value(const Tensor<T>& d_real, const Tensor<T>& d_fake, double eps = 1e-7) {
  auto clog = [eps](double p) { return std::log(std::clamp(p, eps, 1.0 - eps)); };
  double a = 0, b = 0;
  for (T p : d_real.values()) a += clog(static_cast<double>(p));
  for (T p : d_fake.values()) b += clog(1.0 - static_cast<double>(p));
  return a / static_cast<double>(d_real.size()) + b / static_cast<double>(d_fake.size());
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
class Adam {
 public:
  Adam() = default;

  Adam(std::vector<Param<T>*> params, double lr, double beta1, double beta2, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (auto* p : params_) {
      m_.emplace_back(p->name + ".adam_m", Tensor<T>::zeros(p->value.shape()));
      v_.emplace_back(p->name + ".adam_v", Tensor<T>::zeros(p->value.shape()));
    }
  }

  /// Applies one update from the accumulated grads, then clears them.
  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    const T a = static_cast<T>(lr_ / c1), b1 = static_cast<T>(b1_), b2 = static_cast<T>(b2_);
    const T inv_c2 = static_cast<T>(1.0 / c2), eps = static_cast<T>(eps_);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Param<T>& p = *params_[k];
      T* w = p.value.ptr();
      const T* g = p.grad.ptr();
      T* m = m_[k].value.ptr();
      T* v = v_[k].value.ptr();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        m[i] = b1 * m[i] + (T{1} - b1) * g[i];
        v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
        w[i] -= a * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
      }
      p.zero_grad();
    }
  }

  std::uint64_t steps_taken() const noexcept { return t_; }
  void set_steps_taken(std::uint64_t t) noexcept { t_ = t; }

  /// First and second moments, exposed as named params for checkpointing.
  std::vector<Param<T>*> state() {
    std::vector<Param<T>*> out;
    for (auto& m : m_) out.push_back(&m);
    for (auto& v : v_) out.push_back(&v);
    return out;
  }

 private:
  std::vector<Param<T>*> params_;
  std::vector<Param<T>> m_, v_;
  double lr_ = 2e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 1;
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 7;
  std::size_t d_steps = 1;
  std::size_t log_every = 100;
  bool train_discriminator = true;
  GanLossParams loss;

  void validate() const {
    if (batch == 0 || d_steps == 0 || log_every == 0) throw ConfigError("batch, d_steps and log_every must be positive");
    if (!(lr > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
      throw ConfigError("optimizer settings out of range");
    }
  }
};

struct StepMetrics {
  double d_loss = 0, g_adv = 0, l1 = 0, value = 0;

  bool operator==(const StepMetrics&) const = default;
};

struct TraceRow {
  std::uint64_t step = 0;
  StepMetrics m;
  double psnr_eval = 0, ssim_eval = 0;

  bool operator==(const TraceRow&) const = default;
};

inline constexpr const char* kTraceHeader = "step,d_loss,g_adv,l1,value,psnr_eval,ssim_eval";

inline void write_trace_row(std::ostream& out, const TraceRow& r) {
  out << r.step << ',' << std::setprecision(9) << r.m.d_loss << ',' << r.m.g_adv << ',' << r.m.l1 << ','
      << r.m.value << ',' << format_psnr(r.psnr_eval) << ',' << r.ssim_eval << '\n';
}

/// Sample order: epoch e visits a permutation drawn from mix_seed(seed, e), so the
/// index used at any step depends only on (seed, step).
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {
    if (n == 0) throw ConfigError("training set is empty");
  }

  std::vector<std::size_t> batch(std::uint64_t step, std::size_t size) {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < size; ++k) {
      const std::uint64_t pos = step * size + k;
      const std::uint64_t epoch = pos / n_;
      if (epoch != cached_epoch_ || perm_.empty()) {
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        Rng rng(mix_seed(seed_, epoch));
        std::shuffle(perm_.begin(), perm_.end(), rng);
        cached_epoch_ = epoch;
      }
      out.push_back(perm_[pos % n_]);
    }
    return out;
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t cached_epoch_ = 0;
  std::vector<std::size_t> perm_;
};

template <typename T>
class Trainer {
 public:
  Trainer(const GeneratorConfig& gcfg, const TrainConfig& cfg)
      : cfg_(cfg),
        gen_(gcfg, mix_seed(cfg.seed, 1)),
        disc_(DiscriminatorConfig::for_images(gcfg.in_channels), mix_seed(cfg.seed, 2)) {
    cfg_.validate();
    cfg_.loss.validate(gcfg.in_channels);
    opt_g_ = Adam<T>(gen_.parameters(), cfg_.lr, cfg_.beta1, cfg_.beta2);
    opt_d_ = Adam<T>(disc_.parameters(), cfg_.lr, cfg_.beta1, cfg_.beta2);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  Generator<T>& generator() noexcept { return gen_; }
  Discriminator<T>& discriminator() noexcept { return disc_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  std::uint64_t step() const noexcept { return step_; }

  /// One D update then one G update on the given pairs.
  StepMetrics train_step(const std::vector<const ImagePair<T>*>& batch) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    const T eps = static_cast<T>(cfg_.loss.log_eps);
    const T inv_b = T{1} / static_cast<T>(batch.size());
    StepMetrics m;

    // G forward once per sample; the tape stays alive for the G update.
    std::vector<std::unique_ptr<Tape<T>>> tapes;
    std::vector<Var<T>> fakes;
    for (const auto* p : batch) {
      tapes.push_back(std::make_unique<Tape<T>>());
      fakes.push_back(gen_.forward(tapes.back()->constant(p->cloudy), ParamUse::train));
    }

    for (std::size_t k = 0; k < cfg_.d_steps; ++k) {
      double dl = 0, val = 0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape<T> t;
        const Var<T> cond = t.constant(batch[i]->cloudy);
        const Var<T> real = disc_.forward(cond, t.constant(batch[i]->clear), ParamUse::train);
        const Var<T> fake = disc_.forward(cond, t.constant(fakes[i].value()), ParamUse::train);
        const Var<T> loss = ad::d_loss(real, fake, eps);
        dl += static_cast<double>(loss.value()[0]);
        val += minimax_value(real.value(), fake.value(), cfg_.loss.log_eps);
        if (cfg_.train_discriminator) t.backward(ad::scale(loss, inv_b));
      }
      m.d_loss = dl / static_cast<double>(batch.size());
      m.value = val / static_cast<double>(batch.size());
      if (cfg_.train_discriminator) opt_d_.step();
    }

    double ga = 0, l1 = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      Tape<T>& t = *tapes[i];
      const Var<T> score = disc_.forward(t.constant(batch[i]->cloudy), fakes[i], ParamUse::freeze);
      const Var<T> adv = ad::g_adv_loss(score, eps, cfg_.loss.literal_generator_loss);
      const Var<T> rec = ad::l1_loss(t.constant(batch[i]->clear), fakes[i], cfg_.loss.lambda_c);
      ga += static_cast<double>(adv.value()[0]);
      l1 += static_cast<double>(rec.value()[0]);
      t.backward(ad::scale(ad::add(adv, rec), inv_b));
    }
    opt_g_.step();
    m.g_adv = ga / static_cast<double>(batch.size());
    m.l1 = l1 / static_cast<double>(batch.size());
    for (double v : {m.d_loss, m.g_adv, m.l1, m.value}) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite loss at step " + std::to_string(step_ + 1) + ": d_loss=" +
                           std::to_string(m.d_loss) + " g_adv=" + std::to_string(m.g_adv) +
                           " l1=" + std::to_string(m.l1));
      }
    }
    ++step_;
    return m;
  }

  MetricReport evaluate(const std::vector<ImagePair<T>>& pairs) {
    std::vector<EvalPair<T>> view;
    for (const auto& p : pairs) view.push_back({p.id, &p.cloudy, &p.clear});
    return evaluate_pairs<T>(view, [this](const Tensor<T>& x) { return gen_.infer(x); });
  }

  /// Runs until config().steps, appending a trace row every log_every steps and at the end.
  /// on_row sees each row as it is produced.
  std::vector<TraceRow> run(const Split<T>& data, const std::function<void(const TraceRow&)>& on_row = {}) {
    if (data.train.empty()) throw ConfigError("training set is empty");
    if (data.test.empty()) throw ConfigError("held-out set is empty");
    BatchSchedule schedule(data.train.size(), cfg_.seed);
    std::vector<TraceRow> trace;
    while (step_ < cfg_.steps) {
      std::vector<const ImagePair<T>*> batch;
      for (std::size_t i : schedule.batch(step_, cfg_.batch)) batch.push_back(&data.train[i]);
      const StepMetrics m = train_step(batch);
      if (step_ % cfg_.log_every == 0 || step_ == cfg_.steps) {
        const MetricReport r = evaluate(data.test);
        trace.push_back({step_, m, r.mean_psnr, r.mean_ssim});
        if (on_row) on_row(trace.back());
      }
    }
    return trace;
  }

  std::vector<Param<T>*> checkpoint_params() {
    std::vector<Param<T>*> out = gen_.parameters();
    for (auto* p : disc_.parameters()) out.push_back(p);
    for (auto* p : opt_g_.state()) out.push_back(p);
    for (auto* p : opt_d_.state()) out.push_back(p);
    return out;
  }

  void save(const std::filesystem::path& path) { save_checkpoint(checkpoint_params(), path, step_, cfg_.seed); }

  /// Restores weights, optimizer moments and the step counter.
  void resume(const std::filesystem::path& path) {
    const Checkpoint ck = load_checkpoint(checkpoint_params(), path);
    if (ck.seed != cfg_.seed) {
      throw LoadError("checkpoint seed " + std::to_string(ck.seed) + " does not match run seed " +
                      std::to_string(cfg_.seed));
    }
    step_ = ck.step;
    opt_g_.set_steps_taken(ck.step);
    opt_d_.set_steps_taken(ck.step * (cfg_.train_discriminator ? cfg_.d_steps : 0));
  }

 private:
  TrainConfig cfg_;
  Generator<T> gen_;
  Discriminator<T> disc_;
  Adam<T> opt_g_, opt_d_;
  std::uint64_t step_ = 0;
};

/// Loads only the generator weights from a training checkpoint.
template <typename T>
Checkpoint load_generator(Generator<T>& gen, const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  restore_entries(ck, gen.parameters());
  return ck;
}

}  // namespace mlagan
