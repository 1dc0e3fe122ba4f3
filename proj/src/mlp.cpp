#include "hcsp/mlp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace hcsp::net {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * ln(2*pi)

void matvec(const double* w, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    const double* row = w + r * cols;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// Orthogonal-style init: Gram-Schmidt over the shorter dimension of a
// Gaussian matrix, scaled by gain.
void orthogonal_init(double* w, int rows, int cols, double gain, Rng& rng) {
  bool transpose = rows < cols;
  int n = transpose ? cols : rows;
  int m = transpose ? rows : cols;
  std::vector<double> a(static_cast<size_t>(n) * m);
  for (double& v : a) v = rng.normal();
  // Orthonormalize the m columns of the n x m matrix.
  for (int j = 0; j < m; ++j) {
    for (int k = 0; k < j; ++k) {
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += a[i * m + j] * a[i * m + k];
      for (int i = 0; i < n; ++i) a[i * m + j] -= dot * a[i * m + k];
    }
    double norm = 0.0;
    for (int i = 0; i < n; ++i) norm += a[i * m + j] * a[i * m + j];
    norm = std::sqrt(std::max(norm, 1e-300));
    for (int i = 0; i < n; ++i) a[i * m + j] /= norm;
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double v = transpose ? a[c * m + r] : a[r * m + c];
      w[r * cols + c] = gain * v;
    }
}

}  // namespace

int MlpSpec::policy_out_dim() const {
  if (head_kind == HeadKind::Gaussian) return gaussian_dim;
  return std::accumulate(head_sizes.begin(), head_sizes.end(), 0);
}

ParamLayout ParamLayout::from_spec(const MlpSpec& spec) {
  ParamLayout l;
  int offset = 0;
  auto add = [&](int rows, int cols) {
    Matrix m{offset, rows, cols};
    offset += rows * cols;
    return m;
  };
  int in = spec.input_dim;
  for (int h : spec.hidden) {
    l.trunk_w.push_back(add(h, in));
    l.trunk_b.push_back(add(h, 1));
    in = h;
  }
  int out = spec.policy_out_dim();
  l.head_w = add(out, in);
  l.head_b = add(out, 1);
  l.value_w = add(1, in);
  l.value_b = add(1, 1);
  if (spec.head_kind == HeadKind::Gaussian)
    l.log_std = add(spec.gaussian_dim, 1);
  l.total = offset;
  return l;
}

PolicyParams PolicyParams::init(const MlpSpec& spec, Rng& rng) {
  PolicyParams p;
  p.spec = spec;
  p.layout = ParamLayout::from_spec(spec);
  p.flat.assign(p.layout.total, 0.0);
  const double trunk_gain = 5.0 / 3.0;  // tanh
  for (size_t i = 0; i < p.layout.trunk_w.size(); ++i) {
    auto& m = p.layout.trunk_w[i];
    orthogonal_init(p.flat.data() + m.offset, m.rows, m.cols, trunk_gain, rng);
  }
  orthogonal_init(p.flat.data() + p.layout.head_w.offset, p.layout.head_w.rows,
                  p.layout.head_w.cols, spec.init_gain, rng);
  orthogonal_init(p.flat.data() + p.layout.value_w.offset, 1,
                  p.layout.value_w.cols, 1.0, rng);
  if (spec.head_kind == HeadKind::Gaussian) {
    double init_log_std = std::log(0.5);
    for (int i = 0; i < spec.gaussian_dim; ++i)
      p.flat[p.layout.log_std.offset + i] = init_log_std;
  }
  return p;
}

std::vector<double> Action::squashed() const {
  std::vector<double> out(continuous.size());
  for (size_t i = 0; i < continuous.size(); ++i)
    out[i] = 1.0 / (1.0 + std::exp(-continuous[i]));
  return out;
}

ForwardCache forward_cache(const PolicyParams& params,
                           const std::vector<double>& obs) {
  if (static_cast<int>(obs.size()) != params.spec.input_dim)
    throw std::invalid_argument("observation dimension mismatch");
  ForwardCache c;
  c.activations.reserve(params.spec.hidden.size() + 1);
  c.activations.push_back(obs);
  const auto& l = params.layout;
  for (size_t i = 0; i < l.trunk_w.size(); ++i) {
    const auto& w = l.trunk_w[i];
    std::vector<double> z(w.rows);
    matvec(params.flat.data() + w.offset, w.rows, w.cols,
           c.activations.back().data(), z.data());
    for (int r = 0; r < w.rows; ++r)
      z[r] = std::tanh(z[r] + params.flat[l.trunk_b[i].offset + r]);
    c.activations.push_back(std::move(z));
  }
  const auto& last = c.activations.back();
  c.policy_out.resize(l.head_w.rows);
  matvec(params.flat.data() + l.head_w.offset, l.head_w.rows, l.head_w.cols,
         last.data(), c.policy_out.data());
  for (int r = 0; r < l.head_w.rows; ++r)
    c.policy_out[r] += params.flat[l.head_b.offset + r];
  double v = params.flat[l.value_b.offset];
  for (int cidx = 0; cidx < l.value_w.cols; ++cidx)
    v += params.flat[l.value_w.offset + cidx] * last[cidx];
  c.value = v;
  return c;
}

ActionDistribution distribution_from_output(const MlpSpec& spec,
                                            const PolicyParams& params,
                                            const std::vector<double>& out) {
  ActionDistribution d;
  d.kind = spec.head_kind;
  if (spec.head_kind == HeadKind::Gaussian) {
    d.mean = out;
    d.log_std.resize(spec.gaussian_dim);
    for (int i = 0; i < spec.gaussian_dim; ++i)
      d.log_std[i] = params.flat[params.layout.log_std.offset + i];
    return d;
  }
  int pos = 0;
  for (int size : spec.head_sizes) {
    std::vector<double> logits(out.begin() + pos, out.begin() + pos + size);
    pos += size;
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(size);
    double sum = 0.0;
    for (int i = 0; i < size; ++i) {
      p[i] = std::exp(logits[i] - mx);
      sum += p[i];
    }
    for (double& v : p) v /= sum;
    d.logits.push_back(std::move(logits));
    d.probs.push_back(std::move(p));
  }
  return d;
}

ForwardResult forward(const PolicyParams& params,
                      const std::vector<double>& obs) {
  ForwardCache c = forward_cache(params, obs);
  return {distribution_from_output(params.spec, params, c.policy_out),
          c.value};
}

Action sample(const ActionDistribution& dist, Rng& rng) {
  Action a;
  if (dist.kind == HeadKind::Gaussian) {
    a.continuous.resize(dist.mean.size());
    for (size_t i = 0; i < dist.mean.size(); ++i)
      a.continuous[i] = dist.mean[i] + std::exp(dist.log_std[i]) * rng.normal();
    return a;
  }
  for (const auto& p : dist.probs) {
    double u = rng.uniform();
    double acc = 0.0;
    int pick = static_cast<int>(p.size()) - 1;
    for (size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) {
        pick = static_cast<int>(i);
        break;
      }
    }
    a.categorical.push_back(pick);
  }
  return a;
}

double log_prob(const ActionDistribution& dist, const Action& action) {
  if (dist.kind == HeadKind::Gaussian) {
    if (action.continuous.size() != dist.mean.size())
      throw std::invalid_argument("action dimension mismatch");
    double lp = 0.0;
    for (size_t i = 0; i < dist.mean.size(); ++i) {
      double s = std::exp(dist.log_std[i]);
      double z = (action.continuous[i] - dist.mean[i]) / s;
      lp += -0.5 * z * z - dist.log_std[i] - kHalfLog2Pi;
    }
    return lp;
  }
  if (action.categorical.size() != dist.probs.size())
    throw std::invalid_argument("action head count mismatch");
  double lp = 0.0;
  for (size_t h = 0; h < dist.probs.size(); ++h) {
    int a = action.categorical[h];
    if (a < 0 || a >= static_cast<int>(dist.probs[h].size()))
      throw std::out_of_range("categorical action out of support");
    lp += std::log(std::max(dist.probs[h][a], 1e-300));
  }
  return lp;
}

double entropy(const ActionDistribution& dist) {
  if (dist.kind == HeadKind::Gaussian) {
    double h = 0.0;
    for (double ls : dist.log_std) h += ls + 0.5 + kHalfLog2Pi;
    return h;
  }
  double h = 0.0;
  for (const auto& p : dist.probs)
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
  return h;
}

void backward(const PolicyParams& params, const ForwardCache& cache,
              const std::vector<double>& d_policy, double d_value,
              std::vector<double>& grad) {
  const auto& l = params.layout;
  const auto& last = cache.activations.back();
  int n_last = static_cast<int>(last.size());
  std::vector<double> delta(n_last, 0.0);

  // Policy head.
  for (int r = 0; r < l.head_w.rows; ++r) {
    double g = d_policy[r];
    if (g == 0.0) continue;
    grad[l.head_b.offset + r] += g;
    const double* wrow = params.flat.data() + l.head_w.offset + r * n_last;
    double* grow = grad.data() + l.head_w.offset + r * n_last;
    for (int c = 0; c < n_last; ++c) {
      grow[c] += g * last[c];
      delta[c] += g * wrow[c];
    }
  }
  // Value head.
  if (d_value != 0.0) {
    grad[l.value_b.offset] += d_value;
    for (int c = 0; c < n_last; ++c) {
      grad[l.value_w.offset + c] += d_value * last[c];
      delta[c] += d_value * params.flat[l.value_w.offset + c];
    }
  }
  // Trunk, back to front.
  for (int layer = static_cast<int>(l.trunk_w.size()) - 1; layer >= 0;
       --layer) {
    const auto& w = l.trunk_w[layer];
    const auto& act = cache.activations[layer + 1];
    const auto& prev = cache.activations[layer];
    for (int r = 0; r < w.rows; ++r) delta[r] *= 1.0 - act[r] * act[r];
    std::vector<double> next_delta(prev.size(), 0.0);
    for (int r = 0; r < w.rows; ++r) {
      double g = delta[r];
      grad[l.trunk_b[layer].offset + r] += g;
      const double* wrow = params.flat.data() + w.offset + r * w.cols;
      double* grow = grad.data() + w.offset + r * w.cols;
      for (int c = 0; c < w.cols; ++c) {
        grow[c] += g * prev[c];
        next_delta[c] += g * wrow[c];
      }
    }
    delta = std::move(next_delta);
  }
}

LossStats loss_gradients(const PolicyParams& params,
                         const std::vector<Sample>& minibatch,
                         const LossSpec& loss_spec, std::vector<double>& grad) {
  if (minibatch.empty()) throw std::invalid_argument("empty minibatch");
  LossStats stats;
  grad.assign(params.layout.total, 0.0);
  const double inv_n = 1.0 / static_cast<double>(minibatch.size());
  const auto& l = params.layout;

  for (const Sample& s : minibatch) {
    ForwardCache cache = forward_cache(params, s.obs);
    ActionDistribution dist =
        distribution_from_output(params.spec, params, cache.policy_out);
    double lp = log_prob(dist, s.action);
    double ratio = std::exp(lp - s.old_log_prob);
    double clipped =
        std::clamp(ratio, 1.0 - loss_spec.clip, 1.0 + loss_spec.clip);
    double u1 = ratio * s.advantage;
    double u2 = clipped * s.advantage;
    bool unclipped_active = u1 <= u2;
    stats.policy_loss += -std::min(u1, u2) * inv_n;
    stats.approx_kl += (s.old_log_prob - lp) * inv_n;
    if (ratio != clipped) stats.clip_fraction += inv_n;

    // d(loss)/d(lp): surrogate term flows only through the unclipped branch.
    double dlp = unclipped_active ? -s.advantage * ratio * inv_n : 0.0;

    double h = entropy(dist);
    stats.entropy += h * inv_n;

    double verr = cache.value - s.value_target;
    stats.value_loss += 0.5 * verr * verr * loss_spec.value_loss_coef * inv_n;
    double d_value = verr * loss_spec.value_loss_coef * inv_n;

    std::vector<double> d_policy(cache.policy_out.size(), 0.0);
    const double ent_c = loss_spec.entropy_coef * inv_n;
    if (params.spec.head_kind == HeadKind::Gaussian) {
      for (size_t i = 0; i < dist.mean.size(); ++i) {
        double var = std::exp(2.0 * dist.log_std[i]);
        double diff = s.action.continuous[i] - dist.mean[i];
        d_policy[i] = dlp * (diff / var);
        // log_std: log-prob term plus entropy bonus (dH/dlog_std = 1).
        double dlogstd = dlp * (diff * diff / var - 1.0) - ent_c;
        grad[l.log_std.offset + i] += dlogstd;
      }
    } else {
      int pos = 0;
      for (size_t head = 0; head < dist.probs.size(); ++head) {
        const auto& p = dist.probs[head];
        int a = s.action.categorical[head];
        double head_h = 0.0;
        for (double v : p)
          if (v > 0.0) head_h -= v * std::log(v);
        for (size_t j = 0; j < p.size(); ++j) {
          double d_lp_dz = (static_cast<int>(j) == a ? 1.0 : 0.0) - p[j];
          double d_h_dz =
              p[j] > 0.0 ? -p[j] * (std::log(p[j]) + head_h) : 0.0;
          d_policy[pos + j] = dlp * d_lp_dz - ent_c * d_h_dz;
        }
        pos += static_cast<int>(p.size());
      }
    }
    backward(params, cache, d_policy, d_value, grad);
  }

  double total_loss = stats.policy_loss + stats.value_loss -
                      loss_spec.entropy_coef * stats.entropy;
  if (!std::isfinite(total_loss)) stats.finite = false;
  for (double g : grad)
    if (!std::isfinite(g)) {
      stats.finite = false;
      break;
    }
  return stats;
}

PolicyParams expand_heads(const PolicyParams& params,
                          const std::vector<int>& new_sizes, HeadInitMode mode,
                          Rng& rng) {
  if (params.spec.head_kind != HeadKind::MultiCategorical)
    throw std::invalid_argument("expand_heads requires categorical heads");
  const auto& old_sizes = params.spec.head_sizes;
  if (new_sizes.size() != old_sizes.size())
    throw std::invalid_argument("head count mismatch");
  for (size_t i = 0; i < new_sizes.size(); ++i)
    if (new_sizes[i] < old_sizes[i])
      throw std::invalid_argument("cannot shrink a head");

  MlpSpec spec = params.spec;
  spec.head_sizes = new_sizes;
  if (mode == HeadInitMode::FromScratch) return PolicyParams::init(spec, rng);

  PolicyParams out;
  out.spec = spec;
  out.layout = ParamLayout::from_spec(spec);
  out.flat.assign(out.layout.total, 0.0);

  // Trunk and value head are unchanged; copy segment by segment.
  auto copy_seg = [&](const ParamLayout::Matrix& src,
                      const ParamLayout::Matrix& dst) {
    std::copy_n(params.flat.begin() + src.offset, src.size(),
                out.flat.begin() + dst.offset);
  };
  for (size_t i = 0; i < params.layout.trunk_w.size(); ++i) {
    copy_seg(params.layout.trunk_w[i], out.layout.trunk_w[i]);
    copy_seg(params.layout.trunk_b[i], out.layout.trunk_b[i]);
  }
  copy_seg(params.layout.value_w, out.layout.value_w);
  copy_seg(params.layout.value_b, out.layout.value_b);

  int cols = params.layout.head_w.cols;
  int old_row = 0, new_row = 0;
  for (size_t h = 0; h < old_sizes.size(); ++h) {
    const double* src_w =
        params.flat.data() + params.layout.head_w.offset + old_row * cols;
    const double* src_b =
        params.flat.data() + params.layout.head_b.offset + old_row;
    double* dst_w = out.flat.data() + out.layout.head_w.offset + new_row * cols;
    double* dst_b = out.flat.data() + out.layout.head_b.offset + new_row;
    std::copy_n(src_w, old_sizes[h] * cols, dst_w);
    std::copy_n(src_b, old_sizes[h], dst_b);
    // New rows: mean of the head's original rows.
    for (int r = old_sizes[h]; r < new_sizes[h]; ++r) {
      for (int c = 0; c < cols; ++c) {
        double m = 0.0;
        for (int k = 0; k < old_sizes[h]; ++k) m += src_w[k * cols + c];
        dst_w[r * cols + c] = m / old_sizes[h];
      }
      double mb = 0.0;
      for (int k = 0; k < old_sizes[h]; ++k) mb += src_b[k];
      dst_b[r] = mb / old_sizes[h];
    }
    old_row += old_sizes[h];
    new_row += new_sizes[h];
  }
  return out;
}

void ValueNormState::update(const std::vector<double>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  double m = 0.0, msq = 0.0;
  for (double v : batch) {
    m += v;
    msq += v * v;
  }
  m /= static_cast<double>(batch.size());
  msq /= static_cast<double>(batch.size());
  running_mean_ = beta_ * running_mean_ + (1.0 - beta_) * m;
  running_mean_sq_ = beta_ * running_mean_sq_ + (1.0 - beta_) * msq;
  debias_ = beta_ * debias_ + (1.0 - beta_);
}

double ValueNormState::mean() const {
  return debias_ > 0.0 ? running_mean_ / debias_ : 0.0;
}

double ValueNormState::variance() const {
  if (debias_ <= 0.0) return 1.0;
  double m = mean();
  return std::max(running_mean_sq_ / debias_ - m * m, epsilon_);
}

double ValueNormState::normalize(double x) const {
  return (x - mean()) / std::sqrt(variance());
}

double ValueNormState::denormalize(double x) const {
  return x * std::sqrt(variance()) + mean();
}

namespace {

constexpr char kMagic[9] = "HCSPNET1";

nlohmann::json spec_to_json(const MlpSpec& s) {
  return nlohmann::json{
      {"input_dim", s.input_dim},
      {"hidden", s.hidden},
      {"head_kind",
       s.head_kind == HeadKind::Gaussian ? "gaussian" : "multicategorical"},
      {"gaussian_dim", s.gaussian_dim},
      {"head_sizes", s.head_sizes},
      {"init_gain", s.init_gain}};
}

MlpSpec spec_from_json(const nlohmann::json& j) {
  MlpSpec s;
  s.input_dim = j.at("input_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.head_kind = j.at("head_kind").get<std::string>() == "gaussian"
                    ? HeadKind::Gaussian
                    : HeadKind::MultiCategorical;
  s.gaussian_dim = j.at("gaussian_dim").get<int>();
  s.head_sizes = j.at("head_sizes").get<std::vector<int>>();
  s.init_gain = j.at("init_gain").get<double>();
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const std::map<std::string, std::string>& metadata) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint format assumes little-endian doubles");
  nlohmann::json header{{"spec", spec_to_json(params.spec)},
                        {"metadata", metadata}};
  std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write(kMagic, 8);
  std::uint32_t version = 1;
  std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
  std::uint64_t n = params.flat.size();
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&hlen), 4);
  f.write(hs.data(), hlen);
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(params.flat.data()), n * 8);
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

PolicyParams load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* metadata) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  std::uint32_t version = 0, hlen = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&hlen), 4);
  if (!f || std::memcmp(magic, kMagic, 8) != 0 || version != 1)
    throw std::runtime_error("bad checkpoint header: " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), hlen);
  nlohmann::json header = nlohmann::json::parse(hs);
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  PolicyParams p;
  p.spec = spec_from_json(header.at("spec"));
  p.layout = ParamLayout::from_spec(p.spec);
  if (n != static_cast<std::uint64_t>(p.layout.total))
    throw std::runtime_error("checkpoint size mismatch: " + path);
  p.flat.resize(n);
  f.read(reinterpret_cast<char*>(p.flat.data()), n * 8);
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  if (metadata)
    *metadata =
        header.at("metadata").get<std::map<std::string, std::string>>();
  return p;
}

}  // namespace hcsp::net
