#ifndef HCSP_MLP_HPP_
#define HCSP_MLP_HPP_

#include <map>
#include <string>
#include <vector>

#include "hcsp/math3d.hpp"

namespace hcsp::net {

enum class HeadKind { Gaussian, MultiCategorical };

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden{256, 128, 128};
  HeadKind head_kind = HeadKind::Gaussian;
  int gaussian_dim = 0;            // used when head_kind == Gaussian
  std::vector<int> head_sizes;     // used when head_kind == MultiCategorical
  double init_gain = 0.01;         // output-layer gain

  int policy_out_dim() const;
  bool operator==(const MlpSpec&) const = default;
};

// Parameter layout inside the flat array: trunk (W, b per layer), policy
// head (W, b), value head (W, b), then log_std for Gaussian heads.
struct ParamLayout {
  struct Matrix {
    int offset = 0, rows = 0, cols = 0;
    int size() const { return rows * cols; }
  };
  std::vector<Matrix> trunk_w, trunk_b;
  Matrix head_w, head_b, value_w, value_b, log_std;
  int total = 0;

  static ParamLayout from_spec(const MlpSpec& spec);
};

struct PolicyParams {
  MlpSpec spec;
  ParamLayout layout;
  std::vector<double> flat;

  static PolicyParams init(const MlpSpec& spec, Rng& rng);
};

struct ActionDistribution {
  HeadKind kind = HeadKind::Gaussian;
  // Gaussian
  std::vector<double> mean;
  std::vector<double> log_std;
  // MultiCategorical: per-head logits and softmax probabilities
  std::vector<std::vector<double>> logits;
  std::vector<std::vector<double>> probs;
};

struct Action {
  std::vector<double> continuous;  // pre-squash Gaussian sample
  std::vector<int> categorical;    // one index per head

  // Gaussian actions squashed into [0, 1] per dimension for the actuators;
  // log_prob is evaluated on the pre-squash sample.
  std::vector<double> squashed() const;
};

struct ForwardCache {
  std::vector<std::vector<double>> activations;  // [0]=obs, then post-tanh
  std::vector<double> policy_out;
  double value = 0.0;
};

struct ForwardResult {
  ActionDistribution dist;
  double value = 0.0;
};

ForwardResult forward(const PolicyParams& params,
                      const std::vector<double>& obs);
ForwardCache forward_cache(const PolicyParams& params,
                           const std::vector<double>& obs);
ActionDistribution distribution_from_output(const MlpSpec& spec,
                                            const PolicyParams& params,
                                            const std::vector<double>& out);

Action sample(const ActionDistribution& dist, Rng& rng);
double log_prob(const ActionDistribution& dist, const Action& action);
double entropy(const ActionDistribution& dist);

// Accumulates d(loss)/d(params) into grad, given the gradient of the loss
// with respect to the policy output vector and the value output.
void backward(const PolicyParams& params, const ForwardCache& cache,
              const std::vector<double>& d_policy, double d_value,
              std::vector<double>& grad);

struct LossSpec {
  double clip = 0.1;
  double entropy_coef = 0.001;
  double value_loss_coef = 1.0;
};

struct Sample {
  std::vector<double> obs;
  Action action;
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double value_target = 0.0;  // in normalized space when value norm is on
};

struct LossStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  bool finite = true;
};

// Exact reverse-mode gradient of the clipped PPO loss (surrogate + entropy
// bonus + value loss) averaged over the minibatch.
LossStats loss_gradients(const PolicyParams& params,
                         const std::vector<Sample>& minibatch,
                         const LossSpec& loss_spec, std::vector<double>& grad);

enum class HeadInitMode { MeanOfExisting, FromScratch };

// Grows categorical heads to new_sizes. MeanOfExisting copies old rows and
// fills new rows with the column-mean of the head's original rows;
// FromScratch reinitializes the whole network.
PolicyParams expand_heads(const PolicyParams& params,
                          const std::vector<int>& new_sizes, HeadInitMode mode,
                          Rng& rng);

class ValueNormState {
 public:
  explicit ValueNormState(double beta = 0.995, double epsilon = 1e-8)
      : beta_(beta), epsilon_(epsilon) {}

  void update(const std::vector<double>& batch);
  double normalize(double x) const;
  double denormalize(double x) const;
  double mean() const;
  double variance() const;
  bool warmed_up() const { return debias_ > 0.0; }

 private:
  double beta_, epsilon_;
  double running_mean_ = 0.0;
  double running_mean_sq_ = 0.0;
  double debias_ = 0.0;
};

// Binary checkpoint: magic + version, JSON header (spec + string metadata),
// little-endian doubles. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const PolicyParams& params,
                     const std::map<std::string, std::string>& metadata);
PolicyParams load_checkpoint(const std::string& path,
                             std::map<std::string, std::string>* metadata);

}  // namespace hcsp::net

#endif  // HCSP_MLP_HPP_
