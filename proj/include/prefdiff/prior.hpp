#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefdiff/core/rng.hpp"
#include "prefdiff/core/tensor.hpp"
#include "prefdiff/nn/attention.hpp"
#include "prefdiff/nn/layers.hpp"

namespace prefdiff {

struct PriorConfig {
  int layers = 6;
  int heads = 8;
  int hidden = 128;
  int tokens = 32;
  int token_dim = 8;
  int embedding_dim = 32;
  int num_users = 4;
  int num_ratings = 2;
  int mlp_ratio = 2;
  double cond_dropout = 0.1;
  int steps_train = 1000;
  double lr = 1e-4;
  int batch = 64;
  int epochs = 3;
  int sampling_steps = 64;
  double omega = 3.0;

  void validate() const;
};

/// User / rating / timestep triple. An absent user or rating selects the
/// learned null token used by the unconditional branch.
struct ConditioningInput {
  std::optional<int> user;
  std::optional<int> rating;
  int timestep = 1;
};

/// One denoiser layer over the embedding tokens: AdaLN-Zero modulated
/// self-attention, gated cross-attention to the conditioning tokens, and a
/// gated perceptron. The modulation projection starts at zero, so every gate
/// is zero and the block is the identity at initialization.
template <typename Scalar>
class PriorBlock {
 public:
  /// Modulation columns: (shift, scale, gate) for each of the three branches.
  static constexpr Index kModulationChunks = 9;

  struct Cache {
    Index batch = 0;
    Matrix<Scalar> modulation;
    Matrix<Scalar> norm[3];
    Vector<Scalar> rstd[3];
    Matrix<Scalar> branch[3];
    typename nn::SelfAttention<Scalar>::Cache self_attn;
    typename nn::CrossAttention<Scalar>::Cache cross_attn;
    typename nn::Mlp<Scalar>::Cache mlp;
  };

  PriorBlock() = default;
  PriorBlock(const std::string& name, Index dim, Index heads, Index mlp_hidden);

  void initialize(RngStream& rng);

  /// tokens: (batch * n, dim); cond_act: SiLU of the mixed conditioning (batch, dim);
  /// context: conditioning tokens (batch * 3, dim).
  Matrix<Scalar> forward(const Matrix<Scalar>& tokens, const Matrix<Scalar>& cond_act, const Matrix<Scalar>& context,
                         Index batch, Cache& cache) const;

  Matrix<Scalar> backward(const Cache& cache, const Matrix<Scalar>& dtokens, const Matrix<Scalar>& cond_act,
                          Matrix<Scalar>& dcond_act, Matrix<Scalar>& dcontext);

  ParameterList<Scalar> parameters();

  nn::Linear<Scalar> modulation;
  nn::SelfAttention<Scalar> self_attn;
  nn::CrossAttention<Scalar> cross_attn;
  nn::Mlp<Scalar> mlp;
};

/// Conditional denoiser f(x_t, t, user, rating) -> estimate of x0.
template <typename Scalar>
class PriorModel {
 public:
  struct Workspace {
    Index batch = 0;
    std::vector<int> timesteps, users, ratings;
    Matrix<Scalar> input, token_in;
    typename nn::Mlp<Scalar>::Cache time_mlp, cond_mixer;
    Matrix<Scalar> cond_cat, cond, cond_act;
    typename nn::LayerNorm<Scalar>::Cache context_norm;
    Matrix<Scalar> context;
    std::vector<typename PriorBlock<Scalar>::Cache> blocks;
    Matrix<Scalar> final_tokens, head_flat;
  };

  explicit PriorModel(const PriorConfig& config);

  const PriorConfig& config() const { return config_; }
  int null_user() const { return config_.num_users; }
  int null_rating() const { return config_.num_ratings; }

  void initialize(RngStream& rng);

  /// x_t: (batch, embedding_dim). `users` / `ratings` use the null index for
  /// dropped conditioning.
  Matrix<Scalar> forward(const Matrix<Scalar>& x_t, const std::vector<int>& timesteps, const std::vector<int>& users,
                         const std::vector<int>& ratings, Workspace& ws) const;

  /// Accumulates parameter gradients given dL/d(output).
  void backward(Workspace& ws, const Matrix<Scalar>& doutput);

  ParameterList<Scalar> parameters();
  Index parameter_count() { return prefdiff::parameter_count(parameters()); }
  void zero_grad();

  nn::Linear<Scalar> lift;
  nn::Linear<Scalar> token_proj;
  Parameter<Scalar> positions;
  nn::Embedding<Scalar> user_table;
  nn::Embedding<Scalar> rating_table;
  nn::Mlp<Scalar> time_mlp;
  nn::Mlp<Scalar> cond_mixer;
  nn::LayerNorm<Scalar> context_norm;
  std::vector<PriorBlock<Scalar>> blocks;
  nn::Linear<Scalar> head_proj;
  nn::Linear<Scalar> merge;

 private:
  PriorConfig config_;
};

/// Index form of a conditioning input (null tokens for absent fields).
int user_index(const PriorConfig& config, const std::optional<int>& user);
int rating_index(const PriorConfig& config, const std::optional<int>& rating);

/// Single-example convenience wrapper around PriorModel::forward.
template <typename Scalar>
Vector<Scalar> denoise_predict(const PriorModel<Scalar>& model, const Vector<Scalar>& x_t,
                               const ConditioningInput& cond);

extern template class PriorBlock<float>;
extern template class PriorBlock<double>;
extern template class PriorModel<float>;
extern template class PriorModel<double>;

}  // namespace prefdiff
