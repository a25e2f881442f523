#include "prefdiff/prior.hpp"

#include "prefdiff/nn/functional.hpp"

namespace prefdiff {

void PriorConfig::validate() const {
  require(layers >= 1, "prior.layers must be >= 1");
  require(heads >= 1 && hidden % heads == 0, "prior.hidden must be divisible by prior.heads");
  require(hidden % 2 == 0, "prior.hidden must be even");
  require(tokens >= 1 && token_dim >= 1, "prior.tokens and prior.token_dim must be >= 1");
  require(embedding_dim >= 1, "prior.embedding_dim must be >= 1");
  require(num_users >= 1 && num_ratings >= 1, "prior.num_users and prior.num_ratings must be >= 1");
  require(mlp_ratio >= 1, "prior.mlp_ratio must be >= 1");
  require(cond_dropout >= 0.0 && cond_dropout <= 1.0, "prior.cond_dropout must lie in [0, 1]");
  require(steps_train >= 1, "prior.steps_train must be >= 1");
  require(lr > 0.0, "prior.lr must be positive");
  require(batch >= 1, "prior.batch must be >= 1");
  require(epochs >= 0, "prior.epochs must be >= 0");
  require(sampling_steps >= 1 && sampling_steps <= steps_train, "prior.sampling_steps must lie in [1, steps_train]");
  require(omega >= 0.0, "prior.omega must be >= 0");
}

int user_index(const PriorConfig& config, const std::optional<int>& user) {
  if (!user) return config.num_users;
  require(*user >= 0 && *user < config.num_users, "user id out of range");
  return *user;
}

int rating_index(const PriorConfig& config, const std::optional<int>& rating) {
  if (!rating) return config.num_ratings;
  require(*rating >= 0 && *rating < config.num_ratings, "rating out of range");
  return *rating;
}

namespace {

// Per-example broadcast helpers; rows [b * n, (b + 1) * n) belong to example b.

template <typename Scalar, typename Rows>
Matrix<Scalar> modulate(const Matrix<Scalar>& x, const Rows& shift, const Rows& scale, Index n) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index b = 0; b < shift.rows(); ++b) {
    y.middleRows(b * n, n) = (x.middleRows(b * n, n).array().rowwise() * (scale.row(b).array() + Scalar(1)))
                                 .rowwise() +
                             shift.row(b).array();
  }
  return y;
}

template <typename Scalar, typename Rows>
Matrix<Scalar> scale_rows(const Matrix<Scalar>& x, const Rows& factor, Index n) {
  Matrix<Scalar> y(x.rows(), x.cols());
  for (Index b = 0; b < factor.rows(); ++b)
    y.middleRows(b * n, n) = x.middleRows(b * n, n).array().rowwise() * factor.row(b).array();
  return y;
}

template <typename Scalar>
Matrix<Scalar> group_sum(const Matrix<Scalar>& x, Index n) {
  const Index batch = x.rows() / n;
  Matrix<Scalar> out(batch, x.cols());
  for (Index b = 0; b < batch; ++b) out.row(b) = x.middleRows(b * n, n).colwise().sum();
  return out;
}

template <typename Scalar>
Matrix<Scalar> reshape(const Matrix<Scalar>& x, Index rows, Index cols) {
  return ConstMatrixMap<Scalar>(x.data(), rows, cols);
}

}  // namespace

template <typename Scalar>
PriorBlock<Scalar>::PriorBlock(const std::string& name, Index dim, Index heads, Index mlp_hidden)
    : modulation(name + "/modulation", dim, kModulationChunks * dim),
      self_attn(name + "/self_attn", dim, heads),
      cross_attn(name + "/cross_attn", dim, heads),
      mlp(name + "/mlp", dim, mlp_hidden, dim) {}

template <typename Scalar>
void PriorBlock<Scalar>::initialize(RngStream& rng) {
  modulation.init_zero();
  self_attn.init_xavier(rng);
  cross_attn.init_xavier(rng);
  mlp.init_xavier(rng);
}

template <typename Scalar>
Matrix<Scalar> PriorBlock<Scalar>::forward(const Matrix<Scalar>& tokens, const Matrix<Scalar>& cond_act,
                                           const Matrix<Scalar>& context, Index batch, Cache& c) const {
  const Index d = tokens.cols();
  const Index n = tokens.rows() / batch;
  c.batch = batch;
  c.modulation = modulation.forward(cond_act);
  Matrix<Scalar> h = tokens;
  for (int k = 0; k < 3; ++k) {
    const auto shift = c.modulation.middleCols((3 * k) * d, d);
    const auto scale = c.modulation.middleCols((3 * k + 1) * d, d);
    const auto gate = c.modulation.middleCols((3 * k + 2) * d, d);
    c.norm[k] = nn::layer_norm(h, c.rstd[k]);
    const Matrix<Scalar> m = modulate<Scalar>(c.norm[k], shift, scale, n);
    switch (k) {
      case 0: c.branch[k] = self_attn.forward(m, batch, c.self_attn); break;
      case 1: c.branch[k] = cross_attn.forward(m, context, batch, c.cross_attn); break;
      default: c.branch[k] = mlp.forward(m, c.mlp); break;
    }
    h += scale_rows<Scalar>(c.branch[k], gate, n);
  }
  return h;
}

template <typename Scalar>
Matrix<Scalar> PriorBlock<Scalar>::backward(const Cache& c, const Matrix<Scalar>& dtokens,
                                            const Matrix<Scalar>& cond_act, Matrix<Scalar>& dcond_act,
                                            Matrix<Scalar>& dcontext) {
  const Index d = dtokens.cols();
  const Index n = dtokens.rows() / c.batch;
  Matrix<Scalar> dh = dtokens;
  Matrix<Scalar> dmod = Matrix<Scalar>::Zero(c.batch, kModulationChunks * d);
  for (int k = 2; k >= 0; --k) {
    const auto scale = c.modulation.middleCols((3 * k + 1) * d, d);
    const auto gate = c.modulation.middleCols((3 * k + 2) * d, d);
    dmod.middleCols((3 * k + 2) * d, d) = group_sum<Scalar>(dh.cwiseProduct(c.branch[k]), n);
    const Matrix<Scalar> dbranch = scale_rows<Scalar>(dh, gate, n);
    Matrix<Scalar> dm;
    switch (k) {
      case 0: dm = self_attn.backward(c.self_attn, dbranch); break;
      case 1: dm = cross_attn.backward(c.cross_attn, dbranch, dcontext); break;
      default: dm = mlp.backward(c.mlp, dbranch); break;
    }
    dmod.middleCols((3 * k) * d, d) = group_sum<Scalar>(dm, n);
    dmod.middleCols((3 * k + 1) * d, d) = group_sum<Scalar>(dm.cwiseProduct(c.norm[k]), n);
    const Matrix<Scalar> one_plus = (scale.array() + Scalar(1)).matrix();
    dh += nn::layer_norm_backward(c.norm[k], c.rstd[k], scale_rows<Scalar>(dm, one_plus, n));
  }
  dcond_act += modulation.backward(cond_act, dmod);
  return dh;
}

template <typename Scalar>
ParameterList<Scalar> PriorBlock<Scalar>::parameters() {
  auto p = modulation.parameters();
  nn::append(p, self_attn.parameters());
  nn::append(p, cross_attn.parameters());
  nn::append(p, mlp.parameters());
  return p;
}

template <typename Scalar>
PriorModel<Scalar>::PriorModel(const PriorConfig& config) : config_(config) {
  config_.validate();
  const Index d = config.hidden;
  const Index lifted = static_cast<Index>(config.tokens) * config.token_dim;
  lift = nn::Linear<Scalar>("prior/tokenizer/lift", config.embedding_dim, lifted);
  token_proj = nn::Linear<Scalar>("prior/tokenizer/token_proj", config.token_dim, d);
  positions = Parameter<Scalar>("prior/tokenizer/positions", {config.tokens, d});
  user_table = nn::Embedding<Scalar>("prior/cond/user_table", config.num_users + 1, d);
  rating_table = nn::Embedding<Scalar>("prior/cond/rating_table", config.num_ratings + 1, d);
  time_mlp = nn::Mlp<Scalar>("prior/cond/time_mlp", d, d, d);
  cond_mixer = nn::Mlp<Scalar>("prior/cond/mixer", 3 * d, d, d);
  context_norm = nn::LayerNorm<Scalar>("prior/cond/context_norm", d);
  for (int i = 0; i < config.layers; ++i)
    blocks.emplace_back("prior/block" + std::to_string(i), d, config.heads, d * config.mlp_ratio);
  head_proj = nn::Linear<Scalar>("prior/head/token_proj", d, config.token_dim);
  merge = nn::Linear<Scalar>("prior/head/merge", lifted, config.embedding_dim);
}

template <typename Scalar>
void PriorModel<Scalar>::initialize(RngStream& rng) {
  lift.init_xavier(rng);
  token_proj.init_xavier(rng);
  for (Index i = 0; i < positions.value.size(); ++i) positions.value.data()[i] = static_cast<Scalar>(0.02 * rng.normal());
  user_table.init_normal(rng, 1.0);
  rating_table.init_normal(rng, 1.0);
  time_mlp.init_xavier(rng);
  cond_mixer.init_xavier(rng);
  for (auto& block : blocks) block.initialize(rng);
  head_proj.init_xavier(rng);
  merge.init_xavier(rng);
}

template <typename Scalar>
Matrix<Scalar> PriorModel<Scalar>::forward(const Matrix<Scalar>& x_t, const std::vector<int>& timesteps,
                                           const std::vector<int>& users, const std::vector<int>& ratings,
                                           Workspace& ws) const {
  const Index batch = x_t.rows();
  const Index n = config_.tokens;
  const Index d = config_.hidden;
  require(x_t.cols() == config_.embedding_dim, "denoiser input has the wrong embedding width");
  require(static_cast<Index>(timesteps.size()) == batch && static_cast<Index>(users.size()) == batch &&
              static_cast<Index>(ratings.size()) == batch,
          "denoiser conditioning length does not match the batch");
  ws.batch = batch;
  ws.timesteps = timesteps;
  ws.users = users;
  ws.ratings = ratings;
  ws.input = x_t;

  ws.token_in = reshape<Scalar>(lift.forward(x_t), batch * n, config_.token_dim);
  Matrix<Scalar> h = token_proj.forward(ws.token_in);
  for (Index b = 0; b < batch; ++b) h.middleRows(b * n, n) += positions.w();

  const Matrix<Scalar> time_emb = time_mlp.forward(nn::timestep_embedding<Scalar>(timesteps, d), ws.time_mlp);
  ws.cond_cat.resize(batch, 3 * d);
  ws.cond_cat << user_table.forward(users), rating_table.forward(ratings), time_emb;
  ws.cond = cond_mixer.forward(ws.cond_cat, ws.cond_mixer);
  ws.cond_act = nn::silu(ws.cond);
  ws.context = context_norm.forward(reshape<Scalar>(ws.cond_cat, batch * 3, d), ws.context_norm);

  ws.blocks.resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) h = blocks[i].forward(h, ws.cond_act, ws.context, batch, ws.blocks[i]);
  ws.final_tokens = std::move(h);
  ws.head_flat = reshape<Scalar>(head_proj.forward(ws.final_tokens), batch, n * config_.token_dim);
  return merge.forward(ws.head_flat);
}

template <typename Scalar>
void PriorModel<Scalar>::backward(Workspace& ws, const Matrix<Scalar>& doutput) {
  const Index batch = ws.batch;
  const Index n = config_.tokens;
  const Index d = config_.hidden;
  const Matrix<Scalar> dhead_flat = merge.backward(ws.head_flat, doutput);
  Matrix<Scalar> dh = head_proj.backward(ws.final_tokens, reshape<Scalar>(dhead_flat, batch * n, config_.token_dim));

  Matrix<Scalar> dcond_act = Matrix<Scalar>::Zero(batch, d);
  Matrix<Scalar> dcontext = Matrix<Scalar>::Zero(batch * 3, d);
  for (std::size_t i = blocks.size(); i-- > 0;) dh = blocks[i].backward(ws.blocks[i], dh, ws.cond_act, dcond_act, dcontext);

  for (Index b = 0; b < batch; ++b) positions.g() += dh.middleRows(b * n, n);
  const Matrix<Scalar> dtoken_in = token_proj.backward(ws.token_in, dh);
  lift.accumulate(ws.input, reshape<Scalar>(dtoken_in, batch, n * config_.token_dim));

  Matrix<Scalar> dcond_cat = cond_mixer.backward(ws.cond_mixer, nn::silu_backward(ws.cond, dcond_act));
  dcond_cat += reshape<Scalar>(context_norm.backward(ws.context_norm, dcontext), batch, 3 * d);
  user_table.backward(ws.users, dcond_cat.leftCols(d));
  rating_table.backward(ws.ratings, dcond_cat.middleCols(d, d));
  time_mlp.backward(ws.time_mlp, dcond_cat.rightCols(d));
}

template <typename Scalar>
ParameterList<Scalar> PriorModel<Scalar>::parameters() {
  ParameterList<Scalar> p = lift.parameters();
  nn::append(p, token_proj.parameters());
  p.push_back(&positions);
  nn::append(p, user_table.parameters());
  nn::append(p, rating_table.parameters());
  nn::append(p, time_mlp.parameters());
  nn::append(p, cond_mixer.parameters());
  nn::append(p, context_norm.parameters());
  for (auto& block : blocks) nn::append(p, block.parameters());
  nn::append(p, head_proj.parameters());
  nn::append(p, merge.parameters());
  return p;
}

template <typename Scalar>
void PriorModel<Scalar>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename Scalar>
Vector<Scalar> denoise_predict(const PriorModel<Scalar>& model, const Vector<Scalar>& x_t,
                               const ConditioningInput& cond) {
  require(x_t.allFinite(), "denoise_predict: non-finite input");
  require(cond.timestep >= 1 && cond.timestep <= model.config().steps_train, "denoise_predict: timestep out of range");
  typename PriorModel<Scalar>::Workspace ws;
  const Matrix<Scalar> x = x_t.transpose();
  const Matrix<Scalar> y = model.forward(x, {cond.timestep}, {user_index(model.config(), cond.user)},
                                         {rating_index(model.config(), cond.rating)}, ws);
  return y.row(0).transpose();
}

template class PriorBlock<float>;
template class PriorBlock<double>;
template class PriorModel<float>;
template class PriorModel<double>;
template Vector<float> denoise_predict(const PriorModel<float>&, const Vector<float>&, const ConditioningInput&);
template Vector<double> denoise_predict(const PriorModel<double>&, const Vector<double>&, const ConditioningInput&);

}  // namespace prefdiff
