#include "prefdiff/eval.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numeric>
#include <set>

#include "prefdiff/verifier.hpp"

namespace prefdiff {

std::size_t UserPool::liked_count() const { return static_cast<std::size_t>(std::count(ratings.begin(), ratings.end(), 1)); }

UserPool user_pool(std::span<const Interaction> test, int user_id) {
  UserPool pool;
  pool.user_id = user_id;
  std::vector<const Interaction*> items;
  for (const auto& it : test)
    if (it.user_id == user_id) items.push_back(&it);
  require(!items.empty(), "user absent from the test pool");
  pool.embeddings.resize(static_cast<Index>(items.size()), kEmbeddingDim);
  for (std::size_t i = 0; i < items.size(); ++i) {
    pool.embeddings.row(static_cast<Index>(i)) = items[i]->embedding.transpose();
    pool.ratings.push_back(items[i]->rating);
  }
  return pool;
}

Index nearest_neighbor(const UserPool& pool, const Embedding& query) {
  Index best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (Index r = 0; r < pool.embeddings.rows(); ++r) {
    const float d = (pool.embeddings.row(r) - query.transpose()).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = r;
    }
  }
  return best;
}

namespace {

std::vector<Index> neighbors(const Matrix<float>& generated, const UserPool& pool) {
  require(generated.rows() >= 1, "metrics need at least one generated sample");
  require(generated.cols() == kEmbeddingDim, "generated samples have the wrong width");
  std::vector<Index> nn;
  for (Index r = 0; r < generated.rows(); ++r) nn.push_back(nearest_neighbor(pool, generated.row(r).transpose()));
  return nn;
}

}  // namespace

double precision_at_k(const Matrix<float>& generated, const UserPool& pool) {
  int hits = 0;
  for (Index i : neighbors(generated, pool)) hits += pool.ratings[static_cast<std::size_t>(i)] == 1;
  return static_cast<double>(hits) / static_cast<double>(generated.rows());
}

double recall_at_k(const Matrix<float>& generated, const UserPool& pool) {
  const std::size_t liked = pool.liked_count();
  require(liked > 0, "recall: user has no liked test items");
  std::set<Index> found;
  for (Index i : neighbors(generated, pool))
    if (pool.ratings[static_cast<std::size_t>(i)] == 1) found.insert(i);
  return static_cast<double>(found.size()) / static_cast<double>(liked);
}

Embedding baseline_mean(int user_id, std::span<const Interaction> train) {
  Eigen::Matrix<double, kEmbeddingDim, 1> sum = decltype(sum)::Zero();
  std::size_t n = 0;
  for (const auto& it : train)
    if (it.user_id == user_id && it.rating == 1) {
      sum += it.embedding.cast<double>();
      ++n;
    }
  require(n > 0, "baseline_mean: user has no liked training items");
  return (sum / static_cast<double>(n)).cast<float>();
}

Matrix<float> baseline_random(std::span<const Interaction> train, Index k, RngStream& rng) {
  require(k >= 1, "baseline_random: k must be positive");
  require(!train.empty(), "baseline_random: empty training set");
  Matrix<float> out(k, kEmbeddingDim);
  for (Index i = 0; i < k; ++i) out.row(i) = train[rng.below(train.size())].embedding.transpose();
  return out;
}

double EvalReport::macro_precision(const std::string& method, int k) const {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.method == method && r.k == k) {
      sum += r.precision;
      ++n;
    }
  require(n > 0, "no metrics for method " + method);
  return sum / n;
}

double EvalReport::macro_recall(const std::string& method, int k) const {
  double sum = 0;
  int n = 0;
  for (const auto& r : rows)
    if (r.method == method && r.k == k) {
      sum += r.recall;
      ++n;
    }
  require(n > 0, "no metrics for method " + method);
  return sum / n;
}

std::vector<std::string> EvalReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows)
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  return out;
}

void append_metrics(EvalReport& report, const std::string& method, int user, const Matrix<float>& samples,
                    const UserPool& pool, std::span<const int> k_list) {
  const Index n = samples.rows();
  require(n >= 1, "append_metrics: empty sample pool");
  const std::vector<Index> nn = neighbors(samples, pool);
  const std::size_t liked = pool.liked_count();
  for (int k : k_list) {
    require(k >= 1, "append_metrics: k must be positive");
    double prec = 0, rec = 0;
    for (Index start = 0; start < n; ++start) {
      int hits = 0;
      std::set<Index> found;
      for (int j = 0; j < k; ++j) {
        const Index idx = nn[static_cast<std::size_t>((start + j) % n)];
        if (pool.ratings[static_cast<std::size_t>(idx)] == 1) {
          ++hits;
          found.insert(idx);
        }
      }
      prec += static_cast<double>(hits) / k;
      rec += liked ? static_cast<double>(found.size()) / static_cast<double>(liked) : 0.0;
    }
    report.rows.push_back({method, user, k, prec / static_cast<double>(n), rec / static_cast<double>(n), liked});
  }
}

const char* to_string(PermutationMode mode) { return mode == PermutationMode::Image ? "image" : "block"; }

PermutationMode permutation_mode_from_string(const std::string& name) {
  if (name == "image") return PermutationMode::Image;
  if (name == "block") return PermutationMode::Block;
  throw ContractViolation("unknown permutation mode '" + name + "' (expected image or block)");
}

namespace {

using Assignment = std::vector<std::vector<std::pair<std::size_t, std::size_t>>>;

std::size_t check_scores(const CrossScores& scores) {
  require(!scores.empty(), "permutation_test: no users");
  const std::size_t users = scores.size();
  const std::size_t per = scores.front().size();
  require(per >= 1, "permutation_test: empty image set");
  for (const auto& g : scores) {
    require(g.size() == per, "permutation_test: unequal per-user image counts");
    for (const auto& img : g) require(img.size() == users, "permutation_test: score row must cover every user");
  }
  return per;
}

Assignment block_assignment(const std::vector<std::size_t>& perm, std::size_t per) {
  Assignment a(perm.size());
  for (std::size_t u = 0; u < perm.size(); ++u)
    for (std::size_t i = 0; i < per; ++i) a[u].push_back({perm[u], i});
  return a;
}

}  // namespace

double assignment_statistic(const CrossScores& scores, const Assignment& assignment) {
  std::vector<double> per_user;
  for (std::size_t u = 0; u < assignment.size(); ++u) {
    std::vector<double> s;
    for (const auto& [g, i] : assignment[u]) s.push_back(scores[g][i][u]);
    per_user.push_back(median(std::move(s)));
  }
  return median(std::move(per_user));
}

PermutationReport permutation_test(const CrossScores& scores, int B, double alpha, PermutationMode mode,
                                   const RngStream& rng) {
  require(B >= 1, "permutation_test: B must be positive");
  require(alpha > 0 && alpha < 1, "permutation_test: alpha must lie in (0, 1)");
  const std::size_t per = check_scores(scores);
  const std::size_t users = scores.size();
  std::vector<std::size_t> identity(users);
  std::iota(identity.begin(), identity.end(), std::size_t{0});

  PermutationReport rep;
  rep.mode = mode;
  rep.alpha = alpha;
  rep.observed_score = assignment_statistic(scores, block_assignment(identity, per));
  rep.null_scores.resize(static_cast<std::size_t>(B));

  std::vector<std::pair<std::size_t, std::size_t>> all;
  for (std::size_t g = 0; g < users; ++g)
    for (std::size_t i = 0; i < per; ++i) all.push_back({g, i});

  for (int b = 0; b < B; ++b) {
    RngStream r = rng.fork(static_cast<std::uint64_t>(b));
    Assignment a;
    if (mode == PermutationMode::Block) {
      std::vector<std::size_t> perm = identity;
      r.shuffle(perm);
      a = block_assignment(perm, per);
    } else {
      auto shuffled = all;
      r.shuffle(shuffled);
      a.resize(users);
      for (std::size_t k = 0; k < shuffled.size(); ++k) a[k / per].push_back(shuffled[k]);
    }
    rep.null_scores[static_cast<std::size_t>(b)] = assignment_statistic(scores, a);
  }

  int at_least = 0;
  double sum = 0;
  for (double v : rep.null_scores) {
    at_least += rep.observed_score <= v;
    sum += v;
  }
  rep.p_value = (1.0 + at_least) / (B + 1.0);
  const double mean = sum / B;
  double ss = 0;
  for (double v : rep.null_scores) ss += (v - mean) * (v - mean);
  const auto [lo, hi] = std::minmax_element(rep.null_scores.begin(), rep.null_scores.end());
  if (*lo < *hi) {
    rep.z_gap = (rep.observed_score - mean) / std::sqrt(ss / std::max(B - 1, 1));
  } else {
    // Constant null: the gap is infinite unless the observed value sits on it.
    const double inf = std::numeric_limits<double>::infinity();
    rep.z_gap = rep.observed_score > *lo ? inf : rep.observed_score < *lo ? -inf : 0.0;
  }
  rep.rejected = rep.p_value <= alpha;
  return rep;
}

double exact_block_p_value(const CrossScores& scores) {
  const std::size_t per = check_scores(scores);
  std::vector<std::size_t> perm(scores.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  const double observed = assignment_statistic(scores, block_assignment(perm, per));
  int total = 0, at_least = 0;
  do {
    ++total;
    at_least += observed <= assignment_statistic(scores, block_assignment(perm, per));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(at_least) / total;
}

}  // namespace prefdiff
