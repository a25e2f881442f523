#pragma once

#include <span>
#include <string>
#include <vector>

#include "prefdiff/world.hpp"

namespace prefdiff {

/// One user's slice of the held-out pool: embeddings and that user's ratings.
struct UserPool {
  int user_id = 0;
  Matrix<float> embeddings;  // (n, 32)
  std::vector<int> ratings;
  std::size_t liked_count() const;
};

/// Items of `test` rated by `user_id`. Throws if the user has none.
UserPool user_pool(std::span<const Interaction> test, int user_id);

/// Index of the nearest pool row in Euclidean distance; ties go to the lowest index.
Index nearest_neighbor(const UserPool& pool, const Embedding& query);

/// Fraction of generated rows whose nearest pool item is liked.
double precision_at_k(const Matrix<float>& generated, const UserPool& pool);

/// Fraction of the pool's liked items that are the nearest neighbour of at
/// least one generated row.
double recall_at_k(const Matrix<float>& generated, const UserPool& pool);

/// Coordinate-wise mean of the user's liked training embeddings.
Embedding baseline_mean(int user_id, std::span<const Interaction> train);

/// k training embeddings drawn uniformly with replacement.
Matrix<float> baseline_random(std::span<const Interaction> train, Index k, RngStream& rng);

struct MetricRow {
  std::string method;
  int user = 0;
  int k = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t liked = 0;  // size of the user's liked test set, the recall denominator
};

struct EvalReport {
  std::vector<MetricRow> rows;

  /// Mean over users for (method, k); throws if absent.
  double macro_precision(const std::string& method, int k) const;
  double macro_recall(const std::string& method, int k) const;
  std::vector<std::string> methods() const;
};

/// Precision / recall at each k, averaged over the cyclic windows
/// {pool[j], ..., pool[j + k - 1 mod n]} for every start j of a per-user sample
/// pool. Precision is then the pool's hit rate; recall grows with k because
/// each window contains the shorter one with the same start.
void append_metrics(EvalReport& report, const std::string& method, int user, const Matrix<float>& samples,
                    const UserPool& pool, std::span<const int> k_list);

enum class PermutationMode { Image, Block };

const char* to_string(PermutationMode mode);
PermutationMode permutation_mode_from_string(const std::string& name);

/// scores[g][i][u]: verifier score, under user u, of the i-th image generated
/// for user g. Every g must have the same number of images.
using CrossScores = std::vector<std::vector<std::vector<double>>>;

struct PermutationReport {
  PermutationMode mode = PermutationMode::Image;
  double observed_score = 0.0;
  std::vector<double> null_scores;
  double p_value = 1.0;
  double z_gap = 0.0;
  double alpha = 0.05;
  bool rejected = false;
};

/// Median over users of each user's median score, when user u is assigned the
/// images listed in assignment[u] (pairs of generating user, image index).
double assignment_statistic(const CrossScores& scores,
                            const std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& assignment);

/// Observed statistic with the true pairing against B relabelled replicates.
/// Image mode pools all images and deals them back out at random, keeping
/// per-user counts; block mode hands each user another user's whole image set.
/// Replicate b uses rng.fork(b). p = (1 + #{observed <= null_b}) / (B + 1).
PermutationReport permutation_test(const CrossScores& scores, int B, double alpha, PermutationMode mode,
                                   const RngStream& rng);

/// Block-mode null enumerated over every user permutation (identity included):
/// the exact fraction of permutations whose statistic is >= observed.
double exact_block_p_value(const CrossScores& scores);

}  // namespace prefdiff
