#pragma once
// Cognitive schema discovery: manifold reduction, density clustering,
// c-TF-IDF labelling and centroid routing.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pkt/embedding.hpp"
#include "pkt/types.hpp"

namespace pkt::schema {

// Projects embeddings into the space clustering and routing operate in.
class Reducer {
public:
    virtual ~Reducer() = default;
    virtual const ReducerParams& params() const = 0;
    virtual EmbeddingVector project(const EmbeddingVector& v) const = 0;
};

// Output equals input.
class IdentityReducer final : public Reducer {
public:
    explicit IdentityReducer(std::size_t dim);
    const ReducerParams& params() const override { return params_; }
    EmbeddingVector project(const EmbeddingVector& v) const override;

private:
    ReducerParams params_;
};

// Seeded Gaussian random projection followed by re-normalization. The
// matrix is regenerated from (seed, input_dim, output_dim), so the params
// alone reproduce the projection on any platform.
class RandomProjectionReducer final : public Reducer {
public:
    RandomProjectionReducer(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);
    const ReducerParams& params() const override { return params_; }
    EmbeddingVector project(const EmbeddingVector& v) const override;

private:
    ReducerParams params_;
    std::vector<double> matrix_;  // output_dim x input_dim, row-major
};

inline constexpr std::size_t kDefaultReducedDim = 32;

std::unique_ptr<Reducer> make_reducer(const ReducerParams& params);

struct Reduction {
    std::vector<EmbeddingVector> vectors;
    ReducerParams params;
};

// Throws TooFewPoints for fewer than two vectors.
Reduction reduce(const std::vector<EmbeddingVector>& vectors, const Reducer& reducer);

inline constexpr int kNoise = -1;

class Clusterer {
public:
    virtual ~Clusterer() = default;
    // One label per point; kNoise for noise. Labels are 0..K-1, numbered by
    // the lowest-index core point of each cluster.
    virtual std::vector<int> cluster(const std::vector<EmbeddingVector>& points) const = 0;
    virtual ClusterParams params() const = 0;
};

// Euclidean DBSCAN. Neighbourhoods include the point itself. A border point
// joins the cluster of its nearest core point (ties: lowest core index).
class Dbscan final : public Clusterer {
public:
    explicit Dbscan(ClusterParams params = {});
    std::vector<int> cluster(const std::vector<EmbeddingVector>& points) const override;
    ClusterParams params() const override { return params_; }

private:
    ClusterParams params_;
};

struct CtfidfTable {
    std::vector<std::map<std::string, double>> weights;  // per cluster
    double avg_words_per_cluster = 0.0;  // A
    std::map<std::string, std::size_t> global_word_freq;  // f_w

    // Top `count` words of a cluster by weight, ties alphabetical.
    std::vector<WeightedKeyword> top_keywords(std::size_t cluster, std::size_t count = 10) const;
};

// cluster_docs[k] holds the token lists of cluster k's members.
// W(w,k) = tf(w,k) * ln(1 + A / f_w).
CtfidfTable ctfidf(const std::vector<std::vector<std::vector<std::string>>>& cluster_docs);

inline constexpr std::size_t kKeywordsPerCluster = 10;

struct FitResult {
    SchemaModel model;
    // Training sequences in canonical (student_id) order with their reduced
    // vectors and cluster memberships; noise points are GENERIC.
    std::vector<std::string> student_ids;
    std::vector<EmbeddingVector> reduced;
    std::vector<ClusterAssignment> assignments;
};

struct FitOptions {
    std::size_t target_dim = kDefaultReducedDim;
    ClusterParams cluster_params;
    std::uint64_t seed = 42;
};

FitResult fit_schema(const std::vector<StudentSequence>& train, const embed::EmbeddingProvider& provider,
                     const FitOptions& options = {});
FitResult fit_schema(const std::vector<StudentSequence>& train, const embed::EmbeddingProvider& provider,
                     const Reducer& reducer, const Clusterer& clusterer, std::uint64_t seed);

inline constexpr std::size_t kColdStartLength = 5;

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b);

// Nearest-centroid routing with the reducer built once. Sequences shorter
// than the cold-start length, or any sequence when K = 0, go to GENERIC.
// Ties go to the lowest cluster index. The model must outlive the router.
class Router {
public:
    explicit Router(const SchemaModel& model, std::size_t min_len_for_routing = kColdStartLength);
    ClusterAssignment route(const std::string& student_id, std::size_t sequence_length,
                            const EmbeddingVector& embedding) const;

private:
    const SchemaModel* model_;
    std::size_t min_len_;
    std::unique_ptr<Reducer> reducer_;
};

// Routes an already-embedded sequence of the given length.
ClusterAssignment assign_embedding(const std::string& student_id, std::size_t sequence_length,
                                   const EmbeddingVector& embedding, const SchemaModel& model,
                                   std::size_t min_len_for_routing = kColdStartLength);

ClusterAssignment assign(const StudentSequence& sequence, const SchemaModel& model,
                         const embed::EmbeddingProvider& provider,
                         std::size_t min_len_for_routing = kColdStartLength);

// "student_id,cluster_id,x,y" rows of the first two reduced coordinates.
std::string coordinates_csv(const FitResult& fit);

}  // namespace pkt::schema
