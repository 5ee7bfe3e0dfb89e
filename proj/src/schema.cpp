#include "pkt/schema.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "pkt/error.hpp"
#include "pkt/text.hpp"

namespace pkt::schema {

namespace {

// Box-Muller over mt19937_64, whose output sequence is fixed by the standard
// (std::normal_distribution is not).
class PortableGaussian {
public:
    explicit PortableGaussian(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (spare_) {
            const double v = *spare_;
            spare_.reset();
            return v;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        return r * std::cos(theta);
    }

private:
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

EmbeddingVector normalized_mean(const std::vector<const EmbeddingVector*>& members) {
    std::vector<double> acc(members.front()->dimension(), 0.0);
    for (const auto* m : members) {
        const auto v = m->values();
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
    }
    double sq = 0.0;
    for (double x : acc) sq += x * x;
    if (sq == 0.0) acc[0] = 1.0;  // antipodal members cancel; pick a fixed direction
    return EmbeddingVector::normalized(acc);
}

double squared_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    const auto x = a.values();
    const auto y = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace

IdentityReducer::IdentityReducer(std::size_t dim) : params_{"identity", 0, dim, dim} {}

EmbeddingVector IdentityReducer::project(const EmbeddingVector& v) const {
    if (v.dimension() != params_.input_dim) {
        throw data_error("DimensionMismatch", fmt::format("reducer expects {} dims, got {}", params_.input_dim,
                                                          v.dimension()));
    }
    return v;
}

RandomProjectionReducer::RandomProjectionReducer(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed)
    : params_{"random_projection", seed, input_dim, output_dim} {
    if (output_dim == 0 || output_dim >= input_dim) {
        throw usage_error("InvalidConfig",
                          fmt::format("target_dim {} must be in [1, {})", output_dim, input_dim));
    }
    PortableGaussian gauss(seed);
    matrix_.resize(input_dim * output_dim);
    for (auto& x : matrix_) x = gauss.next();
}

EmbeddingVector RandomProjectionReducer::project(const EmbeddingVector& v) const {
    if (v.dimension() != params_.input_dim) {
        throw data_error("DimensionMismatch", fmt::format("reducer expects {} dims, got {}", params_.input_dim,
                                                          v.dimension()));
    }
    const auto in = v.values();
    std::vector<double> out(params_.output_dim, 0.0);
    for (std::size_t r = 0; r < params_.output_dim; ++r) {
        const double* row = matrix_.data() + r * params_.input_dim;
        double acc = 0.0;
        for (std::size_t c = 0; c < params_.input_dim; ++c) acc += row[c] * in[c];
        out[r] = acc;
    }
    double sq = 0.0;
    for (double x : out) sq += x * x;
    if (sq == 0.0) out[0] = 1.0;
    return EmbeddingVector::normalized(out);
}

std::unique_ptr<Reducer> make_reducer(const ReducerParams& params) {
    if (params.kind == "identity") return std::make_unique<IdentityReducer>(params.input_dim);
    if (params.kind == "random_projection") {
        return std::make_unique<RandomProjectionReducer>(params.input_dim, params.output_dim, params.seed);
    }
    throw data_error("InvalidSchema", fmt::format("unknown reducer kind '{}'", params.kind));
}

Reduction reduce(const std::vector<EmbeddingVector>& vectors, const Reducer& reducer) {
    if (vectors.size() < 2) throw data_error("TooFewPoints", "reduction needs at least two vectors");
    Reduction out{{}, reducer.params()};
    out.vectors.reserve(vectors.size());
    for (const auto& v : vectors) out.vectors.push_back(reducer.project(v));
    return out;
}

Dbscan::Dbscan(ClusterParams params) : params_(params) {
    if (params_.eps <= 0.0 || params_.min_pts < 1) {
        throw usage_error("InvalidConfig", "DBSCAN needs eps > 0 and min_pts >= 1");
    }
}

std::vector<int> Dbscan::cluster(const std::vector<EmbeddingVector>& points) const {
    const std::size_t n = points.size();
    std::vector<int> labels(n, kNoise);
    if (n < params_.min_pts) return labels;

    const double eps2 = params_.eps * params_.eps;
    std::vector<std::vector<std::size_t>> neighbours(n);
    for (std::size_t i = 0; i < n; ++i) {
        neighbours[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (squared_distance(points[i], points[j]) <= eps2) {
                neighbours[i].push_back(j);
                neighbours[j].push_back(i);
            }
        }
    }
    std::vector<bool> core(n);
    for (std::size_t i = 0; i < n; ++i) core[i] = neighbours[i].size() >= params_.min_pts;

    // Connected components of the core graph, seeded in index order.
    int next_label = 0;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i] || labels[i] != kNoise) continue;
        labels[i] = next_label;
        stack.assign(1, i);
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            for (auto q : neighbours[p]) {
                if (core[q] && labels[q] == kNoise) {
                    labels[q] = next_label;
                    stack.push_back(q);
                }
            }
        }
        ++next_label;
    }
    // Neighbour lists are built in ascending index order, so a strict
    // comparison keeps the lowest core index on ties.
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (auto q : neighbours[i]) {
            if (!core[q]) continue;
            const double d = squared_distance(points[i], points[q]);
            if (d < best) {
                best = d;
                labels[i] = labels[q];
            }
        }
    }
    return labels;
}

std::vector<WeightedKeyword> CtfidfTable::top_keywords(std::size_t cluster, std::size_t count) const {
    std::vector<WeightedKeyword> words;
    for (const auto& [w, weight] : weights.at(cluster)) words.push_back({w, weight});
    std::sort(words.begin(), words.end(), [](const WeightedKeyword& a, const WeightedKeyword& b) {
        return a.weight != b.weight ? a.weight > b.weight : a.word < b.word;
    });
    if (words.size() > count) words.resize(count);
    return words;
}

CtfidfTable ctfidf(const std::vector<std::vector<std::vector<std::string>>>& cluster_docs) {
    CtfidfTable table;
    std::vector<std::map<std::string, std::size_t>> tf(cluster_docs.size());
    std::size_t total = 0;
    for (std::size_t k = 0; k < cluster_docs.size(); ++k) {
        for (const auto& doc : cluster_docs[k]) {
            for (const auto& w : doc) {
                ++tf[k][w];
                ++table.global_word_freq[w];
                ++total;
            }
        }
    }
    table.avg_words_per_cluster =
        cluster_docs.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(cluster_docs.size());
    table.weights.resize(cluster_docs.size());
    for (std::size_t k = 0; k < cluster_docs.size(); ++k) {
        for (const auto& [w, count] : tf[k]) {
            const double fw = static_cast<double>(table.global_word_freq[w]);
            table.weights[k][w] = static_cast<double>(count) * std::log(1.0 + table.avg_words_per_cluster / fw);
        }
    }
    return table;
}

double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
    return std::clamp(1.0 - a.dot(b), 0.0, 2.0);
}

FitResult fit_schema(const std::vector<StudentSequence>& train, const embed::EmbeddingProvider& provider,
                     const FitOptions& options) {
    std::unique_ptr<Reducer> reducer;
    if (options.target_dim >= provider.dimension()) {
        reducer = std::make_unique<IdentityReducer>(provider.dimension());
    } else {
        reducer = std::make_unique<RandomProjectionReducer>(provider.dimension(), options.target_dim, options.seed);
    }
    return fit_schema(train, provider, *reducer, Dbscan(options.cluster_params), options.seed);
}

FitResult fit_schema(const std::vector<StudentSequence>& train, const embed::EmbeddingProvider& provider,
                     const Reducer& reducer, const Clusterer& clusterer, std::uint64_t seed) {
    if (train.empty()) throw data_error("EmptyCorpus", "schema discovery needs at least one training sequence");
    for (const auto& s : train) {
        if (s.split() != Split::Train) {
            throw data_error("TestDataInSchema", fmt::format("sequence '{}' is not from the train split", s.student_id()));
        }
    }
    // Canonical order makes the fit independent of input order.
    std::vector<const StudentSequence*> ordered;
    for (const auto& s : train) ordered.push_back(&s);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto* a, const auto* b) { return a->student_id() < b->student_id(); });
    std::vector<StudentSequence> canonical;
    for (const auto* s : ordered) canonical.push_back(*s);

    FitResult fit;
    const auto embeddings = embed::embed_sequences(canonical, provider);
    for (const auto& e : embeddings) fit.reduced.push_back(reducer.project(e));
    for (const auto& s : canonical) fit.student_ids.push_back(s.student_id());

    SchemaModel& model = fit.model;
    model.seed = seed;
    model.provider_name = provider.name();
    model.dimension = provider.dimension();
    model.reducer_params = reducer.params();
    model.cluster_params = clusterer.params();

    std::vector<const EmbeddingVector*> all;
    for (const auto& r : fit.reduced) all.push_back(&r);
    model.global_mean = normalized_mean(all);

    std::vector<int> labels(canonical.size(), kNoise);
    if (canonical.size() >= 2) labels = clusterer.cluster(fit.reduced);
    const int k_count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;

    std::vector<std::vector<std::vector<std::string>>> docs(static_cast<std::size_t>(std::max(k_count, 0)));
    std::vector<std::vector<const EmbeddingVector*>> members(docs.size());
    for (std::size_t i = 0; i < canonical.size(); ++i) {
        if (labels[i] == kNoise) continue;
        docs[static_cast<std::size_t>(labels[i])].push_back(text::sequence_tokens(canonical[i]));
        members[static_cast<std::size_t>(labels[i])].push_back(&fit.reduced[i]);
    }
    for (const auto& m : members) model.centroids.push_back(normalized_mean(m));
    if (!docs.empty()) {
        const auto table = ctfidf(docs);
        for (std::size_t k = 0; k < docs.size(); ++k) model.keywords.push_back(table.top_keywords(k, kKeywordsPerCluster));
    }

    for (std::size_t i = 0; i < canonical.size(); ++i) {
        if (labels[i] == kNoise) {
            fit.assignments.push_back({fit.student_ids[i], ClusterId::generic(),
                                       cosine_distance(fit.reduced[i], model.global_mean)});
        } else {
            const auto k = static_cast<std::size_t>(labels[i]);
            fit.assignments.push_back({fit.student_ids[i], ClusterId(labels[i]),
                                       cosine_distance(fit.reduced[i], model.centroids[k])});
        }
    }
    model.members = fit.assignments;
    model.validate();
    return fit;
}

Router::Router(const SchemaModel& model, std::size_t min_len_for_routing)
    : model_(&model), min_len_(min_len_for_routing) {
    if (model.num_clusters() > 0) reducer_ = make_reducer(model.reducer_params);
}

ClusterAssignment Router::route(const std::string& student_id, std::size_t sequence_length,
                                const EmbeddingVector& embedding) const {
    if (sequence_length < min_len_ || !reducer_) return {student_id, ClusterId::generic(), 0.0};
    const auto reduced = reducer_->project(embedding);
    const auto& centroids = model_->centroids;
    std::size_t best = 0;
    double best_dist = cosine_distance(reduced, centroids[0]);
    for (std::size_t k = 1; k < centroids.size(); ++k) {
        const double d = cosine_distance(reduced, centroids[k]);
        if (d < best_dist) {
            best = k;
            best_dist = d;
        }
    }
    return {student_id, ClusterId(static_cast<int>(best)), best_dist};
}

ClusterAssignment assign_embedding(const std::string& student_id, std::size_t sequence_length,
                                   const EmbeddingVector& embedding, const SchemaModel& model,
                                   std::size_t min_len_for_routing) {
    return Router(model, min_len_for_routing).route(student_id, sequence_length, embedding);
}

ClusterAssignment assign(const StudentSequence& sequence, const SchemaModel& model,
                         const embed::EmbeddingProvider& provider, std::size_t min_len_for_routing) {
    if (sequence.size() < min_len_for_routing || model.num_clusters() == 0) {
        return {sequence.student_id(), ClusterId::generic(), 0.0};
    }
    return assign_embedding(sequence.student_id(), sequence.size(), embed::embed_sequence(sequence, provider), model,
                            min_len_for_routing);
}

std::string coordinates_csv(const FitResult& fit) {
    std::string out = "student_id,cluster_id,x,y\n";
    for (std::size_t i = 0; i < fit.reduced.size(); ++i) {
        const auto v = fit.reduced[i].values();
        out += fmt::format("{},{},{:.6f},{:.6f}\n", fit.student_ids[i], fit.assignments[i].cluster_id.to_string(),
                           v.size() > 0 ? v[0] : 0.0f, v.size() > 1 ? v[1] : 0.0f);
    }
    return out;
}

}  // namespace pkt::schema
