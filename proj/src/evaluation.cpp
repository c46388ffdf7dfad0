#include "fgns/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "fgns/errors.hpp"
#include "fgns/random.hpp"

namespace fgns {

namespace {

constexpr std::uint64_t kCorrectStream = 11;
constexpr std::uint64_t kIncorrectStream = 12;

// Reference figures reported for the original study, printed next to ours.
struct ReferenceFigures {
    double fgns_m, fgns_iqr, knn_m, knn_iqr, t;
};
constexpr ReferenceFigures kRefQueryNeighbor{6.87, 1.52, 4.92, 1.48, 23.82};
constexpr ReferenceFigures kRefNeighborPrototype{4.14, 1.21, 5.55, 1.39, -19.37};
constexpr double kRefDf = 298;
constexpr double kRefSdFgns = 0.73;
constexpr double kRefSdKnn = 1.03;
constexpr double kRefVarFgns = 0.53;
constexpr double kRefVarKnn = 1.05;

nlohmann::json describe_json(const Descriptives& d) {
    return {{"n", d.n},       {"mean", d.mean},         {"median", d.median}, {"q1", d.q1},
            {"q3", d.q3},     {"iqr", d.iqr},           {"sd", d.sd},         {"variance", d.variance},
            {"min", d.min},   {"max", d.max}};
}

nlohmann::json ttest_json(const TTestResult& r) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(v > 0 ? "inf" : "-inf"); };
    return {{"t", num(r.t)}, {"df", r.df}, {"p", r.p}, {"degenerate", r.degenerate}};
}

nlohmann::json comparison_json(const DistanceComparison& c) {
    return {{"per_neighbor",
             {{"fgns", describe_json(c.fgns_stats)},
              {"knn_baseline", describe_json(c.knn_stats)},
              {"pooled_t", ttest_json(c.pooled)},
              {"welch_t", ttest_json(c.welch)}}},
            {"per_query",
             {{"fgns", describe_json(describe(c.fgns_per_query))},
              {"knn_baseline", describe_json(describe(c.knn_per_query))},
              {"pooled_t", ttest_json(c.pooled_per_query)},
              {"welch_t", ttest_json(c.welch_per_query)}}}};
}

DistanceComparison compare(std::vector<double> fgns, std::vector<double> knn, std::vector<double> fgns_q,
                           std::vector<double> knn_q) {
    DistanceComparison c;
    c.fgns = std::move(fgns);
    c.knn = std::move(knn);
    c.fgns_per_query = std::move(fgns_q);
    c.knn_per_query = std::move(knn_q);
    c.fgns_stats = describe(c.fgns);
    c.knn_stats = describe(c.knn);
    c.pooled = two_sample_t(c.fgns, c.knn);
    c.welch = welch_t(c.fgns, c.knn);
    c.pooled_per_query = two_sample_t(c.fgns_per_query, c.knn_per_query);
    c.welch_per_query = welch_t(c.fgns_per_query, c.knn_per_query);
    return c;
}

std::string fmt(double v, int prec = 3) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::string fmt_p(double p) {
    std::ostringstream os;
    if (p < 1e-4) {
        os << std::scientific << std::setprecision(2) << p;
    } else {
        os << std::fixed << std::setprecision(4) << p;
    }
    return os.str();
}

void comparison_text(std::ostringstream& os, const std::string& title, const DistanceComparison& c,
                     const ReferenceFigures& ref) {
    os << title << "\n";
    os << "  method         n     mean   median      IQR       sd   | ref. M (IQR)\n";
    os << "  fgns     " << std::setw(6) << c.fgns_stats.n << std::setw(9) << fmt(c.fgns_stats.mean) << std::setw(9)
       << fmt(c.fgns_stats.median) << std::setw(9) << fmt(c.fgns_stats.iqr) << std::setw(9) << fmt(c.fgns_stats.sd)
       << "   | " << fmt(ref.fgns_m, 2) << " (" << fmt(ref.fgns_iqr, 2) << ")\n";
    os << "  knn      " << std::setw(6) << c.knn_stats.n << std::setw(9) << fmt(c.knn_stats.mean) << std::setw(9)
       << fmt(c.knn_stats.median) << std::setw(9) << fmt(c.knn_stats.iqr) << std::setw(9) << fmt(c.knn_stats.sd)
       << "   | " << fmt(ref.knn_m, 2) << " (" << fmt(ref.knn_iqr, 2) << ")\n";
    os << "  pooled t(" << fmt(c.pooled.df, 0) << ") = " << fmt(c.pooled.t, 2) << ", p = " << fmt_p(c.pooled.p)
       << "   welch t(" << fmt(c.welch.df, 1) << ") = " << fmt(c.welch.t, 2) << ", p = " << fmt_p(c.welch.p)
       << "   | ref. t(" << fmt(kRefDf, 0) << ") = " << fmt(ref.t, 2) << "\n";
    os << "  per-query means: pooled t(" << fmt(c.pooled_per_query.df, 0) << ") = " << fmt(c.pooled_per_query.t, 2)
       << ", p = " << fmt_p(c.pooled_per_query.p) << "   welch t(" << fmt(c.welch_per_query.df, 1)
       << ") = " << fmt(c.welch_per_query.t, 2) << ", p = " << fmt_p(c.welch_per_query.p) << "\n\n";
}

}  // namespace

EvalSample select_queries(const MlpClassifier& model, const LabeledDataset& test, const EvalConfig& config,
                          std::uint64_t seed) {
    std::vector<std::size_t> correct;
    std::vector<std::size_t> incorrect;
    std::vector<int> predicted(test.size(), -1);
    constexpr std::size_t kChunk = 1024;
    for (std::size_t start = 0; start < test.size(); start += kChunk) {
        const std::size_t end = std::min(test.size(), start + kChunk);
        const auto preds =
            argmax_rows(model.predict_proba_batch(to_batch(std::span<const Image>(test.images().data() + start, end - start))));
        std::copy(preds.begin(), preds.end(), predicted.begin() + static_cast<std::ptrdiff_t>(start));
    }
    for (std::size_t pos = 0; pos < test.size(); ++pos) {
        if (!config.eval_classes.empty() && !config.eval_classes.contains(test.label(pos))) continue;
        (predicted[pos] == test.label(pos) ? correct : incorrect).push_back(pos);
    }
    if (incorrect.size() < 2) {
        throw InsufficientDataError("evaluation needs at least 2 misclassified test instances in the evaluation classes, found " +
                                    std::to_string(incorrect.size()));
    }
    if (correct.size() < 2) {
        throw InsufficientDataError("evaluation needs at least 2 correctly classified test instances, found " +
                                    std::to_string(correct.size()));
    }

    EvalSample sample;
    sample.seed = seed;
    sample.available_correct = correct.size();
    sample.available_incorrect = incorrect.size();
    Rng(derive_seed(seed, kCorrectStream)).shuffle(correct);
    Rng(derive_seed(seed, kIncorrectStream)).shuffle(incorrect);
    correct.resize(std::min(correct.size(), config.n_correct));
    incorrect.resize(std::min(incorrect.size(), config.n_incorrect));
    sample.n_correct = correct.size();
    sample.n_incorrect = incorrect.size();
    for (const auto* group : {&correct, &incorrect}) {
        for (std::size_t pos : *group) {
            sample.queries.push_back(
                EvalQuery{test.image(pos).id, test.label(pos), predicted[pos], predicted[pos] == test.label(pos)});
        }
    }
    return sample;
}

MetricReport run_quant_eval(const MlpClassifier& model, const LabeledDataset& test, const LabeledDataset& train,
                            const ClassFeatureCatalog& catalog, const PrototypeSet& protos, const EvalConfig& config,
                            std::uint64_t seed) {
    MetricReport report;
    report.histogram_bins = config.histogram_bins;
    report.space = config.space;
    report.sample = select_queries(model, test, config, seed);
    const KnnIndex index(model, train);

    // Embedding used for every distance: raw pixels, or the contribution vector of the predicted class.
    auto embed = [&](const Image& img, int c) -> Eigen::VectorXd {
        if (config.space == DistanceSpace::contribution) return model.contribution_vector(img, c).values;
        return Eigen::Map<const Eigen::VectorXd>(img.pixels.data(), static_cast<Eigen::Index>(img.pixels.size()));
    };

    std::vector<double> qn[2], np[2], qn_q[2], np_q[2];
    for (const auto& q : report.sample.queries) {
        const Image& query = test.image(*test.find(q.query_id));
        for (int m = 0; m < 2; ++m) {
            const Method method = m == 0 ? Method::fgns : Method::knn_baseline;
            Explanation ex = explain(query, model, train, catalog, protos, method, config.neighbors, &index);
            ex.true_class = q.true_class;
            const Eigen::VectorXd qv = embed(query, ex.predicted_class);
            const Eigen::VectorXd pv = embed(protos.at(ex.predicted_class).image, ex.predicted_class);
            double sum_qn = 0.0;
            double sum_np = 0.0;
            for (const auto& nb : ex.neighbors) {
                const Eigen::VectorXd nv = embed(train.image(*train.find(nb.train_id)), ex.predicted_class);
                const double a = (qv - nv).norm();
                const double b = (nv - pv).norm();
                qn[m].push_back(a);
                np[m].push_back(b);
                sum_qn += a;
                sum_np += b;
            }
            if (!ex.neighbors.empty()) {
                qn_q[m].push_back(sum_qn / static_cast<double>(ex.neighbors.size()));
                np_q[m].push_back(sum_np / static_cast<double>(ex.neighbors.size()));
            }
            (m == 0 ? report.sample.fgns : report.sample.knn).push_back(std::move(ex));
        }
    }
    report.query_to_neighbor = compare(qn[0], qn[1], qn_q[0], qn_q[1]);
    report.neighbor_to_prototype = compare(np[0], np[1], np_q[0], np_q[1]);
    return report;
}

bool MetricReport::fgns_farther_from_query() const {
    return query_to_neighbor.fgns_stats.mean > query_to_neighbor.knn_stats.mean;
}

bool MetricReport::fgns_closer_to_prototype() const {
    return neighbor_to_prototype.fgns_stats.mean < neighbor_to_prototype.knn_stats.mean;
}

bool MetricReport::fgns_lower_prototype_variance() const {
    return neighbor_to_prototype.fgns_stats.variance < neighbor_to_prototype.knn_stats.variance;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["conventions"] = {{"quartiles", "inclusive median (Tukey hinges)"},
                        {"variance", "sample variance, n-1 denominator; sd = sqrt(variance)"},
                        {"distance_space", space == DistanceSpace::pixel ? "pixel" : "contribution"},
                        {"t_tests", "two-sided; pooled df = n1+n2-2; Welch df by Welch-Satterthwaite"}};
    j["metadata"] = metadata;
    j["sample"] = {{"seed", sample.seed},
                   {"n_correct", sample.n_correct},
                   {"n_incorrect", sample.n_incorrect},
                   {"available_correct", sample.available_correct},
                   {"available_incorrect", sample.available_incorrect}};
    nlohmann::json queries = nlohmann::json::array();
    for (std::size_t i = 0; i < sample.queries.size(); ++i) {
        const auto& q = sample.queries[i];
        queries.push_back({{"query_id", q.query_id},
                           {"true_class", q.true_class},
                           {"predicted_class", q.predicted_class},
                           {"correct", q.correct},
                           {"fgns", sample.fgns[i].to_json()},
                           {"knn_baseline", sample.knn[i].to_json()}});
    }
    j["queries"] = std::move(queries);
    j["query_to_neighbor"] = comparison_json(query_to_neighbor);
    j["neighbor_to_prototype"] = comparison_json(neighbor_to_prototype);
    j["cluster_dispersion_sd"] = {{"fgns", neighbor_to_prototype.fgns_stats.sd},
                                  {"knn_baseline", neighbor_to_prototype.knn_stats.sd}};
    j["prototype_distance_variance"] = {{"fgns", neighbor_to_prototype.fgns_stats.variance},
                                        {"knn_baseline", neighbor_to_prototype.knn_stats.variance}};
    j["directions"] = {{"fgns_farther_from_query", fgns_farther_from_query()},
                       {"fgns_closer_to_prototype", fgns_closer_to_prototype()},
                       {"fgns_lower_prototype_variance", fgns_lower_prototype_variance()}};
    j["published_reference"] = {
        {"query_to_neighbor", {{"fgns_M", kRefQueryNeighbor.fgns_m}, {"fgns_IQR", kRefQueryNeighbor.fgns_iqr},
                               {"knn_M", kRefQueryNeighbor.knn_m}, {"knn_IQR", kRefQueryNeighbor.knn_iqr},
                               {"t", kRefQueryNeighbor.t}, {"df", kRefDf}}},
        {"neighbor_to_prototype", {{"fgns_M", kRefNeighborPrototype.fgns_m}, {"fgns_IQR", kRefNeighborPrototype.fgns_iqr},
                                   {"knn_M", kRefNeighborPrototype.knn_m}, {"knn_IQR", kRefNeighborPrototype.knn_iqr},
                                   {"t", kRefNeighborPrototype.t}, {"df", kRefDf}}},
        {"cluster_dispersion_sd", {{"fgns", kRefSdFgns}, {"knn_baseline", kRefSdKnn}}},
        {"prototype_distance_variance", {{"fgns", kRefVarFgns}, {"knn_baseline", kRefVarKnn}}}};
    return j;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << "Neighbor quality report\n";
    os << "conventions: quartiles = inclusive median (Tukey hinges); variance uses n-1; distances in "
       << (space == DistanceSpace::pixel ? "raw pixel space [0,1]" : "contribution-vector space") << "\n";
    if (metadata.contains("config_hash")) os << "config hash: " << metadata["config_hash"].get<std::string>() << "\n";
    os << "queries: " << sample.n_correct << " correct (of " << sample.available_correct << "), " << sample.n_incorrect
       << " incorrect (of " << sample.available_incorrect << "), seed " << sample.seed << "\n\n";
    comparison_text(os, "(a) query -> neighbor distance", query_to_neighbor, kRefQueryNeighbor);
    comparison_text(os, "(b) neighbor -> predicted-class prototype distance", neighbor_to_prototype,
                    kRefNeighborPrototype);
    os << "(c) cluster dispersion (sd of b):  fgns " << fmt(neighbor_to_prototype.fgns_stats.sd) << "  knn "
       << fmt(neighbor_to_prototype.knn_stats.sd) << "   | ref. " << fmt(kRefSdFgns, 2) << " vs "
       << fmt(kRefSdKnn, 2) << "\n";
    os << "(d) variance of b:                 fgns " << fmt(neighbor_to_prototype.fgns_stats.variance) << "  knn "
       << fmt(neighbor_to_prototype.knn_stats.variance) << "   | ref. " << fmt(kRefVarFgns, 2) << " vs "
       << fmt(kRefVarKnn, 2) << "\n\n";
    auto yn = [](bool b) { return b ? "yes" : "no"; };
    os << "directions: fgns farther from query: " << yn(fgns_farther_from_query())
       << "; fgns closer to prototype: " << yn(fgns_closer_to_prototype())
       << "; fgns lower prototype variance: " << yn(fgns_lower_prototype_variance()) << "\n";
    return os.str();
}

std::string MetricReport::histogram_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "family,bin_left,bin_right,fgns,knn_baseline\n";
    auto emit = [&](const char* family, const DistanceComparison& c) {
        for (const auto& bin : histogram({c.fgns, c.knn}, histogram_bins)) {
            os << family << ',' << bin.left << ',' << bin.right << ',' << bin.counts[0] << ',' << bin.counts[1] << '\n';
        }
    };
    emit("query_to_neighbor", query_to_neighbor);
    emit("neighbor_to_prototype", neighbor_to_prototype);
    return os.str();
}

}  // namespace fgns
