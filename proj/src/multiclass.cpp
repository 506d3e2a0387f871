#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>

#include <fmt/format.h>

#include "pricegrid/svm.hpp"

namespace pricegrid::svm {

namespace {

std::vector<int> resolve_classes(const TrainingSet& data) {
  std::set<int> present(data.labels.begin(), data.labels.end());
  if (data.classes.empty()) return {present.begin(), present.end()};
  std::set<int> declared(data.classes.begin(), data.classes.end());
  for (int c : present)
    if (!declared.count(c))
      throw ConfigError("train: label " + std::to_string(c) + " is not a declared class");
  return {declared.begin(), declared.end()};
}

void check_training_set(const TrainingSet& data) {
  if (data.points == nullptr) throw ConfigError("train: training set has no points");
  if (data.rows.size() != data.labels.size())
    throw ConfigError("train: row and label counts differ");
  const std::size_t limit = data.kernel ? data.kernel->size() : data.points->rows();
  for (std::size_t r : data.rows)
    if (r >= limit) throw ConfigError("train: row index out of range");
}

// Kernel used for training: the caller's source, or on-demand evaluation over the points.
struct KernelHandle {
  std::unique_ptr<PointKernel> owned;
  const KernelSource* source = nullptr;

  KernelHandle(const TrainingSet& data, const KernelSpec& spec) {
    if (data.kernel) {
      source = data.kernel;
    } else {
      owned = std::make_unique<PointKernel>(*data.points, spec);
      source = owned.get();
    }
  }
};

void accumulate(TrainStats& stats, const BinaryTrainResult& r) {
  stats.binary_problems++;
  stats.iterations += r.iterations;
  if (!r.converged) stats.not_converged++;
  stats.max_kkt_violation = std::max(stats.max_kkt_violation, r.max_kkt_violation);
}

SmoOptions smo_options(const TrainConfig& config) {
  SmoOptions opts;
  opts.tol = config.tol;
  opts.max_iter = config.max_iter;
  opts.cache_bytes = config.cache_bytes;
  opts.working_set = config.working_set;
  return opts;
}

}  // namespace

TrainingSet TrainingSet::all(const FeatureMatrix& x, std::span<const int> labels,
                             const KernelSource* kernel) {
  TrainingSet t;
  t.points = &x;
  t.kernel = kernel;
  t.labels.assign(labels.begin(), labels.end());
  t.rows.resize(x.rows());
  for (std::size_t i = 0; i < t.rows.size(); ++i) t.rows[i] = i;
  return t;
}

MulticlassSvm train_multiclass(const TrainingSet& data, const TrainConfig& config, int jobs) {
  config.validate();
  check_training_set(data);
  MulticlassSvm m;
  m.config = config;
  m.classes = resolve_classes(data);

  std::map<int, std::vector<std::size_t>> members;  // positions into data.rows
  for (std::size_t t = 0; t < data.labels.size(); ++t) members[data.labels[t]].push_back(t);
  if (members.size() < 2)
    throw InfeasibleError("train_multiclass: need at least 2 classes, found " +
                          std::to_string(members.size()));
  const auto weights = class_weights(data.labels, config.class_weights);

  struct Job {
    int first, second;
  };
  std::vector<Job> jobs_list;
  for (std::size_t a = 0; a < m.classes.size(); ++a) {
    for (std::size_t b = a + 1; b < m.classes.size(); ++b) {
      const int ca = m.classes[a], cb = m.classes[b];
      if (!members.count(ca) || !members.count(cb)) {
        m.diagnostics.push_back({fmt::format("pair({},{})", ca, cb),
                                 fmt::format("class {} has no training rows; pair skipped",
                                             members.count(ca) ? cb : ca)});
        continue;
      }
      jobs_list.push_back({ca, cb});
    }
  }

  KernelHandle kernel(data, config.kernel);
  const SmoOptions opts = smo_options(config);
  std::vector<BinaryTrainResult> results(jobs_list.size());
  parallel_for(jobs_list.size(), jobs, [&](std::size_t p) {
    const auto& job = jobs_list[p];
    std::vector<std::size_t> pos = members.at(job.first);
    const auto& neg = members.at(job.second);
    pos.insert(pos.end(), neg.begin(), neg.end());
    std::sort(pos.begin(), pos.end());
    std::vector<std::size_t> subset(pos.size());
    std::vector<int> y(pos.size());
    for (std::size_t t = 0; t < pos.size(); ++t) {
      subset[t] = data.rows[pos[t]];
      y[t] = data.labels[pos[t]] == job.first ? 1 : -1;
    }
    results[p] = smo_train(*data.points, *kernel.source, config.kernel, subset, y,
                           config.C * weights.at(job.first), config.C * weights.at(job.second), opts);
  });

  for (std::size_t p = 0; p < jobs_list.size(); ++p) {
    auto& r = results[p];
    accumulate(m.stats, r);
    if (r.warning)
      m.diagnostics.push_back({fmt::format("pair({},{})", jobs_list[p].first, jobs_list[p].second), *r.warning});
    r.model.positive_class = jobs_list[p].first;
    r.model.negative_class = jobs_list[p].second;
    m.pairs.push_back({jobs_list[p].first, jobs_list[p].second, std::move(r.model)});
  }
  return m;
}

MulticlassSvm train_multiclass(const FeatureMatrix& x, std::span<const int> labels,
                               const TrainConfig& config, int jobs) {
  if (labels.size() != x.rows()) throw ConfigError("train_multiclass: label count differs from row count");
  return train_multiclass(TrainingSet::all(x, labels), config, jobs);
}

std::vector<double> MulticlassSvm::pair_decisions(std::span<const double> x) const {
  std::vector<double> out(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) out[p] = pairs[p].svm.decision_value(x);
  return out;
}

int MulticlassSvm::vote(std::span<const double> decisions) const {
  if (decisions.size() != pairs.size()) throw ConfigError("vote: one decision per pair expected");
  if (classes.empty()) throw ConfigError("vote: model has no classes");
  std::map<int, int> votes;
  std::map<int, double> margin;
  for (int c : classes) {
    votes[c] = 0;
    margin[c] = 0.0;
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int winner = decisions[p] > 0 ? pairs[p].first : pairs[p].second;
    votes[winner]++;
    margin[winner] += std::abs(decisions[p]);
  }
  int best = classes.front();
  for (int c : classes) {
    if (votes[c] > votes[best] || (votes[c] == votes[best] && margin[c] > margin[best])) best = c;
  }
  return best;
}

int MulticlassSvm::predict(std::span<const double> x) const { return vote(pair_decisions(x)); }

int MulticlassSvm::predict_indexed(const KernelSource& kernel, std::size_t j) const {
  std::vector<double> d(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) d[p] = pairs[p].svm.decision_value_indexed(kernel, j);
  return vote(d);
}

nlohmann::json MulticlassSvm::to_json() const {
  nlohmann::json pj = nlohmann::json::array();
  for (const auto& p : pairs) pj.push_back({{"first", p.first}, {"second", p.second}, {"svm", p.svm.to_json()}});
  nlohmann::json dj = nlohmann::json::array();
  for (const auto& d : diagnostics) dj.push_back({{"where", d.where}, {"message", d.message}});
  return {{"scheme", "one-vs-one"},
          {"classes", classes},
          {"config", config.to_json()},
          {"schema_fingerprint", schema_fingerprint},
          {"pairs", pj},
          {"diagnostics", dj}};
}

MulticlassSvm MulticlassSvm::from_json(const nlohmann::json& j, const std::string& expected_fingerprint) {
  for (const char* key : {"classes", "config", "schema_fingerprint", "pairs"})
    if (!j.contains(key)) throw SchemaError(std::string("model: missing '") + key + "'");
  MulticlassSvm m;
  m.schema_fingerprint = j["schema_fingerprint"].get<std::string>();
  if (!expected_fingerprint.empty() && m.schema_fingerprint != expected_fingerprint)
    throw FingerprintMismatch(expected_fingerprint, m.schema_fingerprint);
  m.classes = j["classes"].get<std::vector<int>>();
  m.config = TrainConfig::from_json(j["config"]);
  for (const auto& p : j["pairs"]) {
    PairModel pm;
    pm.first = p.at("first").get<int>();
    pm.second = p.at("second").get<int>();
    pm.svm = BinarySvm::from_json(p.at("svm"));
    m.pairs.push_back(std::move(pm));
  }
  if (j.contains("diagnostics"))
    for (const auto& d : j["diagnostics"])
      m.diagnostics.push_back({d.at("where").get<std::string>(), d.at("message").get<std::string>()});
  return m;
}

OvrEnsemble train_ovr(const TrainingSet& data, const TrainConfig& config, int jobs) {
  config.validate();
  check_training_set(data);
  OvrEnsemble e;
  e.config = config;
  e.classes = resolve_classes(data);
  const std::set<int> present(data.labels.begin(), data.labels.end());
  if (present.size() < 2) throw InfeasibleError("train_ovr: need at least 2 classes");
  for (int c : e.classes)
    if (!present.count(c))
      throw InfeasibleError("train_ovr: class " + std::to_string(c) + " has no training rows");

  KernelHandle kernel(data, config.kernel);
  const SmoOptions opts = smo_options(config);
  const double n = static_cast<double>(data.labels.size());
  std::vector<BinaryTrainResult> results(e.classes.size());
  parallel_for(e.classes.size(), jobs, [&](std::size_t k) {
    const int c = e.classes[k];
    std::vector<int> y(data.labels.size());
    std::size_t n_pos = 0;
    for (std::size_t t = 0; t < y.size(); ++t) {
      y[t] = data.labels[t] == c ? 1 : -1;
      n_pos += y[t] > 0;
    }
    const double w_pos = n / (2.0 * static_cast<double>(n_pos));
    const double w_neg = n / (2.0 * (n - static_cast<double>(n_pos)));
    results[k] = smo_train(*data.points, *kernel.source, config.kernel, data.rows, y, config.C * w_pos,
                           config.C * w_neg, opts);
  });
  for (std::size_t k = 0; k < results.size(); ++k) {
    accumulate(e.stats, results[k]);
    results[k].model.positive_class = e.classes[k];
    results[k].model.negative_class = -1;
    e.models.push_back(std::move(results[k].model));
  }
  return e;
}

std::vector<double> OvrEnsemble::class_scores(std::span<const double> x) const {
  std::vector<double> out(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) out[k] = models[k].decision_value(x);
  return out;
}

std::vector<double> OvrEnsemble::class_scores_indexed(const KernelSource& kernel, std::size_t j) const {
  std::vector<double> out(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) out[k] = models[k].decision_value_indexed(kernel, j);
  return out;
}

nlohmann::json OvrEnsemble::to_json() const {
  nlohmann::json mj = nlohmann::json::array();
  for (const auto& m : models) mj.push_back(m.to_json());
  return {{"scheme", "one-vs-rest"}, {"classes", classes}, {"config", config.to_json()}, {"models", mj}};
}

OvrEnsemble OvrEnsemble::from_json(const nlohmann::json& j) {
  for (const char* key : {"classes", "config", "models"})
    if (!j.contains(key)) throw SchemaError(std::string("ovr model: missing '") + key + "'");
  OvrEnsemble e;
  e.classes = j["classes"].get<std::vector<int>>();
  e.config = TrainConfig::from_json(j["config"]);
  for (const auto& m : j["models"]) e.models.push_back(BinarySvm::from_json(m));
  if (e.models.size() != e.classes.size()) throw SchemaError("ovr model: one model per class expected");
  return e;
}

}  // namespace pricegrid::svm
