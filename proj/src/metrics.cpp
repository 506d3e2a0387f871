#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "pricegrid/eval.hpp"

namespace pricegrid::eval {

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0 ? 2.0 * precision * recall / s : 0.0;
}

double baseline_accuracy(std::span<const int> labels) {
  if (labels.empty()) throw ConfigError("baseline_accuracy: no labels");
  std::map<int, std::size_t> counts;
  for (int l : labels) counts[l]++;
  std::size_t top = 0;
  for (const auto& [c, n] : counts) top = std::max(top, n);
  return static_cast<double>(top) / static_cast<double>(labels.size());
}

double accuracy(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw ConfigError("accuracy: length mismatch");
  if (truth.empty()) throw ConfigError("accuracy: no samples");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == predicted[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

EvalReport evaluate_predictions(std::span<const int> truth, std::span<const int> predicted,
                                std::span<const int> classes) {
  if (truth.size() != predicted.size()) throw ConfigError("evaluate: length mismatch");
  if (truth.empty()) throw ConfigError("evaluate: empty test set");
  EvalReport r;
  if (classes.empty()) {
    std::set<int> all(truth.begin(), truth.end());
    all.insert(predicted.begin(), predicted.end());
    r.classes.assign(all.begin(), all.end());
  } else {
    r.classes.assign(classes.begin(), classes.end());
  }
  std::map<int, std::size_t> index;
  for (std::size_t c = 0; c < r.classes.size(); ++c) index[r.classes[c]] = c;
  const std::size_t k = r.classes.size();
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = index.find(truth[i]), p = index.find(predicted[i]);
    if (t == index.end() || p == index.end())
      throw ConfigError(fmt::format("evaluate: label {} not among the declared classes",
                                    t == index.end() ? truth[i] : predicted[i]));
    r.confusion[t->second][p->second]++;
  }
  r.n = truth.size();

  std::size_t tp_total = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics m;
    m.cls = r.classes[c];
    const std::size_t tp = r.confusion[c][c];
    std::size_t row = 0, col = 0;
    for (std::size_t o = 0; o < k; ++o) {
      row += r.confusion[c][o];
      col += r.confusion[o][c];
    }
    m.support = row;
    tp_total += tp;
    if (col == 0) {
      r.diagnostics.push_back({fmt::format("class {}", m.cls), "no predictions; precision set to 0"});
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(col);
    }
    if (row == 0) {
      r.diagnostics.push_back({fmt::format("class {}", m.cls), "no true samples; recall set to 0"});
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(row);
    }
    m.f1 = f1_score(m.precision, m.recall);
    r.per_class.push_back(m);
  }

  // Pooled counts: every misclassification is one FP and one FN, so FP = FN = n - TP.
  const double tp = static_cast<double>(tp_total);
  const double n = static_cast<double>(r.n);
  const double fp = n - tp, fn = n - tp;
  r.accuracy = tp / n;
  r.micro_precision = tp / (tp + fp);
  r.micro_recall = tp / (tp + fn);
  r.micro_f1 = 2.0 * tp / (2.0 * tp + fp + fn);
  r.baseline = baseline_accuracy(truth);
  return r;
}

EvalReport evaluate(const svm::MulticlassSvm& model, const FeatureMatrix& x, std::span<const int> labels) {
  if (x.rows() != labels.size()) throw ConfigError("evaluate: row and label counts differ");
  std::vector<int> pred(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) pred[i] = model.predict(x.row(i));
  return evaluate_predictions(labels, pred, model.classes);
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& m : per_class)
    pc.push_back({{"class", m.cls},
                  {"support", m.support},
                  {"precision", m.precision},
                  {"recall", m.recall},
                  {"f1", m.f1}});
  nlohmann::json dj = nlohmann::json::array();
  for (const auto& d : diagnostics) dj.push_back({{"where", d.where}, {"message", d.message}});
  return {{"n", n},
          {"classes", classes},
          {"confusion", confusion},
          {"per_class", pc},
          {"accuracy", accuracy},
          {"micro_precision", micro_precision},
          {"micro_recall", micro_recall},
          {"micro_f1", micro_f1},
          {"baseline_accuracy", baseline},
          {"diagnostics", dj}};
}

BinaryRoc roc_binary(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw ConfigError("roc: score and label counts differ");
  std::size_t n_pos = 0;
  for (int p : positive) n_pos += p != 0;
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InfeasibleError("roc: need at least one positive and one negative");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  BinaryRoc roc;
  roc.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double area = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    std::size_t j = i;
    for (; j < order.size() && scores[order[j]] == thr; ++j) {
      if (positive[order[j]])
        ++tp;
      else
        ++fp;
    }
    const RocPoint pt{static_cast<double>(fp) / static_cast<double>(n_neg),
                      static_cast<double>(tp) / static_cast<double>(n_pos), thr};
    const RocPoint& prev = roc.points.back();
    area += (pt.fpr - prev.fpr) * (pt.tpr + prev.tpr) / 2.0;
    roc.points.push_back(pt);
    i = j;
  }
  roc.auc = area;
  return roc;
}

RocCurve roc_curves(const std::vector<std::vector<double>>& scores, std::span<const int> labels,
                    std::span<const int> classes) {
  if (scores.size() != labels.size()) throw ConfigError("roc: score rows and labels differ");
  for (const auto& s : scores)
    if (s.size() != classes.size()) throw ConfigError("roc: score arity differs from class count");
  RocCurve out;
  std::vector<double> pooled_scores;
  std::vector<int> pooled_pos;
  pooled_scores.reserve(scores.size() * classes.size());
  pooled_pos.reserve(scores.size() * classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<double> s(scores.size());
    std::vector<int> pos(scores.size());
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      s[i] = scores[i][c];
      pos[i] = labels[i] == classes[c];
      n_pos += pos[i];
    }
    pooled_scores.insert(pooled_scores.end(), s.begin(), s.end());
    pooled_pos.insert(pooled_pos.end(), pos.begin(), pos.end());
    if (n_pos == 0 || n_pos == scores.size()) {
      out.diagnostics.push_back({fmt::format("class {}", classes[c]),
                                 n_pos == 0 ? "no positive samples; curve skipped"
                                            : "no negative samples; curve skipped"});
      continue;
    }
    auto roc = roc_binary(s, pos);
    roc.name = std::to_string(classes[c]);
    out.classes.push_back(std::move(roc));
  }
  out.micro = roc_binary(pooled_scores, pooled_pos);
  out.micro.name = "micro";
  return out;
}

namespace {

nlohmann::json roc_json(const BinaryRoc& r) {
  nlohmann::json fpr = nlohmann::json::array(), tpr = nlohmann::json::array();
  for (const auto& p : r.points) {
    fpr.push_back(p.fpr);
    tpr.push_back(p.tpr);
  }
  return {{"name", r.name}, {"auc", r.auc}, {"fpr", fpr}, {"tpr", tpr}};
}

}  // namespace

nlohmann::json RocCurve::to_json() const {
  nlohmann::json cj = nlohmann::json::array();
  for (const auto& c : classes) cj.push_back(roc_json(c));
  nlohmann::json dj = nlohmann::json::array();
  for (const auto& d : diagnostics) dj.push_back({{"where", d.where}, {"message", d.message}});
  return {{"classes", cj}, {"micro", roc_json(micro)}, {"diagnostics", dj}};
}

}  // namespace pricegrid::eval
