#include <cmath>

#include <fmt/format.h>

#include "pricegrid/eval.hpp"

namespace pricegrid::eval {

namespace {

void grid_rows(std::string& out, const GridSearchReport& r) {
  for (std::size_t i = 0; i < r.cells.size(); ++i) {
    const auto& c = r.cells[i];
    const bool gamma = c.kernel.uses_gamma();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", to_string(r.stage), i, svm::to_string(c.kernel.kind),
                       c.C, gamma ? fmt::format("{}", c.kernel.gamma) : std::string(), c.error ? "" : fmt::format("{}", c.mean),
                       c.error ? "" : fmt::format("{}", c.variance), c.iterations, r.best && *r.best == i ? 1 : 0,
                       c.error ? "error" : "ok");
  }
}

std::string threshold_text(double t) { return std::isinf(t) ? std::string("inf") : fmt::format("{}", t); }

}  // namespace

std::string grid_csv(const GridSearchReport& coarse, const GridSearchReport& fine) {
  std::string out = "stage,cell,kernel,C,gamma,mean_accuracy,variance,iterations,best,status\n";
  grid_rows(out, coarse);
  grid_rows(out, fine);
  return out;
}

std::string folds_csv(const CvResult& cv) {
  std::string out = "fold,accuracy\n";
  for (std::size_t f = 0; f < cv.fold_accuracy.size(); ++f) out += fmt::format("{},{}\n", f, cv.fold_accuracy[f]);
  return out;
}

std::string curve_csv(const LearningCurve& curve) {
  std::string out = "fraction,n_train,train_accuracy,cv_accuracy,cv_variance\n";
  for (const auto& p : curve.points)
    out += fmt::format("{},{},{},{},{}\n", p.fraction, p.n_train, p.train_accuracy, p.cv_accuracy, p.cv_variance);
  return out;
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "curve,point,fpr,tpr,threshold,auc\n";
  auto emit = [&](const BinaryRoc& r) {
    for (std::size_t i = 0; i < r.points.size(); ++i)
      out += fmt::format("{},{},{},{},{},{}\n", r.name, i, r.points[i].fpr, r.points[i].tpr,
                         threshold_text(r.points[i].threshold), r.auc);
  };
  for (const auto& c : roc.classes) emit(c);
  emit(roc.micro);
  return out;
}

std::string confusion_csv(const EvalReport& report) {
  std::string out = "true\\predicted";
  for (int c : report.classes) out += fmt::format(",{}", c);
  out += '\n';
  for (std::size_t i = 0; i < report.classes.size(); ++i) {
    out += fmt::format("{}", report.classes[i]);
    for (std::size_t v : report.confusion[i]) out += fmt::format(",{}", v);
    out += '\n';
  }
  return out;
}

}  // namespace pricegrid::eval
